import numpy as np
import pytest

from kernelnn.classifiers import (
    ClassifierConfig,
    default_k_grid,
    fit,
    fit_model,
    fnn_fit_memberships,
    frnn_fit_cutoffs,
    fuzzy_memberships,
    loo_scores,
)
from kernelnn.data import Dataset
from kernelnn.geometry import Metric
from kernelnn.neighbours import NeighbourIndex

import oracles


def dataset(X, y, C=None):
    y = np.asarray(y)
    C = int(y.max()) + 1 if C is None else C
    return Dataset(np.asarray(X, dtype=float), y, tuple(f"c{i}" for i in range(C)))


def scaled(model, X):
    return model.scaler.transform(np.asarray(X, dtype=float))


def test_config_validation():
    with pytest.raises(ValueError):
        ClassifierConfig(classifier="svm")
    with pytest.raises(ValueError, match="negation"):
        ClassifierConfig(classifier="frnn", distance_kernel="laplace")
    with pytest.raises(ValueError):
        ClassifierConfig(rank_kernel="macleod")
    with pytest.raises(ValueError):
        ClassifierConfig(k=0)
    with pytest.raises(ValueError):
        ClassifierConfig(fnn_q=1.0)
    assert ClassifierConfig(k_grid=[5, 1, 5]).k_grid == (1, 5)
    a, b = ClassifierConfig(), ClassifierConfig(metric="euclidean")
    assert a.digest() != b.digest() and a.digest() == ClassifierConfig().digest()


@pytest.mark.parametrize(
    "n, expected_tail",
    [(2, (1,)), (10, tuple(range(1, 10))), (100, tuple(range(35, 41))), (400, (39, 40, 60, 80))],
)
def test_default_k_grid(n, expected_tail):
    grid = default_k_grid(n)
    assert grid[-len(expected_tail):] == expected_tail
    assert list(grid) == sorted(set(grid)) and grid[-1] <= n - 1


def test_fuzzy_membership_example():
    # record of class 0 whose 4 neighbours hold 3 of class 0 and 1 of class 1
    u = fuzzy_memberships(np.array([[0, 0, 1, 0]]), np.array([0]), 2)
    np.testing.assert_allclose(u, [[0.51 + 0.49 * 0.75, 0.49 * 0.25]])
    u = fuzzy_memberships(np.array([[1, 1]]), np.array([0]), 3)
    np.testing.assert_allclose(u, [[0.51, 0.49, 0.0]])
    np.testing.assert_allclose(u.sum(axis=1), 1.0)


def test_fnn_memberships_exclude_self():
    index = NeighbourIndex([[0.0], [0.1], [5.0]], [0, 0, 1])
    u = fnn_fit_memberships(index, 1)
    np.testing.assert_allclose(u, [[1.0, 0.0], [1.0, 0.0], [0.49, 0.51]])


def test_frnn_cutoff_example():
    index = NeighbourIndex([[0.0], [1.0], [10.0], [11.0]], [0, 0, 1, 1])
    assert frnn_fit_cutoffs(index, 1) == (1.0, 10.0)
    # k larger than the class pool is clamped
    assert frnn_fit_cutoffs(index, 3) == (1.0, 11.0)


def test_frnn_linear_lower_is_double_negation():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 2))
    y = np.arange(30) % 2
    config = ClassifierConfig("frnn", distance_kernel="linear", scaling="none", metric="euclidean")
    model = fit_model(dataset(X, y), config, 4)
    Q = rng.normal(size=(5, 2))
    _, lower = model.approximations(Q)
    d_minus = model.cutoffs[1]
    for c in range(2):
        res = model.index.query_class_batch(Q, 4, c, mode="outside")
        np.testing.assert_allclose(lower[:, c], np.minimum(res.distances / d_minus, 1).mean(axis=1), rtol=1e-14)


def test_frnn_single_class_training_set():
    config = ClassifierConfig("frnn", scaling="none", k=2)
    model = fit(Dataset(np.array([[0.0], [1.0], [2.0]]), np.zeros(3, dtype=int), ("a", "b")), config)
    upper, lower = model.approximations([[0.5]])
    # no complement for class a; class b's complement is everything, at cutoff 0
    np.testing.assert_array_equal(lower, [[1.0, 0.0]])
    assert upper[0, 1] == 0.0 and np.isfinite(upper).all()


PROPER = ["constant", "linear", "epanechnikov", "quartic", "samworth", "sugeno", "yager", "laplace"]
NEGATIONS = ["linear", "samworth", "sugeno", "yager"]


@pytest.mark.parametrize("seed", range(6))
def test_scores_match_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    X, y, C = oracles.random_instance(rng, n_max=60, m_max=4)
    Q = rng.normal(0, 2, (8, X.shape[1]))
    metric = list(Metric)[seed % 3]
    data = dataset(X, y, C)
    k = int(rng.integers(1, 8))
    m = X.shape[1]
    for rank in PROPER:
        dist = PROPER[(PROPER.index(rank) + seed) % len(PROPER)]
        model = fit_model(data, ClassifierConfig("nn", rank, dist, metric, "r1"), k)
        Xs, Qs = scaled(model, X), scaled(model, Q)
        ref = oracles.nn_scores(Xs, y, Qs, C, k, metric.p, rank, dist, m)
        np.testing.assert_allclose(model.scores(Q), ref, rtol=0, atol=1e-9)
        for mode in ("crisp", "fuzzy"):
            model = fit_model(data, ClassifierConfig("fnn", rank, dist, metric, "r1", fnn_mode=mode), k)
            ref = oracles.fnn_scores(Xs, y, Qs, C, k, metric.p, fuzzy=mode == "fuzzy", dist=dist, rank=rank, m=m)
            np.testing.assert_allclose(model.scores(Q), ref, rtol=0, atol=1e-9)
    for dist in NEGATIONS:
        for approx in ("upper", "lower", "mean"):
            config = ClassifierConfig("frnn", PROPER[seed], dist, metric, "r1", frnn_approximation=approx)
            model = fit_model(data, config, k)
            ref = oracles.frnn_scores(Xs, y, Qs, C, k, metric.p, PROPER[seed], dist, approx, m)
            np.testing.assert_allclose(model.scores(Q), ref, rtol=0, atol=1e-9)


@pytest.mark.parametrize("q, kernel", [(3.0, "recip"), (2.0, "recip2")])
def test_crisp_fnn_equals_nn_with_reciprocal(q, kernel):
    rng = np.random.default_rng(4)
    X, y, C = oracles.random_instance(rng, n_max=80)
    Q = rng.normal(size=(20, X.shape[1]))
    data = dataset(X, y, C)
    fnn = fit_model(data, ClassifierConfig("fnn", fnn_mode="crisp", fnn_q=q), 7)
    nn = fit_model(data, ClassifierConfig("nn", distance_kernel=kernel), 7)
    np.testing.assert_allclose(fnn.scores(Q), nn.scores(Q), rtol=0, atol=1e-12)


def test_fnn_default_kernel_matches_raw_formula():
    rng = np.random.default_rng(8)
    X, y, C = oracles.random_instance(rng, n_max=60)
    Q = rng.normal(size=(10, X.shape[1]))
    for q in (1.5, 2.0, 3.0, 5.0):
        model = fit_model(dataset(X, y, C), ClassifierConfig("fnn", scaling="none", fnn_q=q), 5)
        ref = oracles.fnn_scores(X, y, Q, C, 5, 1, q=q)
        np.testing.assert_allclose(model.scores(Q), ref, rtol=1e-12, atol=1e-12)


def test_predict_ties_go_to_first_class():
    data = Dataset(np.array([[-1.0], [1.0]]), np.array([1, 0]), ("b", "a"))
    model = fit_model(data, ClassifierConfig("nn", scaling="none"), 2)
    np.testing.assert_allclose(model.scores([[0.0]]), [[0.5, 0.5]])
    assert model.predict([[0.0]]) == ["b"]
    assert model.predict([[5.0]]) == ["b"]


def test_duplicate_query_gets_finite_scores():
    X = np.array([[0.0], [0.0], [1.0], [2.0]])
    data = dataset(X, [0, 0, 1, 1])
    for kernel in ("recip", "recip2", "macleod", "linear"):
        model = fit_model(data, ClassifierConfig("nn", distance_kernel=kernel, scaling="none"), 3)
        s = model.scores([[0.0], [1.0], [9.0]])
        assert np.all(np.isfinite(s))
        np.testing.assert_allclose(s.sum(axis=1), 1.0)
    model = fit_model(data, ClassifierConfig("nn", distance_kernel="recip", scaling="none"), 3)
    np.testing.assert_array_equal(model.scores([[0.0]]), [[1.0, 0.0]])


def test_select_k_ties_smallest_k_and_lower():
    # two far-apart clusters: several (k, approximation) cells reach AUROC 1
    X = np.r_[np.linspace(0, 1, 6), np.linspace(100, 101, 6)][:, None]
    y = np.r_[np.zeros(6, int), np.ones(6, int)]
    model = fit(dataset(X, y), ClassifierConfig("frnn", k_grid=(1, 2, 3)))
    assert model.k == 1 and model.selection.approximation == "lower"
    assert model.selection.auroc[(1, "lower")] == max(model.selection.auroc.values()) == 1.0
    model = fit(dataset(X, y), ClassifierConfig("nn", k_grid=(4, 2, 3)))
    assert model.k == 2


def test_select_k_clamps_grid():
    X = np.arange(6, dtype=float)[:, None]
    model = fit(dataset(X, [0, 0, 0, 1, 1, 1]), ClassifierConfig("nn", k_grid=(1, 5, 50)))
    assert model.selection.grid == (1, 5)
    with pytest.raises(ValueError, match="empty k grid"):
        fit(dataset(X, [0, 0, 0, 1, 1, 1]), ClassifierConfig("nn", k_grid=(6, 9)))


def test_loo_nn_equals_retrain():
    rng = np.random.default_rng(12)
    X, y, C = oracles.random_instance(rng, n_max=40, m_max=3)
    config = ClassifierConfig("nn", "linear", "sugeno", scaling="none")
    index = NeighbourIndex(X, y, config.metric, n_classes=C)
    scheme = config.scheme(X.shape[1])
    for k, _, S in loo_scores(index, config, scheme, (1, 3, 8), C):
        for t in range(0, len(y), 5):
            keep = np.arange(len(y)) != t
            model = fit_model(dataset(X[keep], y[keep], C), config, k)
            np.testing.assert_allclose(S[t], model.scores(X[t : t + 1])[0], rtol=0, atol=1e-12)


def test_frnn_loo_table_matches_direct_computation():
    from kernelnn.classifiers import FRNNLooTable

    rng = np.random.default_rng(21)
    X, y, C = oracles.random_instance(rng, n_max=40, m_max=3)
    y[0] = C  # a singleton class exercises the per-class clamp
    C += 1
    config = ClassifierConfig("frnn", "linear", "yager", scaling="none")
    index = NeighbourIndex(X, y, config.metric, n_classes=C)
    scheme = config.scheme(X.shape[1])
    table = FRNNLooTable(index, 12)
    for k in (1, 4, 12):
        assert table.cutoffs(k) == frnn_fit_cutoffs(index, k)
        cut = oracles.frnn_cutoffs(X, y, C, k, config.metric.p)
        np.testing.assert_allclose(table.cutoffs(k), cut, rtol=1e-13)
        upper, lower = table.approximations(k, scheme, table.cutoffs(k))
        for t in range(len(y)):
            keep = np.arange(len(y)) != t
            ref = oracles.frnn_scores(X[keep], y[keep], X[t : t + 1], C, k, config.metric.p, "linear", "yager", "upper", cutoffs=cut)
            np.testing.assert_allclose(upper[t], ref[0], rtol=0, atol=1e-12)
            ref = oracles.frnn_scores(X[keep], y[keep], X[t : t + 1], C, k, config.metric.p, "linear", "yager", "lower", cutoffs=cut)
            np.testing.assert_allclose(lower[t], ref[0], rtol=0, atol=1e-12)


def test_fuzzy_decomposition():
    # fuzzy score = 0.51 * crisp score + 0.49 * weighted neighbour-of-neighbour class share
    rng = np.random.default_rng(30)
    X, y, C = oracles.random_instance(rng, n_max=80)
    Q = rng.normal(size=(12, X.shape[1]))
    data = dataset(X, y, C)
    k = 6
    fuzzy = fit_model(data, ClassifierConfig("fnn", "linear", "sugeno", fnn_mode="fuzzy"), k)
    crisp = fit_model(data, ClassifierConfig("fnn", "linear", "sugeno", fnn_mode="crisp"), k)
    index = fuzzy.index
    nb = index.query_batch(fuzzy.scaler.transform(Q), k)
    shares = (fuzzy.memberships - 0.51 * np.eye(C)[y]) / 0.49
    weights = (1 - np.arange(1, k + 1) / (k + 1)) * (1 - nb.distances / nb.distances[:, -1:]) / (1 + nb.distances / nb.distances[:, -1:])
    second = np.einsum("qk,qkc->qc", weights, shares[nb.indices]) / weights.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(fuzzy.scores(Q), 0.51 * crisp.scores(Q) + 0.49 * second, rtol=0, atol=1e-12)


@pytest.mark.parametrize("clf", ["nn", "fnn", "frnn"])
def test_score_ranges(clf):
    rng = np.random.default_rng(31)
    X, y, C = oracles.random_instance(rng, n_max=100)
    Q = rng.normal(0, 3, (40, X.shape[1]))
    for rank, dist in (("samworth", "samworth"), ("yager", "linear"), ("constant", "sugeno")):
        S = fit_model(dataset(X, y, C), ClassifierConfig(clf, rank, dist), 7).scores(Q)
        assert np.all(np.isfinite(S)) and np.all(S >= 0) and np.all(S <= 1 + 1e-12)
        if clf != "frnn":
            np.testing.assert_allclose(S.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("clf", ["nn", "fnn", "frnn"])
def test_degenerate_inputs_are_total(clf):
    identical = dataset(np.ones((6, 2)), [0, 0, 0, 1, 1, 1])
    singleton = dataset(np.arange(7.0)[:, None], [0, 0, 0, 0, 0, 0, 1])
    for data in (identical, singleton):
        for dist in (None, "linear", "yager"):
            config = ClassifierConfig(clf, "samworth", dist)
            for k in (1, data.n - 1):
                S = fit_model(data, config, k).scores(np.r_[data.X[:2], data.X[:1] + 0.5])
                assert np.all(np.isfinite(S)) and np.all(S >= 0)
            model = fit(data, ClassifierConfig(clf, "samworth", dist))
            assert np.all(np.isfinite(model.scores(data.X)))
