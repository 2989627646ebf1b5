"""Kernel-weighted NN, FNN and FRNN classifiers with leave-one-out selection of k.

All three classifiers share one weighting abstraction: a rank kernel
applied to ``i/(k+1)`` and a distance kernel applied to normalised
neighbour distances.

* NN scores a class by the weighted share of its members among the k
  nearest neighbours.
* FNN replaces the crisp class indicator of each neighbour by a
  membership vector ``u``; in crisp mode it coincides with NN.
* FRNN scores a class by the fuzzy-rough upper and lower approximations,
  built from distances to the nearest members of the class and of its
  complement, normalised by two global cutoffs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset, Scaler, apply_scaler, fit_scaler
from .geometry import Dispersion, Metric
from .kernels import (
    Kernel,
    combine_weights,
    distance_weight_matrix,
    fnn_kernel,
    kernel_from_name,
    rank_weights,
)
from .neighbours import NeighbourIndex

log = logging.getLogger(__name__)

CLASSIFIERS = ("nn", "fnn", "frnn")
APPROXIMATIONS = ("lower", "upper", "mean")  # also the selection tie order
FUZZY_OWN = 0.51
FUZZY_SHARE = 0.49


@dataclass(frozen=True)
class WeightScheme:
    """Rank kernel and distance kernel (or the MacLeod rule)."""

    rank_kernel: Kernel = Kernel("constant")
    distance_kernel: Kernel = Kernel("constant")

    def with_dimension(self, m: int) -> "WeightScheme":
        return WeightScheme(self.rank_kernel.with_dimension(m), self.distance_kernel.with_dimension(m))


@dataclass(frozen=True)
class ClassifierConfig:
    """One cell of the experimental grid.

    ``distance_kernel=None`` selects the classifier's default: constant for
    NN, the ``1/d**(2/(q-1))`` equivalent for FNN, linear for FRNN.
    ``k=None`` selects k (and, for FRNN with ``approximation="auto"``, the
    approximation) by leave-one-out AUROC over ``k_grid``.
    """

    classifier: str = "nn"
    rank_kernel: str = "constant"
    distance_kernel: str | None = None
    metric: Metric = Metric.BOSCOVICH
    scaling: Dispersion = Dispersion.R1
    fnn_mode: str = "fuzzy"
    fnn_q: float = 3.0
    frnn_approximation: str = "auto"
    k: int | None = None
    k_grid: tuple | None = None
    multiclass: str = "ovr"

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        object.__setattr__(self, "scaling", Dispersion.parse(self.scaling))
        clf = str(self.classifier).lower()
        object.__setattr__(self, "classifier", clf)
        if clf not in CLASSIFIERS:
            raise ValueError(f"classifier must be one of {CLASSIFIERS}, got {self.classifier!r}")
        rank = kernel_from_name(self.rank_kernel)
        object.__setattr__(self, "rank_kernel", rank.name)
        if rank.distance_only:
            raise ValueError("the MacLeod rule only produces distance weights")
        if self.distance_kernel is not None:
            dist = kernel_from_name(self.distance_kernel)
            object.__setattr__(self, "distance_kernel", dist.name)
            if clf == "frnn" and not dist.is_negation:
                raise ValueError(
                    f"FRNN needs a fuzzy-negation distance kernel (s(0)=1, s(1)=0), got {dist.name!r}"
                )
        if self.fnn_mode not in ("crisp", "fuzzy"):
            raise ValueError(f"fnn_mode must be 'crisp' or 'fuzzy', got {self.fnn_mode!r}")
        if not self.fnn_q > 1:
            raise ValueError(f"fnn_q must exceed 1, got {self.fnn_q}")
        if self.frnn_approximation not in APPROXIMATIONS + ("auto",):
            raise ValueError(f"frnn_approximation must be one of {APPROXIMATIONS + ('auto',)}")
        if self.k is not None and (int(self.k) != self.k or self.k < 1):
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if self.k_grid is not None:
            grid = tuple(sorted({int(v) for v in self.k_grid}))
            if not grid or grid[0] < 1:
                raise ValueError("k_grid must hold positive integers")
            object.__setattr__(self, "k_grid", grid)
        if self.multiclass not in ("ovr", "ovo"):
            raise ValueError("multiclass must be 'ovr' or 'ovo'")

    def scheme(self, m: int) -> WeightScheme:
        """Resolved kernels for data with ``m`` features."""
        if self.distance_kernel is not None:
            dist = kernel_from_name(self.distance_kernel)
        elif self.classifier == "fnn":
            dist = fnn_kernel(self.fnn_q)
        elif self.classifier == "frnn":
            dist = Kernel("linear")
        else:
            dist = Kernel("constant")
        return WeightScheme(kernel_from_name(self.rank_kernel), dist).with_dimension(m)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["metric"] = self.metric.label
        d["scaling"] = self.scaling.label
        d["k_grid"] = list(self.k_grid) if self.k_grid is not None else None
        return d

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    @property
    def distance_label(self) -> str:
        if self.distance_kernel is not None:
            return self.distance_kernel
        if self.classifier == "fnn":
            return fnn_kernel(self.fnn_q).name if fnn_kernel(self.fnn_q).name != "power" else f"q={self.fnn_q:g}"
        return "linear" if self.classifier == "frnn" else "constant"

    @property
    def variant(self) -> str:
        if self.classifier == "fnn":
            return self.fnn_mode
        if self.classifier == "frnn":
            return self.frnn_approximation
        return "-"

    def label(self) -> str:
        return (
            f"{self.classifier}/{self.metric.label}/{self.scaling.label}"
            f"/rank={self.rank_kernel}/dist={self.distance_label}/{self.variant}"
        )


def default_k_grid(n: int) -> tuple:
    """Candidate k values for a training set of ``n`` records.

    ``1..min(40, n-1)`` plus steps of factor 1.5 up to ``min(4 sqrt(n), n-1)``.
    """
    top = n - 1
    if top < 1:
        raise ValueError("leave-one-out selection needs at least two training records")
    grid = list(range(1, min(40, top) + 1))
    cap = min(int(math.floor(4 * math.sqrt(n))), top)
    value = 40.0
    while True:
        value *= 1.5
        if int(round(value)) >= cap:
            break
        grid.append(int(round(value)))
    if cap > grid[-1]:
        grid.append(cap)
    return tuple(grid)


# ---------------------------------------------------------------------------
# scoring kernels shared by fitted models and leave-one-out validation


def _one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((y.size, n_classes))
    out[np.arange(y.size), y] = 1.0
    return out


def vote_scores(distances: np.ndarray, indices: np.ndarray, votes: np.ndarray, scheme: WeightScheme) -> np.ndarray:
    """Weighted vote over neighbour rows.

    ``votes`` has one row per training record: a one-hot class indicator
    for NN and crisp FNN, the membership vector for fuzzy FNN. Rows whose
    combined weights are all zero fall back to equal weights.
    """
    k = distances.shape[1]
    w = rank_weights(scheme.rank_kernel, k)
    s = distance_weight_matrix(scheme.distance_kernel, distances, check=False)
    weights = combine_weights(w[None, :], s)
    total = weights.sum(axis=1)
    dead = ~(total > 0)
    if np.any(dead):
        weights[dead] = 1.0
        total[dead] = k
    scores = np.einsum("qk,qkc->qc", weights, votes[indices])
    return scores / total[:, None]


def fuzzy_memberships(neighbour_labels: np.ndarray, own: np.ndarray, n_classes: int) -> np.ndarray:
    """``0.51 [x in C] + 0.49 n_C(x)/k`` from each record's k neighbour labels."""
    k = neighbour_labels.shape[1]
    counts = np.zeros((own.size, n_classes))
    np.add.at(counts, (np.repeat(np.arange(own.size), k), neighbour_labels.ravel()), 1.0)
    return FUZZY_OWN * _one_hot(own, n_classes) + FUZZY_SHARE * counts / k


def fnn_fit_memberships(index: NeighbourIndex, k: int, n_classes: int | None = None) -> np.ndarray:
    """FNN training memberships, each record's neighbours found with itself excluded."""
    if k >= index.n:
        raise ValueError(f"k={k} needs at least {k + 1} training records, have {index.n}")
    c = len(index.pools) if n_classes is None else n_classes
    nb = index.loo_query_batch(np.arange(index.n), k)
    return fuzzy_memberships(index.labels[nb.indices], index.labels, c)


def frnn_fit_cutoffs(index: NeighbourIndex, k: int) -> tuple[float, float]:
    """Global FRNN cutoffs from the training data.

    The within-class cutoff is the largest k-th neighbour distance of any
    training record within its own class (itself excluded); the
    out-of-class cutoff is the largest k-th neighbour distance to the
    complement of its class. k is clamped to the available pool size and
    records without any pool (singleton class, or a single-class training
    set) are skipped.
    """
    d_plus = d_minus = 0.0
    for c, members in enumerate(index.pools):
        if members.size == 0:
            continue
        for mode, avail in (("within", members.size - 1), ("outside", index.n - members.size)):
            if avail < 1:
                continue
            if avail < k:
                log.debug("FRNN cutoff for class %d (%s): k=%d clamped to %d", c, mode, k, avail)
            res = index.loo_query_batch(members, min(k, avail), c, mode)
            kth = float(res.distances[:, -1].max())
            if mode == "within":
                d_plus = max(d_plus, kth)
            else:
                d_minus = max(d_minus, kth)
    return d_plus, d_minus


def _clamped_ratio(d: np.ndarray, cutoff: float) -> np.ndarray:
    if cutoff <= 0:
        return np.zeros_like(d)
    return np.minimum(d / cutoff, 1.0)


def _approximation_sum(dist: np.ndarray, w: np.ndarray, kernel: Kernel, cutoff: float, lower: bool) -> np.ndarray:
    """Rank-weighted mean of ``s(ratio)`` (upper) or ``1 - s(ratio)`` (lower) over the first p columns."""
    p = dist.shape[1]
    values = kernel(_clamped_ratio(dist, cutoff))
    if lower:
        values = 1.0 - values
    wp = w[:p]
    return values @ wp / wp.sum()


def frnn_approximations(
    index: NeighbourIndex,
    Y: np.ndarray,
    k: int,
    scheme: WeightScheme,
    cutoffs: tuple[float, float],
) -> tuple[np.ndarray, np.ndarray]:
    """Upper and lower approximation scores, shape ``(queries, classes)``.

    A class (or complement) with ``p < k`` records contributes its ``p``
    neighbours, weighted by the first ``p`` rank weights. An empty pool
    gives upper 0 and lower 1.
    """
    Y = np.atleast_2d(Y)
    n_classes = len(index.pools)
    upper = np.zeros((Y.shape[0], n_classes))
    lower = np.ones((Y.shape[0], n_classes))
    w = rank_weights(scheme.rank_kernel, k)
    d_plus, d_minus = cutoffs
    for c in range(n_classes):
        for mode, target, cutoff, is_lower in (("within", upper, d_plus, False), ("outside", lower, d_minus, True)):
            avail = index.pool(c, mode).size
            if avail < 1 or Y.shape[0] == 0:
                continue
            res = index.query_class_batch(Y, min(k, avail), c, mode)
            target[:, c] = _approximation_sum(res.distances, w, scheme.distance_kernel, cutoff, is_lower)
    return upper, lower


class FRNNLooTable:
    """Leave-one-out neighbour distances of every training record within each
    class and within its complement, up to ``k_max``.

    Neighbours for smaller k are prefixes, so one table serves the whole k
    grid: both the cutoffs and the approximations for any ``k <= k_max``.
    """

    def __init__(self, index: NeighbourIndex, k_max: int):
        self.n = index.n
        self.n_classes = len(index.pools)
        # (c, mode) -> list of (rows, distances, rows are members of c)
        self.groups = {}
        for c in range(self.n_classes):
            for mode in ("within", "outside"):
                pool = index.pool(c, mode)
                in_pool = index.labels == c if mode == "within" else index.labels != c
                groups = []
                for inside in (True, False):
                    rows = np.flatnonzero(in_pool == inside)
                    avail = pool.size - 1 if inside else pool.size
                    if rows.size == 0 or avail < 1:
                        continue
                    res = index.loo_query_batch(rows, min(k_max, avail), c, mode)
                    groups.append((rows, res.distances, inside == (mode == "within")))
                self.groups[(c, mode)] = groups

    def cutoffs(self, k: int) -> tuple[float, float]:
        """Same values as ``frnn_fit_cutoffs(index, k)``."""
        cut = {"within": 0.0, "outside": 0.0}
        for (c, mode), groups in self.groups.items():
            for _, dist, members in groups:
                if members:
                    cut[mode] = max(cut[mode], float(dist[:, min(k, dist.shape[1]) - 1].max()))
        return cut["within"], cut["outside"]

    def approximations(self, k: int, scheme: WeightScheme, cutoffs: tuple[float, float]):
        upper = np.zeros((self.n, self.n_classes))
        lower = np.ones((self.n, self.n_classes))
        w = rank_weights(scheme.rank_kernel, k)
        d_plus, d_minus = cutoffs
        for (c, mode), groups in self.groups.items():
            target, cutoff, is_lower = (upper, d_plus, False) if mode == "within" else (lower, d_minus, True)
            for rows, dist, _ in groups:
                target[rows, c] = _approximation_sum(dist[:, :k], w, scheme.distance_kernel, cutoff, is_lower)
        return upper, lower


def combine_approximation(upper: np.ndarray, lower: np.ndarray, approximation: str) -> np.ndarray:
    if approximation == "upper":
        return upper
    if approximation == "lower":
        return lower
    if approximation == "mean":
        return (upper + lower) / 2
    raise ValueError(f"unknown approximation {approximation!r}")


# ---------------------------------------------------------------------------
# fitted models


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """Outcome of leave-one-out selection: chosen k, approximation and grid AUROCs."""

    k: int
    approximation: str | None
    grid: tuple
    auroc: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class FittedModel:
    config: ClassifierConfig
    scaler: Scaler
    index: NeighbourIndex
    scheme: WeightScheme
    k: int
    classes: tuple
    selection: SelectionResult | None = None

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def _prepare(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.index.m:
            raise ValueError(f"expected {self.index.m} features, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("query records contain non-finite values")
        return apply_scaler(self.scaler, X)

    def scores(self, X) -> np.ndarray:
        """Class scores for raw (unscaled) records, shape ``(queries, classes)``."""
        raise NotImplementedError

    def score(self, y) -> np.ndarray:
        return self.scores(np.asarray(y, dtype=float)[None, :])[0]

    def predict(self, X) -> list:
        """Class with the highest score; ties go to the earliest class in the catalogue."""
        return [self.classes[i] for i in np.argmax(self.scores(X), axis=1)]


@dataclass(frozen=True, eq=False)
class FittedNN(FittedModel):
    def scores(self, X) -> np.ndarray:
        nb = self.index.query_batch(self._prepare(X), self.k)
        return vote_scores(nb.distances, nb.indices, _one_hot(self.index.labels, self.n_classes), self.scheme)


@dataclass(frozen=True, eq=False)
class FittedFNN(FittedModel):
    memberships: np.ndarray | None = None  # fuzzy mode only

    def scores(self, X) -> np.ndarray:
        nb = self.index.query_batch(self._prepare(X), self.k)
        votes = self.memberships if self.memberships is not None else _one_hot(self.index.labels, self.n_classes)
        return vote_scores(nb.distances, nb.indices, votes, self.scheme)


@dataclass(frozen=True, eq=False)
class FittedFRNN(FittedModel):
    cutoffs: tuple = (0.0, 0.0)
    approximation: str = "mean"

    def approximations(self, X) -> tuple[np.ndarray, np.ndarray]:
        return frnn_approximations(self.index, self._prepare(X), self.k, self.scheme, self.cutoffs)

    def scores(self, X) -> np.ndarray:
        upper, lower = self.approximations(X)
        return combine_approximation(upper, lower, self.approximation)


def _build(train: Dataset, config: ClassifierConfig, scaler: Scaler | None):
    scaler = fit_scaler(train, config.scaling) if scaler is None else scaler
    index = NeighbourIndex(apply_scaler(scaler, train.X), train.y, config.metric, n_classes=len(train.classes))
    return scaler, index, config.scheme(train.m)


def fit_model(
    train: Dataset,
    config: ClassifierConfig,
    k: int,
    approximation: str | None = None,
    selection: SelectionResult | None = None,
    scaler: Scaler | None = None,
) -> FittedModel:
    """Fit with a fixed ``k`` (clamped to what the training set supports)."""
    scaler, index, scheme = _build(train, config, scaler)
    common = dict(config=config, scaler=scaler, index=index, scheme=scheme, classes=train.classes, selection=selection)
    if config.classifier == "nn":
        return FittedNN(k=min(k, train.n), **common)
    if config.classifier == "fnn":
        if config.fnn_mode == "fuzzy":
            if train.n < 2:
                raise ValueError("fuzzy FNN needs at least two training records")
            kk = min(k, train.n - 1)
            u = fnn_fit_memberships(index, kk, len(train.classes))
            return FittedFNN(k=kk, memberships=u, **common)
        return FittedFNN(k=min(k, train.n), **common)
    approx = approximation or (config.frnn_approximation if config.frnn_approximation != "auto" else "mean")
    return FittedFRNN(k=k, cutoffs=frnn_fit_cutoffs(index, k), approximation=approx, **common)


def fit(train: Dataset, config: ClassifierConfig) -> FittedModel:
    """Fit a classifier, selecting k by leave-one-out AUROC unless ``config.k`` is set."""
    if config.k is not None:
        return fit_model(train, config, config.k)
    scaler, index, scheme = _build(train, config, None)
    selection = select_k(index, train.classes, config, scheme)
    return fit_model(train, config, selection.k, selection.approximation, selection, scaler)


# ---------------------------------------------------------------------------
# leave-one-out validation


def loo_scores(index: NeighbourIndex, config: ClassifierConfig, scheme: WeightScheme, k_values, n_classes: int):
    """Leave-one-out class scores of every training record for each k.

    Yields ``(k, approximation, scores)``; approximation is ``None`` for
    NN and FNN. One ``max(k)+1`` query per record serves every k for NN
    and FNN, since the neighbours for k are a prefix of those for k+1;
    FRNN likewise uses one class-restricted query per class and mode.
    FNN memberships and FRNN cutoffs are fitted once on the full training
    set for each k.
    """
    k_values = sorted(set(int(k) for k in k_values))
    y = index.labels
    if config.classifier in ("nn", "fnn"):
        nb = index.loo_query_batch(np.arange(index.n), k_values[-1])
        one_hot = _one_hot(y, n_classes)
        for k in k_values:
            dist, idx = nb.distances[:, :k], nb.indices[:, :k]
            if config.classifier == "fnn" and config.fnn_mode == "fuzzy":
                votes = fuzzy_memberships(y[idx], y, n_classes)
            else:
                votes = one_hot
            yield k, None, vote_scores(dist, idx, votes, scheme)
        return
    approximations = APPROXIMATIONS if config.frnn_approximation == "auto" else (config.frnn_approximation,)
    table = FRNNLooTable(index, k_values[-1])
    for k in k_values:
        upper, lower = table.approximations(k, scheme, table.cutoffs(k))
        for approx in approximations:
            yield k, approx, combine_approximation(upper, lower, approx)


def select_k(index: NeighbourIndex, classes: tuple, config: ClassifierConfig, scheme: WeightScheme) -> SelectionResult:
    """Choose k (and the FRNN approximation) maximising leave-one-out AUROC.

    Ties go to the smallest k, then to the approximation order lower,
    upper, mean. Grid values above ``n-1`` are dropped.
    """
    from .evaluation import auroc_multiclass

    n = index.n
    grid = config.k_grid if config.k_grid is not None else default_k_grid(n)
    grid = tuple(k for k in grid if k <= n - 1)
    if not grid:
        raise ValueError(f"empty k grid after clamping to n-1={n - 1}")
    present = np.unique(index.labels)
    table = {}
    best = None
    for k, approx, scores in loo_scores(index, config, scheme, grid, len(classes)):
        if present.size < 2:
            value = 0.5
        else:
            value = auroc_multiclass(scores, index.labels, method=config.multiclass)
        table[(k, approx)] = value
        rank = (-value, k, APPROXIMATIONS.index(approx) if approx else 0)
        if best is None or rank < best[0]:
            best = (rank, k, approx)
    return SelectionResult(k=best[1], approximation=best[2], grid=grid, auroc=table)

