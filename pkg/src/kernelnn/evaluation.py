"""AUROC, cross-validated evaluation and the paired significance tests."""

from __future__ import annotations

import logging
import time
import warnings
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from .classifiers import ClassifierConfig, fit
from .data import Dataset, stratified_folds

log = logging.getLogger(__name__)

EXACT_MAX_N = 20


class UndefinedAUROC(ValueError):
    """AUROC needs at least one positive and one negative instance."""


def auroc_binary(scores, labels, positive=True) -> float:
    """Probability that a random positive outscores a random negative, ties counting 1/2.

    Computed from the Mann-Whitney rank sum with mid-ranks, which gives
    the same numerator as exhaustive pair counting.
    """
    scores = np.asarray(scores, dtype=float)
    is_pos = np.asarray(labels) == positive
    if scores.shape != is_pos.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(is_pos.sum())
    n_neg = is_pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUROC("AUROC needs both positive and negative instances")
    ranks = rankdata(scores)
    u = ranks[is_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auroc_multiclass(scores, labels, method: str = "ovr") -> float:
    """Unweighted mean AUROC over the classes present in ``labels``.

    ``scores`` has one column per class code; ``labels`` holds codes.
    ``ovr`` averages one-vs-rest AUROCs; ``ovo`` averages, over pairs of
    present classes, the two pairwise AUROCs of each pair.
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    labels = np.asarray(labels)
    present = np.unique(labels)
    if present.size < 2:
        raise UndefinedAUROC("need at least two classes present")
    if method == "ovr":
        return float(np.mean([auroc_binary(scores[:, c], labels, c) for c in present]))
    if method == "ovo":
        values = []
        for i, a in enumerate(present):
            for b in present[i + 1 :]:
                rows = (labels == a) | (labels == b)
                values.append(auroc_binary(scores[rows, a], labels[rows], a))
                values.append(auroc_binary(scores[rows, b], labels[rows], b))
        return float(np.mean(values))
    raise ValueError(f"unknown multiclass method {method!r}")


@dataclass(frozen=True)
class WilcoxonResult:
    p_value: float
    statistic: float  # sum of ranks of the positive differences
    n_effective: int  # pairs left after dropping zero differences
    exact: bool
    degenerate: bool = False


def _signed_rank_null(doubled_ranks: np.ndarray) -> np.ndarray:
    """Counts of each doubled positive-rank sum over all 2^n sign patterns."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_one_sided(a, b, exact_max_n: int = EXACT_MAX_N) -> WilcoxonResult:
    """One-sided Wilcoxon signed-rank test of ``a > b``.

    Zero differences are dropped, tied absolute differences get average
    ranks. Up to ``exact_max_n`` remaining pairs the p-value is exact over
    all sign patterns; beyond that a normal approximation with tie-corrected
    variance and continuity correction is used. If every difference is
    zero the result is degenerate with p = 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 1:
        raise ValueError("need two equal-length non-empty vectors")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        return WilcoxonResult(1.0, 0.0, 0, True, degenerate=True)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= exact_max_n:
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = _signed_rank_null(doubled)
        observed = int(round(2 * w_plus))
        p = counts[observed:].sum() / float(2**n)
        return WilcoxonResult(float(min(1.0, p)), w_plus, n, True)
    mean = n * (n + 1) / 4.0
    _, ties = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(ties**3 - ties) / 48.0
    z = (w_plus - mean - 0.5) / np.sqrt(var)
    return WilcoxonResult(float(ndtr(-z)), w_plus, n, False)


def holm_bonferroni(p_values) -> np.ndarray:
    """Holm step-down adjusted p-values, in the input order."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return p.copy()
    if np.any((p < 0) | (p > 1) | ~np.isfinite(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    stepped = np.minimum(1.0, (m - np.arange(m)) * p[order])
    adjusted = np.empty(m)
    adjusted[order] = np.maximum.accumulate(stepped)
    return adjusted


# ---------------------------------------------------------------------------
# cross-validation


@dataclass(frozen=True, eq=False)
class FoldResult:
    fold: int
    auroc: float  # NaN when the test split holds a single class
    k: int
    approximation: str | None
    wall_ms: float


@dataclass(frozen=True, eq=False)
class EvaluationResult:
    dataset: str
    config: ClassifierConfig
    folds: tuple
    seed: int

    @property
    def digest(self) -> str:
        return self.config.digest()

    @property
    def aurocs(self) -> np.ndarray:
        return np.array([f.auroc for f in self.folds])

    @property
    def mean_auroc(self) -> float:
        values = self.aurocs
        values = values[~np.isnan(values)]
        return float(values.mean()) if values.size else float("nan")


def _run_fold(data: Dataset, config: ClassifierConfig, train_rows, test_rows, fold: int, capture: bool = False):
    if capture:
        try:
            return _run_fold(data, config, train_rows, test_rows, fold)
        except (ValueError, ArithmeticError) as exc:
            return exc
    start = time.perf_counter()
    train = data.subset(train_rows)
    test = data.subset(test_rows)
    model = fit(train, config)
    scores = model.scores(test.X)
    try:
        value = auroc_multiclass(scores, test.y, method=config.multiclass)
    except UndefinedAUROC:
        log.warning("%s fold %d: single-class test split, AUROC undefined", data.name, fold)
        warnings.warn(f"{data.name} fold {fold}: single-class test split, AUROC undefined", stacklevel=2)
        value = float("nan")
    approx = getattr(model, "approximation", None)
    wall = (time.perf_counter() - start) * 1000.0
    return FoldResult(fold, value, model.k, approx, wall)


def _check_classes(data: Dataset) -> None:
    if np.count_nonzero(data.class_counts()) < 2:
        raise ValueError(f"{data.name}: need at least two classes with records")
    for c, count in enumerate(data.class_counts()):
        if count < 2:
            raise ValueError(f"{data.name}: class {data.classes[c]!r} has {count} record(s); need at least 2")


def _run_tasks(tasks, jobs: int) -> list:
    if jobs == 1 or len(tasks) <= 1:
        return [_run_fold(*t) for t in tasks]
    from joblib import Parallel, delayed

    # joblib returns results in submission order, so output is independent of jobs
    return Parallel(n_jobs=jobs)(delayed(_run_fold)(*t) for t in tasks)


def cross_validate(data: Dataset, config: ClassifierConfig, folds: int = 5, seed: int = 0, jobs: int = 1) -> EvaluationResult:
    """Stratified k-fold evaluation; scaling and k-selection are fitted per training split."""
    _check_classes(data)
    splits = list(stratified_folds(data, folds, seed))
    tasks = [(data, config, tr, te, i) for i, (tr, te) in enumerate(splits)]
    return EvaluationResult(data.name, config, tuple(_run_tasks(tasks, jobs)), seed)


@dataclass(frozen=True)
class Skipped:
    """A dataset or grid cell that could not be evaluated."""

    dataset: str
    config: str | None
    reason: str


def evaluate_grid(datasets, configs, folds: int = 5, seed: int = 0, jobs: int = 1):
    """Cross-validate every configuration on every dataset.

    All (dataset, configuration, fold) tasks run as one batch, so ``jobs``
    parallelises across the whole grid. Every configuration sees the same
    fold assignment of a dataset. Returns ``(results, skipped)`` with
    results ordered by dataset, then configuration.
    """
    configs = list(configs)
    tasks, cells, skipped = [], [], []
    for data in datasets:
        try:
            _check_classes(data)
            splits = list(stratified_folds(data, folds, seed))
        except ValueError as exc:
            log.error("skipping dataset %s: %s", data.name, exc)
            skipped.append(Skipped(data.name, None, str(exc)))
            continue
        for config in configs:
            cells.append((data.name, config, len(tasks), len(splits)))
            tasks.extend((data, config, tr, te, i) for i, (tr, te) in enumerate(splits))
    outcomes = _run_tasks([t + (True,) for t in tasks], jobs)
    results = []
    for name, config, start, count in cells:
        folds_out = outcomes[start : start + count]
        errors = [f for f in folds_out if isinstance(f, Exception)]
        if errors:
            log.error("skipping %s on %s: %s", config.label(), name, errors[0])
            skipped.append(Skipped(name, config.label(), str(errors[0])))
            continue
        results.append(EvaluationResult(name, config, tuple(folds_out), seed))
    return results, skipped


# ---------------------------------------------------------------------------
# comparisons


@dataclass(frozen=True)
class Comparison:
    better: str  # the configuration hypothesised to be better
    worse: str
    family: str
    n_datasets: int
    wins: int
    ties: int
    losses: int
    statistic: float
    n_effective: int
    p_raw: float
    p_adjusted: float
    degenerate: bool


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    datasets: tuple
    comparisons: tuple = field(default_factory=tuple)

    def by_family(self) -> dict:
        out = defaultdict(list)
        for comp in self.comparisons:
            out[comp.family].append(comp)
        return dict(out)


class MismatchedResults(ValueError):
    pass


def compare_configs(results: dict, pairs, families=None, holm: bool = True) -> ComparisonReport:
    """Paired one-sided tests between configurations over shared datasets.

    ``results`` maps a configuration label to ``{dataset: mean AUROC}``.
    ``pairs`` lists ``(better, worse)`` label pairs, each tested for
    ``better > worse``. ``families`` maps a pair to a family name, or lists
    one name per pair; Holm's correction is applied within each family
    (pairs without a family form one family together).
    """
    pairs = [tuple(p) for p in pairs]
    families = families or {}
    missing = []
    shared = []
    for better, worse in pairs:
        for label in (better, worse):
            if label not in results:
                raise MismatchedResults(f"no results for configuration {label!r}")
        left, right = set(results[better]), set(results[worse])
        for ds in sorted(left ^ right):
            missing.append(f"{ds} has no result for {worse if ds in left else better}")
        if not left & right:
            missing.append(f"{better} and {worse} share no datasets")
        shared.append(sorted(left & right))
    if missing:
        raise MismatchedResults("missing paired results: " + "; ".join(missing))
    datasets = tuple(sorted(set().union(*shared))) if shared else ()
    raw = []
    for (better, worse), names in zip(pairs, shared):
        a = np.array([results[better][ds] for ds in names])
        b = np.array([results[worse][ds] for ds in names])
        raw.append((wilcoxon_one_sided(a, b), a, b))
    if isinstance(families, dict):
        family_of = [families.get(pair, "") for pair in pairs]
    else:
        family_of = list(families)
        if len(family_of) != len(pairs):
            raise ValueError("need one family name per pair")
    adjusted = np.array([r[0].p_value for r in raw])
    if holm:
        for fam in set(family_of):
            members = [i for i, f in enumerate(family_of) if f == fam]
            adjusted[members] = holm_bonferroni(adjusted[members])
    comparisons = []
    for i, ((better, worse), (res, a, b)) in enumerate(zip(pairs, raw)):
        comparisons.append(
            Comparison(
                better,
                worse,
                family_of[i],
                a.size,
                int(np.sum(a > b)),
                int(np.sum(a == b)),
                int(np.sum(a < b)),
                res.statistic,
                res.n_effective,
                res.p_value,
                float(adjusted[i]),
                res.degenerate,
            )
        )
    return ComparisonReport(datasets, tuple(comparisons))
