"""Minkowski distances and the matching centre/radius dispersion statistics.

Three metrics are supported: Boscovich (p=1), Euclidean (p=2) and
Chebyshev (p=inf). Each has a centre (median, mean, midrange) that
minimises the mean p-th power deviation of a univariate sample, and a
radius that is the minimised value. The radii are the per-attribute
scaling measures used by the classifiers; the interquartile half-range
is offered as an outlier-robust fourth option.
"""

from __future__ import annotations

import enum
import math

import numpy as np


class Metric(enum.Enum):
    """Minkowski metric, identified by its exponent."""

    BOSCOVICH = 1
    EUCLIDEAN = 2
    CHEBYSHEV = math.inf

    @property
    def p(self) -> float:
        return self.value

    @classmethod
    def parse(cls, name) -> "Metric":
        """Accept a config name (``boscovich``), an alias, or the exponent itself."""
        if isinstance(name, Metric):
            return name
        if isinstance(name, (int, float)) and not isinstance(name, bool):
            for metric in cls:
                if metric.value == name:
                    return metric
            raise ValueError(f"unsupported Minkowski exponent {name!r}; use 1, 2 or inf")
        key = str(name).strip().lower()
        try:
            return _METRIC_ALIASES[key]
        except KeyError:
            raise ValueError(
                f"unknown metric {name!r}; expected one of {sorted(_METRIC_ALIASES)}"
            ) from None

    @property
    def label(self) -> str:
        return self.name.lower()


_METRIC_ALIASES = {
    "boscovich": Metric.BOSCOVICH,
    "manhattan": Metric.BOSCOVICH,
    "cityblock": Metric.BOSCOVICH,
    "l1": Metric.BOSCOVICH,
    "1": Metric.BOSCOVICH,
    "euclidean": Metric.EUCLIDEAN,
    "l2": Metric.EUCLIDEAN,
    "2": Metric.EUCLIDEAN,
    "chebyshev": Metric.CHEBYSHEV,
    "maximum": Metric.CHEBYSHEV,
    "linf": Metric.CHEBYSHEV,
    "inf": Metric.CHEBYSHEV,
}


class Dispersion(enum.Enum):
    """Per-attribute scaling measure."""

    R1 = "r1"  # mean absolute deviation around the median
    R2 = "r2"  # population standard deviation
    RINF = "rinf"  # half-range
    RINF_STAR = "rinf*"  # interquartile half-range
    NONE = "none"

    @classmethod
    def parse(cls, name) -> "Dispersion":
        if isinstance(name, Dispersion):
            return name
        key = str(name).strip().lower()
        key = {"rinfstar": "rinf*", "r_inf": "rinf", "iqr": "rinf*", "std": "r2"}.get(key, key)
        for measure in cls:
            if measure.value == key:
                return measure
        raise ValueError(
            f"unknown scaling measure {name!r}; expected one of {[m.value for m in cls]}"
        )

    @property
    def label(self) -> str:
        return self.value


def _as_finite_vector(values, what: str = "values") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        arr = arr.ravel()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contain non-finite entries")
    return arr


def minkowski_distance(x, y, metric=Metric.EUCLIDEAN) -> float:
    """Minkowski distance between two equal-length finite vectors."""
    metric = Metric.parse(metric)
    x = _as_finite_vector(x, "x")
    y = _as_finite_vector(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.size == 0:
        raise ValueError("vectors must have at least one coordinate")
    gaps = np.abs(y - x)
    if metric is Metric.BOSCOVICH:
        return float(gaps.sum())
    if metric is Metric.EUCLIDEAN:
        return float(np.sqrt(np.dot(gaps, gaps)))
    return float(gaps.max())


def pairwise_distances(Y: np.ndarray, X: np.ndarray, metric=Metric.EUCLIDEAN) -> np.ndarray:
    """Distances between every row of ``Y`` and every row of ``X``.

    Uses explicit coordinate differences (no dot-product expansion), so
    identical rows give exactly zero and duplicate rows give identical
    distances, which the tie rule of the neighbour index relies on.
    """
    metric = Metric.parse(metric)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if Y.shape[1] != X.shape[1]:
        raise ValueError(f"dimension mismatch: {Y.shape[1]} vs {X.shape[1]}")
    gaps = np.abs(Y[:, None, :] - X[None, :, :])
    if metric is Metric.BOSCOVICH:
        return gaps.sum(axis=2)
    if metric is Metric.EUCLIDEAN:
        return np.sqrt(np.einsum("ijk,ijk->ij", gaps, gaps))
    return gaps.max(axis=2)


def p_centre(values, p) -> float:
    """Minimiser of the mean p-th power deviation: median, mean or midrange.

    For p=1 with an even number of values, the lower of the two middle
    order statistics is returned.
    """
    metric = Metric.parse(p)
    x = _as_finite_vector(values)
    if x.size == 0:
        raise ValueError("cannot compute the centre of an empty sample")
    if metric is Metric.BOSCOVICH:
        s = np.sort(x)
        return float(s[(s.size - 1) // 2])
    if metric is Metric.EUCLIDEAN:
        return float(x.mean())
    return float((x.min() + x.max()) / 2)


def p_deviation(values, z: float, p) -> float:
    """``(1/n sum |x_i - z|^p)^(1/p)``, or ``max |x_i - z|`` for p=inf.

    The p-radius is this quantity minimised over ``z``.
    """
    metric = Metric.parse(p)
    x = _as_finite_vector(values)
    if x.size == 0:
        raise ValueError("empty sample")
    gaps = np.abs(x - z)
    if metric is Metric.CHEBYSHEV:
        return float(gaps.max())
    if metric is Metric.BOSCOVICH:
        return float(gaps.mean())
    return float(np.sqrt(np.mean(gaps**2)))


def _linear_quantile(sorted_x: np.ndarray, q: float) -> float:
    # order statistic at 1-based position q(n-1)+1, linear interpolation
    pos = q * (sorted_x.size - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, sorted_x.size - 1)
    frac = pos - lo
    return float(sorted_x[lo] + frac * (sorted_x[hi] - sorted_x[lo]))


def dispersion(values, measure) -> float:
    """Spread of a univariate sample under one of the four scaling measures.

    ``R2`` divides by n, not n-1. ``RINF_STAR`` uses linearly interpolated
    quartiles at positions 0.25(n-1)+1 and 0.75(n-1)+1 of the sorted
    sample.
    """
    measure = Dispersion.parse(measure)
    if measure is Dispersion.NONE:
        raise ValueError("Dispersion.NONE has no dispersion formula")
    x = _as_finite_vector(values)
    if x.size == 0:
        raise ValueError("cannot compute the dispersion of an empty sample")
    if x.min() == x.max():
        # exact zero; the float mean of a constant column need not equal it
        return 0.0
    if measure is Dispersion.R1:
        med = float(np.median(x))
        return float(np.mean(np.abs(x - med)))
    if measure is Dispersion.R2:
        return float(np.sqrt(np.mean((x - x.mean()) ** 2)))
    if measure is Dispersion.RINF:
        return float((x.max() - x.min()) / 2)
    s = np.sort(x)
    return (_linear_quantile(s, 0.75) - _linear_quantile(s, 0.25)) / 2
