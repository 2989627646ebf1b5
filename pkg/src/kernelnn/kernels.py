"""Weight kernels for nearest neighbour voting.

A kernel is a non-increasing function on [0, 1]. Applied to ``i/(k+1)`` it
gives rank weights, applied to ``d_i/d_k`` it gives distance weights. The
improper kernels (``recip``, ``recip2``, and the FNN power kernel) diverge
at 0 and are only evaluated on (0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

FUZZY_NEGATIONS = frozenset({"linear", "epanechnikov", "quartic", "samworth", "sugeno", "yager"})
PROPER = FUZZY_NEGATIONS | {"constant", "laplace"}
IMPROPER = frozenset({"recip", "recip2", "power"})
KERNEL_NAMES = (
    "constant",
    "linear",
    "epanechnikov",
    "quartic",
    "samworth",
    "sugeno",
    "yager",
    "laplace",
    "recip",
    "recip2",
    "macleod",
)


@dataclass(frozen=True)
class Kernel:
    """A named weight kernel.

    ``m`` is the dimensionality for the Samworth kernel, ``exponent`` the
    power for the ``power`` kernel ``a -> a**(-exponent)``. ``macleod`` is
    not a kernel in the strict sense; it only produces distance weights.
    """

    name: str
    m: int | None = None
    exponent: float | None = None

    def __post_init__(self):
        if self.name not in PROPER | IMPROPER | {"macleod"}:
            raise ValueError(f"unknown kernel {self.name!r}; expected one of {KERNEL_NAMES}")
        if self.m is not None and (int(self.m) != self.m or self.m < 1):
            raise ValueError(f"Samworth dimensionality must be a positive integer, got {self.m!r}")
        if self.name == "power" and (self.exponent is None or self.exponent <= 0):
            raise ValueError("power kernel needs a positive exponent")

    @property
    def improper(self) -> bool:
        return self.name in IMPROPER

    @property
    def is_negation(self) -> bool:
        return self.name in FUZZY_NEGATIONS

    @property
    def distance_only(self) -> bool:
        return self.name == "macleod"

    @property
    def needs_dimension(self) -> bool:
        return self.name == "samworth" and self.m is None

    def with_dimension(self, m: int) -> "Kernel":
        """Fill in the Samworth dimensionality; other kernels are returned as-is."""
        if self.name == "samworth" and self.m is None:
            return replace(self, m=int(m))
        return self

    @property
    def label(self) -> str:
        return self.name

    def __call__(self, a):
        """Vectorised evaluation without domain checks."""
        a = np.asarray(a, dtype=float)
        name = self.name
        if name == "constant":
            return np.ones_like(a)
        if name == "linear":
            return 1.0 - a
        if name == "epanechnikov":
            return 1.0 - a**2
        if name == "quartic":
            return (1.0 - a**2) ** 2
        if name == "samworth":
            if self.m is None:
                raise ValueError("Samworth kernel needs the dimensionality m")
            return 1.0 - a ** (2.0 / self.m)
        if name == "sugeno":
            return (1.0 - a) / (1.0 + a)
        if name == "yager":
            return (1.0 - np.sqrt(a)) ** 2
        if name == "laplace":
            return np.exp(-a)
        if name == "recip":
            return 1.0 / a
        if name == "recip2":
            return 1.0 / a**2
        if name == "power":
            return a ** (-self.exponent)
        raise ValueError("the MacLeod rule depends on d_1 and cannot be evaluated pointwise")


def kernel_from_name(name: str, m: int | None = None) -> Kernel:
    """Build a kernel from its config name (``samworth`` takes ``m``)."""
    key = str(name).strip().lower()
    key = {"reciprocal": "recip", "recip1": "recip", "reciprocal2": "recip2"}.get(key, key)
    if key not in KERNEL_NAMES:
        raise ValueError(f"unknown kernel {name!r}; expected one of {KERNEL_NAMES}")
    return Kernel(key, m=m if key == "samworth" else None)


def fnn_kernel(q: float) -> Kernel:
    """Distance kernel equivalent to FNN's ``1/d**(2/(q-1))`` weights."""
    if not q > 1:
        raise ValueError(f"FNN exponent q must exceed 1, got {q}")
    exponent = 2.0 / (q - 1.0)
    if exponent == 1.0:
        return Kernel("recip")
    if exponent == 2.0:
        return Kernel("recip2")
    return Kernel("power", exponent=exponent)


def kernel_eval(kernel: Kernel, a: float) -> float:
    """Evaluate ``kernel`` at a single point of its domain."""
    a = float(a)
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"kernel argument {a} outside [0, 1]")
    if kernel.improper and a == 0.0:
        raise ValueError(f"improper kernel {kernel.name!r} is undefined at 0")
    return float(kernel(a))


def rank_weights(kernel: Kernel, k: int) -> np.ndarray:
    """Weights ``f(i/(k+1))`` for ranks ``i = 1..k``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if kernel.distance_only:
        raise ValueError("MacLeod weights cannot be used as rank weights")
    return kernel(np.arange(1, k + 1) / (k + 1.0))


def samworth_finite_weights(k: int, m: int) -> np.ndarray:
    """Samworth's asymptotically optimal rank weights for fixed ``k``.

    They sum to 1 and are non-increasing in the rank.
    """
    if k < 1 or m < 1:
        raise ValueError("k and m must be positive")
    i = np.arange(1, k + 1, dtype=float)
    power = 1.0 + 2.0 / m
    # i^p - (i-1)^p without cancellation for large i
    increments = np.ones(k)
    if k > 1:
        tail = i[1:]
        increments[1:] = -(tail**power) * np.expm1(power * np.log1p(-1.0 / tail))
    return (1.0 + m / 2.0 - m / (2.0 * k ** (2.0 / m)) * increments) / k


def _check_distances(distances: np.ndarray) -> np.ndarray:
    d = np.asarray(distances, dtype=float)
    if d.ndim == 1:
        d = d[None, :]
    if d.ndim != 2 or d.shape[1] < 1:
        raise ValueError("need at least one distance")
    if not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite")
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    if np.any(np.diff(d, axis=1) < 0):
        raise ValueError("distances must be sorted in ascending order")
    return d


def distance_weight_matrix(kernel: Kernel, distances: np.ndarray, *, check: bool = True) -> np.ndarray:
    """Row-wise distance weights for a batch of sorted distance vectors.

    Edge cases, in this order of precedence:

    1. ``d_k == 0``: every normalised distance is 0 (improper kernels give
       all ones);
    2. ``d_1 == d_k`` and ``s(1) == 0``: all ones;
    3. improper kernel with some ``d_i == 0``: those positions get 1, the
       rest 0.
    """
    d = _check_distances(distances) if check else np.atleast_2d(np.asarray(distances, dtype=float))
    if kernel.distance_only:
        return _macleod_matrix(d)
    dk = d[:, -1:]
    zero_k = dk[:, 0] == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(dk > 0, d / np.where(dk > 0, dk, 1.0), 0.0)
    np.clip(ratios, 0.0, 1.0, out=ratios)
    # d_i == d_k must give exactly 1, even where the division rounds
    ratios[d == dk] = 1.0
    ratios[zero_k] = 0.0

    if kernel.improper:
        has_zero = (d[:, :1] == 0)[:, 0]
        with np.errstate(divide="ignore", over="ignore"):
            weights = kernel(np.where(ratios > 0, ratios, 1.0))
        weights[has_zero] = (d[has_zero] == 0).astype(float)
        # a ratio so small that the weight overflows counts as a zero distance
        overflow = ~np.all(np.isfinite(weights), axis=1)
        weights[overflow] = (~np.isfinite(weights[overflow])).astype(float)
        return weights

    weights = kernel(ratios)
    if kernel(1.0) == 0:
        all_tied = (d[:, 0] == d[:, -1]) & ~zero_k
        weights[all_tied] = 1.0
    return weights


def distance_weights(kernel: Kernel, distances) -> np.ndarray:
    """Distance weights ``s(d_i / d_k)`` for one ascending distance vector."""
    d = np.asarray(distances, dtype=float)
    if d.ndim != 1:
        raise ValueError("expected a one-dimensional distance vector")
    return distance_weight_matrix(kernel, d)[0]


def _macleod_matrix(d: np.ndarray) -> np.ndarray:
    k = d.shape[1]
    if k == 1:
        return np.ones_like(d)
    dk = d[:, -1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(dk > 0, d / np.where(dk > 0, dk, 1.0), 0.0)
    ratios[d == dk] = 1.0
    ratios[(dk == 0)[:, 0]] = 0.0
    weights = 2.0 - ratios - ratios[:, :1]
    # d_1 == d_k > 0 zeroes the formula; fall back to equal weights
    degenerate = (d[:, 0] == d[:, -1]) & (d[:, -1] > 0)
    weights[degenerate] = 1.0
    weights[(dk == 0)[:, 0]] = 1.0
    return weights


def macleod_distance_weights(distances) -> np.ndarray:
    """MacLeod's modified linear weights ``2 - d*_i - d*_1``.

    These depend on ``d_1`` and so exist only as distance weights.
    """
    d = np.asarray(distances, dtype=float)
    if d.ndim != 1:
        raise ValueError("expected a one-dimensional distance vector")
    return _macleod_matrix(_check_distances(d))[0]


def combine_weights(rank, dist) -> np.ndarray:
    """Elementwise product of rank and distance weights."""
    rank = np.asarray(rank, dtype=float)
    dist = np.asarray(dist, dtype=float)
    if rank.shape[-1] != dist.shape[-1]:
        raise ValueError(f"length mismatch: {rank.shape[-1]} vs {dist.shape[-1]}")
    return rank * dist


def kernel_area(kernel: Kernel, grid: np.ndarray) -> float:
    """Trapezoidal area of ``kernel`` over ``grid``."""
    return float(np.trapezoid(kernel(grid), grid))


__all__ = [
    "Kernel",
    "KERNEL_NAMES",
    "combine_weights",
    "distance_weight_matrix",
    "distance_weights",
    "fnn_kernel",
    "kernel_area",
    "kernel_eval",
    "kernel_from_name",
    "macleod_distance_weights",
    "rank_weights",
    "samworth_finite_weights",
]

