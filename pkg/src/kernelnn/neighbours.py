"""Exact k-nearest-neighbour queries with deterministic tie-breaking.

Search is a chunked linear scan. Results are ordered by distance, ties by
ascending training index, so every query is reproducible regardless of
chunking or batching.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Metric, pairwise_distances

# upper bound on the float entries of one distance chunk (q x n x m)
_CHUNK_ELEMENTS = 1 << 22


class InsufficientNeighbours(ValueError):
    """Raised when a (restricted) pool holds fewer records than requested."""

    def __init__(self, requested: int, pool_size: int, what: str = "pool"):
        super().__init__(f"requested {requested} neighbours but the {what} holds only {pool_size} records")
        self.requested = requested
        self.pool_size = pool_size


@dataclass(frozen=True, eq=False)
class QueryResult:
    """Neighbour distances and training indices, nearest first.

    One-dimensional for a single query, ``(queries, k)`` for a batch.
    """

    distances: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return self.distances.shape[-1]

    def row(self, i: int) -> "QueryResult":
        return QueryResult(self.distances[i], self.indices[i])


def _smallest_k(D: np.ndarray, k: int) -> np.ndarray:
    """Column positions of the k smallest entries per row, ties by position."""
    n = D.shape[1]
    if k >= n:
        return np.argsort(D, axis=1, kind="stable")
    part = np.argpartition(D, k - 1, axis=1)[:, :k]
    thr = np.max(np.take_along_axis(D, part, axis=1), axis=1)
    out = np.empty((D.shape[0], k), dtype=np.int64)
    n_le = np.count_nonzero(D <= thr[:, None], axis=1)
    clean = n_le == k
    if np.any(clean):
        sel = np.sort(part[clean], axis=1)
        vals = np.take_along_axis(D[clean], sel, axis=1)
        order = np.argsort(vals, axis=1, kind="stable")
        out[clean] = np.take_along_axis(sel, order, axis=1)
    for r in np.flatnonzero(~clean):
        # boundary tie: keep the lowest positions among the tied values
        row = D[r]
        below = np.flatnonzero(row < thr[r])
        tied = np.flatnonzero(row == thr[r])[: k - below.size]
        sel = np.concatenate([below, tied])
        out[r] = sel[np.argsort(row[sel], kind="stable")]
    return out


class NeighbourIndex:
    """Immutable index over scaled training records.

    Parameters
    ----------
    records : array of shape (n, m)
    labels : integer class codes of shape (n,), optional
        Needed for class-restricted queries.
    metric : Metric or name
    """

    def __init__(self, records, labels=None, metric=Metric.EUCLIDEAN, n_classes: int | None = None):
        X = np.array(records, dtype=float, copy=True)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"need a non-empty (n, m) record matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("records contain non-finite values")
        X.setflags(write=False)
        self.records = X
        self.metric = Metric.parse(metric)
        if labels is None:
            self.labels = None
            self.pools = ()
        else:
            y = np.array(labels, dtype=np.int64, copy=True)
            if y.shape != (X.shape[0],):
                raise ValueError("labels must match the number of records")
            y.setflags(write=False)
            self.labels = y
            c = int(y.max()) + 1 if n_classes is None else n_classes
            self.pools = tuple(np.flatnonzero(y == j) for j in range(c))
        self._complements = tuple(np.flatnonzero(self.labels != j) for j in range(len(self.pools)))

    @property
    def n(self) -> int:
        return self.records.shape[0]

    @property
    def m(self) -> int:
        return self.records.shape[1]

    def pool(self, cls: int | None = None, mode: str = "within") -> np.ndarray:
        """Training indices (ascending) of the restricted pool."""
        if cls is None:
            return np.arange(self.n)
        if self.labels is None:
            raise ValueError("index was built without labels")
        if mode == "within":
            return self.pools[cls]
        if mode == "outside":
            return self._complements[cls]
        raise ValueError(f"mode must be 'within' or 'outside', got {mode!r}")

    def _search(self, Y: np.ndarray, k: int, pool: np.ndarray, exclude: np.ndarray | None) -> QueryResult:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[1] != self.m:
            raise ValueError(f"queries have {Y.shape[1]} features, index has {self.m}")
        if k < 1:
            raise ValueError("k must be at least 1")
        size = pool.size
        if exclude is None:
            if k > size:
                raise InsufficientNeighbours(k, size)
            k_fetch = k
        else:
            exclude = np.asarray(exclude, dtype=np.int64)
            in_pool = np.isin(exclude, pool)
            if k > size - (1 if in_pool.any() else 0):
                raise InsufficientNeighbours(k, size - 1 if in_pool.any() else size)
            k_fetch = min(k + 1, size)
        dist = np.empty((Y.shape[0], k))
        idx = np.empty((Y.shape[0], k), dtype=np.int64)
        if Y.shape[0] == 0:
            return QueryResult(dist, idx)
        X = self.records[pool]
        step = max(1, _CHUNK_ELEMENTS // max(1, size * self.m))
        for start in range(0, Y.shape[0], step):
            stop = min(start + step, Y.shape[0])
            D = pairwise_distances(Y[start:stop], X, self.metric)
            pos = _smallest_k(D, k_fetch)
            got_idx = pool[pos]
            got_dist = np.take_along_axis(D, pos, axis=1)
            if exclude is None:
                dist[start:stop], idx[start:stop] = got_dist, got_idx
                continue
            hits = got_idx == exclude[start:stop, None]
            # drop the self position where present, otherwise the surplus last one
            keep = ~hits
            no_hit = ~hits.any(axis=1)
            if k_fetch > k:
                keep[no_hit, -1] = False
            idx[start:stop] = got_idx[keep].reshape(-1, k)
            dist[start:stop] = got_dist[keep].reshape(-1, k)
        return QueryResult(dist, idx)

    def query(self, y, k: int) -> QueryResult:
        """The ``k`` nearest training records to a single query."""
        return self._search(np.asarray(y, dtype=float)[None, :], k, self.pool(), None).row(0)

    def query_batch(self, Y, k: int) -> QueryResult:
        return self._search(Y, k, self.pool(), None)

    def query_class(self, y, k: int, cls: int, mode: str = "within") -> QueryResult:
        """Nearest neighbours within class ``cls`` or within its complement."""
        return self._search(np.asarray(y, dtype=float)[None, :], k, self.pool(cls, mode), None).row(0)

    def query_class_batch(self, Y, k: int, cls: int, mode: str = "within") -> QueryResult:
        return self._search(Y, k, self.pool(cls, mode), None)

    def loo_query(self, t: int, k: int) -> QueryResult:
        """Neighbours of training record ``t`` among the other records.

        A ``k+1`` query drops position ``t`` only; zero-distance duplicates
        of ``t`` remain.
        """
        if not 0 <= t < self.n:
            raise IndexError(f"training position {t} out of range")
        if k >= self.n:
            raise InsufficientNeighbours(k, self.n - 1, "leave-one-out pool")
        return self.loo_query_batch(np.array([t]), k).row(0)

    def loo_query_batch(self, positions, k: int, cls: int | None = None, mode: str = "within") -> QueryResult:
        """Leave-one-out queries for many training positions at once.

        With ``cls`` given, the pool is restricted as in ``query_class``;
        the record itself is removed only when it lies in the pool.
        """
        positions = np.asarray(positions, dtype=np.int64)
        return self._search(self.records[positions], k, self.pool(cls, mode), positions)

