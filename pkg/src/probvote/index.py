"""Dynamic inverted multi-index over projected descriptors.

The descriptor is split into two halves, each quantised by its own k-means
codebook; a cell is a pair of codewords.  Queries visit the ``probe_cells``
cell pairs with the smallest summed sub-distances (multi-sequence order)
and re-rank the collected entries by exact squared distance.

Single writer: ``insert`` must not overlap a query.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._kernels import brute_kernel, knn_kernel

__all__ = [
    "IndexConfig",
    "NeighborMatch",
    "NeighborBatch",
    "MultiIndex",
    "train_index",
    "kmeans",
    "multi_sequence",
    "exact_knn",
    "exact_knn_batch",
    "brute_force_knn",
    "adaptive_k",
    "sqdist_rows",
]

NO_LANDMARK = -1

# (upper bound on database size, k) from the adaptive neighbour table
_ADAPTIVE_K = ((10_000, 1), (100_000, 2), (1_000_000, 3), (10_000_000, 6))


def adaptive_k(database_size: int) -> int:
    """Number of neighbours to retrieve for a database of the given size."""
    if database_size < 0:
        raise ValueError("database size must be non-negative")
    for bound, k in _ADAPTIVE_K:
        if database_size < bound:
            return k
    return 8


@dataclass(frozen=True)
class IndexConfig:
    codebook_size: int = 64
    probe_cells: int = 32
    max_distance: float = math.inf  # squared distance cap (theta)
    kmeans_iters: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.codebook_size < 1:
            raise ValueError("codebook_size must be >= 1")
        if self.probe_cells < 1:
            raise ValueError("probe_cells must be >= 1")
        if not self.max_distance >= 0:
            raise ValueError("max_distance must be >= 0")


class NeighborMatch(NamedTuple):
    entry: int
    owner: int
    landmark: int | None
    sqdist: float


class NeighborBatch(NamedTuple):
    """Flat kNN results for a batch of queries, grouped by query, ascending."""

    query: np.ndarray
    entry: np.ndarray
    owner: np.ndarray
    landmark: np.ndarray
    sqdist: np.ndarray

    def __len__(self):
        return len(self.entry)

    def matches_for(self, q: int) -> list[NeighborMatch]:
        sel = np.flatnonzero(self.query == q)
        return [_as_match(self.entry[i], self.owner[i], self.landmark[i], self.sqdist[i]) for i in sel]


def _as_match(entry, owner, landmark, sqdist) -> NeighborMatch:
    lm = int(landmark)
    return NeighborMatch(int(entry), int(owner), None if lm == NO_LANDMARK else lm, float(sqdist))


def _empty_batch() -> NeighborBatch:
    z = np.zeros(0, dtype=np.int64)
    return NeighborBatch(z, z.copy(), z.copy(), z.copy(), np.zeros(0))


def sqdist_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise squared Euclidean distance with a fixed summation order.

    Both the index and the brute-force oracle go through this function so
    their distances agree bit for bit.
    """
    diff = a - b
    diff *= diff
    acc = diff[..., 0].copy()
    for c in range(1, diff.shape[-1]):
        acc += diff[..., c]
    return acc


def _pairwise_sqdist(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return sqdist_rows(X[:, None, :], C[None, :, :])


def kmeans(X, n_clusters: int, iters: int = 25, seed: int = 0) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; a fixed number of iterations.

    Empty clusters keep their previous centre.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if n < n_clusters:
        raise ValueError(f"need at least {n_clusters} points, got {n}")
    rng = np.random.default_rng(seed)
    centers = np.empty((n_clusters, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = sqdist_rows(X, centers[0])
    for c in range(1, n_clusters):
        total = closest.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers[c] = X[idx]
        np.minimum(closest, sqdist_rows(X, centers[c]), out=closest)
    for _ in range(iters):
        labels = _assign(X, centers)
        counts = np.bincount(labels, minlength=n_clusters)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
    return centers


def _assign(X: np.ndarray, C: np.ndarray, chunk: int = 4096) -> np.ndarray:
    out = np.empty(len(X), dtype=np.int64)
    for s in range(0, len(X), chunk):
        out[s : s + chunk] = np.argmin(_pairwise_sqdist(X[s : s + chunk], C), axis=1)
    return out


def multi_sequence(d1, d2, n_pairs: int) -> list[tuple[int, int]]:
    """Codeword pairs in ascending ``d1[i] + d2[j]`` order, first ``n_pairs`` only.

    Reference (single query) traversal with a priority queue.  Ties are
    resolved by the rank of ``i`` then ``j`` in their sorted sequences.
    """
    d1 = np.asarray(d1)
    d2 = np.asarray(d2)
    o1 = np.argsort(d1, kind="stable")
    o2 = np.argsort(d2, kind="stable")
    s1 = d1[o1]
    s2 = d2[o2]
    n_pairs = min(n_pairs, len(d1) * len(d2))
    heap = [(s1[0] + s2[0], 0, 0)]
    seen = {(0, 0)}
    out = []
    while heap and len(out) < n_pairs:
        _, i, j = heapq.heappop(heap)
        out.append((int(o1[i]), int(o2[j])))
        for a, b in ((i + 1, j), (i, j + 1)):
            if a < len(s1) and b < len(s2) and (a, b) not in seen:
                seen.add((a, b))
                heapq.heappush(heap, (s1[a] + s2[b], a, b))
    return out


class MultiIndex:
    """Second-order inverted multi-index with dynamic insertion."""

    def __init__(self, codebooks: tuple[np.ndarray, np.ndarray], cfg: IndexConfig | None = None):
        c1, c2 = (np.asarray(c, dtype=np.float64) for c in codebooks)
        if len(c1) != len(c2):
            raise ValueError("both codebooks must have the same size")
        self.cfg = cfg or IndexConfig(codebook_size=len(c1))
        self.codebooks = (c1, c2)
        self.split = c1.shape[1]
        self.dim = c1.shape[1] + c2.shape[1]
        self.K = len(c1)
        self._chunks: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
        self._vectors = np.zeros((0, self.dim))
        self._owner = np.zeros(0, dtype=np.int64)
        self._landmark = np.zeros(0, dtype=np.int64)
        self._cell = np.zeros(0, dtype=np.int64)
        self._order = np.zeros(0, dtype=np.int64)
        self._cell_start = np.zeros(self.K * self.K + 1, dtype=np.int64)
        self._sorted_vectors = np.zeros((0, self.dim))
        self._size = 0

    def __len__(self):
        return self._size

    def cell_of(self, vectors) -> np.ndarray:
        """Cell id ``i * K + j`` of the nearest codeword pair for each vector."""
        X = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        a = _assign(X[:, : self.split], self.codebooks[0])
        b = _assign(X[:, self.split :], self.codebooks[1])
        return a * self.K + b

    def insert(self, vectors, owners, landmarks=None) -> np.ndarray:
        """Append entries; returns their entry ids."""
        X = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ValueError(f"vector dimension {X.shape[1]} != index dimension {self.dim}")
        owners = np.broadcast_to(np.asarray(owners, dtype=np.int64), (len(X),)).copy()
        if landmarks is None:
            lms = np.full(len(X), NO_LANDMARK, dtype=np.int64)
        else:
            lms = np.broadcast_to(np.asarray(landmarks, dtype=np.int64), (len(X),)).copy()
        ids = np.arange(self._size, self._size + len(X))
        if len(X):
            self._chunks.append((X.copy(), owners, lms, self.cell_of(X)))
            self._size += len(X)
        return ids

    def _flush(self) -> None:
        if not self._chunks:
            return
        parts = list(zip(*self._chunks))
        self._vectors = np.concatenate([self._vectors, *parts[0]])
        self._owner = np.concatenate([self._owner, *parts[1]])
        self._landmark = np.concatenate([self._landmark, *parts[2]])
        self._cell = np.concatenate([self._cell, *parts[3]])
        self._chunks = []
        # stable: entries inside a cell stay in insertion (entry id) order
        self._order = np.argsort(self._cell, kind="stable")
        counts = np.bincount(self._cell, minlength=self.K * self.K)
        self._cell_start = np.concatenate([[0], np.cumsum(counts)])
        self._sorted_vectors = np.ascontiguousarray(self._vectors[self._order])

    @property
    def vectors(self) -> np.ndarray:
        self._flush()
        return self._vectors

    @property
    def owners(self) -> np.ndarray:
        self._flush()
        return self._owner

    @property
    def landmarks(self) -> np.ndarray:
        self._flush()
        return self._landmark

    def cell_lists(self) -> dict[int, np.ndarray]:
        """Entry ids per non-empty cell."""
        self._flush()
        out = {}
        for cell in np.flatnonzero(np.diff(self._cell_start)):
            out[int(cell)] = self._order[self._cell_start[cell] : self._cell_start[cell + 1]]
        return out

    def probe(self, queries: np.ndarray) -> np.ndarray:
        """The cells visited for each query, in multi-sequence order (rows)."""
        Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        K = self.K
        n_pairs = min(self.cfg.probe_cells, K * K)
        t = min(n_pairs, K)
        d1 = _pairwise_sqdist(Q[:, : self.split], self.codebooks[0])
        d2 = _pairwise_sqdist(Q[:, self.split :], self.codebooks[1])
        o1 = np.argsort(d1, axis=1, kind="stable")[:, :t]
        o2 = np.argsort(d2, axis=1, kind="stable")[:, :t]
        s1 = np.take_along_axis(d1, o1, axis=1)
        s2 = np.take_along_axis(d2, o2, axis=1)
        sums = (s1[:, :, None] + s2[:, None, :]).reshape(len(Q), t * t)
        # stable on the row-major (rank_i, rank_j) layout == (sum, i, j) order
        pick = np.argsort(sums, axis=1, kind="stable")[:, :n_pairs]
        rows = np.arange(len(Q))[:, None]
        return o1[rows, pick // t] * K + o2[rows, pick % t]

    def knn(self, query, k: int, theta: float | None = None) -> list[NeighborMatch]:
        """Up to ``k`` neighbours of one query, ascending by distance."""
        q = np.asarray(query, dtype=np.float64).reshape(1, -1)
        batch = self.knn_batch(q, k, theta)
        return [_as_match(*row) for row in zip(batch.entry, batch.owner, batch.landmark, batch.sqdist)]

    def knn_batch(self, queries, k: int, theta: float | None = None) -> NeighborBatch:
        """kNN for many queries at once.

        Only entries in the probed cells are considered; matches with
        squared distance above ``theta`` are dropped, so a query may get
        fewer than ``k`` results.  Equal distances go to the lower entry id.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        theta = self.cfg.max_distance if theta is None else theta
        Q = np.ascontiguousarray(np.atleast_2d(np.asarray(queries, dtype=np.float64)))
        if Q.shape[1] != self.dim:
            raise ValueError(f"query dimension {Q.shape[1]} != index dimension {self.dim}")
        self._flush()
        if self._size == 0 or len(Q) == 0:
            return _empty_batch()
        n_pairs = min(self.cfg.probe_cells, self.K * self.K)
        ids = np.empty((len(Q), k), dtype=np.int64)
        dist = np.empty((len(Q), k))
        count = np.empty(len(Q), dtype=np.int64)
        knn_kernel(
            Q, self.split, self.codebooks[0], self.codebooks[1], n_pairs,
            self._cell_start, self._sorted_vectors, self._order, k, float(theta),
            ids, dist, count,
        )
        valid = np.arange(k)[None, :] < count[:, None]
        ent = ids[valid]
        return NeighborBatch(
            np.repeat(np.arange(len(Q)), count), ent, self._owner[ent], self._landmark[ent], dist[valid]
        )


def train_index(training, cfg: IndexConfig | None = None) -> MultiIndex:
    """Learn both sub-codebooks from projected training descriptors."""
    cfg = cfg or IndexConfig()
    X = np.asarray(training, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ValueError("training data must be 2-D with at least two columns")
    if len(X) < cfg.codebook_size:
        raise ValueError(f"need at least {cfg.codebook_size} training descriptors, got {len(X)}")
    split = X.shape[1] // 2
    c1 = kmeans(X[:, :split], cfg.codebook_size, cfg.kmeans_iters, cfg.seed)
    c2 = kmeans(X[:, split:], cfg.codebook_size, cfg.kmeans_iters, cfg.seed + 1)
    return MultiIndex((c1, c2), cfg)


def exact_knn(vectors, query, k: int, theta: float = math.inf, owners=None, landmarks=None) -> list[NeighborMatch]:
    """Exhaustive kNN; ties broken by lower entry (row) id."""
    batch = exact_knn_batch(vectors, np.asarray(query, dtype=np.float64).reshape(1, -1), k, theta, owners, landmarks)
    return [_as_match(*row) for row in zip(batch.entry, batch.owner, batch.landmark, batch.sqdist)]


def exact_knn_batch(vectors, queries, k: int, theta: float = math.inf, owners=None, landmarks=None) -> NeighborBatch:
    """Exhaustive kNN for a batch of queries (the testing oracle)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    V = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    n = len(V) if np.asarray(vectors).size else 0
    if n == 0 or len(Q) == 0:
        return _empty_batch()
    owners = np.full(n, -1, dtype=np.int64) if owners is None else np.asarray(owners, dtype=np.int64)
    landmarks = np.full(n, NO_LANDMARK, dtype=np.int64) if landmarks is None else np.asarray(landmarks, dtype=np.int64)
    kk = min(k, n)
    chunk = max(1, 4_000_000 // (n * V.shape[1]))
    out_q, out_e, out_d = [], [], []
    for s in range(0, len(Q), chunk):
        block = Q[s : s + chunk]
        d = sqdist_rows(V[None, :, :], block[:, None, :])
        d[d > theta] = np.inf
        kth = np.partition(d, kk - 1, axis=1)[:, kk - 1]
        for r, row in enumerate(d):
            cand = np.flatnonzero((row <= kth[r]) & (row < np.inf))
            order = cand[np.lexsort((cand, row[cand]))][:k]
            out_q.append(np.full(len(order), s + r))
            out_e.append(order)
            out_d.append(row[order])
    ent = np.concatenate(out_e).astype(np.int64)
    return NeighborBatch(
        np.concatenate(out_q).astype(np.int64), ent, owners[ent], landmarks[ent], np.concatenate(out_d)
    )


def brute_force_knn(vectors, queries, k: int, theta: float = math.inf, owners=None, landmarks=None) -> NeighborBatch:
    """Compiled exhaustive kNN; same results as :func:`exact_knn_batch`, much faster."""
    if k < 1:
        raise ValueError("k must be >= 1")
    V = np.ascontiguousarray(np.atleast_2d(np.asarray(vectors, dtype=np.float64)))
    Q = np.ascontiguousarray(np.atleast_2d(np.asarray(queries, dtype=np.float64)))
    n = len(V) if np.asarray(vectors).size else 0
    if n == 0 or len(Q) == 0:
        return _empty_batch()
    if Q.shape[1] != V.shape[1]:
        raise ValueError("query and database dimensions differ")
    owners = np.full(n, -1, dtype=np.int64) if owners is None else np.asarray(owners, dtype=np.int64)
    landmarks = np.full(n, NO_LANDMARK, dtype=np.int64) if landmarks is None else np.asarray(landmarks, dtype=np.int64)
    ids = np.empty((len(Q), k), dtype=np.int64)
    dist = np.empty((len(Q), k))
    count = np.empty(len(Q), dtype=np.int64)
    brute_kernel(Q, V, k, float(theta), ids, dist, count)
    valid = np.arange(k)[None, :] < count[:, None]
    ent = ids[valid]
    return NeighborBatch(np.repeat(np.arange(len(Q)), count), ent, owners[ent], landmarks[ent], dist[valid])
