"""Exact Euclidean nearest-neighbor search.

Two interchangeable back ends answer the same queries: a kd-tree (``spatial``)
and an exhaustive scan (``brute``). Both return neighbors ordered by distance
with ties broken by ascending point index, and both compute the reported
distances with the same arithmetic, so their answers agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

SPATIAL = "spatial"
BRUTE = "brute"

# kd-trees stop paying off in high ambient dimension
DEFAULT_MAX_TREE_DIM = 30

# relative gap the tree candidate set must clear before we trust it
_TREE_MARGIN = 1e-9

_CHUNK_ELEMENTS = 4_000_000


def as_points(points, copy: bool = True) -> np.ndarray:
    """Validate a point set and return it as a read-only (n, D) float array."""
    arr = np.array(points, dtype=np.float64, copy=copy)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"points must be a 2-D array, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError("point set is empty")
    if arr.shape[1] < 1:
        raise ValueError("points must have at least one coordinate")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points contain non-finite values")
    arr.setflags(write=False)
    return arr


def distances_to(points: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Euclidean distances between broadcast-compatible (..., D) arrays.

    Every distance in the package goes through here so that the tree and
    the brute-force path round identically.
    """
    # accumulate one coordinate at a time: same left-to-right sum for every
    # caller, and no (..., D) temporaries
    acc = None
    for j in range(points.shape[-1]):
        diff = points[..., j] - queries[..., j]
        acc = diff * diff if acc is None else acc + diff * diff
    return np.sqrt(acc)


@dataclass(frozen=True)
class NeighborList:
    indices: np.ndarray
    distances: np.ndarray
    clamped: bool = False

    def __len__(self):
        return len(self.indices)


class NNIndex:
    """Immutable exact k-NN index over a fixed point set.

    Parameters
    ----------
    points : array_like of shape (n, D)
    mode : {"spatial", "brute"}
        ``spatial`` builds a kd-tree unless ``D > max_tree_dim``, in which case
        it silently uses the exhaustive scan.
    """

    def __init__(self, points, mode: str = SPATIAL, max_tree_dim: int = DEFAULT_MAX_TREE_DIM):
        if mode not in (SPATIAL, BRUTE):
            raise ValueError(f"unknown index mode {mode!r}")
        self.points = as_points(points)
        self.n, self.dim = self.points.shape
        self.mode = mode
        self._tree = None
        if mode == SPATIAL and self.dim <= max_tree_dim:
            self._tree = cKDTree(self.points)

    @property
    def uses_tree(self) -> bool:
        return self._tree is not None

    def _check_queries(self, queries) -> np.ndarray:
        q = np.asarray(queries, dtype=np.float64)
        if q.ndim == 1:
            q = q.reshape(1, -1)
        if q.ndim != 2 or q.shape[1] != self.dim:
            raise ValueError(
                f"query dimension mismatch: index has D={self.dim}, got shape {np.shape(queries)}"
            )
        return q

    def query(self, queries, k: int):
        """Batch k-NN query.

        Returns
        -------
        indices : (q, min(k, n)) int array
        distances : (q, min(k, n)) float array
        clamped : bool
            True when ``k > n`` and every point was returned instead.
        """
        k = int(k)
        if k < 1:
            raise ValueError(f"k must be positive, got {k}")
        q = self._check_queries(queries)
        clamped = k > self.n
        k = min(k, self.n)
        if len(q) == 0:
            return np.empty((0, k), dtype=np.intp), np.empty((0, k)), clamped
        if self._tree is None or k == self.n:
            idx, dist = self._brute(q, k)
        else:
            idx, dist = self._spatial(q, k)
        return idx, dist, clamped

    def _spatial(self, q: np.ndarray, k: int):
        kk = k + 1
        _, cand = self._tree.query(q, k=kk)
        cand = np.asarray(cand, dtype=np.intp).reshape(len(q), kk)
        dist = distances_to(self.points[cand], q[:, None, :])
        order = np.lexsort((cand, dist), axis=-1)
        cand = np.take_along_axis(cand, order, axis=1)
        dist = np.take_along_axis(dist, order, axis=1)
        # non-candidates sit at tree distance >= the farthest candidate; if the
        # k-th distance is not clearly below that, the tie rule may need points
        # the tree did not return
        kth = dist[:, k - 1]
        outer = dist[:, kk - 1]
        unsure = ~(kth < outer * (1.0 - _TREE_MARGIN))
        idx_out = cand[:, :k].copy()
        dist_out = dist[:, :k].copy()
        if np.any(unsure):
            rows = np.flatnonzero(unsure)
            bi, bd = self._brute(q[rows], k)
            idx_out[rows] = bi
            dist_out[rows] = bd
        return idx_out, dist_out

    def _brute(self, q: np.ndarray, k: int):
        n = self.n
        chunk = max(1, _CHUNK_ELEMENTS // max(1, n * self.dim))
        idx_out = np.empty((len(q), k), dtype=np.intp)
        dist_out = np.empty((len(q), k))
        for start in range(0, len(q), chunk):
            block = q[start:start + chunk]
            d = distances_to(self.points[None, :, :], block[:, None, :])
            idx_out[start:start + len(block)], dist_out[start:start + len(block)] = _smallest_k(d, k)
        return idx_out, dist_out

    def query_knn(self, x, k: int) -> NeighborList:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("query_knn expects a single feature vector")
        idx, dist, clamped = self.query(x, k)
        return NeighborList(idx[0], dist[0], clamped)

    def kth_distance(self, queries, k: int) -> np.ndarray:
        _, dist, _ = self.query(queries, k)
        return dist[:, -1]


def _smallest_k(d: np.ndarray, k: int):
    """Row-wise k smallest entries of a distance block, ordered by (distance, column)."""
    rows, n = d.shape
    cols = np.arange(n)
    if k == n:
        order = np.lexsort((np.broadcast_to(cols, d.shape), d), axis=-1)
        return order, np.take_along_axis(d, order, axis=1)
    part = np.argpartition(d, k - 1, axis=1)[:, :k]
    pd = np.take_along_axis(d, part, axis=1)
    kth = pd.max(axis=1)
    tied = np.count_nonzero(d <= kth[:, None], axis=1) > k
    order = np.lexsort((part, pd), axis=-1)
    idx = np.take_along_axis(part, order, axis=1)
    dist = np.take_along_axis(pd, order, axis=1)
    for r in np.flatnonzero(tied):
        cand = np.flatnonzero(d[r] <= kth[r])
        sel = cand[np.lexsort((cand, d[r, cand]))[:k]]
        idx[r] = sel
        dist[r] = d[r, sel]
    return idx, dist


def build_index(points, mode: str = SPATIAL, **kwargs) -> NNIndex:
    return NNIndex(points, mode=mode, **kwargs)


def query_knn(index: NNIndex, x, k: int) -> NeighborList:
    """k nearest neighbors of a single point; ``clamped`` flags ``k > n``."""
    return index.query_knn(x, k)


def kth_nn_distance(index: NNIndex, x, k: int) -> float:
    """Distance from ``x`` to its k-th nearest neighbor (the farthest one if clamped)."""
    return float(index.query_knn(x, k).distances[-1])


def sorted_neighbor_order(index: NNIndex, queries, kmax: int) -> np.ndarray:
    """Neighbor indices up to rank ``kmax`` for every query, in tie-broken order.

    Picks a kd-tree query for small ``kmax`` and a full row sort otherwise;
    the two agree because both follow the (distance, index) order.
    """
    q = index._check_queries(queries)
    kmax = min(int(kmax), index.n)
    if index.uses_tree and kmax <= max(64, index.n // 16):
        return index.query(q, kmax)[0]
    out = np.empty((len(q), kmax), dtype=np.intp)
    chunk = max(1, _CHUNK_ELEMENTS // max(1, index.n * index.dim))
    for start in range(0, len(q), chunk):
        block = q[start:start + chunk]
        d = distances_to(index.points[None, :, :], block[:, None, :])
        order = np.argsort(d, axis=1)
        ds = np.take_along_axis(d, order, axis=1)
        # quicksort scrambles equal distances; re-sort those rows stably
        dup = np.any(ds[:, 1:] == ds[:, :-1], axis=1) if index.n > 1 else np.zeros(len(block), bool)
        for r in np.flatnonzero(dup):
            order[r] = np.argsort(d[r], kind="stable")
        out[start:start + len(block)] = order[:, :kmax]
    return out
