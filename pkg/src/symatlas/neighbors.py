"""Exact and approximate k-nearest-neighbour graphs under cosine similarity.

The approximate search pools candidates from a forest of random projection
trees (random direction, median split, bounded leaves), then runs one
neighbour-of-neighbour refinement pass.  Similarities stored in the graph
are always computed exactly; only the candidate set is approximate.
"""

from __future__ import annotations

import logging
from typing import NamedTuple

import numba
import numpy as np

log = logging.getLogger(__name__)

DEFAULT_K = 30
DEFAULT_TREES = 16
DEFAULT_LEAF_CAPACITY = 64


class NeighborGraph(NamedTuple):
    indices: np.ndarray   # (n, k) int64, sorted by similarity descending
    sims: np.ndarray      # (n, k) float64

    @property
    def n(self) -> int:
        return self.indices.shape[0]

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def edges(self):
        """``(source, target, similarity)`` arrays, one row per directed edge."""
        src = np.repeat(np.arange(self.n), self.k)
        return src, self.indices.ravel(), self.sims.ravel()


def normalize_rows(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", points, points))
    if np.any(norms == 0):
        raise ValueError("zero vector among the points (degenerate output?)")
    return np.ascontiguousarray(points / norms[:, None])


def _effective_k(n, k):
    if n < 2:
        raise ValueError("need at least two points")
    return min(k, n - 1)


def _select_topk(sims_block, k, row_ids):
    """Top-k per row ordered by (similarity desc, id asc); self excluded."""
    b, n = sims_block.shape
    sims_block[np.arange(b), row_ids] = -np.inf
    part = np.argpartition(-sims_block, k - 1, axis=1)[:, :k]
    psims = np.take_along_axis(sims_block, part, axis=1)
    thr = psims.min(axis=1)
    ties = (sims_block >= thr[:, None]).sum(axis=1) > k
    idx = np.empty((b, k), dtype=np.int64)
    val = np.empty((b, k))
    for r in range(b):
        if ties[r]:
            cand = np.flatnonzero(sims_block[r] >= thr[r])
        else:
            cand = part[r]
        cs = sims_block[r, cand]
        o = np.lexsort((cand, -cs))[:k]
        idx[r] = cand[o]
        val[r] = cs[o]
    return idx, val


def exact_knn(points: np.ndarray, k: int = DEFAULT_K, block: int = 256) -> NeighborGraph:
    """Brute-force kNN by cosine similarity; ties go to the lower id."""
    xn = normalize_rows(points)
    n = len(xn)
    k = _effective_k(n, k)
    indices = np.empty((n, k), dtype=np.int64)
    sims = np.empty((n, k))
    for start in range(0, n, block):
        stop = min(n, start + block)
        s = xn[start:stop] @ xn.T
        np.clip(s, -1.0, 1.0, out=s)
        indices[start:stop], sims[start:stop] = _select_topk(s, k, np.arange(start, stop))
    return NeighborGraph(indices, sims)


# --------------------------------------------------------------------------
# random projection trees

class RpTree(NamedTuple):
    directions: np.ndarray   # (n_internal, d)
    thresholds: np.ndarray   # (n_internal,), nan where the split fell back to rank order
    children: np.ndarray     # (n_internal, 2); negative values -1-leaf_index
    leaves: list             # arrays of point ids


def _project(xn, idx, direction, block=65536):
    # blockwise so the top splits do not copy the whole matrix
    out = np.empty(len(idx))
    for s in range(0, len(idx), block):
        out[s:s + block] = xn[idx[s:s + block]] @ direction
    return out


def build_rp_tree(xn: np.ndarray, leaf_capacity: int, rng: np.random.Generator) -> RpTree:
    n, d = xn.shape
    directions, thresholds, children, leaves = [], [], [], []

    def grow(idx):
        if len(idx) <= leaf_capacity:
            leaves.append(idx)
            return -1 - (len(leaves) - 1)
        direction = rng.standard_normal(d)
        direction /= np.linalg.norm(direction)
        proj = _project(xn, idx, direction)
        med = np.median(proj)
        left = proj < med
        if not left.any():
            left = proj <= med
        thr = med
        if left.all() or not left.any():
            # identical projections: halve by rank, routing by membership only
            left = np.zeros(len(idx), dtype=bool)
            left[rng.permutation(len(idx))[: len(idx) // 2]] = True
            thr = np.nan
        node = len(directions)
        directions.append(direction)
        thresholds.append(thr)
        children.append([0, 0])
        children[node][0] = grow(idx[left])
        children[node][1] = grow(idx[~left])
        return node

    grow(np.arange(n))
    return RpTree(np.array(directions).reshape(-1, d), np.array(thresholds),
                  np.array(children, dtype=np.int64).reshape(-1, 2), leaves)


@numba.njit(cache=True)
def _dot(xn, i, j):
    s = 0.0
    for t in range(xn.shape[1]):
        s += xn[i, t] * xn[j, t]
    if s > 1.0:
        return 1.0
    if s < -1.0:
        return -1.0
    return s


@numba.njit(cache=True)
def _push(ids, sims, i, j, s):
    """Insert j into row i if it beats the worst entry; rows are kept sorted."""
    k = ids.shape[1]
    last = k - 1
    if ids[i, last] >= 0 and (s < sims[i, last] or (s == sims[i, last] and j > ids[i, last])):
        return False
    for t in range(k):
        if ids[i, t] == j:
            return False
    pos = last
    while pos > 0:
        prev_id = ids[i, pos - 1]
        if prev_id >= 0 and (sims[i, pos - 1] > s or (sims[i, pos - 1] == s and prev_id < j)):
            break
        ids[i, pos] = ids[i, pos - 1]
        sims[i, pos] = sims[i, pos - 1]
        pos -= 1
    ids[i, pos] = j
    sims[i, pos] = s
    return True


@numba.njit(cache=True)
def _scan_leaves(xn, leaf_ptr, leaf_ids, ids, sims):
    for L in range(len(leaf_ptr) - 1):
        a, b = leaf_ptr[L], leaf_ptr[L + 1]
        for p in range(a, b):
            i = leaf_ids[p]
            for q in range(p + 1, b):
                j = leaf_ids[q]
                s = _dot(xn, i, j)
                _push(ids, sims, i, j, s)
                _push(ids, sims, j, i, s)


@numba.njit(cache=True)
def _refine(xn, ids, sims):
    n, k = ids.shape
    stamp = np.full(n, -1, dtype=np.int64)
    snapshot = ids.copy()
    for i in range(n):
        stamp[i] = i
        for t in range(k):
            j = snapshot[i, t]
            if j >= 0:
                stamp[j] = i
        for t in range(k):
            j = snapshot[i, t]
            if j < 0:
                continue
            for u in range(k):
                l = snapshot[j, u]
                if l < 0 or stamp[l] == i:
                    continue
                stamp[l] = i
                s = _dot(xn, i, l)
                _push(ids, sims, i, l, s)
                _push(ids, sims, l, i, s)


def approx_knn(points: np.ndarray, k: int = DEFAULT_K, trees: int = DEFAULT_TREES,
               leaf_capacity: int = DEFAULT_LEAF_CAPACITY, refine: int = 1,
               seed: int = 0) -> NeighborGraph:
    """kNN graph from a random projection forest plus ``refine`` NN-of-NN passes."""
    xn = normalize_rows(points)
    n = len(xn)
    k = _effective_k(n, k)
    rng = np.random.default_rng(seed)
    ids = np.full((n, k), -1, dtype=np.int64)
    sims = np.full((n, k), -np.inf)
    for t in range(trees):
        tree = build_rp_tree(xn, leaf_capacity, rng)
        ptr = np.cumsum([0] + [len(l) for l in tree.leaves]).astype(np.int64)
        _scan_leaves(xn, ptr, np.concatenate(tree.leaves).astype(np.int64), ids, sims)
    for _ in range(refine):
        _refine(xn, ids, sims)
    missing = np.flatnonzero((ids < 0).any(axis=1))
    if len(missing):
        log.debug("%d rows incomplete after search, filling exactly", len(missing))
        for i in missing:
            s = np.clip(xn @ xn[i], -1.0, 1.0)
            row_idx, row_val = _select_topk(s[None, :].copy(), k, np.array([i]))
            ids[i], sims[i] = row_idx[0], row_val[0]
    return NeighborGraph(ids, sims)


def recall(approx: NeighborGraph, exact: NeighborGraph) -> float:
    """Mean fraction of true neighbours recovered."""
    hits = 0
    for a, e in zip(approx.indices, exact.indices):
        hits += len(np.intersect1d(a, e, assume_unique=True))
    return hits / exact.indices.size


def symmetrized_edges(graph: NeighborGraph):
    """Undirected edge list ``(i, j, sim)`` with ``i < j``, each pair once."""
    src, dst, sim = graph.edges()
    a, b = np.minimum(src, dst), np.maximum(src, dst)
    key = a * graph.n + b
    _, first = np.unique(key, return_index=True)
    return a[first], b[first], sim[first]
