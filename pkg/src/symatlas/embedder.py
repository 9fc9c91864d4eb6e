"""2-D layouts by negative-sampling SGD over a neighbour graph (LargeVis style).

Edges are sampled in proportion to their weight; each sample pulls the two
endpoints together (``p = 1 / (1 + d^2)``) and pushes the source away from
``neg_samples`` vertices drawn from the degree^0.75 distribution.  The learning
rate decays linearly to zero.  Everything runs in one numba loop with its
own seeded xorshift generator, so a fixed seed gives bit-identical coordinates.
"""

from __future__ import annotations

from typing import NamedTuple

import numba
import numpy as np
from scipy.spatial import cKDTree

from .neighbors import NeighborGraph, _select_topk

DEFAULT_EPOCHS = 200
DEFAULT_NEG_SAMPLES = 5
DEFAULT_GAMMA = 1.0
DEFAULT_LR = 1.0
INIT_RANGE = 1e-4
GRAD_CLIP = 4.0


class Embedding(NamedTuple):
    coords: np.ndarray        # (n, 2)
    quality: float            # neighbourhood preservation, nan if not computed
    isolated: np.ndarray      # points without any positive-weight edge


def edge_weights(graph: NeighborGraph):
    """Undirected weighted edges ``(a, b, w)``; ``w = (1 + sim) / 2``, max over both directions."""
    src, dst, sim = graph.edges()
    a, b = np.minimum(src, dst), np.maximum(src, dst)
    w = np.clip((1.0 + sim) / 2.0, 0.0, 1.0)
    key = a * graph.n + b
    order = np.lexsort((-w, key))
    key, a, b, w = key[order], a[order], b[order], w[order]
    first = np.ones(len(key), dtype=bool)
    first[1:] = key[1:] != key[:-1]
    keep = first & (w > 0) & (a != b)
    return a[keep], b[keep], w[keep]


@numba.njit(cache=True)
def _clip(v):
    if v > GRAD_CLIP:
        return GRAD_CLIP
    if v < -GRAD_CLIP:
        return -GRAD_CLIP
    return v


@numba.njit(cache=True)
def _alias_table(weights):
    """Walker/Vose alias table for O(1) sampling proportional to ``weights``."""
    n = len(weights)
    prob = weights * (n / weights.sum())
    alias = np.arange(n)
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    ns = nl = 0
    for i in range(n):
        if prob[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        l = large[nl - 1]
        alias[s] = l
        prob[l] -= 1.0 - prob[s]
        if prob[l] < 1.0:
            nl -= 1
            small[ns] = l
            ns += 1
    for t in range(nl):
        prob[large[t]] = 1.0
    for t in range(ns):
        prob[small[t]] = 1.0
    return prob, alias


@numba.njit(cache=True)
def _uniform(state):
    # xorshift64*; numba's np.random is several times slower per draw
    x = state[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    state[0] = x
    return ((x * np.uint64(2685821657736338717)) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _draw(prob, alias, state):
    i = int(_uniform(state) * len(prob))
    if _uniform(state) < prob[i]:
        return i
    return alias[i]


@numba.njit(cache=True)
def _sgd(y, heads, tails, edge_prob, edge_alias, neg_prob, neg_alias, total,
         neg_samples, gamma, lr0, seed):
    state = np.array([seed | 1], dtype=np.uint64)
    for t in range(total):
        lr = lr0 * (1.0 - t / total)
        if lr < lr0 * 1e-4:
            lr = lr0 * 1e-4
        e = _draw(edge_prob, edge_alias, state)
        # orient the edge at random so both endpoints act as sources
        if _uniform(state) < 0.5:
            i, j = heads[e], tails[e]
        else:
            i, j = tails[e], heads[e]
        dx = y[i, 0] - y[j, 0]
        dy = y[i, 1] - y[j, 1]
        g = -2.0 / (1.0 + dx * dx + dy * dy)
        gx, gy = _clip(g * dx), _clip(g * dy)
        acc_x, acc_y = gx, gy
        y[j, 0] -= lr * gx
        y[j, 1] -= lr * gy
        for _ in range(neg_samples):
            k = _draw(neg_prob, neg_alias, state)
            if k == i or k == j:
                continue
            dx = y[i, 0] - y[k, 0]
            dy = y[i, 1] - y[k, 1]
            d2 = dx * dx + dy * dy
            g = 2.0 * gamma / ((1e-3 + d2) * (1.0 + d2))
            gx, gy = _clip(g * dx), _clip(g * dy)
            acc_x += gx
            acc_y += gy
            y[k, 0] -= lr * gx
            y[k, 1] -= lr * gy
        y[i, 0] += lr * acc_x
        y[i, 1] += lr * acc_y


def embed(graph: NeighborGraph, epochs: int = DEFAULT_EPOCHS,
          neg_samples: int = DEFAULT_NEG_SAMPLES, seed: int = 0,
          gamma: float = DEFAULT_GAMMA, lr: float = DEFAULT_LR,
          with_quality: bool = False) -> Embedding:
    """Lay out the graph in 2-D.  One epoch is ``n`` edge samples."""
    n = graph.n
    if n == 0:
        raise ValueError("empty graph")
    if n == 1:
        return Embedding(np.zeros((1, 2)), float("nan"), np.zeros(1, dtype=bool))
    rng = np.random.default_rng(seed)
    y = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(n, 2))
    a, b, w = edge_weights(graph)
    degree = np.zeros(n)
    np.add.at(degree, a, w)
    np.add.at(degree, b, w)
    isolated = degree == 0
    if len(a):
        neg = np.where(isolated, 0.0, degree ** 0.75)
        _sgd(y, a.astype(np.int64), b.astype(np.int64), *_alias_table(w), *_alias_table(neg),
             int(epochs) * n, int(neg_samples), float(gamma), float(lr),
             np.uint64(rng.integers(1, 2 ** 63)))
    y[isolated] = 0.0
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("embedding diverged")
    q = neighborhood_preservation(y, graph) if with_quality else float("nan")
    return Embedding(y, q, isolated)


def neighborhood_preservation(coords: np.ndarray, graph: NeighborGraph,
                              k: int | None = None) -> float:
    """Mean Jaccard overlap of graph neighbourhoods and 2-D Euclidean ones."""
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    if n != graph.n:
        raise ValueError("point counts differ")
    k = graph.k if k is None else min(k, graph.k)
    if n < 2 or k == 0:
        return 1.0
    _, idx = cKDTree(coords).query(coords, k=min(k + 1, n))
    idx = np.asarray(idx).reshape(n, -1)
    total = 0.0
    for start in range(0, n, 4096):
        stop = min(n, start + 4096)
        rows = idx[start:stop]
        # drop self (or, with duplicate coordinates, the surplus last column)
        is_self = rows == np.arange(start, stop)[:, None]
        has_self = is_self.any(axis=1)
        is_self[~has_self, -1] = True
        near = rows[~is_self].reshape(stop - start, -1)[:, :k]
        g = graph.indices[start:stop, :k]
        inter = (near[:, :, None] == g[:, None, :]).any(axis=2).sum(axis=1)
        total += float(np.sum(inter / (near.shape[1] + k - inter)))
    return total / n


def shuffled_baseline(coords: np.ndarray, graph: NeighborGraph, seed: int = 0,
                      k: int | None = None) -> float:
    """Preservation score after randomly permuting which point owns which coordinate."""
    perm = np.random.default_rng(seed).permutation(len(coords))
    return neighborhood_preservation(coords[perm], graph, k)


def matrix_neighbor_graph(distance: np.ndarray, k: int = 30) -> NeighborGraph:
    """kNN graph from a square distance matrix; similarity = 1 - distance."""
    d = np.asarray(distance, dtype=float)
    n = len(d)
    if n < 2:
        raise ValueError("need at least two points")
    k = min(k, n - 1)
    sims = 1.0 - d
    idx, val = _select_topk(sims.copy(), k, np.arange(n))
    return NeighborGraph(idx, val)
