"""HDBSCAN over a kNN graph or a precomputed distance matrix.

Steps: core distances -> mutual reachability weights -> minimum spanning
tree (only over kNN edges in graph mode) -> single-linkage hierarchy ->
condensed tree -> flat clusters by excess of mass.

``min_pts`` counts neighbours excluding the point itself, so it equals
``min_samples - 1`` in the usual HDBSCAN libraries.
"""

from __future__ import annotations

from collections import deque
from typing import NamedTuple

import numba
import numpy as np

from .neighbors import NeighborGraph

NOISE = -1
DEFAULT_MIN_PTS = 10
DEFAULT_MIN_CLUSTER_SIZE = 25
MIN_DISTANCE = 1e-12


class ClusterAssignment(NamedTuple):
    labels: np.ndarray          # per point, NOISE = -1
    cluster_count: int
    stability: np.ndarray       # per cluster label
    point_stability: np.ndarray  # stability of each point's cluster, 0 for noise
    mst_weight: float


def _is_graph(data):
    return isinstance(data, NeighborGraph)


def core_distances(data, min_pts: int) -> tuple[np.ndarray, np.ndarray]:
    """Distance to the ``min_pts``-th nearest other point.

    ``data`` is a ``NeighborGraph`` (distance = 1 - cosine similarity) or a
    square distance matrix.  Returns ``(core, flagged)``; a graph row with
    fewer than ``min_pts`` neighbours uses its farthest neighbour and is
    flagged.
    """
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    if _is_graph(data):
        dist = np.maximum(1.0 - data.sims, 0.0)
        k = dist.shape[1]
        col = min(min_pts, k) - 1
        flagged = np.full(len(dist), min_pts > k)
        return dist[:, col].copy(), flagged
    d = np.asarray(data, dtype=float)
    n = len(d)
    if d.ndim != 2 or d.shape[1] != n:
        raise ValueError("expected a square distance matrix")
    if n == 0:
        raise ValueError("empty input")
    m = min(min_pts, n - 1)
    flagged = np.full(n, min_pts > n - 1)
    if m == 0:
        return np.zeros(n), flagged
    off = d.copy()
    np.fill_diagonal(off, np.inf)
    return np.partition(off, m - 1, axis=1)[:, m - 1], flagged


# --------------------------------------------------------------------------
# spanning tree

@numba.njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@numba.njit(cache=True)
def _kruskal(n, a, b, w, order):
    parent = np.arange(n)
    out = np.empty(n - 1, dtype=np.int64)
    m = 0
    for e in order:
        ra, rb = _find(parent, a[e]), _find(parent, b[e])
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
            out[m] = e
            m += 1
            if m == n - 1:
                break
    return out[:m]


@numba.njit(cache=True)
def _prim(mr):
    n = mr.shape[0]
    in_tree = np.zeros(n, dtype=np.bool_)
    best = np.full(n, np.inf)
    src = np.full(n, -1, dtype=np.int64)
    ea = np.empty(n - 1, dtype=np.int64)
    eb = np.empty(n - 1, dtype=np.int64)
    ew = np.empty(n - 1)
    cur = 0
    in_tree[0] = True
    for step in range(n - 1):
        for j in range(n):
            if not in_tree[j]:
                v = mr[cur, j]
                if v < best[j] or (v == best[j] and cur < src[j]):
                    best[j] = v
                    src[j] = cur
        nxt = -1
        bv = np.inf
        for j in range(n):
            if not in_tree[j] and (nxt < 0 or best[j] < bv):
                bv = best[j]
                nxt = j
        in_tree[nxt] = True
        ea[step] = min(src[nxt], nxt)
        eb[step] = max(src[nxt], nxt)
        ew[step] = bv
        cur = nxt
    return ea, eb, ew


def mutual_reachability_mst(data, core: np.ndarray):
    """Minimum spanning forest of mutual reachability distances.

    Returns ``(a, b, weight)`` sorted by ``(weight, a, b)`` with ``a < b``.
    """
    if _is_graph(data):
        src, dst, sim = data.edges()
        a, b = np.minimum(src, dst), np.maximum(src, dst)
        key = a * data.n + b
        _, first = np.unique(key, return_index=True)
        a, b, sim = a[first], b[first], sim[first]
        dist = np.maximum(1.0 - sim, 0.0)
        w = np.maximum(np.maximum(core[a], core[b]), dist)
        order = np.lexsort((b, a, w))
        keep = _kruskal(data.n, a, b, w, order)
        a, b, w = a[keep], b[keep], w[keep]
    else:
        d = np.asarray(data, dtype=float)
        mr = np.maximum(np.maximum(core[:, None], core[None, :]), d)
        a, b, w = _prim(np.ascontiguousarray(mr))
    order = np.lexsort((b, a, w))
    return a[order], b[order], w[order]


# --------------------------------------------------------------------------
# hierarchy

@numba.njit(cache=True)
def _single_linkage(n, a, b, w):
    """scipy-style linkage rows (left, right, distance, size); forests are
    joined at infinite distance."""
    parent = np.arange(2 * n - 1)
    size = np.zeros(2 * n - 1, dtype=np.int64)
    size[:n] = 1
    out = np.empty((n - 1, 4))
    nxt = n
    for e in range(len(a)):
        ra, rb = _find(parent, a[e]), _find(parent, b[e])
        if ra == rb:
            continue
        out[nxt - n, 0] = ra
        out[nxt - n, 1] = rb
        out[nxt - n, 2] = w[e]
        out[nxt - n, 3] = size[ra] + size[rb]
        size[nxt] = size[ra] + size[rb]
        parent[ra] = nxt
        parent[rb] = nxt
        nxt += 1
    # disconnected components
    comp = -1
    for i in range(n):
        r = _find(parent, i)
        if comp < 0:
            comp = r
        elif r != comp:
            out[nxt - n, 0] = comp
            out[nxt - n, 1] = r
            out[nxt - n, 2] = np.inf
            out[nxt - n, 3] = size[comp] + size[r]
            size[nxt] = size[comp] + size[r]
            parent[comp] = nxt
            parent[r] = nxt
            comp = nxt
            nxt += 1
    return out


def single_linkage(n: int, a, b, w) -> np.ndarray:
    if n == 1:
        return np.empty((0, 4))
    return _single_linkage(n, np.asarray(a, np.int64), np.asarray(b, np.int64),
                           np.asarray(w, float))


def _lambda(dist):
    if not np.isfinite(dist):
        return 0.0
    return 1.0 / max(dist, MIN_DISTANCE)


def _bfs(linkage, n, root):
    out, queue = [], [root]
    while queue:
        out.extend(queue)
        nxt = []
        for node in queue:
            if node >= n:
                row = linkage[node - n]
                nxt.append(int(row[0]))
                nxt.append(int(row[1]))
        queue = nxt
    return out


def condense_tree(linkage: np.ndarray, n: int, min_cluster_size: int):
    """Condensed tree rows ``(parent, child, lambda, child_size)``.

    Cluster ids start at ``n`` (the root); ids below ``n`` are points.
    """
    root = 2 * n - 2
    if n == 1:
        return np.empty((0, 4))
    relabel = {root: n}
    next_label = n + 1
    ignore = set()
    rows = []
    for node in _bfs(linkage, n, root):
        if node in ignore or node < n:
            continue
        left, right, dist, _ = linkage[node - n]
        left, right = int(left), int(right)
        lam = _lambda(dist)
        lc = 1 if left < n else int(linkage[left - n][3])
        rc = 1 if right < n else int(linkage[right - n][3])
        parent = relabel[node]
        if lc >= min_cluster_size and rc >= min_cluster_size:
            relabel[left] = next_label
            rows.append((parent, next_label, lam, lc))
            next_label += 1
            relabel[right] = next_label
            rows.append((parent, next_label, lam, rc))
            next_label += 1
        elif lc < min_cluster_size and rc < min_cluster_size:
            for side in (left, right):
                for sub in _bfs(linkage, n, side):
                    if sub < n:
                        rows.append((parent, sub, lam, 1))
                    ignore.add(sub)
        elif lc < min_cluster_size:
            relabel[right] = parent
            for sub in _bfs(linkage, n, left):
                if sub < n:
                    rows.append((parent, sub, lam, 1))
                ignore.add(sub)
        else:
            relabel[left] = parent
            for sub in _bfs(linkage, n, right):
                if sub < n:
                    rows.append((parent, sub, lam, 1))
                ignore.add(sub)
    return np.array(rows, dtype=float).reshape(-1, 4)


def _stability(tree, n):
    parents = tree[:, 0].astype(np.int64)
    children = tree[:, 1].astype(np.int64)
    lam = tree[:, 2]
    sizes = tree[:, 3]
    last = parents.max() if len(parents) else n
    birth = np.zeros(last + 1)
    cluster_rows = children >= n
    birth[children[cluster_rows]] = lam[cluster_rows]
    stab = np.zeros(last + 1)
    np.add.at(stab, parents, (lam - birth[parents]) * sizes)
    return stab


def extract_clusters(tree: np.ndarray, n: int):
    """Excess-of-mass selection.  Returns ``(labels, stabilities)``.

    The root is only ever selected when the hierarchy never splits, in
    which case the points that survive to the densest level form one
    cluster.
    """
    labels = np.full(n, NOISE, dtype=np.int64)
    if len(tree) == 0:
        return labels, np.zeros(0)
    parents = tree[:, 0].astype(np.int64)
    children = tree[:, 1].astype(np.int64)
    lam = tree[:, 2]
    stab = _stability(tree, n)
    cluster_ids = sorted(set(parents.tolist()) | set(children[children >= n].tolist()))
    kids = {c: [] for c in cluster_ids}
    for p, c in zip(parents, children):
        if c >= n:
            kids[p].append(c)
    root = n
    selected = {}
    if not kids[root]:
        selected = {root: True}
    else:
        is_cluster = {c: c != root for c in cluster_ids}
        sub_stab = dict(enumerate(stab))
        for c in sorted(cluster_ids, reverse=True):
            if c == root:
                continue
            child_sum = sum(sub_stab[k] for k in kids[c])
            if child_sum > sub_stab[c]:
                is_cluster[c] = False
                sub_stab[c] = child_sum
            else:
                stack = list(kids[c])
                while stack:
                    d = stack.pop()
                    is_cluster[d] = False
                    stack.extend(kids[d])
        selected = {c: True for c in cluster_ids if is_cluster[c]}

    label_of = {c: i for i, c in enumerate(sorted(selected))}
    # each point belongs to its nearest selected ancestor
    point_rows = children < n
    parent_of_cluster = {c: p for p, c in zip(parents, children) if c >= n}

    def selected_ancestor(c):
        while c is not None:
            if c in selected:
                return c
            c = parent_of_cluster.get(c)
        return None

    cache = {}
    single = list(selected) == [root]
    root_max = lam[parents == root].max() if single else 0.0
    for p, c, l in zip(parents[point_rows], children[point_rows], lam[point_rows]):
        if p not in cache:
            cache[p] = selected_ancestor(p)
        s = cache[p]
        if s is None:
            continue
        if single and l < root_max:
            continue
        labels[c] = label_of[s]
    stabilities = np.array([stab[c] for c in sorted(selected)])
    return labels, stabilities


def cluster(data, min_pts: int = DEFAULT_MIN_PTS,
            min_cluster_size: int = DEFAULT_MIN_CLUSTER_SIZE) -> ClusterAssignment:
    """HDBSCAN flat clustering of a ``NeighborGraph`` or distance matrix."""
    n = data.n if _is_graph(data) else len(data)
    if n == 0:
        raise ValueError("empty input")
    if n == 1:
        return ClusterAssignment(np.array([NOISE]), 0, np.zeros(0), np.zeros(1), 0.0)
    core, _ = core_distances(data, min_pts)
    a, b, w = mutual_reachability_mst(data, core)
    linkage = single_linkage(n, a, b, w)
    tree = condense_tree(linkage, n, min_cluster_size)
    labels, stab = extract_clusters(tree, n)
    count = len(stab)
    point_stab = np.where(labels >= 0, stab[np.maximum(labels, 0)] if count else 0.0, 0.0)
    return ClusterAssignment(labels, count, stab, point_stab, float(w.sum()))
