"""Genotypic similarity from bottom-up tree mappings.

Both trees are flattened into level order, merged into one compacted DAG
(identical subtrees share a vertex), and T1 is scanned in level order; every
unmapped node whose vertex still has an untouched occurrence in T2 gets its
whole subtree mapped.  The similarity is the Dice index
``2 |M| / (|T1| + |T2|)``.

The greedy scan is direction dependent, so the similarity orients each pair
first: the larger tree plays T1, and between trees of equal size the one
with the smaller canonical text does.  That makes it symmetric.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numba
import numpy as np

from .expr import Node, canonical_text, canonicalize


class FlatTree(NamedTuple):
    """Level-order arrays of one tree."""

    kinds: list
    children: list   # child indices per node, in order
    parent: list     # -1 for the root

    def __len__(self):
        return len(self.kinds)

    def preorder(self, root: int) -> list:
        out, stack = [], [root]
        while stack:
            i = stack.pop()
            out.append(i)
            stack.extend(reversed(self.children[i]))
        return out


def flatten(tree: Node) -> FlatTree:
    kinds, children, parent = [], [], []
    queue = deque([(tree, -1)])
    while queue:
        node, par = queue.popleft()
        idx = len(kinds)
        kinds.append(int(node.kind))
        children.append([])
        parent.append(par)
        if par >= 0:
            children[par].append(idx)
        for c in node.children:
            queue.append((c, idx))
    return FlatTree(kinds, children, parent)


@dataclass
class CompactedDag:
    vertices: list = field(default_factory=list)   # (kind, height, child vertex ids)
    table: dict = field(default_factory=dict)
    node_to_vertex: list = field(default_factory=list)  # per tree: vertex per node

    def add_tree(self, ft: FlatTree) -> list:
        """Hash-cons one tree; returns the vertex of each of its nodes."""
        k = [0] * len(ft)
        for i in range(len(ft) - 1, -1, -1):   # children come after parents
            kids = tuple(k[c] for c in ft.children[i])
            key = (ft.kinds[i], kids)
            v = self.table.get(key)
            if v is None:
                v = len(self.vertices)
                height = 1 + max((self.vertices[c][1] for c in kids), default=-1)
                self.vertices.append((ft.kinds[i], height, kids))
                self.table[key] = v
            k[i] = v
        self.node_to_vertex.append(k)
        return k

    def __len__(self):
        return len(self.vertices)


def build_dag(*trees: Node) -> CompactedDag:
    dag = CompactedDag()
    for t in trees:
        dag.add_tree(flatten(t))
    return dag


class BottomUpMapping(NamedTuple):
    pairs: list          # (T1 level-order index, T2 level-order index)
    size1: int
    size2: int

    def __len__(self):
        return len(self.pairs)


def _map_flat(f1: FlatTree, k1: list, f2: FlatTree, k2: list) -> list:
    queues = {}
    for j, v in enumerate(k2):
        queues.setdefault(v, deque()).append(j)
    mapped1 = [False] * len(f1)
    blocked2 = [False] * len(f2)   # mapped, or has a mapped descendant
    pairs = []
    for i in range(len(f1)):
        if mapped1[i]:
            continue
        q = queues.get(k1[i])
        if not q:
            continue
        while q and blocked2[q[0]]:
            q.popleft()
        if not q:
            continue
        w = q.popleft()
        sub1, sub2 = f1.preorder(i), f2.preorder(w)
        for a, b in zip(sub1, sub2):
            mapped1[a] = True
            blocked2[b] = True
            pairs.append((a, b))
        p = f2.parent[w]
        while p >= 0 and not blocked2[p]:
            blocked2[p] = True
            p = f2.parent[p]
    return pairs


def bottom_up_map(t1: Node, t2: Node) -> BottomUpMapping:
    """Greedy level-order bottom-up mapping of ``t1`` onto ``t2`` (ordered trees).

    Ties go to the earliest unmapped T2 occurrence in level order; nodes
    inside mapped subtrees are paired in preorder.
    """
    f1, f2 = flatten(t1), flatten(t2)
    dag = CompactedDag()
    k1, k2 = dag.add_tree(f1), dag.add_tree(f2)
    return BottomUpMapping(_map_flat(f1, k1, f2, k2), len(f1), len(f2))


def orient(t1: Node, t2: Node) -> tuple[Node, Node]:
    """Order a pair so the larger tree comes first, ties by text."""
    n1, n2 = sum(1 for _ in _nodes(t1)), sum(1 for _ in _nodes(t2))
    if n1 != n2:
        return (t1, t2) if n1 > n2 else (t2, t1)
    return (t1, t2) if canonical_text(t1) <= canonical_text(t2) else (t2, t1)


def _nodes(t):
    stack = [t]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(n.children)


def genotypic_similarity(t1: Node, t2: Node, canonical: bool = True) -> float:
    if canonical:
        t1, t2 = canonicalize(t1), canonicalize(t2)
    m = bottom_up_map(*orient(t1, t2))
    return 2.0 * len(m) / (m.size1 + m.size2)


# --------------------------------------------------------------------------
# batched pairwise matrix

class PackedForest(NamedTuple):
    """Every tree of a set in level order, vertices shared across the set."""

    offsets: np.ndarray   # tree t occupies nodes offsets[t]:offsets[t+1]
    vertex: np.ndarray    # global DAG vertex per node
    parent: np.ndarray    # local parent index, -1 at the root
    size: np.ndarray      # subtree size per node
    pre: np.ndarray       # per node: local indices of its subtree in preorder,
    pre_start: np.ndarray  # stored at pre[pre_start[node]: pre_start[node] + size]
    text_rank: np.ndarray  # rank of each tree's canonical text, for orienting pairs


def pack_forest(trees, canonical: bool = True) -> PackedForest:
    dag = CompactedDag()
    offsets, vertex, parent, size, pre, pre_start = [0], [], [], [], [], []
    texts = []
    for t in trees:
        if canonical:
            t = canonicalize(t)
        texts.append(canonical_text(t))
        ft = flatten(t)
        k = dag.add_tree(ft)
        sizes = [1] * len(ft)
        for i in range(len(ft) - 1, 0, -1):
            sizes[ft.parent[i]] += sizes[i]
        for i in range(len(ft)):
            pre_start.append(len(pre))
            pre.extend(ft.preorder(i))
        vertex.extend(k)
        parent.extend(ft.parent)
        size.extend(sizes)
        offsets.append(len(vertex))
    rank = np.empty(len(texts), dtype=np.int64)
    rank[sorted(range(len(texts)), key=texts.__getitem__)] = np.arange(len(texts))
    as_i = lambda a: np.asarray(a, dtype=np.int64)
    return PackedForest(as_i(offsets), as_i(vertex), as_i(parent), as_i(size),
                        as_i(pre), as_i(pre_start), rank)


@numba.njit(cache=True)
def _pair_mapping_size(o1, n1, o2, n2, vertex, parent, size, pre, pre_start,
                       mapped1, blocked2):
    # quadratic scan per pair; trees here are small
    for i in range(n1):
        mapped1[i] = False
    for j in range(n2):
        blocked2[j] = False
    total = 0
    for i in range(n1):
        if mapped1[i]:
            continue
        v = vertex[o1 + i]
        w = -1
        for j in range(n2):
            if not blocked2[j] and vertex[o2 + j] == v:
                w = j
                break
        if w < 0:
            continue
        s1 = pre_start[o1 + i]
        s2 = pre_start[o2 + w]
        cnt = size[o1 + i]
        for t in range(cnt):
            mapped1[pre[s1 + t]] = True
            blocked2[pre[s2 + t]] = True
        total += cnt
        p = parent[o2 + w]
        while p >= 0 and not blocked2[p]:
            blocked2[p] = True
            p = parent[o2 + p]
    return total


@numba.njit(cache=True)
def _oriented_size(a, b, offsets, vertex, parent, size, pre, pre_start, text_rank,
                   mapped1, blocked2):
    n1, n2 = offsets[a + 1] - offsets[a], offsets[b + 1] - offsets[b]
    if n1 < n2 or (n1 == n2 and text_rank[a] > text_rank[b]):
        a, b = b, a
        n1, n2 = n2, n1
    return _pair_mapping_size(offsets[a], n1, offsets[b], n2, vertex, parent, size, pre,
                              pre_start, mapped1, blocked2)


@numba.njit(cache=True)
def _similarity_rows(offsets, vertex, parent, size, pre, pre_start, text_rank, rows, out):
    n = len(offsets) - 1
    maxn = 0
    for t in range(n):
        maxn = max(maxn, offsets[t + 1] - offsets[t])
    mapped1 = np.zeros(maxn, dtype=np.bool_)
    blocked2 = np.zeros(maxn, dtype=np.bool_)
    pos = 0
    for r in range(len(rows)):
        a = rows[r]
        n1 = offsets[a + 1] - offsets[a]
        for b in range(a + 1, n):
            n2 = offsets[b + 1] - offsets[b]
            m = _oriented_size(a, b, offsets, vertex, parent, size, pre, pre_start,
                               text_rank, mapped1, blocked2)
            out[pos] = 2.0 * m / (n1 + n2)
            pos += 1


def condensed_similarity(trees, canonical: bool = True) -> np.ndarray:
    """Upper-triangle (row-major, i < j) genotypic similarities as float32."""
    forest = pack_forest(trees, canonical)
    n = len(forest.offsets) - 1
    out = np.empty(n * (n - 1) // 2, dtype=np.float32)
    _similarity_rows(forest.offsets, forest.vertex, forest.parent, forest.size,
                     forest.pre, forest.pre_start, forest.text_rank,
                     np.arange(n, dtype=np.int64), out)
    return out


def mapping_size_packed(forest: PackedForest, a: int, b: int) -> int:
    """|M| for trees ``a`` and ``b`` of the forest, oriented as in the similarity."""
    o = forest.offsets
    m = max(o[a + 1] - o[a], o[b + 1] - o[b])
    m1 = np.zeros(m, dtype=np.bool_)
    m2 = np.zeros(m, dtype=np.bool_)
    return int(_oriented_size(a, b, o, forest.vertex, forest.parent, forest.size, forest.pre,
                              forest.pre_start, forest.text_rank, m1, m2))


def condensed_index(i: int, j: int, n: int) -> int:
    if i > j:
        i, j = j, i
    return n * i - i * (i + 1) // 2 + (j - i - 1)


def squareform(condensed: np.ndarray, n: int, diagonal: float = 1.0) -> np.ndarray:
    out = np.full((n, n), diagonal, dtype=np.float64)
    iu = np.triu_indices(n, 1)
    out[iu] = condensed
    out[(iu[1], iu[0])] = condensed
    return out
