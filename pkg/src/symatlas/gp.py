"""Tree GP for univariate symbolic regression plus atlas instrumentation.

The GP is deliberately plain: PTC2 initialisation, tournament selection,
subtree crossover, subtree mutation, one elite.  Fitness is R² against a
standardised target on the atlas grid.  Every evaluated candidate can be
mapped to its most similar atlas expression (exact cosine search), which is
what the visitation trace is built from.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numba
import numpy as np

from .clusterer import NOISE
from .evaluator import DEFAULT_GRID, InputGrid, OutputVector, evaluate, r_squared
from .expr import Node, NodeKind

log = logging.getLogger(__name__)

NONTERMINALS = (NodeKind.ADD, NodeKind.MUL, NodeKind.INV, NodeKind.EXP,
                NodeKind.LOG, NodeKind.SIN)
ARITY = {NodeKind.ADD: 2, NodeKind.MUL: 2, NodeKind.INV: 1, NodeKind.EXP: 1,
         NodeKind.LOG: 1, NodeKind.SIN: 1, NodeKind.VAR: 0}
LEAF = Node(NodeKind.VAR)


@dataclass(frozen=True)
class GpConfig:
    population_size: int = 500
    generations: int = 50
    tournament_size: int = 5
    crossover_rate: float = 0.9
    mutation_rate: float = 0.15
    max_tree_size: int = 25
    seed: int = 0

    def validate(self):
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be at least 1")
        for name in ("crossover_rate", "mutation_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.max_tree_size < 1:
            raise ValueError("max_tree_size must be at least 1")
        return self


# --------------------------------------------------------------------------
# tree creation and variation

def ptc2(max_size: int, rng: np.random.Generator, primitives=NONTERMINALS,
         size: int | None = None) -> Node:
    """Probabilistic tree creation 2.

    Draws a target size uniformly from ``[1, max_size]`` (unless ``size`` is
    given), then grows from the root by expanding randomly chosen open slots
    until placed nodes plus open slots reach the target; open slots become
    variables.  A binary primitive is only eligible when it still fits, so
    the result has exactly the target size.
    """
    if max_size < 1:
        raise ValueError("max_size must be at least 1")
    target = int(rng.integers(1, max_size + 1)) if size is None else size
    if target == 1:
        return LEAF

    def pick(total):
        ok = [p for p in primitives if total + ARITY[p] <= target]
        return ok[int(rng.integers(len(ok)))]

    kind = pick(1)
    root = [kind, [None] * ARITY[kind]]
    open_slots = [(root, i) for i in range(ARITY[kind])]
    total = 1 + ARITY[kind]
    while total < target:
        owner, pos = open_slots.pop(int(rng.integers(len(open_slots))))
        kind = pick(total)
        node = [kind, [None] * ARITY[kind]]
        owner[1][pos] = node
        open_slots.extend((node, i) for i in range(ARITY[kind]))
        total += ARITY[kind]

    def freeze(item):
        if item is None:
            return LEAF
        k, kids = item
        return Node(k, tuple(freeze(c) for c in kids))

    return freeze(root)


def tree_size(tree: Node) -> int:
    return 1 + sum(tree_size(c) for c in tree.children)


def subtree_sizes(tree: Node) -> list[int]:
    """Subtree size of every node, in preorder."""
    out = []

    def walk(t):
        at = len(out)
        out.append(0)
        s = 1
        for c in t.children:
            s += walk(c)
        out[at] = s
        return s

    walk(tree)
    return out


def subtree_at(tree: Node, index: int) -> Node:
    stack = [tree]
    i = 0
    while stack:
        t = stack.pop()
        if i == index:
            return t
        i += 1
        stack.extend(reversed(t.children))
    raise IndexError(index)


def replace_at(tree: Node, index: int, new: Node) -> Node:
    """Copy of ``tree`` with the preorder node ``index`` replaced by ``new``."""
    counter = [0]

    def walk(t):
        if counter[0] == index:
            counter[0] += tree_size(t)
            return new
        counter[0] += 1
        if not t.children:
            return t
        return Node(t.kind, tuple(walk(c) for c in t.children))

    return walk(tree)


def crossover(a: Node, b: Node, max_size: int, rng: np.random.Generator) -> Node:
    """Replace a random subtree of ``a`` by a random subtree of ``b`` that fits."""
    sa, sb = subtree_sizes(a), subtree_sizes(b)
    i = int(rng.integers(len(sa)))
    room = max_size - (sa[0] - sa[i])
    ok = [j for j, s in enumerate(sb) if s <= room]
    if not ok:
        return a
    j = ok[int(rng.integers(len(ok)))]
    return replace_at(a, i, subtree_at(b, j))


def mutate(a: Node, max_size: int, rng: np.random.Generator) -> Node:
    """Replace a random subtree by a fresh PTC2 tree within the size budget."""
    sa = subtree_sizes(a)
    i = int(rng.integers(len(sa)))
    room = max_size - (sa[0] - sa[i])
    return replace_at(a, i, ptc2(max(room, 1), rng))


def tournament(fitness: np.ndarray, size: int, rng: np.random.Generator) -> int:
    picks = rng.integers(len(fitness), size=size)
    return int(picks[np.argmax(fitness[picks])])


# --------------------------------------------------------------------------
# evolution

class Generation(NamedTuple):
    index: int
    trees: list
    outputs: np.ndarray      # (pop, grid) standardised
    degenerate: np.ndarray
    fitness: np.ndarray      # R² per individual
    best: int                # index of the best individual

    @property
    def best_fitness(self) -> float:
        return float(self.fitness[self.best])


def _assess(trees, target: OutputVector, grid: InputGrid):
    outs = [evaluate(t, grid) for t in trees]
    values = np.array([o.values for o in outs])
    flags = np.array([o.degenerate for o in outs])
    fit = np.array([r_squared(o, target) for o in outs])
    return values, flags, fit


def evolve(config: GpConfig, target: OutputVector,
           grid: InputGrid = DEFAULT_GRID) -> Iterator[Generation]:
    """Yield every generation, starting with the PTC2 initial population."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    pop = [ptc2(config.max_tree_size, rng) for _ in range(config.population_size)]
    for g in range(config.generations):
        values, flags, fit = _assess(pop, target, grid)
        best = int(np.argmax(fit))
        yield Generation(g, pop, values, flags, fit, best)
        if g == config.generations - 1:
            break
        nxt = [pop[best]]
        while len(nxt) < config.population_size:
            child = pop[tournament(fit, config.tournament_size, rng)]
            if rng.random() < config.crossover_rate:
                other = pop[tournament(fit, config.tournament_size, rng)]
                child = crossover(child, other, config.max_tree_size, rng)
            if rng.random() < config.mutation_rate:
                child = mutate(child, config.max_tree_size, rng)
            nxt.append(child)
        pop = nxt


# --------------------------------------------------------------------------
# atlas mapping

@numba.njit(cache=True)
def exact_dots(unit_rows, ids, c):
    """Sequential float64 dot products of ``unit_rows[ids]`` with ``c``."""
    out = np.empty(len(ids))
    for r in range(len(ids)):
        s = 0.0
        row = unit_rows[ids[r]]
        for t in range(len(c)):
            s += row[t] * c[t]
        out[r] = s
    return out


class AtlasMatch(NamedTuple):
    expression: np.ndarray   # atlas id, -1 for degenerate candidates
    cluster: np.ndarray      # cluster label or NOISE
    similarity: np.ndarray


class Atlas:
    """Standardised atlas outputs prepared for exact cosine search."""

    PREFILTER_MARGIN = 1e-4
    BLOCK = 512

    def __init__(self, outputs: np.ndarray, degenerate: np.ndarray | None = None,
                 labels: np.ndarray | None = None):
        outputs = np.asarray(outputs, dtype=np.float64)
        n = len(outputs)
        self.degenerate = (np.zeros(n, dtype=bool) if degenerate is None
                           else np.asarray(degenerate, dtype=bool))
        norms = np.sqrt(np.einsum("ij,ij->i", outputs, outputs))
        self.degenerate = self.degenerate | (norms == 0)
        self.valid = np.flatnonzero(~self.degenerate)
        # only non-degenerate rows take part in the search
        self.unit = np.ascontiguousarray(outputs[self.valid] / norms[self.valid, None])
        self.unit32 = self.unit.astype(np.float32)
        self.labels = (np.full(n, NOISE, dtype=np.int64) if labels is None
                       else np.asarray(labels, dtype=np.int64))
        self._memo = {}

    def __len__(self):
        return len(self.degenerate)

    def _unit_candidate(self, v):
        v = np.asarray(v, dtype=np.float64)
        nrm = np.sqrt(v @ v)
        return None if nrm == 0 or not np.isfinite(nrm) else v / nrm

    def nearest(self, candidates: np.ndarray, degenerate=None) -> AtlasMatch:
        """Most similar atlas expression per candidate row; ties to the lowest id."""
        cand = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
        m = len(cand)
        flags = np.zeros(m, dtype=bool) if degenerate is None else np.asarray(degenerate, bool)
        ids = np.full(m, -1, dtype=np.int64)
        sims = np.zeros(m)
        todo = []
        units = []
        for r in range(m):
            u = None if flags[r] else self._unit_candidate(cand[r])
            if u is None:
                continue
            key = u.tobytes()
            hit = self._memo.get(key)
            if hit is not None:
                ids[r], sims[r] = hit
                continue
            todo.append(r)
            units.append(u)
        if len(self.valid) == 0:
            todo = []
        for start in range(0, len(todo), self.BLOCK):
            rows = todo[start:start + self.BLOCK]
            u64 = np.array(units[start:start + self.BLOCK])
            approx = u64.astype(np.float32) @ self.unit32.T
            top = approx.max(axis=1)
            for t, r in enumerate(rows):
                cand_ids = np.flatnonzero(approx[t] >= top[t] - self.PREFILTER_MARGIN)
                exact = exact_dots(self.unit, cand_ids, u64[t])
                best = cand_ids[np.argmax(exact)]   # argmax keeps the lowest index
                ids[r], sims[r] = self.valid[best], float(np.max(exact))
                self._memo[u64[t].tobytes()] = (ids[r], sims[r])
        labels = np.where(ids >= 0, self.labels[np.maximum(ids, 0)], NOISE)
        return AtlasMatch(ids, labels, sims)


def map_to_atlas(candidate, atlas: Atlas) -> tuple[int, int, float]:
    """``(expression id, cluster label, similarity)`` for one candidate."""
    if isinstance(candidate, OutputVector):
        vec, flag = candidate.values, candidate.degenerate
    else:
        vec, flag = candidate, False
    m = atlas.nearest(vec[None, :], np.array([flag]))
    return int(m.expression[0]), int(m.cluster[0]), float(m.similarity[0])


def brute_force_nearest(atlas: Atlas, candidate: np.ndarray) -> tuple[int, float]:
    """Quadratic reference scan (no prefilter)."""
    u = atlas._unit_candidate(candidate)
    if u is None or len(atlas.valid) == 0:
        return -1, 0.0
    s = exact_dots(atlas.unit, np.arange(len(atlas.valid)), u)
    b = int(np.argmax(s))
    return int(atlas.valid[b]), float(s[b])


# --------------------------------------------------------------------------
# cluster ranking and visitation

class ClusterRanking(NamedTuple):
    order: np.ndarray        # cluster ids, best first
    mean_r2: np.ndarray      # aligned with ``order``
    rank_of: np.ndarray      # rank (1-based) indexed by cluster id
    sizes: np.ndarray        # aligned with ``order``


def rank_clusters(labels: np.ndarray, outputs: np.ndarray, target,
                  degenerate=None) -> ClusterRanking:
    """Clusters by descending mean R² against ``target``; ties to the lower id."""
    from .evaluator import r_squared_rows

    labels = np.asarray(labels, dtype=np.int64)
    r2 = r_squared_rows(outputs, target, degenerate)
    return rank_from_r2(labels, r2)


def rank_from_r2(labels: np.ndarray, r2: np.ndarray) -> ClusterRanking:
    labels = np.asarray(labels, dtype=np.int64)
    count = int(labels.max()) + 1 if np.any(labels >= 0) else 0
    keep = labels >= 0
    sizes = np.bincount(labels[keep], minlength=count)
    sums = np.bincount(labels[keep], weights=r2[keep], minlength=count)
    mean = np.divide(sums, sizes, out=np.zeros(count), where=sizes > 0)
    present = np.flatnonzero(sizes > 0)
    order = present[np.lexsort((present, -mean[present]))]
    rank_of = np.zeros(count, dtype=np.int64)
    rank_of[order] = np.arange(1, len(order) + 1)
    return ClusterRanking(order, mean[order], rank_of, sizes[order])


class GenerationVisits(NamedTuple):
    generation: int
    counts: dict             # cluster label (NOISE included) -> candidates
    distinct_clusters: int   # non-noise clusters visited
    median_rank: float       # over candidates mapped to non-noise clusters
    best_r2: float


class VisitationTrace(NamedTuple):
    generations: list        # GenerationVisits per generation
    rows: list               # (generation, candidate, expression, cluster, similarity, r2)


def trace_run(config: GpConfig, target: OutputVector, atlas: Atlas,
              ranking: ClusterRanking, grid: InputGrid = DEFAULT_GRID,
              keep_rows: bool = True) -> VisitationTrace:
    """Run the GP and record where in the atlas each generation lands."""
    gens, rows = [], []
    for gen in evolve(config, target, grid):
        match = atlas.nearest(gen.outputs, gen.degenerate)
        labels = match.cluster
        uniq, cnt = np.unique(labels, return_counts=True)
        counts = {int(u): int(c) for u, c in zip(uniq, cnt)}
        visited = labels[labels >= 0]
        ranks = ranking.rank_of[visited] if len(visited) else np.zeros(0)
        median = float(np.median(ranks)) if len(ranks) else float("nan")
        gens.append(GenerationVisits(gen.index, counts, int(len(np.unique(visited))),
                                     median, gen.best_fitness))
        if keep_rows:
            for i in range(len(gen.trees)):
                rows.append((gen.index, i, int(match.expression[i]), int(labels[i]),
                             float(match.similarity[i]), float(gen.fitness[i])))
        log.debug("gen %d best %.4f distinct %d median rank %s", gen.index,
                  gen.best_fitness, gens[-1].distinct_clusters, median)
    return VisitationTrace(gens, rows)
