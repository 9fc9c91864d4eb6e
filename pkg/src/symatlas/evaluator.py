"""Phenotypes: evaluation on a fixed grid, repair, standardisation, R².

Output vectors are repaired (non-finite entries replaced by the mean of the
finite ones) and then standardised to zero mean and unit variance, so the
cosine of two vectors equals their Pearson correlation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .expr import Node, NodeKind

GRID_N = 100
GRID_LO = -5.0
GRID_HI = 5.0
DEGENERATE_VAR = 1e-12


class InputGrid(NamedTuple):
    points: np.ndarray

    @classmethod
    def midpoints(cls, lo: float = GRID_LO, hi: float = GRID_HI, n: int = GRID_N):
        """``n`` cell midpoints of ``[lo, hi]``; never hits an endpoint or 0 for even n."""
        h = (hi - lo) / n
        return cls(lo + h * (np.arange(n) + 0.5))

    @classmethod
    def linspace(cls, lo: float, hi: float, n: int = GRID_N):
        return cls(np.linspace(lo, hi, n))

    def __len__(self):
        return len(self.points)


DEFAULT_GRID = InputGrid.midpoints()


class OutputVector(NamedTuple):
    values: np.ndarray
    degenerate: bool


def raw_eval(tree: Node, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
    """Pointwise evaluation; may contain nan/inf.

    ``cache`` maps ``id(node)`` to its vector and is only valid while the
    trees it was filled from are alive.
    """
    if cache is not None:
        hit = cache.get(id(tree))
        if hit is not None:
            return hit
    kind = tree.kind
    with np.errstate(all="ignore"):
        if kind is NodeKind.VAR:
            out = x
        elif kind is NodeKind.ADD:
            ch = tree.children
            out = raw_eval(ch[0], x, cache) + raw_eval(ch[1], x, cache)
            for c in ch[2:]:
                out = out + raw_eval(c, x, cache)
        elif kind is NodeKind.MUL:
            ch = tree.children
            out = raw_eval(ch[0], x, cache) * raw_eval(ch[1], x, cache)
            for c in ch[2:]:
                out = out * raw_eval(c, x, cache)
        else:
            a = raw_eval(tree.children[0], x, cache)
            if kind is NodeKind.INV:
                out = 1.0 / a
            elif kind is NodeKind.EXP:
                out = np.exp(a)
            elif kind is NodeKind.LOG:
                out = np.log(a)
            else:
                out = np.sin(a)
    if cache is not None:
        cache[id(tree)] = out
    return out


def repair_standardize(raw: np.ndarray) -> OutputVector:
    """Replace non-finite values by the finite mean, then standardise."""
    values, flags = repair_standardize_rows(np.asarray(raw, dtype=float)[None, :])
    return OutputVector(values[0], bool(flags[0]))


def repair_standardize_rows(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise version of :func:`repair_standardize`.

    Returns ``(values, degenerate)``.  Degenerate rows (all non-finite, or
    relative variance below 1e-12) come back as zeros.
    """
    raw = np.array(raw, dtype=float, copy=True)
    finite = np.isfinite(raw)
    n_fin = finite.sum(axis=1)
    with np.errstate(all="ignore"):
        # scale first so squares cannot overflow
        scale = np.max(np.where(finite, np.abs(raw), 0.0), axis=1)
        scale[scale == 0] = 1.0
        scaled = np.where(finite, raw / scale[:, None], 0.0)
        mean = scaled.sum(axis=1) / np.maximum(n_fin, 1)
        scaled = np.where(finite, scaled, mean[:, None])
        mu = scaled.mean(axis=1)
        centered = scaled - mu[:, None]
        var = (centered * centered).mean(axis=1)
        degenerate = (n_fin == 0) | (var < DEGENERATE_VAR)
        std = np.sqrt(np.where(degenerate, 1.0, var))
        out = centered / std[:, None]
    out[degenerate] = 0.0
    # one more pass pins mean/variance to rounding level
    ok = ~degenerate
    if ok.any():
        o = out[ok]
        o = o - o.mean(axis=1, keepdims=True)
        o /= np.sqrt((o * o).mean(axis=1, keepdims=True))
        out[ok] = o
    return out, degenerate


def evaluate(tree: Node, grid: InputGrid = DEFAULT_GRID) -> OutputVector:
    return repair_standardize(raw_eval(tree, grid.points))


def evaluate_many(trees, grid: InputGrid = DEFAULT_GRID,
                  chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate a sequence of trees into an ``(n, len(grid))`` matrix.

    Shared subtrees (same object) are evaluated once per chunk.
    """
    trees = list(trees)
    n, dim = len(trees), len(grid)
    values = np.empty((n, dim))
    flags = np.empty(n, dtype=bool)
    for start in range(0, n, chunk):
        cache = {}
        block = trees[start:start + chunk]
        raw = np.empty((len(block), dim))
        for i, t in enumerate(block):
            raw[i] = raw_eval(t, grid.points, cache)
        values[start:start + len(block)], flags[start:start + len(block)] = \
            repair_standardize_rows(raw)
    return values, flags


def phenotypic_similarity(a, b) -> float:
    """Cosine of two standardised vectors; 0 when either is degenerate."""
    va, da = _unpack(a)
    vb, db = _unpack(b)
    if da or db:
        return 0.0
    na, nb = np.sqrt(va @ va), np.sqrt(vb @ vb)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip((va @ vb) / (na * nb), -1.0, 1.0))


def r_squared(a, target) -> float:
    return phenotypic_similarity(a, target) ** 2


def _unpack(v):
    if isinstance(v, OutputVector):
        return v.values, v.degenerate
    v = np.asarray(v, dtype=float)
    return v, not np.any(v)


def r_squared_rows(values: np.ndarray, target, degenerate=None) -> np.ndarray:
    """R² of every row of a standardised matrix against one target vector."""
    t, tdeg = _unpack(target)
    if tdeg:
        return np.zeros(len(values))
    norms = np.sqrt(np.einsum("ij,ij->i", values, values))
    with np.errstate(all="ignore"):
        r = (values @ t) / (norms * np.sqrt(t @ t))
    r = np.where(norms > 0, r, 0.0)
    if degenerate is not None:
        r[degenerate] = 0.0
    return np.clip(r, -1.0, 1.0) ** 2


# --------------------------------------------------------------------------
# benchmarks

@dataclass(frozen=True)
class BenchmarkFunction:
    name: str
    key: str
    domain: tuple
    fn: Callable[[np.ndarray], np.ndarray]

    def raw(self, x) -> np.ndarray:
        with np.errstate(all="ignore"):
            return self.fn(np.asarray(x, dtype=float))


def _keijzer4(x):
    return x ** 3 * np.exp(-x) * np.cos(x) * np.sin(x) * (np.sin(x) ** 2 * np.cos(x) - 1)


def _keijzer9(x):
    return np.log(x + np.sqrt(x ** 2 + 1))


def _pagie1d(x):
    return 1.0 / (1.0 + x ** -4.0)


def _nguyen5(x):
    return np.sin(x ** 2) * np.cos(x) - 1


def _nguyen6(x):
    return np.sin(x) + np.sin(x + x ** 2)


BENCHMARKS = {
    b.key: b for b in (
        BenchmarkFunction("Keijzer-4", "keijzer4", (0.0, 10.0), _keijzer4),
        BenchmarkFunction("Keijzer-9", "keijzer9", (0.0, 100.0), _keijzer9),
        BenchmarkFunction("Pagie-1d", "pagie1d", (-5.0, 5.0), _pagie1d),
        BenchmarkFunction("Nguyen-5", "nguyen5", (-1.0, 1.0), _nguyen5),
        BenchmarkFunction("Nguyen-6", "nguyen6", (-1.0, 1.0), _nguyen6),
    )
}


def get_benchmark(name: str) -> BenchmarkFunction:
    key = name.lower().replace("-", "").replace("_", "")
    if key not in BENCHMARKS:
        raise KeyError(f"unknown benchmark {name!r}; known: {sorted(BENCHMARKS)}")
    return BENCHMARKS[key]


def benchmark_grid(name: str, samples: int = GRID_N, endpoints: bool = False) -> InputGrid:
    """``samples`` evenly spaced points of the benchmark's own domain.

    Cell midpoints by default, like the atlas grid, so poles at a domain
    endpoint (``log`` or ``1/x`` at 0) are never sampled.
    """
    bench = get_benchmark(name)
    if endpoints:
        return InputGrid.linspace(*bench.domain, samples)
    return InputGrid.midpoints(*bench.domain, samples)


def evaluate_benchmark(name: str, samples: int = GRID_N, grid: InputGrid | None = None,
                       endpoints: bool = False) -> OutputVector:
    """Standardised benchmark target on its own domain, or on ``grid`` if given."""
    bench = get_benchmark(name)
    if grid is None:
        grid = benchmark_grid(name, samples, endpoints)
    return repair_standardize(bench.raw(grid.points))


R2_DOMAINS = ("native", "atlas")


def benchmark_r2(trees, name: str, domain: str = "native",
                 atlas_grid: InputGrid = DEFAULT_GRID, samples: int = GRID_N) -> np.ndarray:
    """R² of every tree against one benchmark.

    ``native``: trees and target both sampled on the benchmark's domain;
    ``atlas``: both sampled on the atlas grid.
    """
    if domain not in R2_DOMAINS:
        raise ValueError(f"domain must be one of {R2_DOMAINS}")
    grid = benchmark_grid(name, samples) if domain == "native" else atlas_grid
    values, flags = evaluate_many(trees, grid)
    return r_squared_rows(values, evaluate_benchmark(name, grid=grid), flags)
