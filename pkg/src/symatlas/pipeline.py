"""In-memory glue between the modules: atlas construction and the reports.

The CLI wraps these functions with file I/O; the acceptance suite calls
them directly.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .clusterer import NOISE, cluster
from .embedder import embed, neighborhood_preservation, shuffled_baseline
from .enumerator import enumerate_expressions
from .evaluator import BENCHMARKS, InputGrid, benchmark_r2, evaluate_many
from .gp import rank_from_r2
from .neighbors import NeighborGraph, approx_knn, exact_knn

log = logging.getLogger(__name__)

HISTOGRAM_BINS = 50


@dataclass
class AtlasConfig:
    limit: int = 6
    grid_lo: float = -5.0
    grid_hi: float = 5.0
    grid_n: int = 100
    k: int = 30
    trees: int = 16
    min_pts: int = 10
    min_cluster_size: int = 25
    epochs: int = 200
    neg_samples: int = 5
    seed: int = 0

    @property
    def grid(self) -> InputGrid:
        return InputGrid.midpoints(self.grid_lo, self.grid_hi, self.grid_n)


@dataclass
class PhenotypicAtlas:
    config: AtlasConfig
    trees: list
    texts: list
    outputs: np.ndarray
    degenerate: np.ndarray
    valid: np.ndarray                 # atlas ids with a usable phenotype
    graph: NeighborGraph | None = None   # over ``valid`` (row r is atlas id valid[r])
    labels: np.ndarray | None = None     # per atlas id
    coords: np.ndarray | None = None     # per atlas id
    timings: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.trees)


def graph_over(outputs: np.ndarray, degenerate: np.ndarray, k: int, trees: int,
               seed: int, exact: bool = False):
    valid = np.flatnonzero(~np.asarray(degenerate, dtype=bool))
    pts = outputs[valid]
    g = exact_knn(pts, k) if exact else approx_knn(pts, k, trees=trees, seed=seed)
    return g, valid


def spread_labels(sub_labels: np.ndarray, valid: np.ndarray, n: int) -> np.ndarray:
    labels = np.full(n, NOISE, dtype=np.int64)
    labels[valid] = sub_labels
    return labels


def build_atlas(config: AtlasConfig, stages=("knn", "cluster")) -> PhenotypicAtlas:
    """Enumerate, evaluate and (optionally) link, cluster and embed the atlas."""
    t = time.perf_counter()
    res = enumerate_expressions(config.limit)
    trees = [e.tree for e in res.expressions]
    texts = [e.text for e in res.expressions]
    timings = {"enumerate": time.perf_counter() - t}
    del res
    t = time.perf_counter()
    outputs, flags = evaluate_many(trees, config.grid)
    timings["evaluate"] = time.perf_counter() - t
    atlas = PhenotypicAtlas(config, trees, texts, outputs, flags,
                            np.flatnonzero(~flags), timings=timings)
    if "knn" in stages:
        t = time.perf_counter()
        atlas.graph, _ = graph_over(outputs, flags, config.k, config.trees, config.seed)
        timings["knn"] = time.perf_counter() - t
    if "cluster" in stages:
        t = time.perf_counter()
        c = cluster(atlas.graph, config.min_pts, config.min_cluster_size)
        atlas.labels = spread_labels(c.labels, atlas.valid, len(trees))
        timings["cluster"] = time.perf_counter() - t
    if "embed" in stages:
        t = time.perf_counter()
        e = embed(atlas.graph, config.epochs, config.neg_samples, config.seed)
        atlas.coords = np.zeros((len(trees), 2))
        atlas.coords[atlas.valid] = e.coords
        timings["embed"] = time.perf_counter() - t
    log.info("atlas built: %s", {k: round(v, 1) for k, v in timings.items()})
    return atlas


def r2_table(trees, domain: str = "native", grid: InputGrid | None = None) -> dict:
    """Benchmark key -> R² per tree."""
    kw = {} if grid is None else {"atlas_grid": grid}
    return {key: benchmark_r2(trees, key, domain, **kw) for key in BENCHMARKS}


def top_cluster_means(labels: np.ndarray, r2: dict) -> dict:
    return {key: float(rank_from_r2(labels, v).mean_r2[0]) if np.any(labels >= 0) else 0.0
            for key, v in r2.items()}


def r2_histogram(r2: np.ndarray, bins: int = HISTOGRAM_BINS):
    """Counts over ``bins`` equal bins of [0, 1] (last bin closed)."""
    counts, edges = np.histogram(np.clip(r2, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    return edges, counts


def filter_ids(r2: np.ndarray, threshold: float) -> np.ndarray:
    """Ids with R² strictly above ``threshold``."""
    return np.flatnonzero(np.asarray(r2) > threshold)


def embedding_quality(coords: np.ndarray, graph: NeighborGraph, seed: int = 0):
    """``(score, shuffled baseline)`` for coordinates aligned with ``graph`` rows."""
    return (neighborhood_preservation(coords, graph),
            shuffled_baseline(coords, graph, seed))
