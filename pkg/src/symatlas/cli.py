"""``symatlas`` command line: one command per pipeline stage.

Every command reads its inputs from ``--out-dir``, checks them against the
digests recorded by the producing command's manifest, writes its own files
and a ``<command>.manifest.json``.
"""

from __future__ import annotations

import logging
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .artifacts import (ArtifactError, Manifest, MatrixWriter, fmt, read_condensed,
                        read_csv, read_edges, read_expressions_bin, read_matrix,
                        verify_upstream, write_condensed, write_csv, write_edges,
                        write_expressions_bin)
from .clusterer import NOISE, cluster
from .embedder import embed, matrix_neighbor_graph, neighborhood_preservation, shuffled_baseline
from .enumerator import count_unique, stream_expressions
from .evaluator import (BENCHMARKS, R2_DOMAINS, InputGrid, benchmark_r2, evaluate_benchmark,
                        evaluate_many, r_squared_rows)
from .expr import parse, size_metrics, to_text
from .genosim import condensed_similarity, squareform
from .gp import Atlas, GpConfig, rank_from_r2, trace_run
from .neighbors import NeighborGraph, approx_knn, exact_knn
from .pipeline import filter_ids, r2_histogram

log = logging.getLogger("symatlas")

EXPR_CSV = "atlas.expressions.csv"
EXPR_BIN = "atlas.expressions.bin"
OUTPUTS_BIN = "atlas.outputs.bin"
OUTPUTS_CSV = "atlas.outputs.csv"
FLAGS_CSV = "atlas.flags.csv"
R2_CSV = "atlas.r2.csv"
KNN_BIN = "atlas.knn.bin"
KNN_CSV = "atlas.knn.csv"
CLUSTERS_CSV = "atlas.clusters.csv"
EMBED_CSV = "atlas.embedding.csv"
GENO_IDS = "genotypic.ids.csv"
GENO_SIM = "genotypic.similarity.bin"
GENO_CLUSTERS = "genotypic.clusters.csv"
GENO_EMBED = "genotypic.embedding.csv"
GP_TRACE = "gp.trace.csv"
GP_SUMMARY = "gp.summary.csv"

TARGETS = click.Choice(sorted(BENCHMARKS))


def _out_dir(ctx) -> Path:
    return ctx.obj["out_dir"]


def _manifest(ctx, command: str, **params) -> Manifest:
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()}
    return Manifest(command, params, _out_dir(ctx), __version__)


def _need(ctx, man: Manifest, command: str, filename: str) -> Path:
    path, digest = verify_upstream(_out_dir(ctx), command, filename)
    man.add_input(filename, path, digest)
    return path


def _finish(man: Manifest, paths):
    for p in paths:
        man.add_output(p)
    out = man.write()
    click.echo(f"wrote {', '.join(Path(p).name for p in paths)}; manifest {out.name}")


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except ArtifactError as err:
            raise click.ClickException(str(err)) from err


@click.group(cls=_Group)
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path),
              default=Path("atlas_out"), show_default=True)
@click.option("-v", "--verbose", count=True)
@click.version_option(__version__)
@click.pass_context
def main(ctx, out_dir, verbose):
    """Build and query an atlas of univariate symbolic-regression expressions."""
    logging.basicConfig(level=logging.WARNING - 10 * verbose, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx.obj = {"out_dir": out_dir}


# --------------------------------------------------------------------------
# enumerate / evaluate

@main.command("enumerate")
@click.option("--limit", type=click.IntRange(0), default=7, show_default=True,
              help="maximum number of variable references")
@click.option("--count-only", is_flag=True, help="only count the hash classes")
@click.pass_context
def enumerate_cmd(ctx, limit, count_only):
    """Enumerate all grammar sentences up to LIMIT, one per semantic hash."""
    t0 = time.perf_counter()
    if count_only:
        # separate manifest so a count never clobbers the table's lineage
        man = _manifest(ctx, "enumerate-count", limit=limit)
        n, _ = count_unique(limit)
        man.note("unique_count", n)
        man.note("seconds", round(time.perf_counter() - t0, 3))
        path = man.write()
        click.echo(f"{n} unique expressions (limit {limit}); manifest {path.name}")
        return
    man = _manifest(ctx, "enumerate", limit=limit)
    rows = []
    for digest, tree in stream_expressions(limit):
        m = size_metrics(tree)
        rows.append((to_text(tree), digest, m.variable_refs, m.total_nodes))
    rows.sort()
    out = _out_dir(ctx)
    write_csv(out / EXPR_CSV, ["id", "text", "hash", "variable_refs", "total_nodes"],
              ((i, t, f"{d:016x}", r, n) for i, (t, d, r, n) in enumerate(rows)))
    write_expressions_bin(out / EXPR_BIN, [r[1] for r in rows], [r[2] for r in rows],
                          [r[3] for r in rows], [r[0] for r in rows])
    man.note("unique_count", len(rows))
    man.note("seconds", round(time.perf_counter() - t0, 3))
    _finish(man, [out / EXPR_CSV, out / EXPR_BIN])


def _load_texts(ctx, man) -> list:
    _, texts = read_expressions_bin(_need(ctx, man, "enumerate", EXPR_BIN))
    return texts


def _grid_from_manifest(ctx) -> InputGrid:
    from .artifacts import load_manifest
    p = load_manifest(_out_dir(ctx), "evaluate")["parameters"]
    return InputGrid.midpoints(p["grid_lo"], p["grid_hi"], p["grid_n"])


@main.command()
@click.option("--grid-lo", type=float, default=-5.0, show_default=True)
@click.option("--grid-hi", type=float, default=5.0, show_default=True)
@click.option("--grid-n", type=click.IntRange(2), default=100, show_default=True)
@click.option("--csv-export", is_flag=True, help="also write the output matrix as CSV")
@click.option("--chunk", type=click.IntRange(1), default=16384, hidden=True)
@click.pass_context
def evaluate(ctx, grid_lo, grid_hi, grid_n, csv_export, chunk):
    """Evaluate every expression on the grid; also tabulate benchmark R²."""
    if not grid_lo < grid_hi:
        raise click.BadParameter("--grid-lo must be below --grid-hi")
    man = _manifest(ctx, "evaluate", grid_lo=grid_lo, grid_hi=grid_hi, grid_n=grid_n,
                    csv_export=csv_export)
    texts = _load_texts(ctx, man)
    grid = InputGrid.midpoints(grid_lo, grid_hi, grid_n)
    out = _out_dir(ctx)
    flags = np.zeros(len(texts), dtype=bool)
    r2 = {f"{k}@{d}": np.zeros(len(texts)) for d in R2_DOMAINS for k in BENCHMARKS}
    with MatrixWriter(out / OUTPUTS_BIN, grid_n) as mw:
        for start in range(0, len(texts), chunk):
            trees = [parse(t) for t in texts[start:start + chunk]]
            values, f = evaluate_many(trees, grid)
            mw.write(values)
            flags[start:start + len(trees)] = f
            for key in BENCHMARKS:
                r2[f"{key}@atlas"][start:start + len(trees)] = r_squared_rows(
                    values, evaluate_benchmark(key, grid=grid), f)
                r2[f"{key}@native"][start:start + len(trees)] = benchmark_r2(trees, key, "native")
    write_csv(out / FLAGS_CSV, ["id", "degenerate"], ((i, int(f)) for i, f in enumerate(flags)))
    cols = [f"{k}@{d}" for d in R2_DOMAINS for k in sorted(BENCHMARKS)]
    write_csv(out / R2_CSV, ["id"] + cols,
              ([i] + [fmt(r2[c][i]) for c in cols] for i in range(len(texts))))
    paths = [out / OUTPUTS_BIN, out / FLAGS_CSV, out / R2_CSV]
    if csv_export:
        V = read_matrix(out / OUTPUTS_BIN, mmap=True)
        write_csv(out / OUTPUTS_CSV, ["id"] + [f"v{j}" for j in range(grid_n)],
                  ([i] + [fmt(v) for v in V[i]] for i in range(len(V))))
        paths.append(out / OUTPUTS_CSV)
    man.note("degenerate", int(flags.sum()))
    _finish(man, paths)


def _load_outputs(ctx, man):
    V = read_matrix(_need(ctx, man, "evaluate", OUTPUTS_BIN))
    _, rows = read_csv(_need(ctx, man, "evaluate", FLAGS_CSV))
    flags = np.array([int(r[1]) for r in rows], dtype=bool)
    if len(flags) != len(V):
        raise ArtifactError("flags and outputs disagree on the row count")
    return V, flags


def _load_r2(ctx, man, target: str, domain: str) -> np.ndarray:
    header, rows = read_csv(_need(ctx, man, "evaluate", R2_CSV))
    col = header.index(f"{target}@{domain}")
    return np.array([float(r[col]) for r in rows])


# --------------------------------------------------------------------------
# phenotypic track

@main.command()
@click.option("--k", type=click.IntRange(1), default=30, show_default=True)
@click.option("--trees", type=click.IntRange(1), default=16, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--exact", is_flag=True, help="brute-force graph instead of RP trees")
@click.option("--csv-export", is_flag=True, help="also write the edge list as CSV")
@click.pass_context
def knn(ctx, k, trees, seed, exact, csv_export):
    """k-nearest-neighbour graph of the output vectors (cosine)."""
    man = _manifest(ctx, "knn", k=k, trees=trees, seed=seed, exact=exact,
                    csv_export=csv_export)
    V, flags = _load_outputs(ctx, man)
    valid = np.flatnonzero(~flags)
    g = exact_knn(V[valid], k) if exact else approx_knn(V[valid], k, trees=trees, seed=seed)
    src, dst, sim = g.edges()
    out = _out_dir(ctx)
    write_edges(out / KNN_BIN, valid[src], valid[dst], sim)
    paths = [out / KNN_BIN]
    if csv_export:
        write_csv(out / KNN_CSV, ["source", "target", "similarity"],
                  ((int(valid[a]), int(valid[b]), fmt(s)) for a, b, s in zip(src, dst, sim)))
        paths.append(out / KNN_CSV)
    _finish(man, paths)


def _load_graph(ctx, man, n_total: int | None = None):
    """Graph rows re-indexed over the sources present; returns (graph, ids)."""
    rec = read_edges(_need(ctx, man, "knn", KNN_BIN))
    ids = np.unique(rec["source"])
    k = len(rec) // max(len(ids), 1)
    if k * len(ids) != len(rec):
        raise ArtifactError("ragged neighbour lists in the edge file")
    pos = np.full(int(max(ids.max(), rec["target"].max())) + 1, -1, dtype=np.int64)
    pos[ids] = np.arange(len(ids))
    order = np.argsort(rec["source"], kind="stable")
    rec = rec[order]
    return NeighborGraph(pos[rec["target"]].reshape(-1, k),
                         rec["similarity"].reshape(-1, k).copy()), ids


def _geno_ids(ctx, man) -> np.ndarray:
    _, rows = read_csv(_need(ctx, man, "filter-genotypic", GENO_IDS))
    return np.array([int(r[1]) for r in rows], dtype=np.int64)


@main.command("cluster")
@click.option("--min-pts", type=click.IntRange(1), default=10, show_default=True)
@click.option("--min-cluster-size", type=click.IntRange(2), default=25, show_default=True)
@click.option("--track", type=click.Choice(["phenotypic", "genotypic"]), default="phenotypic",
              show_default=True)
@click.option("--space", type=click.Choice(["direct", "embedding"]), default="direct",
              show_default=True, help="genotypic track: cluster the similarity matrix "
              "or the 2-D embedding")
@click.pass_context
def cluster_cmd(ctx, min_pts, min_cluster_size, track, space):
    """HDBSCAN clusters (graph mode for phenotypes, matrix mode for genotypes)."""
    man = _manifest(ctx, f"cluster-{track}", min_pts=min_pts,
                    min_cluster_size=min_cluster_size, track=track, space=space)
    out = _out_dir(ctx)
    if track == "phenotypic":
        _, rows = read_csv(_need(ctx, man, "enumerate", EXPR_CSV))
        n = len(rows)
        g, ids = _load_graph(ctx, man)
        res = cluster(g, min_pts, min_cluster_size)
        labels = np.full(n, NOISE, dtype=np.int64)
        stab = np.zeros(n)
        labels[ids] = res.labels
        stab[ids] = res.point_stability
        path = out / CLUSTERS_CSV
    else:
        ids = _geno_ids(ctx, man)
        if space == "direct":
            cond = read_condensed(_need(ctx, man, "genosim-matrix", GENO_SIM))
            dist = 1.0 - squareform(cond.astype(np.float64), len(ids))
        else:
            from scipy.spatial.distance import cdist
            _, rows = read_csv(_need(ctx, man, "embed-genotypic", GENO_EMBED))
            xy = np.array([[float(r[1]), float(r[2])] for r in rows])
            dist = cdist(xy, xy)
        res = cluster(dist, min_pts, min_cluster_size)
        labels, stab = res.labels, res.point_stability
        path = out / GENO_CLUSTERS
    id_col = np.arange(len(labels)) if track == "phenotypic" else ids
    write_csv(path, ["id", "cluster", "stability"],
              ((int(i), int(l), fmt(s)) for i, l, s in zip(id_col, labels, stab)))
    man.note("cluster_count", res.cluster_count)
    man.note("noise_fraction", float(np.mean(res.labels == NOISE)))
    click.echo(f"{res.cluster_count} clusters")
    _finish(man, [path])


@main.command("embed")
@click.option("--epochs", type=click.IntRange(1), default=200, show_default=True)
@click.option("--neg-samples", type=click.IntRange(0), default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--k", type=click.IntRange(1), default=30, show_default=True,
              help="genotypic track: neighbours taken from the matrix")
@click.option("--track", type=click.Choice(["phenotypic", "genotypic"]), default="phenotypic",
              show_default=True)
@click.pass_context
def embed_cmd(ctx, epochs, neg_samples, seed, k, track):
    """2-D layout by negative-sampling SGD over the neighbour graph."""
    man = _manifest(ctx, f"embed-{track}", epochs=epochs, neg_samples=neg_samples,
                    seed=seed, k=k, track=track)
    out = _out_dir(ctx)
    if track == "phenotypic":
        _, rows = read_csv(_need(ctx, man, "enumerate", EXPR_CSV))
        n = len(rows)
        g, ids = _load_graph(ctx, man)
        path = out / EMBED_CSV
    else:
        ids = _geno_ids(ctx, man)
        cond = read_condensed(_need(ctx, man, "genosim-matrix", GENO_SIM))
        g = matrix_neighbor_graph(1.0 - squareform(cond.astype(np.float64), len(ids)), k)
        path = out / GENO_EMBED
    e = embed(g, epochs, neg_samples, seed)
    score = neighborhood_preservation(e.coords, g)
    base = shuffled_baseline(e.coords, g, seed)
    if track == "phenotypic":
        coords = np.zeros((n, 2))
        placed = np.zeros(n, dtype=bool)
        coords[ids] = e.coords
        placed[ids] = ~e.isolated
        id_col = np.arange(n)
    else:
        coords, placed, id_col = e.coords, ~e.isolated, ids
    write_csv(path, ["id", "x", "y", "placed"],
              ((int(i), fmt(c[0]), fmt(c[1]), int(p)) for i, c, p in zip(id_col, coords, placed)))
    man.note("neighborhood_preservation", score)
    man.note("shuffled_baseline", base)
    click.echo(f"preservation {score:.4f} (shuffled {base:.5f})")
    _finish(man, [path])


def _load_labels(ctx, man) -> np.ndarray:
    _, rows = read_csv(_need(ctx, man, "cluster-phenotypic", CLUSTERS_CSV))
    return np.array([int(r[1]) for r in rows], dtype=np.int64)


def _ranking_rows(labels, r2):
    rk = rank_from_r2(labels, r2)
    return [(i + 1, int(c), fmt(m), int(s))
            for i, (c, m, s) in enumerate(zip(rk.order, rk.mean_r2, rk.sizes))]


RANK_HEADER = ["rank", "cluster", "mean_r2", "size"]


@main.command()
@click.option("--target", type=TARGETS, default=None, help="one benchmark (default: all)")
@click.option("--r2-domain", type=click.Choice(R2_DOMAINS), default="native",
              show_default=True, help="sample expressions and target on the benchmark's "
              "own domain or on the atlas grid")
@click.pass_context
def rank(ctx, target, r2_domain):
    """Rank phenotypic clusters by mean R² against benchmark targets."""
    man = _manifest(ctx, "rank", target=target, r2_domain=r2_domain)
    labels = _load_labels(ctx, man)
    out = _out_dir(ctx)
    paths = []
    for key in ([target] if target else sorted(BENCHMARKS)):
        rows = _ranking_rows(labels, _load_r2(ctx, man, key, r2_domain))
        path = out / f"rank.{key}.csv"
        write_csv(path, RANK_HEADER, rows)
        paths.append(path)
        if rows:
            man.note(f"top_mean_r2.{key}", float(rows[0][2]))
    _finish(man, paths)


# --------------------------------------------------------------------------
# genotypic track

@main.command("filter-genotypic")
@click.option("--target", type=TARGETS, default="keijzer4", show_default=True)
@click.option("--threshold", type=float, default=0.2, show_default=True)
@click.option("--r2-domain", type=click.Choice(R2_DOMAINS), default="native",
              show_default=True)
@click.pass_context
def filter_genotypic(ctx, target, threshold, r2_domain):
    """Keep expressions with R² above THRESHOLD for the genotypic analysis."""
    man = _manifest(ctx, "filter-genotypic", target=target, threshold=threshold,
                    r2_domain=r2_domain)
    r2 = _load_r2(ctx, man, target, r2_domain)
    ids = filter_ids(r2, threshold)
    path = _out_dir(ctx) / GENO_IDS
    write_csv(path, ["index", "id", "r2"], ((j, int(i), fmt(r2[i])) for j, i in enumerate(ids)))
    man.note("kept", int(len(ids)))
    click.echo(f"{len(ids)} expressions with R² > {threshold}")
    _finish(man, [path])


@main.command("genosim-matrix")
@click.pass_context
def genosim_matrix(ctx):
    """Pairwise genotypic similarity of the filtered expressions."""
    man = _manifest(ctx, "genosim-matrix")
    ids = _geno_ids(ctx, man)
    texts = _load_texts(ctx, man)
    cond = condensed_similarity([parse(texts[i]) for i in ids])
    path = _out_dir(ctx) / GENO_SIM
    write_condensed(path, cond)
    man.note("points", int(len(ids)))
    _finish(man, [path])


# --------------------------------------------------------------------------
# GP

@main.command("gp-run")
@click.option("--target", type=TARGETS, default="keijzer4", show_default=True)
@click.option("--pop-size", type=click.IntRange(2), default=500, show_default=True)
@click.option("--generations", type=click.IntRange(1), default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--tournament-size", type=click.IntRange(1), default=5, show_default=True)
@click.option("--crossover-rate", type=click.FloatRange(0, 1), default=0.9, show_default=True)
@click.option("--mutation-rate", type=click.FloatRange(0, 1), default=0.15, show_default=True)
@click.option("--max-tree-size", type=click.IntRange(1), default=25, show_default=True)
@click.pass_context
def gp_run(ctx, target, pop_size, generations, seed, tournament_size, crossover_rate,
           mutation_rate, max_tree_size):
    """Run tree GP on a benchmark and trace which atlas clusters it visits."""
    cfg = GpConfig(pop_size, generations, tournament_size, crossover_rate, mutation_rate,
                   max_tree_size, seed)
    man = _manifest(ctx, "gp-run", target=target, pop_size=pop_size,
                    generations=generations, seed=seed, tournament_size=tournament_size,
                    crossover_rate=crossover_rate, mutation_rate=mutation_rate,
                    max_tree_size=max_tree_size)
    V, flags = _load_outputs(ctx, man)
    labels = _load_labels(ctx, man)
    grid = _grid_from_manifest(ctx)
    # ranks follow the GP's own objective: R² on the atlas grid
    ranking = rank_from_r2(labels, _load_r2(ctx, man, target, "atlas"))
    tgt = evaluate_benchmark(target, grid=grid)
    trace = trace_run(cfg, tgt, Atlas(V, flags, labels), ranking, grid)
    out = _out_dir(ctx)
    write_csv(out / GP_TRACE, ["generation", "candidate", "expression", "cluster",
                               "similarity", "r2"],
              ((g, c, e, l, fmt(s), fmt(r)) for g, c, e, l, s, r in trace.rows))
    write_csv(out / GP_SUMMARY, ["generation", "distinct_clusters", "median_rank", "best_r2"],
              ((v.generation, v.distinct_clusters, fmt(v.median_rank), fmt(v.best_r2))
               for v in trace.generations))
    first, last = trace.generations[0], trace.generations[-1]
    click.echo(f"best R² {last.best_r2:.4f}; distinct clusters {first.distinct_clusters} -> "
               f"{last.distinct_clusters}; median rank {first.median_rank} -> "
               f"{last.median_rank}")
    _finish(man, [out / GP_TRACE, out / GP_SUMMARY])


# --------------------------------------------------------------------------
# report

def _optional(ctx, man, command, filename):
    try:
        return _need(ctx, man, command, filename)
    except ArtifactError:
        return None


@main.command()
@click.option("--r2-domain", type=click.Choice(R2_DOMAINS), default="native",
              show_default=True)
@click.option("--top", type=click.IntRange(1), default=4, show_default=True,
              help="best clusters listed per benchmark")
@click.pass_context
def report(ctx, r2_domain, top):
    """Join all artifacts into plot-ready tables."""
    man = _manifest(ctx, "report", r2_domain=r2_domain, top=top)
    out = _out_dir(ctx)
    _, erows = read_csv(_need(ctx, man, "enumerate", EXPR_CSV))
    _, frows = read_csv(_need(ctx, man, "evaluate", FLAGS_CSV))
    labels = _load_labels(ctx, man)
    r2 = {k: _load_r2(ctx, man, k, r2_domain) for k in sorted(BENCHMARKS)}
    emb = _optional(ctx, man, "embed-phenotypic", EMBED_CSV)
    coords = None
    if emb is not None:
        _, rows = read_csv(emb)
        coords = [(r[1], r[2]) for r in rows]
    paths = []

    path = out / "report.atlas.csv"
    keys = sorted(BENCHMARKS)
    write_csv(path, ["id", "text", "hash", "variable_refs", "total_nodes", "degenerate",
                     "cluster", "x", "y"] + [f"r2_{k}" for k in keys],
              ([*e, f[1], int(labels[i]), *(coords[i] if coords else ("", ""))]
               + [fmt(r2[k][i]) for k in keys]
               for i, (e, f) in enumerate(zip(erows, frows))))
    paths.append(path)

    best_rows = []
    for key in keys:
        rows = _ranking_rows(labels, r2[key])
        p = out / f"report.ranking.{key}.csv"
        write_csv(p, RANK_HEADER, rows)
        paths.append(p)
        for rk, c, _, _ in rows[:top]:
            for i in np.flatnonzero(labels == c):
                best_rows.append((key, rk, c, int(i), erows[i][1], fmt(r2[key][i])))
    p = out / "report.best_clusters.csv"
    write_csv(p, ["benchmark", "rank", "cluster", "id", "text", "r2"], best_rows)
    paths.append(p)

    edges, _ = r2_histogram(np.zeros(0))
    counts = {k: r2_histogram(r2[k])[1] for k in keys}
    p = out / "report.r2_histogram.csv"
    write_csv(p, ["bin_lo", "bin_hi"] + keys,
              ([fmt(edges[b]), fmt(edges[b + 1])] + [int(counts[k][b]) for k in keys]
               for b in range(len(edges) - 1)))
    paths.append(p)

    geno = _optional(ctx, man, "filter-genotypic", GENO_IDS)
    gclu = _optional(ctx, man, "cluster-genotypic", GENO_CLUSTERS)
    gemb = _optional(ctx, man, "embed-genotypic", GENO_EMBED)
    if geno is not None and (gclu is not None or gemb is not None):
        _, irows = read_csv(geno)
        gl = {r[0]: r[1] for r in read_csv(gclu)[1]} if gclu else {}
        ge = {r[0]: (r[1], r[2]) for r in read_csv(gemb)[1]} if gemb else {}
        p = out / "report.genotypic.csv"
        write_csv(p, ["id", "text", "r2", "cluster", "x", "y"],
                  ([r[1], erows[int(r[1])][1], r[2], gl.get(r[1], ""),
                    *ge.get(r[1], ("", ""))] for r in irows))
        paths.append(p)

    summary = _optional(ctx, man, "gp-run", GP_SUMMARY)
    if summary is not None:
        header, rows = read_csv(summary)
        p = out / "report.gp_summary.csv"
        write_csv(p, header, rows)
        paths.append(p)
    _finish(man, paths)


if __name__ == "__main__":  # pragma: no cover
    main()
