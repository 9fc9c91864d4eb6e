"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The end-of-run summary lists every line (see ``conftest.py``).  The large
checks share one atlas built at variable-reference limit 6; limit 7 is
enumerated and evaluated in streaming form only (its output matrix does not
fit in memory next to everything else).

Both limit-7 passes run in child processes so their memory never adds to
the atlas held by this one.
"""

import json
import random
import subprocess
import sys
import time
import timeit
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.distance import cdist
from sklearn.cluster import HDBSCAN
from sklearn.cluster._hdbscan._linkage import make_single_linkage, mst_from_mutual_reachability
from sklearn.cluster._hdbscan._reachability import mutual_reachability_graph
from sklearn.cluster._hdbscan._tree import tree_to_labels
from sklearn.metrics import adjusted_rand_score

from oracles import (canonical_string, core_distances_bruteforce, derive_all, numeric_classes,
                     random_tree, unique_by_canonical_form)
from symatlas.clusterer import NOISE, cluster, core_distances
from symatlas.embedder import embed
from symatlas.enumerator import enumerate_expressions
from symatlas.evaluator import evaluate_benchmark, evaluate_many
from symatlas.expr import iter_nodes, parse, semantic_hash, shuffle_commutative
from symatlas.genosim import bottom_up_map, genotypic_similarity
from symatlas.gp import Atlas, GpConfig, brute_force_nearest, ptc2, rank_clusters, trace_run
from symatlas.neighbors import approx_knn, exact_knn, recall
from symatlas.pipeline import (AtlasConfig, build_atlas, embedding_quality, r2_table,
                               top_cluster_means)

pytestmark = pytest.mark.slow

ATLAS_LIMIT = 6
TARGET_COUNT = 160_000
LIMIT7_CLASSES = 6_108_346   # hash classes at limit 7, frozen from the enumerator
TARGET_TOP_R2 = {"keijzer4": 0.70, "keijzer9": 0.97, "pagie1d": 0.97,
                    "nguyen5": 0.95, "nguyen6": 0.95}


@pytest.fixture(scope="module")
def atlas():
    return build_atlas(AtlasConfig(limit=ATLAS_LIMIT), stages=("knn", "cluster"))


# --------------------------------------------------------------------------
# 1. enumeration scale

def run_child(*args):
    """Run a Python child process; its memory goes back to the OS on exit."""
    res = subprocess.run([sys.executable, *args], capture_output=True, text=True,
                         cwd=Path(__file__).parent)
    assert res.returncode == 0, res.stderr[-2000:]
    return res.stdout


def test_criterion_1_enumeration_scale(verdict, tmp_path):
    small = {}
    for limit in (1, 2, 3):
        ours = {e.text for e in enumerate_expressions(limit).expressions}
        small[limit] = (len(ours), len(unique_by_canonical_form(limit)))
    small_ok = all(a == b for a, b in small.values())
    t0 = time.perf_counter()
    run_child("-m", "symatlas.cli", "--out-dir", str(tmp_path), "enumerate", "--limit", "7")
    seconds = time.perf_counter() - t0
    manifest = json.loads((tmp_path / "enumerate.manifest.json").read_text())
    count = manifest["notes"]["unique_count"]
    rows = sum(1 for _ in open(tmp_path / "atlas.expressions.csv")) - 1
    for f in tmp_path.iterdir():
        f.unlink()
    lo, hi = 0.75 * TARGET_COUNT, 1.25 * TARGET_COUNT
    count_ok = lo <= count <= hi and rows == count
    time_ok = seconds <= 30 * 60
    ok = small_ok and count_ok and time_ok
    verdict(1, ok,
            f"`enumerate --limit 7` wrote {rows} rows, count {count} (target {TARGET_COUNT} "
            f"+-25%: {'in' if count_ok else 'OUT OF'} range, ratio {count / TARGET_COUNT:.1f}); "
            f"runtime {seconds:.0f} s (<= 1800 s: {time_ok}); "
            f"limits 1-3 ours/oracle {[small[k] for k in (1, 2, 3)]}; "
            f"numeric dedup at limit 2 gives {numeric_classes(2)}")
    assert ok


# --------------------------------------------------------------------------
# 2. hashing

def test_criterion_2_hashing(verdict, limit5):
    by_hash, by_canon = {}, {}
    sentences = 0
    for limit in (1, 2, 3):
        for tokens in derive_all(limit):
            sentences += 1
            h = semantic_hash(parse("".join(tokens)))
            c = canonical_string(tokens)
            by_hash.setdefault(h, set()).add(c)
            by_canon.setdefault(c, set()).add(h)
    exhaustive_ok = (all(len(v) == 1 for v in by_hash.values())
                     and all(len(v) == 1 for v in by_canon.values()))

    rng = random.Random(2024)
    pool = [e.tree for e in limit5.expressions]
    changed = 0
    shuffles = 100_000
    for _ in range(shuffles):
        t = pool[rng.randrange(len(pool))]
        if semantic_hash(shuffle_commutative(t, rng)) != semantic_hash(t):
            changed += 1
    ok = exhaustive_ok and changed == 0
    verdict(2, ok,
            f"{sentences} sentences at limit <= 3: hash classes {len(by_hash)}, canonical "
            f"classes {len(by_canon)}, one-to-one {exhaustive_ok}; {shuffles} shuffles, "
            f"{changed} hash changes")
    assert ok


# --------------------------------------------------------------------------
# 3. genotypic similarity

def test_criterion_3_genotypic_similarity(verdict):
    trees = [e.tree for e in enumerate_expressions(2).expressions]
    asym = out_of_range = 0
    for i, a in enumerate(trees):
        if genotypic_similarity(a, a) != 1.0:
            out_of_range += 1
        for b in trees[i + 1:]:
            s_ab, s_ba = genotypic_similarity(a, b), genotypic_similarity(b, a)
            asym += s_ab != s_ba
            out_of_range += not (0.0 <= s_ab <= 1.0)
    t = parse("x * exp(x) + log(x + x)")
    examples = (genotypic_similarity(t, t),
                genotypic_similarity(parse("x"), parse("sin(x)")),
                genotypic_similarity(parse("x + sin(x)"), parse("x + log(x)")))
    examples_ok = examples == (1.0, 2 / 3, 0.5)

    rng = np.random.default_rng(7)
    sizes = [625, 1250, 2500, 5000, 10000]
    times = []
    for n in sizes:
        pair = (random_tree(n, rng), random_tree(n, rng))
        assert sum(1 for _ in iter_nodes(pair[0])) == n
        times.append(min(timeit.repeat(lambda: bottom_up_map(*pair), number=1, repeat=5)))
    slope = float(np.polyfit(np.log(2 * np.array(sizes)), np.log(times), 1)[0])
    ok = asym == 0 and out_of_range == 0 and examples_ok and slope <= 1.15
    pairs = len(trees) * (len(trees) - 1) // 2
    verdict(3, ok,
            f"{pairs} limit-2 pairs: {asym} asymmetric, {out_of_range} out of range; "
            f"examples {tuple(round(v, 6) for v in examples)} exact {examples_ok}; "
            f"runtime exponent {slope:.3f} (<= 1.15) up to {sizes[-1]}-node trees")
    assert ok


# --------------------------------------------------------------------------
# 4. ANN quality

def test_criterion_4_ann_quality(verdict, atlas):
    pts = atlas.outputs[atlas.valid]
    sample = pts[np.random.default_rng(0).choice(len(pts), 10_000, replace=False)]
    t0 = time.perf_counter()
    approx = approx_knn(sample, 30, trees=16, seed=0)
    seconds = time.perf_counter() - t0
    r = recall(approx, exact_knn(sample, 30))
    ok = r >= 0.80 and seconds <= 60
    verdict(4, ok, f"recall@30 {r:.4f} (>= 0.80) on a 10000-row sample of the limit-"
                   f"{ATLAS_LIMIT} atlas; approximate search {seconds:.1f} s (<= 60 s)")
    assert ok


# --------------------------------------------------------------------------
# 5. clustering

def sklearn_reference(d, min_pts, mcs):
    """sklearn HDBSCAN; the root only counts when nothing below it does."""
    kw = dict(min_samples=min_pts + 1, min_cluster_size=mcs, metric="precomputed")
    labels = HDBSCAN(**kw).fit(d.copy()).labels_
    if np.all(labels == NOISE):
        labels = HDBSCAN(allow_single_cluster=True, **kw).fit(d.copy()).labels_
    return labels


def sklearn_stages(d, min_pts, mcs):
    """sklearn's reachability, MST, linkage and extraction, with tied MST
    edges visited by (min id, max id) instead of an unstable sort."""
    mr = mutual_reachability_graph(d.copy(), min_samples=min_pts + 1)
    mst = mst_from_mutual_reachability(mr)
    a = np.minimum(mst["current_node"], mst["next_node"])
    b = np.maximum(mst["current_node"], mst["next_node"])
    slt = make_single_linkage(mst[np.lexsort((b, a, mst["distance"]))])
    labels, _ = tree_to_labels(slt, mcs, "eom", False, 0.0, None)
    if np.all(labels == NOISE):
        labels, _ = tree_to_labels(slt, mcs, "eom", True, 0.0, None)
    return labels


def test_criterion_5_clustering(verdict, atlas):
    rng = np.random.default_rng(0)
    blobs = np.vstack([rng.normal(0, 1, (100, 2)), rng.normal(8, 1, (100, 2))])
    d = cdist(blobs, blobs)
    two = cluster(d, 10, 25)
    two_ok = (two.cluster_count == 2 and np.array_equal(two.labels, sklearn_reference(d, 10, 25))
              and np.array_equal(two.labels, sklearn_stages(d, 10, 25)))

    rng = np.random.default_rng(1)
    pts = np.vstack([rng.normal(0, 1, (100, 2)), [[40.0, 40.0]]])
    d = cdist(pts, pts)
    one = cluster(d, 10, 5)
    staged = sklearn_stages(d, 10, 5)
    end_to_end = sklearn_reference(d, 10, 5)
    outlier_ok = one.labels[-1] == NOISE and np.array_equal(one.labels, staged)
    e2e_ari = adjusted_rand_score(one.labels, end_to_end)

    rng = np.random.default_rng(9)
    mixed = np.vstack([blobs, rng.normal([0, 8], 1, (60, 2))])
    base = cluster(cdist(mixed, mixed), 10, 25).labels
    aris = []
    for seed in range(5):
        perm = np.random.default_rng(seed).permutation(len(mixed))
        shuffled = cluster(cdist(mixed[perm], mixed[perm]), 10, 25).labels
        aris.append(adjusted_rand_score(base[perm], shuffled))
    perm_ok = all(a == 1.0 for a in aris)

    clusters = int(atlas.labels.max()) + 1
    noise = float(np.mean(atlas.labels == NOISE))
    ok = two_ok and outlier_ok and perm_ok and clusters >= 1000
    verdict(5, ok,
            f"two blobs exact vs sklearn {two_ok}; blob+outlier exact vs reference stages "
            f"{outlier_ok} (outlier label {one.labels[-1]}, end-to-end ARI {e2e_ari:.4f}, "
            f"{one.cluster_count} clusters); permutation ARIs {aris}; limit-{ATLAS_LIMIT} "
            f"atlas {clusters} clusters (>= 1000), noise fraction {noise:.3f}, "
            f"{atlas.timings['cluster']:.0f} s")
    assert ok


# --------------------------------------------------------------------------
# 6. cluster quality ranking

def test_criterion_6_top_cluster_r2(verdict, atlas):
    means = top_cluster_means(atlas.labels, r2_table(atlas.trees, "native"))
    within = {k: abs(means[k] - TARGET_TOP_R2[k]) <= 0.15 for k in TARGET_TOP_R2}
    hard = {k: means[k] >= 0.6 for k in TARGET_TOP_R2}
    ok = all(within.values()) and all(hard.values())
    parts = [f"{k} {means[k]:.3f} vs {TARGET_TOP_R2[k]:.2f}"
             f"{'' if within[k] else ' OUTSIDE +-0.15'}{'' if hard[k] else ' BELOW 0.6'}"
             for k in TARGET_TOP_R2]
    # the atlas-grid variant is reported for reference only
    alt = top_cluster_means(atlas.labels, r2_table(atlas.trees, "atlas", atlas.config.grid))
    verdict(6, ok, "top cluster mean R2 (native domains): " + "; ".join(parts)
            + "; on the atlas grid: " + ", ".join(f"{k} {v:.3f}" for k, v in alt.items()))
    assert ok


# --------------------------------------------------------------------------
# 7. embedding

def test_criterion_7_embedding(verdict, atlas):
    t0 = time.perf_counter()
    first = embed(atlas.graph, seed=0)
    seconds = time.perf_counter() - t0
    second = embed(atlas.graph, seed=0)
    same = np.array_equal(first.coords, second.coords)
    del second
    score, base = embedding_quality(first.coords, atlas.graph, seed=0)
    ok = bool(np.isfinite(first.coords).all()) and score >= 10 * base and same
    verdict(7, ok,
            f"preservation {score:.4f} vs shuffled baseline {base:.6f} "
            f"(ratio {score / base:.0f}, >= 10) on {atlas.graph.n} points; "
            f"rerun with the same seed bit-identical {same}; {seconds:.0f} s per run")
    assert ok


# --------------------------------------------------------------------------
# 8. GP trace

def test_criterion_8_gp_trace(verdict, atlas):
    grid = atlas.config.grid
    target = evaluate_benchmark("keijzer4", grid=grid)
    table = Atlas(atlas.outputs, atlas.degenerate, atlas.labels)
    ranking = rank_clusters(atlas.labels, atlas.outputs, target, atlas.degenerate)
    elitism = True
    first_distinct, last_distinct, first_rank, last_rank, best = [], [], [], [], []
    for seed in range(10):
        trace = trace_run(GpConfig(seed=seed), target, table, ranking, grid, keep_rows=False)
        g = trace.generations
        b = [v.best_r2 for v in g]
        elitism &= all(x <= y for x, y in zip(b, b[1:]))
        first_distinct.append(g[0].distinct_clusters)
        last_distinct.append(g[-1].distinct_clusters)
        first_rank.append(g[0].median_rank)
        last_rank.append(g[-1].median_rank)
        best.append(b[-1])
    d0, d1 = float(np.median(first_distinct)), float(np.median(last_distinct))
    r0, r1 = float(np.median(first_rank)), float(np.median(last_rank))
    ok = elitism and d0 >= 3 * d1 and r1 < r0
    verdict(8, ok,
            f"10 seeds on keijzer4: elitism {elitism}; distinct clusters gen 1 median {d0} "
            f"vs final median {d1} (ratio {d0 / max(d1, 1):.1f}, >= 3); median cluster rank "
            f"gen 1 {r0} vs final {r1}; seeds with lower final rank "
            f"{sum(a < b for a, b in zip(last_rank, first_rank))}/10; "
            f"median best R2 {np.median(best):.3f}")
    assert ok


# --------------------------------------------------------------------------
# 9. oracle equivalences

def test_criterion_9_oracle_equivalences(verdict, request):
    scan = json.loads(run_child("stream_check.py", "7"))

    pts = np.random.default_rng(5).normal(size=(200, 3))
    core_ok = all(np.array_equal(core_distances(cdist(pts, pts), m)[0],
                                 core_distances_bruteforce(pts, m)) for m in (1, 5, 10))

    built = request.getfixturevalue("atlas")
    table = Atlas(built.outputs, built.degenerate, built.labels)
    rng = np.random.default_rng(9)
    # half GP-like random programs, half near copies of atlas rows (near ties)
    progs = [ptc2(25, rng) for _ in range(600)]
    vals, flags = evaluate_many(progs)
    cands = vals[~flags][:500]
    picks = rng.choice(built.valid, 1000 - len(cands), replace=False)
    near = built.outputs[picks] + 1e-6 * rng.normal(size=(len(picks), built.outputs.shape[1]))
    cands = np.vstack([cands, near])
    match = table.nearest(cands)
    mismatches = 0
    for c, eid, sim in zip(cands, match.expression, match.similarity):
        ref_id, ref_sim = brute_force_nearest(table, c)
        mismatches += not (eid == ref_id and sim == ref_sim)
    ok = (scan["nonfinite"] == 0 and scan["rows"] == LIMIT7_CLASSES and core_ok
          and mismatches == 0 and len(cands) == 1000)
    verdict(9, ok,
            f"mapToAtlas {len(cands)} candidates on {len(table)} expressions: "
            f"{mismatches} mismatches; core distances on 200 points exact {core_ok}; "
            f"limit-7 evaluation of {scan['rows']} expressions: {scan['nonfinite']} "
            f"non-finite values ({scan['degenerate']} degenerate, {scan['seconds']:.0f} s)")
    assert ok
