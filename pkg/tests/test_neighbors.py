import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import knn_bruteforce
from symatlas.neighbors import (approx_knn, build_rp_tree, exact_knn, normalize_rows, recall,
                                symmetrized_edges)


@pytest.fixture(scope="module")
def gauss():
    return np.random.default_rng(3).normal(size=(1000, 12))


def test_exact_matches_bruteforce(gauss):
    g = exact_knn(gauss, 10)
    assert np.array_equal(g.indices, knn_bruteforce(gauss, 10))
    unit = normalize_rows(gauss)
    for i in range(0, 1000, 97):
        assert np.allclose(g.sims[i], unit[g.indices[i]] @ unit[i])


def test_graph_invariants(gauss):
    for g in (exact_knn(gauss, 15), approx_knn(gauss, 15, trees=4)):
        assert g.indices.shape == (1000, 15)
        assert not np.any(g.indices == np.arange(1000)[:, None])
        assert np.all(np.diff(g.sims, axis=1) <= 0)
        assert np.all((g.sims >= -1) & (g.sims <= 1))
        assert all(len(set(row)) == 15 for row in g.indices)


def test_single_big_leaf_is_exact(gauss):
    a = approx_knn(gauss, 10, trees=1, leaf_capacity=2000, refine=0)
    assert np.array_equal(a.indices, exact_knn(gauss, 10).indices)
    assert recall(a, exact_knn(gauss, 10)) == 1.0


def test_small_n_gives_n_minus_one():
    pts = np.random.default_rng(0).normal(size=(5, 3))
    assert exact_knn(pts, 30).k == 4
    assert approx_knn(pts, 30).k == 4
    with pytest.raises(ValueError):
        exact_knn(pts[:1], 3)


def test_duplicates_are_neighbours():
    rng = np.random.default_rng(1)
    base = rng.normal(size=(50, 6))
    pts = np.vstack([base, base])
    g = exact_knn(pts, 1)
    assert np.array_equal(g.indices[:, 0] % 50, np.arange(100) % 50)
    assert np.allclose(g.sims[:, 0], 1.0)
    a = approx_knn(pts, 1, trees=8)
    assert recall(a, g) == 1.0


def test_zero_vector_rejected():
    pts = np.zeros((3, 4))
    pts[0, 0] = 1
    with pytest.raises(ValueError):
        exact_knn(pts, 1)


def test_rp_tree_partition(gauss):
    tree = build_rp_tree(normalize_rows(gauss), 32, np.random.default_rng(0))
    ids = np.concatenate(tree.leaves)
    assert sorted(ids) == list(range(1000))
    assert max(len(leaf) for leaf in tree.leaves) <= 32


def test_recall_on_atlas_sample(limit5_outputs):
    values, flags = limit5_outputs
    pts = values[~flags]
    idx = np.random.default_rng(0).choice(len(pts), 10_000, replace=False)
    sample = pts[idx]
    r = recall(approx_knn(sample, 30, trees=16, seed=0), exact_knn(sample, 30))
    assert r >= 0.80


def test_recall_monotone_in_trees(gauss):
    exact = exact_knn(gauss, 10)
    for seed in range(3):
        rs = [recall(approx_knn(gauss, 10, trees=t, leaf_capacity=32, refine=0, seed=seed),
                     exact) for t in (1, 2, 4, 8)]
        assert all(a <= b for a, b in zip(rs, rs[1:])), rs
    means = [np.mean([recall(approx_knn(gauss, 10, trees=t, leaf_capacity=32, seed=s), exact)
                      for s in range(3)]) for t in (1, 2, 4, 8)]
    assert all(a <= b + 1e-9 for a, b in zip(means, means[1:])), means


def test_deterministic_under_seed(gauss):
    a = approx_knn(gauss, 10, trees=3, seed=5)
    b = approx_knn(gauss, 10, trees=3, seed=5)
    assert np.array_equal(a.indices, b.indices) and np.array_equal(a.sims, b.sims)


def test_symmetrized_edges():
    pts = np.random.default_rng(2).normal(size=(40, 5))
    g = exact_knn(pts, 5)
    i, j, s = symmetrized_edges(g)
    assert np.all(i < j)
    assert len(set(zip(i, j))) == len(i)
    directed = {(min(a, b), max(a, b)) for a, row in enumerate(g.indices) for b in row}
    assert directed == set(zip(i.tolist(), j.tolist()))


@settings(max_examples=30, deadline=None)
@given(st.integers(10, 80), st.integers(1, 8), st.integers(0, 1000))
def test_exact_against_oracle_property(n, k, seed):
    pts = np.random.default_rng(seed).normal(size=(n, 4))
    assert np.array_equal(exact_knn(pts, k).indices, knn_bruteforce(pts, min(k, n - 1)))
