import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaecluster.errors import DataError, DomainError
from gaecluster.graphbuild import (
    NORMALIZED,
    RAW_COSINE,
    SCALED,
    THRESHOLDED,
    WeightedGraph,
    add_self_loops_and_normalize,
    build_cooccurrence_graph,
    cosine_distance,
    load_edge_list,
    save_edge_list,
    scale_mean,
    threshold_median,
)
from gaecluster.ingest import CoocMatrix


def graph(a, stage=RAW_COSINE):
    a = np.asarray(a, dtype=float)
    return WeightedGraph([f"T{i}" for i in range(len(a))], a, stage)


def sym_from_upper(n, values):
    a = np.zeros((n, n))
    a[np.triu_indices(n, 1)] = values
    return a + a.T


def test_cosine_examples():
    assert cosine_distance([1, 0], [0, 1]) == 0
    assert cosine_distance([2, 2], [1, 1]) == pytest.approx(1.0, abs=1e-15)
    assert cosine_distance([1, 1, 0], [1, 0, 1]) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(DomainError):
        cosine_distance([0, 0], [1, 0])


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=3, max_size=3).filter(lambda u: np.linalg.norm(u) > 1e-3),
    st.lists(st.floats(-5, 5), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3),
    st.floats(0.01, 100),
)
def test_cosine_scale_invariant(u, v, alpha):
    assert abs(cosine_distance(np.multiply(alpha, u), v) - cosine_distance(u, v)) < 1e-12


def test_build_cooccurrence_graph():
    m = CoocMatrix(["A", "B", "C", "D"], np.array([[1, 1, 0], [1, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=np.int8))
    g = build_cooccurrence_graph(m)
    assert g.adjacency[0, 1] == pytest.approx(1.0)
    assert g.adjacency[0, 2] == 0
    assert np.all(g.adjacency[3] == 0)
    assert np.all(np.diag(g.adjacency) == 0)
    assert g.edge_count() == 1
    with pytest.raises(DataError):
        build_cooccurrence_graph(CoocMatrix(["A"], np.ones((1, 3), dtype=np.int8)))


def test_build_graph_matches_pairwise_cosine(rng):
    data = (rng.random((7, 30)) < 0.4).astype(np.int8)
    data[3] = 0
    g = build_cooccurrence_graph(CoocMatrix(list("ABCDEFG"), data))
    for i in range(7):
        for j in range(7):
            expected = 0.0 if i == j or not data[i].any() or not data[j].any() else cosine_distance(data[i], data[j])
            assert abs(g.adjacency[i, j] - expected) < 1e-12


def test_threshold_keeps_heaviest_half():
    g = threshold_median(graph(sym_from_upper(4, [1, 2, 3, 4, 5, 6])))
    kept = sorted(g.adjacency[np.triu_indices(4, 1)][g.adjacency[np.triu_indices(4, 1)] > 0])
    assert kept == [4, 5, 6]
    assert g.stage == THRESHOLDED


def test_threshold_all_ties_uses_pair_order():
    g = threshold_median(graph(sym_from_upper(5, np.ones(10))))
    upper = g.adjacency[np.triu_indices(5, 1)]
    assert g.edge_count() == math.ceil(5 * 4 / 4)
    # lexicographically first pairs survive
    assert upper.tolist() == [1.0] * 5 + [0.0] * 5


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.data())
def test_threshold_exact_count(n, data):
    m = n * (n - 1) // 2
    values = data.draw(st.lists(st.sampled_from([0.1, 0.2, 0.5, 1.0]), min_size=m, max_size=m))
    g = threshold_median(graph(sym_from_upper(n, values)))
    assert g.edge_count() == math.ceil(n * (n - 1) / 4)
    assert np.array_equal(g.adjacency, g.adjacency.T)


def test_scale_mean_examples():
    g, mean = scale_mean(graph([[0, 0.5], [0.5, 0]], THRESHOLDED))
    assert g.adjacency[0, 1] == 1.0 and mean == 0.5
    g, _ = scale_mean(graph(sym_from_upper(3, [1, 3, 0]), THRESHOLDED))
    assert sorted(g.adjacency[np.triu_indices(3, 1)].tolist()) == [0.0, 0.5, 1.5]
    assert g.stage == SCALED
    with pytest.raises(DataError):
        scale_mean(graph(np.zeros((3, 3)), THRESHOLDED))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 10), st.data())
def test_scale_mean_property(n, data):
    m = n * (n - 1) // 2
    values = data.draw(st.lists(st.one_of(st.just(0.0), st.floats(1e-3, 10)), min_size=m, max_size=m))
    if not any(values):
        values[0] = 1.0
    g0 = graph(sym_from_upper(n, values), THRESHOLDED)
    g, _ = scale_mean(g0)
    upper = g.adjacency[np.triu_indices(n, 1)]
    assert abs(upper[upper > 0].mean() - 1) < 1e-9
    assert np.array_equal(g.adjacency > 0, g0.adjacency > 0)


def test_normalize_examples():
    assert np.array_equal(add_self_loops_and_normalize(graph(np.zeros((2, 2)), SCALED)).adjacency, np.eye(2))
    out = add_self_loops_and_normalize(graph([[0, 1], [1, 0]], SCALED))
    np.testing.assert_allclose(out.adjacency, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)
    out = add_self_loops_and_normalize(graph([[0, 3], [3, 0]], SCALED))
    np.testing.assert_allclose(out.adjacency, [[0.25, 0.75], [0.75, 0.25]], atol=1e-15)
    assert out.stage == NORMALIZED


def direct_normalization(a):
    """Entry-by-entry a_ij / sqrt(d_i d_j) on A + I."""
    n = len(a)
    at = a + np.eye(n)
    d = [sum(at[i]) for i in range(n)]
    return np.array([[at[i, j] / math.sqrt(d[i] * d[j]) for j in range(n)] for i in range(n)])


def test_normalize_matches_direct_formula(rng):
    for _ in range(10):
        a = sym_from_upper(9, rng.random(36) * (rng.random(36) < 0.5) * 3)
        out = add_self_loops_and_normalize(graph(a, SCALED)).adjacency
        assert np.max(np.abs(out - direct_normalization(a))) < 1e-12


def test_edge_list_round_trip(tmp_path, rng):
    a = sym_from_upper(6, rng.random(15) * (rng.random(15) < 0.6))
    g = WeightedGraph(list("ABCDEF"), a, SCALED)
    save_edge_list(g, tmp_path / "e.csv")
    again = load_edge_list(tmp_path / "e.csv", list("ABCDEF"))
    assert np.array_equal(again.adjacency, a)
