import itertools

import numpy as np
import pytest

from modseg.errors import EmptyGraph, ZeroFeatureRow
from modseg.graph import (
    PatchFeatureGrid,
    PatchGraph,
    build_adjacency,
    modularity_hard,
    modularity_quadratic,
    normalize_features,
    normalized_adjacency,
    one_hot,
)
from modseg.nn import make_rng
from modseg.synth import random_simple_graph


def grid_from(data, patch_size=8):
    data = np.asarray(data, dtype=np.float64)
    n, dim = data.shape
    return PatchFeatureGrid(
        grid_h=n, grid_w=1, dim=dim, data=data,
        source_image_w=patch_size, source_image_h=n * patch_size,
        patch_size=patch_size,
    )


def graph_from_adjacency(adj):
    adj = np.asarray(adj, dtype=np.float64)
    return PatchGraph(
        n=adj.shape[0],
        adjacency=adj,
        degrees=adj.sum(axis=1).astype(np.int64),
        edge_count=float(adj.sum()) / 2.0,
    )


def two_triangles():
    adj = np.zeros((6, 6))
    for a, b in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]:
        adj[a, b] = adj[b, a] = 1.0
    return graph_from_adjacency(adj)


class TestNormalizeFeatures:
    def test_three_four_five(self):
        out = normalize_features(grid_from([[3.0, 4.0]]))
        assert np.allclose(out.data, [[0.6, 0.8]], atol=1e-15)

    def test_idempotent_on_unit_rows(self):
        rng = make_rng(0)
        data = rng.normal(size=(10, 5))
        once = normalize_features(grid_from(data))
        twice = normalize_features(once)
        assert np.allclose(once.data, twice.data, atol=1e-12)

    def test_random_rows_become_unit(self):
        rng = make_rng(1)
        out = normalize_features(grid_from(rng.normal(size=(4, 384))))
        norms = np.linalg.norm(out.data, axis=1)
        assert np.abs(norms - 1.0).max() < 1e-9

    def test_zero_row_rejected(self):
        data = np.ones((3, 4))
        data[1] = 0.0
        with pytest.raises(ZeroFeatureRow) as exc:
            normalize_features(grid_from(data))
        assert exc.value.row_index == 1


class TestBuildAdjacency:
    def test_orthogonal_groups(self):
        f = grid_from([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        g = build_adjacency(f, tau=0.5)
        assert np.array_equal(g.adjacency, [[0, 1, 0], [1, 0, 0], [0, 0, 0]])
        assert np.array_equal(g.degrees, [1, 1, 0])
        assert g.edge_count == 1.0

    def test_threshold_above_max_similarity_is_empty(self):
        f = grid_from([[1.0, 0.0], [0.8, 0.6], [0.0, 1.0]])
        with pytest.raises(EmptyGraph):
            build_adjacency(f, tau=0.99)

    def test_strict_inequality_excludes_ties(self):
        # Similarity exactly 0.5 must not create an edge.
        c, s = 0.5, np.sqrt(3) / 2
        f = grid_from([[1.0, 0.0], [c, s]])
        sim = float(f.data[0] @ f.data[1])
        assert sim == 0.5
        with pytest.raises(EmptyGraph):
            build_adjacency(f, tau=0.5)

    def test_against_double_loop_oracle(self):
        rng = make_rng(2)
        data = rng.normal(size=(784, 8))
        f = normalize_features(grid_from(data))
        g = build_adjacency(f, tau=0.5)
        n = f.n
        expected = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i != j and float(np.dot(f.data[i], f.data[j])) > 0.5:
                    expected[i, j] = 1.0
        assert np.array_equal(g.adjacency, expected)

    def test_symmetry_zero_diagonal_degree_sum(self):
        rng = make_rng(3)
        f = normalize_features(grid_from(rng.normal(size=(50, 6))))
        g = build_adjacency(f, tau=0.3)
        assert np.array_equal(g.adjacency, g.adjacency.T)
        assert np.all(np.diag(g.adjacency) == 0)
        assert g.degrees.sum() == 2 * g.edge_count

    def test_keep_self_loops_mode(self):
        f = grid_from([[1.0, 0.0], [1.0, 0.0]])
        g = build_adjacency(f, tau=0.5, keep_self_loops=True)
        assert np.array_equal(g.adjacency, [[1, 1], [1, 1]])
        assert g.edge_count == 2.0


class TestNormalizedAdjacency:
    def test_two_connected_nodes(self):
        g = graph_from_adjacency([[0, 1], [1, 0]])
        assert np.allclose(normalized_adjacency(g), [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)

    def test_isolated_node_keeps_self_loop(self):
        g = graph_from_adjacency([[0, 1, 0], [1, 0, 0], [0, 0, 0]])
        a_hat = normalized_adjacency(g)
        assert np.allclose(a_hat[2], [0, 0, 1], atol=1e-15)

    def test_path_matches_elementwise_formula(self):
        adj = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
        g = graph_from_adjacency(adj)
        a_hat = normalized_adjacency(g)
        with_loops = adj + np.eye(3)
        d = with_loops.sum(axis=1)
        for i in range(3):
            for j in range(3):
                expect = with_loops[i, j] / np.sqrt(d[i] * d[j])
                assert abs(a_hat[i, j] - expect) < 1e-15

    def test_symmetric_entries_bounded_spectral_radius(self):
        for seed in range(5):
            g = random_simple_graph(seed)
            a_hat = normalized_adjacency(g)
            assert np.allclose(a_hat, a_hat.T, atol=1e-15)
            assert a_hat.min() >= 0.0 and a_hat.max() <= 1.0
            eigs = np.linalg.eigvalsh(a_hat)
            assert np.abs(eigs).max() <= 1.0 + 1e-12


class TestModularity:
    def test_two_triangles_split(self):
        g = two_triangles()
        labels = np.array([0, 0, 0, 1, 1, 1])
        assert abs(modularity_hard(g, labels) - 0.5) < 1e-12
        assert abs(modularity_quadratic(g, one_hot(labels, 2)) - 0.5) < 1e-12

    def test_single_cluster_is_exactly_zero(self):
        for seed in range(10):
            g = random_simple_graph(seed)
            assert modularity_hard(g, np.zeros(g.n, dtype=int)) == 0.0
            assert modularity_quadratic(g, np.ones((g.n, 1))) == 0.0

    def test_path_cross_check(self):
        g = graph_from_adjacency([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
        labels = np.array([0, 0, 1])
        q_hard = modularity_hard(g, labels)
        q_quad = modularity_quadratic(g, one_hot(labels, 2))
        assert abs(q_hard - q_quad) < 1e-12
        # Direct evaluation: 2m=4, within-pairs (0,1) twice minus null model.
        d = np.array([1.0, 2.0, 1.0])
        expect = 0.0
        adj = g.adjacency
        for i in range(3):
            for j in range(3):
                if labels[i] == labels[j]:
                    expect += adj[i, j] - d[i] * d[j] / 4.0
        assert abs(q_hard - expect / 4.0) < 1e-15

    def test_random_hard_labelings_match(self):
        rng = make_rng(4)
        for seed in range(20):
            g = random_simple_graph(seed, max_nodes=10)
            labels = rng.integers(0, 3, size=g.n)
            q_hard = modularity_hard(g, labels)
            q_quad = modularity_quadratic(g, one_hot(labels, 3))
            assert abs(q_hard - q_quad) < 1e-12

    def test_exhaustive_equivalence_small_n(self):
        for seed in range(25):
            g = random_simple_graph(seed, max_nodes=6)
            for bits in itertools.product((0, 1), repeat=g.n):
                labels = np.array(bits)
                assert (
                    abs(modularity_hard(g, labels)
                        - modularity_quadratic(g, one_hot(labels, 2)))
                    < 1e-12
                )

    def test_column_permutation_invariance(self):
        rng = make_rng(5)
        g = random_simple_graph(3, max_nodes=10)
        c = rng.uniform(size=(g.n, 4))
        c /= c.sum(axis=1, keepdims=True)
        base = modularity_quadratic(g, c)
        for perm in itertools.permutations(range(4)):
            assert abs(modularity_quadratic(g, c[:, perm]) - base) < 1e-12
