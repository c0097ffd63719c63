import itertools

import numpy as np

from modseg.graph import modularity_hard, one_hot
from modseg.loss import (
    collapse_regularizer,
    collapse_regularizer_grad,
    loss_grad,
    loss_value,
    negative_modularity_grad,
)
from modseg.nn import make_rng
from modseg.synth import random_simple_graph
from tests.test_graph import graph_from_adjacency, two_triangles


def random_row_stochastic(rng, n, k):
    c = rng.uniform(size=(n, k))
    return c / c.sum(axis=1, keepdims=True)


def cycle_graph(n):
    adj = np.zeros((n, n))
    for i in range(n):
        adj[i, (i + 1) % n] = adj[(i + 1) % n, i] = 1.0
    return graph_from_adjacency(adj)


class TestLossValue:
    def test_two_triangles_perfect_split(self):
        # Hand algebra: Q = 0.5, column sums (3,3) give a regularizer of 0.
        g = two_triangles()
        c = one_hot(np.array([0, 0, 0, 1, 1, 1]), 2)
        assert abs(loss_value(g, c) - (-0.5)) < 1e-12

    def test_uniform_assignment_regularizer_zero(self):
        for n, k in [(10, 2), (30, 3), (7, 5)]:
            c = np.full((n, k), 1.0 / k)
            assert abs(collapse_regularizer(c)) < 1e-12

    def test_single_cluster_regularizer_maximum(self):
        c = np.zeros((12, 2))
        c[:, 0] = 1.0
        assert abs(collapse_regularizer(c) - (np.sqrt(2) - 1.0)) < 1e-12

    def test_regularizer_range_on_random_assignments(self):
        rng = make_rng(0)
        for _ in range(50):
            n, k = int(rng.integers(2, 20)), int(rng.integers(2, 5))
            r = collapse_regularizer(random_row_stochastic(rng, n, k))
            assert -1e-12 <= r <= np.sqrt(k) - 1.0 + 1e-12

    def test_trace_term_range_on_random_assignments(self):
        rng = make_rng(1)
        for seed in range(30):
            g = random_simple_graph(seed)
            c = random_row_stochastic(rng, g.n, 2)
            q = loss_value(g, c) - collapse_regularizer(c)
            assert -1.0 - 1e-12 <= -q <= 1.0 + 1e-12

    def test_column_permutation_invariance(self):
        rng = make_rng(2)
        g = random_simple_graph(7)
        c = random_row_stochastic(rng, g.n, 3)
        base = loss_value(g, c)
        for perm in itertools.permutations(range(3)):
            assert abs(loss_value(g, c[:, perm]) - base) < 1e-12

    def test_one_hot_minimizer_matches_max_modularity(self):
        # Among equal-size-split candidates the regularizer is constant,
        # so argmin loss must be argmax modularity.
        for seed in (3, 8, 13):
            g = random_simple_graph(seed, max_nodes=8)
            by_sizes = {}
            for bits in itertools.product((0, 1), repeat=g.n):
                labels = np.array(bits)
                sizes = tuple(sorted([int(labels.sum()), g.n - int(labels.sum())]))
                c = one_hot(labels, 2)
                entry = (loss_value(g, c), modularity_hard(g, labels))
                by_sizes.setdefault(sizes, []).append(entry)
            for entries in by_sizes.values():
                best_loss = min(e[0] for e in entries)
                best_q = max(e[1] for e in entries)
                for lv, q in entries:
                    if abs(lv - best_loss) < 1e-12:
                        assert abs(q - best_q) < 1e-12


class TestLossGrad:
    def test_uniform_on_cycle_rows_identical(self):
        g = cycle_graph(8)
        c = np.full((8, 2), 0.5)
        grad = loss_grad(g, c)
        assert np.abs(grad - grad[0]).max() < 1e-13

    def test_matches_central_differences(self):
        rng = make_rng(4)
        g = random_simple_graph(5, max_nodes=10)
        n = g.n
        c = random_row_stochastic(rng, n, 3)
        analytic = loss_grad(g, c)
        h = 1e-6
        for i in range(n):
            for j in range(3):
                up = c.copy()
                up[i, j] += h
                down = c.copy()
                down[i, j] -= h
                numeric = (loss_value(g, up) - loss_value(g, down)) / (2 * h)
                assert abs(analytic[i, j] - numeric) < 1e-7

    def test_trace_gradient_bilinearity(self):
        rng = make_rng(5)
        g = random_simple_graph(6, max_nodes=10)
        c = random_row_stochastic(rng, g.n, 2)
        g1 = negative_modularity_grad(g, c)
        g2 = negative_modularity_grad(g, 2.0 * c)
        assert np.abs(g2 - 2.0 * g1).max() < 1e-12

    def test_regularizer_grad_zero_at_origin(self):
        assert np.array_equal(
            collapse_regularizer_grad(np.zeros((4, 2))), np.zeros((4, 2))
        )
