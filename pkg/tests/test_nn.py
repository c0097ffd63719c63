import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modseg import nn
from modseg.errors import ShapeMismatch

SELU_ASYMPTOTE = -1.7580993408473766  # -lambda * alpha


class TestActivations:
    def test_fixed_points(self):
        assert nn.activation("silu", 0.0) == 0.0
        assert nn.activation("relu", -3.0) == 0.0
        assert nn.activation("gelu", 0.0) == 0.0
        assert nn.activation("selu", 0.0) == 0.0

    def test_silu_at_one(self):
        # Oracle: x * (1 + exp(-x))^-1 evaluated directly.
        assert abs(nn.activation("silu", 1.0) - 0.7310585786300049) < 1e-15

    def test_selu_negative_asymptote(self):
        assert abs(nn.activation("selu", -40.0) - SELU_ASYMPTOTE) < 1e-12

    def test_elementwise_over_matrices(self):
        x = np.array([[-1.0, 0.0], [2.0, -3.0]])
        out = nn.activation("relu", x)
        assert np.array_equal(out, [[0.0, 0.0], [2.0, 0.0]])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            nn.activation("tanh", 0.0)


class TestActivationGrads:
    def test_relu_grad(self):
        assert nn.activation_grad("relu", 2.0) == 1.0
        assert nn.activation_grad("relu", -2.0) == 0.0

    def test_silu_grad_at_zero(self):
        assert abs(nn.activation_grad("silu", 0.0) - 0.5) < 1e-15

    @pytest.mark.parametrize("kind", nn.ACTIVATIONS)
    def test_matches_central_differences(self, kind):
        rng = nn.make_rng(11)
        xs = rng.uniform(-4.0, 4.0, size=100)
        # Keep clear of the ReLU/SELU kink where central differences lie.
        xs = xs[np.abs(xs) > 1e-3]
        h = 1e-6
        numeric = (nn.activation(kind, xs + h) - nn.activation(kind, xs - h)) / (2 * h)
        analytic = nn.activation_grad(kind, xs)
        assert np.abs(numeric - analytic).max() < 1e-6


class TestGlorot:
    def test_bound(self):
        w = nn.glorot_uniform(384, 64, seed=0)
        limit = 0.11572751247156893  # sqrt(6/448)
        assert w.shape == (384, 64)
        assert np.abs(w).max() <= limit

    def test_deterministic(self):
        a = nn.glorot_uniform(20, 30, seed=42)
        b = nn.glorot_uniform(20, 30, seed=42)
        assert np.array_equal(a, b)
        c = nn.glorot_uniform(20, 30, seed=43)
        assert not np.array_equal(a, c)

    def test_mean_within_three_sigma(self):
        w = nn.glorot_uniform(1000, 100, seed=7)
        limit = np.sqrt(6.0 / 1100)
        sigma_mean = (limit / np.sqrt(3.0)) / np.sqrt(w.size)
        assert abs(w.mean()) < 3 * sigma_mean

    def test_invalid_shape(self):
        with pytest.raises(ValueError):
            nn.glorot_uniform(0, 5, seed=0)


class TestSoftmax:
    def test_symmetric_row(self):
        out = nn.softmax_rows(np.array([[0.0, 0.0]]))
        assert np.allclose(out, [[0.5, 0.5]], atol=1e-15)

    def test_large_values_no_overflow(self):
        out = nn.softmax_rows(np.array([[1000.0, 1000.0]]))
        assert np.allclose(out, [[0.5, 0.5]], atol=1e-15)

    def test_one_two(self):
        out = nn.softmax_rows(np.array([[1.0, 2.0]]))
        assert abs(out[0, 0] - 0.2689414213699951) < 1e-15
        assert abs(out[0, 1] - 0.7310585786300049) < 1e-15

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=6), st.floats(-100, 100))
    @settings(max_examples=60, deadline=None)
    def test_rows_sum_to_one_and_shift_invariant(self, row, shift):
        m = np.array([row])
        out = nn.softmax_rows(m)
        assert abs(out.sum() - 1.0) < 1e-12
        shifted = nn.softmax_rows(m + shift)
        assert np.abs(out - shifted).max() < 1e-12


class TestAdam:
    def test_zero_grad_zero_decay_is_identity(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}
        state = nn.AdamState(lr=1e-3)
        out = nn.adam_step(params, {"w": np.zeros(3)}, state)
        assert np.array_equal(out["w"], params["w"])
        assert state.step_count == 1

    def test_first_step_magnitude(self):
        # Bias correction makes the first update lr * g/(|g| + eps') per element.
        g = np.array([0.3, -2.0, 7.0])
        params = {"w": np.zeros(3)}
        state = nn.AdamState(lr=1e-3)
        out = nn.adam_step(params, {"w": g}, state)
        expected = -1e-3 * g / (np.abs(g) + state.epsilon)
        assert np.abs(out["w"] - expected).max() < 1e-15

    def test_quadratic_bowl_norm_decreases(self):
        rng = nn.make_rng(9)
        p = {"w": rng.uniform(0.5, 1.5, size=8) * rng.choice([-1.0, 1.0], size=8)}
        state = nn.AdamState(lr=1e-3)
        norms = [np.linalg.norm(p["w"])]
        for _ in range(500):
            p = nn.adam_step(p, {"w": 2.0 * p["w"]}, state)
            norms.append(np.linalg.norm(p["w"]))
        assert all(b < a for a, b in zip(norms, norms[1:]))

    def test_weight_decay_is_decoupled(self):
        params = {"w": np.array([2.0])}
        state = nn.AdamState(lr=0.1, weight_decay=0.5)
        out = nn.adam_step(params, {"w": np.zeros(1)}, state)
        # Zero gradient: only the decay term acts, p * (1 - lr*wd).
        assert abs(out["w"][0] - 2.0 * (1 - 0.1 * 0.5)) < 1e-15

    def test_lr_decay_schedule(self):
        params = {"w": np.array([0.0])}
        state = nn.AdamState(lr=1.0, lr_decay=1.0)
        g = {"w": np.array([1.0])}
        out = nn.adam_step(params, g, state)
        first = abs(out["w"][0])
        out2 = nn.adam_step(params, g, state)
        second = abs(out2["w"][0])
        assert second < first  # lr halved at step 2

    def test_shape_mismatch(self):
        state = nn.AdamState()
        with pytest.raises(ShapeMismatch):
            nn.adam_step({"w": np.zeros(3)}, {"w": np.zeros(4)}, state)
        with pytest.raises(ShapeMismatch):
            nn.adam_step({"w": np.zeros(3)}, {"bad": np.zeros(3)}, state)


class TestFiniteDifferenceCheck:
    @staticmethod
    def quadratic_loss(params):
        value = float(sum((p**2).sum() for p in params.values()))
        grads = {k: 2.0 * p for k, p in params.items()}
        return value, grads

    def test_quadratic_is_tight(self):
        rng = nn.make_rng(3)
        params = {"a": rng.normal(size=(4, 3)), "b": rng.normal(size=5)}
        report = nn.finite_difference_check(self.quadratic_loss, params, tol=1e-9)
        assert report.passed
        assert report.max_rel_err < 1e-9
        assert report.num_checked == 17

    def test_corrupted_gradient_detected(self):
        def corrupted(params):
            value, grads = self.quadratic_loss(params)
            return value, {k: 1.01 * g for k, g in grads.items()}

        rng = nn.make_rng(4)
        params = {"a": rng.normal(size=(3, 3))}
        report = nn.finite_difference_check(corrupted, params, tol=1e-5)
        assert not report.passed

    def test_subsampling_above_limit(self):
        rng = nn.make_rng(5)
        params = {"a": rng.normal(size=(40, 30))}
        # Roundoff floor scales with |loss| (~1200 here), so tol is looser.
        report = nn.finite_difference_check(
            self.quadratic_loss, params, tol=1e-5, max_coords=100
        )
        assert report.num_checked == 100
        assert report.passed

    def test_h_out_of_range(self):
        with pytest.raises(ValueError):
            nn.finite_difference_check(self.quadratic_loss, {"a": np.ones(2)}, h=1e-2)


def test_make_rng_streams_differ():
    a = nn.make_rng(0, stream=0).uniform(size=4)
    b = nn.make_rng(0, stream=1).uniform(size=4)
    c = nn.make_rng(0, stream=0).uniform(size=4)
    assert np.array_equal(a, c)
    assert not np.array_equal(a, b)
