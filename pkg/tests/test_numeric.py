import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nara.numeric import (
    AdamState,
    DenseLayer,
    GaussianHead,
    adam_step,
    finite_difference_gradient,
    gaussian_log_density,
    gaussian_log_density_grad,
    max_relative_error,
)

from conftest import make_rng


class TestGaussianLogDensity:
    def test_standard_normal_at_mode(self):
        assert gaussian_log_density(0.0, GaussianHead(0.0, 0.0)) == pytest.approx(-0.9189385, abs=1e-7)

    def test_unit_offset(self):
        assert gaussian_log_density(1.0, GaussianHead(0.0, 0.0)) == pytest.approx(-1.4189385, abs=1e-7)

    def test_wider_head(self):
        assert gaussian_log_density(3.0, GaussianHead(1.0, math.log(4.0))) == pytest.approx(
            -2.1120857, abs=1e-7
        )

    def test_non_finite_input_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            gaussian_log_density(float("nan"), GaussianHead(0.0, 0.0))
        with pytest.raises(ValueError, match="non-finite"):
            gaussian_log_density(0.0, GaussianHead(float("inf"), 0.0))

    @given(st.floats(-5, 5), st.floats(-3, 3), st.floats(-4, 4))
    @settings(max_examples=60, deadline=None)
    def test_finite_on_finite_inputs(self, x, mu, lam):
        head = GaussianHead.from_raw(mu, lam)
        assert math.isfinite(gaussian_log_density(x, head))

    @pytest.mark.parametrize("mu,lam", [(0.0, 0.0), (1.5, math.log(0.25)), (-2.0, 1.0)])
    def test_density_integrates_to_one(self, mu, lam):
        head = GaussianHead(mu, lam)
        sd = math.exp(0.5 * lam)
        xs = np.linspace(mu - 8 * sd, mu + 8 * sd, 20001)
        pdf = np.exp([gaussian_log_density(float(x), head) for x in xs])
        mass = np.trapezoid(pdf, xs)
        assert 0.999 <= mass <= 1.001

    def test_grad_matches_finite_differences(self):
        rng = make_rng(11)
        for _ in range(10):
            x, mu, lam = (float(v) for v in rng.normal(size=3))
            head = GaussianHead.from_raw(mu, lam)
            dx, dmu, dlam = gaussian_log_density_grad(x, head)
            params = {"x": np.array(x), "mu": np.array(mu), "lam": np.array(lam)}
            fd = finite_difference_gradient(
                lambda p: gaussian_log_density(
                    float(p["x"]), GaussianHead.from_raw(float(p["mu"]), float(p["lam"]))
                ),
                params,
            )
            analytic = {"x": np.array(dx), "mu": np.array(dmu), "lam": np.array(dlam)}
            assert max_relative_error(analytic, fd) < 1e-4

    def test_log_var_clamped(self):
        head = GaussianHead.from_raw(0.0, 99.0)
        assert head.log_var == 10.0
        head = GaussianHead.from_raw(0.0, -99.0)
        assert head.log_var == -10.0


class TestDenseLayer:
    def test_forward_is_affine(self, rng):
        layer = DenseLayer.init(3, 2, rng)
        x = rng.normal(size=3)
        np.testing.assert_allclose(layer.forward(x), layer.weight @ x + layer.bias, rtol=0, atol=0)

    def test_squared_loss_gradient_is_outer_product(self, rng):
        layer = DenseLayer.init(4, 3, rng)
        x = rng.normal(size=4)
        y = layer.forward(x)
        err = y - np.zeros(3)
        dw, db, _ = layer.backward(x, 2.0 * err)
        np.testing.assert_allclose(dw, 2.0 * np.outer(err, x), rtol=1e-12, atol=0)
        np.testing.assert_allclose(db, 2.0 * err, rtol=1e-12, atol=0)

    def test_zero_loss_zero_gradient(self, rng):
        layer = DenseLayer.init(4, 3, rng)
        x = rng.normal(size=4)
        dw, db, dx = layer.backward(x, np.zeros(3))
        assert not dw.any() and not db.any() and not dx.any()

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            DenseLayer(weight=np.zeros((2, 3)), bias=np.zeros(3))


class TestFiniteDifference:
    def test_quadratic(self):
        params = {"p": np.array(3.0)}
        fd = finite_difference_gradient(lambda p: float(p["p"] ** 2), params)
        assert abs(fd["p"].item() - 6.0) < 1e-6

    def test_constant_function(self):
        params = {"p": np.arange(4.0)}
        fd = finite_difference_gradient(lambda p: 7.5, params)
        assert not fd["p"].any()

    def test_restores_parameters(self):
        params = {"p": np.array([1.0, 2.0])}
        before = params["p"].copy()
        finite_difference_gradient(lambda p: float(np.sum(p["p"] ** 2)), params)
        np.testing.assert_array_equal(params["p"], before)


def scalar_adam_oracle(grad_fn, p0, steps, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Independent plain-float Adam recursion."""
    p, m, v = p0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = grad_fn(p)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        p -= lr * (m / (1 - beta1**t)) / (math.sqrt(v / (1 - beta2**t)) + eps)
    return p


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        params = {"p": np.array([1.0, -2.0])}
        state = AdamState(lr=0.1)
        adam_step(state, params, {"p": np.zeros(2)})
        np.testing.assert_array_equal(params["p"], [1.0, -2.0])
        assert state.t == 1

    def test_first_step_magnitude_is_lr(self):
        params = {"p": np.array([0.0])}
        state = AdamState(lr=0.05)
        adam_step(state, params, {"p": np.array([3.7])})
        assert abs(abs(params["p"].item()) - 0.05) < 1e-6

    def test_hundred_steps_reach_quadratic_minimum(self):
        lr, steps = 0.1, 100
        expected = scalar_adam_oracle(lambda p: 2.0 * (p - 2.0), 0.0, steps, lr)
        assert abs(expected - 2.0) < 0.2  # the oracle itself lands near the minimum

        params = {"p": np.array(0.0)}
        state = AdamState(lr=lr)
        for _ in range(steps):
            adam_step(state, params, {"p": np.asarray(2.0 * (params["p"] - 2.0))})
        assert abs(params["p"].item() - 2.0) < 0.2
        assert params["p"].item() == pytest.approx(expected, abs=1e-12)

    def test_nan_gradient_raises_diverged(self):
        params = {"p": np.array([0.0])}
        with pytest.raises(FloatingPointError, match="diverged"):
            adam_step(AdamState(), params, {"p": np.array([float("nan")])})

    def test_moments_decay_under_zero_gradient(self):
        params = {"p": np.array([1.0])}
        state = AdamState(lr=0.1)
        adam_step(state, params, {"p": np.array([1.0])})
        v_before = state.v["p"].item()
        adam_step(state, params, {"p": np.array([0.0])})
        assert state.v["p"].item() < v_before
