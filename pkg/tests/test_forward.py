import math

import numpy as np
import pytest

from anodiff.forward import q_sample, q_sample_batch, q_step
from anodiff.schedule import linear_beta_schedule


def test_q_sample_zero_noise(sched_t2, rng):
    x0 = rng.random((2, 3, 3))
    out = q_sample(x0, 2, np.zeros_like(x0), sched_t2)
    np.testing.assert_allclose(out, math.sqrt(0.72) * x0, rtol=1e-15)


def test_q_sample_pixel_example(sched_t2):
    x0 = np.ones((1, 1, 1))
    eps = np.ones((1, 1, 1))
    out = q_sample(x0, 2, eps, sched_t2)
    # sqrt(0.72) + sqrt(0.28) = 0.848528 + 0.529150
    assert abs(out[0, 0, 0] - 1.377679) < 1e-6
    direct = math.sqrt(0.72) * 1.0 + math.sqrt(1 - 0.72) * 1.0
    assert abs(out[0, 0, 0] - direct) < 1e-15


def test_q_sample_terminal_noise_dominates(default_sched, rng):
    x0 = rng.random((1, 8, 8))
    eps = rng.standard_normal((1, 8, 8))
    out = q_sample(x0, 1000, eps, default_sched)
    ab_T = default_sched.alpha_bar[1000]
    assert math.sqrt(ab_T) * np.linalg.norm(x0) <= 1e-2 * np.linalg.norm(x0)
    resid = np.linalg.norm(out - eps)
    assert resid <= 1e-2 * (np.linalg.norm(x0) + np.linalg.norm(eps))


def test_q_step_zero_noise(rng):
    s = linear_beta_schedule(1, 0.19, 0.19)
    x = rng.random((1, 4, 4))
    out = q_step(x, 1, np.zeros_like(x), s)
    np.testing.assert_allclose(out, math.sqrt(0.81) * x, rtol=1e-15)


def test_q_step_pixel_example():
    s = linear_beta_schedule(1, 0.19, 0.19)
    out = q_step(np.ones((1, 1, 1)), 1, np.ones((1, 1, 1)), s)
    assert abs(out[0, 0, 0] - 1.335890) < 1e-6


def test_shape_mismatch_rejected(sched_t2):
    with pytest.raises(ValueError):
        q_sample(np.zeros((1, 2, 2)), 1, np.zeros((1, 2, 3)), sched_t2)
    with pytest.raises(ValueError):
        q_step(np.zeros((1, 2, 2)), 1, np.zeros((2, 2, 2)), sched_t2)


def test_timestep_bounds(sched_t2):
    x = np.zeros((1, 2, 2))
    for t in (0, 3):
        with pytest.raises(ValueError):
            q_sample(x, t, x, sched_t2)
        with pytest.raises(ValueError):
            q_step(x, t, x, sched_t2)


@pytest.mark.parametrize("a", [0.5, 2.0, 4.0])
def test_q_sample_linearity_exact_for_pow2_scales(sched_t2, rng, a):
    # scaling by a power of two commutes with rounding, so this is exact
    x0 = rng.standard_normal((1, 4, 4))
    eps = rng.standard_normal((1, 4, 4))
    lhs = q_sample(a * x0, 2, a * eps, sched_t2)
    rhs = a * q_sample(x0, 2, eps, sched_t2)
    assert np.array_equal(lhs, rhs)


def test_q_sample_batch_matches_per_image(sched_t2, rng):
    x0 = rng.random((5, 12))
    eps = rng.standard_normal((5, 12))
    t = np.array([1, 2, 1, 2, 2])
    batch = q_sample_batch(x0, t, eps, sched_t2)
    for i in range(5):
        single = q_sample(x0[i].reshape(1, 3, 4), int(t[i]),
                          eps[i].reshape(1, 3, 4), sched_t2)
        np.testing.assert_allclose(batch[i], single.ravel(), rtol=1e-15)


def test_recursion_matches_closed_form_moments(rng):
    """N chains of the stepwise recursion match the closed-form mean and
    per-pixel variance within 5 standard errors (distributional, not pathwise)."""
    sched = linear_beta_schedule(40, 1e-3, 0.05)
    n = 10_000
    x0 = rng.random((1, 2, 2))
    # one chain sweep over N stacked trajectories, checked at three levels
    stack = np.broadcast_to(x0[0], (n, 2, 2)).copy()
    checkpoints = {1, 20, 40}
    for t in range(1, 41):
        stack = q_step(stack, t, rng.standard_normal((n, 2, 2)), sched)
        if t in checkpoints:
            ab = sched.alpha_bar[t]
            mean_err = stack.mean(axis=0) - math.sqrt(ab) * x0[0]
            se_mean = math.sqrt((1 - ab) / n)
            assert np.all(np.abs(mean_err) < 5 * se_mean)
            var_err = stack.var(axis=0, ddof=1) - (1 - ab)
            se_var = (1 - ab) * math.sqrt(2.0 / (n - 1))
            assert np.all(np.abs(var_err) < 5 * se_var)
