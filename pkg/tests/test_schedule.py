import math

import numpy as np
import pytest

from anodiff.schedule import Schedule, linear_beta_schedule, sigma_ddpm


def test_single_step_schedule():
    s = linear_beta_schedule(1, 0.5, 0.5)
    assert s.T == 1
    assert s.beta[1] == 0.5
    assert s.alpha[1] == 0.5
    assert s.alpha_bar[1] == 0.5


def test_two_step_alpha_bar(sched_t2):
    np.testing.assert_allclose(sched_t2.alpha_bar[1:], [0.9, 0.72], rtol=1e-15)


def test_default_schedule_terminal_alpha_bar(default_sched):
    # independent oracle: direct product evaluation of the linear ramp
    betas = np.linspace(1e-4, 0.02, 1000)
    direct = 1.0
    for b in betas:
        direct *= 1.0 - b
    assert abs(default_sched.alpha_bar[1000] - direct) <= 1e-12 * direct
    assert default_sched.alpha_bar[1000] < 1e-4


def test_schedule_invariants(default_sched):
    s = default_sched
    assert np.all(s.beta[1:] > 0) and np.all(s.beta[1:] < 1)
    assert np.array_equal(s.alpha[1:], 1.0 - s.beta[1:])
    assert s.alpha_bar[0] == 1.0
    assert np.all(np.diff(s.alpha_bar) < 0)
    assert np.all((s.alpha_bar[1:] > 0) & (s.alpha_bar[1:] < 1))
    ratio = s.alpha_bar[1:] / s.alpha_bar[:-1]
    np.testing.assert_allclose(ratio, s.alpha[1:], rtol=1e-12)


def test_schedule_rejects_bad_arguments():
    with pytest.raises(ValueError):
        linear_beta_schedule(0, 0.1, 0.2)
    with pytest.raises(ValueError):
        linear_beta_schedule(10, 0.0, 0.2)
    with pytest.raises(ValueError):
        linear_beta_schedule(10, 0.3, 0.2)
    with pytest.raises(ValueError):
        linear_beta_schedule(10, 0.1, 1.0)


def test_sigma_direct_evaluation(sched_t2):
    # abar_1 = 0.9, abar_2 = 0.72
    expected = math.sqrt((1 - 0.9) / (1 - 0.72)) * math.sqrt(1 - 0.72 / 0.9)
    got = sigma_ddpm(sched_t2, 2)
    assert abs(got - expected) < 1e-15
    assert abs(got - 0.267261) < 1e-6


def test_sigma_first_step_is_zero(default_sched, sched_t2):
    assert sigma_ddpm(sched_t2, 1) == 0.0
    assert sigma_ddpm(default_sched, 1) == 0.0


def test_sigma_zero_when_alpha_bar_flat():
    # custom schedule with alpha_bar[1] == alpha_bar[2]
    s = Schedule(T=2, beta=np.array([0.0, 0.1, 0.0]),
                 alpha=np.array([1.0, 0.9, 1.0]),
                 alpha_bar=np.array([1.0, 0.9, 0.9]))
    assert sigma_ddpm(s, 2) == 0.0


def test_sigma_bounds_checked(sched_t2):
    with pytest.raises(ValueError):
        sigma_ddpm(sched_t2, 0)
    with pytest.raises(ValueError):
        sigma_ddpm(sched_t2, 3)


def test_radicand_safety_full_schedule(default_sched):
    s = default_sched
    for t in range(1, s.T + 1):
        sig2 = sigma_ddpm(s, t) ** 2
        assert sig2 >= 0
        assert 1.0 - s.alpha_bar[t - 1] - sig2 >= 0
        assert (1.0 - s.alpha_bar[t]) / s.alpha_bar[t] >= 0


def test_inverse_alpha_bar_monotone(default_sched):
    grow = np.sqrt(1.0 / default_sched.alpha_bar[1:] - 1.0)
    assert np.all(np.diff(grow) > 0)
