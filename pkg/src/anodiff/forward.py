"""Forward noising process: single-step recursion and closed-form jump.

Images are float64 arrays of shape (C, H, W); clean images live in [0, 1],
noisy ones are unbounded. Noise is always an explicit argument so these
functions stay pure; drawing from a seeded PRNG happens at call sites.
"""

import math

import numpy as np

from . import backend


def _check_pair(x, eps):
    if x.shape != eps.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {eps.shape}")


def q_sample(x0, t, eps, schedule):
    """Closed-form jump to noise level t: sqrt(abar_t)*x0 + sqrt(1-abar_t)*eps."""
    _check_pair(x0, eps)
    if not 1 <= t <= schedule.T:
        raise ValueError(f"timestep {t} outside 1..{schedule.T}")
    ab = schedule.alpha_bar[t]
    return backend.scale_mix(math.sqrt(ab), x0, math.sqrt(1.0 - ab), eps)


def q_step(x_prev, t, eps, schedule):
    """One step of the noising recursion: sqrt(1-beta_t)*x_{t-1} + sqrt(beta_t)*eps."""
    _check_pair(x_prev, eps)
    if not 1 <= t <= schedule.T:
        raise ValueError(f"timestep {t} outside 1..{schedule.T}")
    b = schedule.beta[t]
    return backend.scale_mix(math.sqrt(1.0 - b), x_prev, math.sqrt(b), eps)


def q_sample_batch(x0_flat, t, eps_flat, schedule):
    """Vectorized q_sample for training batches.

    x0_flat, eps_flat: (B, D) arrays; t: (B,) integer timesteps in 1..T.
    """
    if x0_flat.shape != eps_flat.shape:
        raise ValueError(f"shape mismatch: {x0_flat.shape} vs {eps_flat.shape}")
    ab = schedule.alpha_bar[t][:, None]
    return np.sqrt(ab) * x0_flat + np.sqrt(1.0 - ab) * eps_flat
