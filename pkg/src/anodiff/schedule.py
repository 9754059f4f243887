"""Diffusion variance schedule and the per-timestep constants derived from it.

Conventions used across the package:

* timesteps run t = 1..T; t = 0 denotes clean data,
* ``alpha[t] = 1 - beta[t]`` and ``alpha_bar[t]`` is the running product
  of alpha up to t, with ``alpha_bar[0] = 1`` exactly,
* all arrays are float64 and indexed directly by timestep (index 0 holds
  the clean-data sentinel), so expressions involving ``alpha_bar[t-1]``
  are well defined at t = 1.
"""

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class Schedule:
    """Immutable variance schedule; safe to share across workers.

    ``beta``, ``alpha`` and ``alpha_bar`` have length T+1 and are indexed by
    timestep. ``beta[0] = 0`` and ``alpha[0] = alpha_bar[0] = 1`` encode the
    clean-data convention; the physical schedule lives at indices 1..T.
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        for arr in (self.beta, self.alpha, self.alpha_bar):
            arr.setflags(write=False)


def linear_beta_schedule(T=DEFAULT_T, beta_start=DEFAULT_BETA_START,
                         beta_end=DEFAULT_BETA_END):
    """Linear variance ramp beta_start..beta_end inclusive over t = 1..T.

    All derived arrays are precomputed in double precision at construction.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")

    beta = np.zeros(T + 1)
    beta[1:] = np.linspace(beta_start, beta_end, T)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return Schedule(T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def sigma_ddpm(schedule, t):
    """Stochastic step size sigma_t of the generalized reverse step.

    sigma_t = sqrt((1 - abar_{t-1}) / (1 - abar_t)) * sqrt(1 - abar_t / abar_{t-1})

    sigma_1 = 0 because abar_0 = 1. Setting sigma_t = 0 everywhere gives the
    deterministic (DDIM) reverse step.
    """
    if not 1 <= t <= schedule.T:
        raise ValueError(f"timestep {t} outside 1..{schedule.T}")
    ab_prev = schedule.alpha_bar[t - 1]
    ab_t = schedule.alpha_bar[t]
    return math.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * math.sqrt(1.0 - ab_t / ab_prev)
