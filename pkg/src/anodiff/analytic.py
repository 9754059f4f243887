"""Closed-form noise predictors and classifier gradients for Gaussian data.

When clean images follow x0 ~ N(mu, diag(v)) per pixel, the noisy marginal at
level t is N(sqrt(abar_t)*mu, abar_t*v + (1 - abar_t)), and the minimum-MSE
noise prediction has a closed form:

    eps*(x_t, t) = sqrt(1 - abar_t) * (x_t - sqrt(abar_t)*mu) / (abar_t*v + 1 - abar_t)

For two Gaussian classes the Bayes posterior of the target class is available
exactly, and so is its input-gradient. These models make every sampling and
guidance equation testable without any training.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GaussianDataModel:
    """Per-pixel Gaussian data model with diagonal covariance.

    ``mu`` and ``var`` broadcast against image tensors; scalars are fine.
    """

    mu: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        var = np.asarray(self.var, dtype=float)
        if not np.all(np.isfinite(mu)):
            raise ValueError("mu must be finite")
        if not (np.all(np.isfinite(var)) and np.all(var > 0)):
            raise ValueError("var must be finite and strictly positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "var", var)


@dataclass(frozen=True)
class TwoClassModel:
    """Two Gaussian classes with a prior on the first (healthy) class."""

    class_h: GaussianDataModel
    class_d: GaussianDataModel
    prior_h: float

    def __post_init__(self):
        if not 0.0 < self.prior_h < 1.0:
            raise ValueError(f"prior must lie in (0, 1), got {self.prior_h}")


def _moments(model, t, schedule):
    """Mean and variance of the noisy marginal at level t."""
    ab = schedule.alpha_bar[t]
    return math.sqrt(ab) * model.mu, ab * model.var + (1.0 - ab)


def gaussian_epsilon(x_t, t, model, schedule):
    """Exact minimum-MSE noise prediction for Gaussian data (t may be 0)."""
    if not 0 <= t <= schedule.T:
        raise ValueError(f"timestep {t} outside 0..{schedule.T}")
    ab = schedule.alpha_bar[t]
    mean, var = _moments(model, t, schedule)
    return math.sqrt(1.0 - ab) * (x_t - mean) / var


def _score(x_t, mean, var):
    # gradient of the marginal log-density
    return -(x_t - mean) / var


def _log_density(x_t, mean, var):
    # summed over pixels; mean/var broadcast against x_t
    q = (x_t - mean) ** 2 / var + np.log(2.0 * math.pi * var)
    return -0.5 * float(np.sum(q))


def analytic_class_grad(x_t, t, model, h, schedule):
    """Input-gradient of the Bayes posterior log-probability of class h.

    grad log P(h | x_t) = w_other * (score_h - score_other), where w_other is
    the posterior weight of the competing class, computed in log space for
    stability. Identical classes give an exactly zero gradient.
    """
    if h not in (0, 1):
        raise ValueError(f"class index must be 0 or 1, got {h}")
    if not 0 <= t <= schedule.T:
        raise ValueError(f"timestep {t} outside 0..{schedule.T}")

    mean_h, var_h = _moments(model.class_h, t, schedule)
    mean_d, var_d = _moments(model.class_d, t, schedule)
    log_h = math.log(model.prior_h) + _log_density(x_t, mean_h, var_h)
    log_d = math.log(1.0 - model.prior_h) + _log_density(x_t, mean_d, var_d)
    score_h = _score(x_t, mean_h, var_h)
    score_d = _score(x_t, mean_d, var_d)

    if h == 0:
        delta = log_h - log_d  # target minus other
        diff = score_h - score_d
    else:
        delta = log_d - log_h
        diff = score_d - score_h
    # w_other = 1 / (1 + exp(delta)), evaluated stably
    if delta >= 0:
        w_other = math.exp(-delta) / (1.0 + math.exp(-delta))
    else:
        w_other = 1.0 / (1.0 + math.exp(delta))
    return w_other * diff


class AnalyticEpsilon:
    """Epsilon-model adapter: callable (x_t, t) -> exact noise prediction."""

    def __init__(self, model, schedule):
        self.model = model
        self.schedule = schedule

    def __call__(self, x_t, t):
        return gaussian_epsilon(x_t, t, self.model, self.schedule)


class AnalyticClassGrad:
    """Class-gradient adapter: callable (x_t, t, h) -> exact Bayes gradient."""

    def __init__(self, model, schedule):
        self.model = model
        self.schedule = schedule

    def __call__(self, x_t, t, h):
        return analytic_class_grad(x_t, t, self.model, h, self.schedule)
