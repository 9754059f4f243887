"""Reverse diffusion steps, ODE-style encoding, and classifier-guidance mixing.

The reverse step predicts x_{t-1} from x_t given a noise estimate:

    x_{t-1} = sqrt(abar_{t-1}) * (x_t - sqrt(1-abar_t)*eps) / sqrt(abar_t)
              + sqrt(1 - abar_{t-1} - sigma^2) * eps + sigma * z

With sigma = 0 the step is deterministic and, read in the other direction
(t -> t+1), becomes the Euler step of the underlying ODE:

    x_{t+1} = x_t + sqrt(abar_{t+1}) * [ (sqrt(1/abar_t) - sqrt(1/abar_{t+1})) * x_t
              + (sqrt(1/abar_{t+1} - 1) - sqrt(1/abar_t - 1)) * eps ]

Running the encode loop for t = 0..L-1 pushes an image to noise level L;
running the deterministic reverse loop for t = L..1 brings it back. Guidance
perturbs the noise estimate with the scaled input-gradient of a
noise-conditional classifier's log-probability for the target class:

    eps_hat = eps - s * sqrt(1 - abar_t) * grad_x log C(h | x_t, t)

An epsilon model is any callable (x_t, t) -> eps_hat; a class-gradient model
is any callable (x_t, t, h) -> grad.
"""

import math
from dataclasses import dataclass

from . import backend
from .schedule import sigma_ddpm


@dataclass(frozen=True)
class GuidanceConfig:
    """Gradient scale s >= 0 and target class h; s = 0 reduces every guided
    path to the unguided path bit for bit."""

    s: float
    h: int
    enabled: bool = True

    def __post_init__(self):
        if self.s < 0:
            raise ValueError(f"gradient scale must be >= 0, got {self.s}")


@dataclass(frozen=True)
class Guidance:
    """A class-gradient model bundled with its configuration."""

    model: object  # callable (x_t, t, h) -> grad
    config: GuidanceConfig

    @property
    def active(self):
        return self.config.enabled and self.config.s > 0


def reverse_step(x_t, eps_hat, t, sigma, noise, schedule):
    """One generalized reverse step; sigma = 0 gives the deterministic case.

    ``noise`` is ignored when sigma = 0 and may be None.
    """
    if not 1 <= t <= schedule.T:
        raise ValueError(f"timestep {t} outside 1..{schedule.T}")
    if x_t.shape != eps_hat.shape:
        raise ValueError(f"shape mismatch: {x_t.shape} vs {eps_hat.shape}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    ab_prev = schedule.alpha_bar[t - 1]
    ab_t = schedule.alpha_bar[t]
    radicand = 1.0 - ab_prev - sigma * sigma
    if radicand < 0:
        raise ValueError(
            f"sigma^2 = {sigma * sigma} exceeds 1 - alpha_bar[{t - 1}] = {1.0 - ab_prev}")
    out = backend.reverse_step(
        x_t, eps_hat,
        math.sqrt(ab_prev), math.sqrt(1.0 - ab_t), math.sqrt(ab_t),
        math.sqrt(radicand))
    if sigma != 0.0:
        if noise is None or noise.shape != x_t.shape:
            raise ValueError("stochastic step needs noise of matching shape")
        backend.add_scaled(out, noise, sigma)
    return out


def encode_step(x_t, eps_pred, t, schedule):
    """One Euler step of the reversed ODE, t -> t+1 (t may be 0)."""
    if not 0 <= t <= schedule.T - 1:
        raise ValueError(f"timestep {t} outside 0..{schedule.T - 1}")
    if x_t.shape != eps_pred.shape:
        raise ValueError(f"shape mismatch: {x_t.shape} vs {eps_pred.shape}")
    ab_t = schedule.alpha_bar[t]
    ab_next = schedule.alpha_bar[t + 1]
    root = math.sqrt(ab_next)
    cx = math.sqrt(1.0 / ab_t) - math.sqrt(1.0 / ab_next)
    ce = math.sqrt(1.0 / ab_next - 1.0) - math.sqrt(1.0 / ab_t - 1.0)
    return backend.encode_step(x_t, eps_pred, root, cx, ce)


def guided_epsilon(eps_pred, class_grad, s, t, schedule):
    """Mix the classifier gradient into the noise estimate.

    Returns ``eps_pred`` unchanged when s = 0 (exact reduction).
    """
    if s < 0:
        raise ValueError(f"gradient scale must be >= 0, got {s}")
    if s == 0:
        return eps_pred
    if eps_pred.shape != class_grad.shape:
        raise ValueError(f"shape mismatch: {eps_pred.shape} vs {class_grad.shape}")
    ab_t = schedule.alpha_bar[t]
    return backend.guided_eps(eps_pred, class_grad, s * math.sqrt(1.0 - ab_t))


def encode(x0, L, model, schedule):
    """Deterministically encode an image to noise level L (0 <= L <= T).

    Applies encode_step with eps = model(x_t, t) for t = 0..L-1. The first
    evaluation happens at t = 0 on the clean image (abar_0 = 1 keeps the
    coefficients finite). L = 0 returns a copy of the input.
    """
    if not 0 <= L <= schedule.T:
        raise ValueError(f"noise level {L} outside 0..{schedule.T}")
    x = x0
    for t in range(L):
        x = encode_step(x, model(x, t), t, schedule)
    return x.copy() if x is x0 else x


def decode(x_L, L, model, schedule, guide=None, hook=None):
    """Deterministic reverse loop from noise level L back to a clean image.

    Iterates guided_epsilon (when ``guide`` is active) followed by the
    sigma = 0 reverse step for t = L..1. ``hook(t_next, x)``, if given, is
    called after every step with the new level t-1 and state; use it for
    trajectory dumps.
    """
    if not 0 <= L <= schedule.T:
        raise ValueError(f"noise level {L} outside 0..{schedule.T}")
    x = x_L
    for t in range(L, 0, -1):
        eps_hat = model(x, t)
        if guide is not None and guide.active:
            grad = guide.model(x, t, guide.config.h)
            eps_hat = guided_epsilon(eps_hat, grad, guide.config.s, t, schedule)
        x = reverse_step(x, eps_hat, t, 0.0, None, schedule)
        if hook is not None:
            hook(t - 1, x)
    return x.copy() if x is x_L else x


def decode_stochastic(x_L, L, model, schedule, rng, guide=None, hook=None):
    """Stochastic reverse loop: sigma_t per step, fresh noise from ``rng``.

    This is the ablation sampling path; guidance mixing is identical to
    :func:`decode`. sigma_1 = 0, so the final step draws no noise.
    """
    if not 0 <= L <= schedule.T:
        raise ValueError(f"noise level {L} outside 0..{schedule.T}")
    x = x_L
    for t in range(L, 0, -1):
        eps_hat = model(x, t)
        if guide is not None and guide.active:
            grad = guide.model(x, t, guide.config.h)
            eps_hat = guided_epsilon(eps_hat, grad, guide.config.s, t, schedule)
        sigma = sigma_ddpm(schedule, t)
        noise = rng.standard_normal(x.shape) if sigma > 0 else None
        x = reverse_step(x, eps_hat, t, sigma, noise, schedule)
        if hook is not None:
            hook(t - 1, x)
    return x.copy() if x is x_L else x
