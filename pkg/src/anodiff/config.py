"""Run configuration: a flat key=value text format with a fixed key set.

Unknown keys are errors (typo safety). Flags override file values; every
command writes the merged result back out as a resolved snapshot, and any
run can be reproduced bit-for-bit from its snapshot.
"""

import os
from dataclasses import dataclass, fields

from .schedule import DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_T


def _int_tuple(raw):
    if isinstance(raw, tuple):
        return tuple(int(v) for v in raw)
    parts = [p for p in str(raw).split(",") if p.strip()]
    return tuple(int(p) for p in parts)


@dataclass
class RunConfig:
    # schedule
    T: int = DEFAULT_T
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END
    # reproducibility
    seed: int = 0
    # dataset geometry / generation
    channels: int = 1
    height: int = 32
    width: int = 32
    train_healthy: int = 100
    train_diseased: int = 100
    test_healthy: int = 50
    test_diseased: int = 30
    lesion_offset: float = 0.25
    lesion_radius_min: float = 2.5
    lesion_radius_max: float = 4.5
    # model architecture
    embed_dim: int = 64
    denoiser_hidden: tuple = (256, 256)
    classifier_hidden: tuple = (128, 64)
    # training
    learning_rate: float = 1e-4
    batch_size: int = 10
    denoiser_iterations: int = 6000
    classifier_iterations: int = 3000
    # detection defaults (L = 0 means "use T // 2")
    s: float = 100.0
    L: int = 0
    healthy_class: int = 0
    model_backend: str = "trained"  # trained | analytic
    # analytic oracle parameters (scalars broadcast per pixel)
    analytic_mu_healthy: float = 0.0
    analytic_var_healthy: float = 1.0
    analytic_mu_diseased: float = 0.5
    analytic_var_diseased: float = 1.0
    analytic_prior_healthy: float = 0.5
    # paths
    dataset_dir: str = "data"
    output_dir: str = "out"

    @property
    def noise_level(self):
        return self.L if self.L > 0 else self.T // 2

    def validate(self):
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if not 0.0 < self.beta_start <= self.beta_end < 1.0:
            raise ValueError("need 0 < beta_start <= beta_end < 1")
        if self.L < 0 or self.L > self.T:
            raise ValueError(f"L must lie in 0..T, got {self.L}")
        if self.s < 0:
            raise ValueError(f"gradient scale must be >= 0, got {self.s}")
        if self.healthy_class not in (0, 1):
            raise ValueError("healthy_class must be 0 or 1")
        if self.model_backend not in ("trained", "analytic"):
            raise ValueError(f"unknown model backend {self.model_backend!r}")
        if self.embed_dim < 2 or self.embed_dim % 2:
            raise ValueError("embed_dim must be even and >= 2")
        return self


_PARSERS = {int: int, float: float, str: str, tuple: _int_tuple}


def _field_types():
    return {f.name: f.type if isinstance(f.type, type) else type(f.default)
            for f in fields(RunConfig)}


def parse_value(name, raw):
    types = _field_types()
    if name not in types:
        raise ValueError(f"unknown config key {name!r}")
    return _PARSERS[types[name]](raw)


def read_config(path):
    """Parse a config file into a RunConfig; unknown keys are errors."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file {path} not found")
    overrides = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key = key.strip()
            try:
                overrides[key] = parse_value(key, raw.strip())
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return RunConfig(**overrides)


def apply_overrides(cfg, pairs):
    """Apply key=value override strings (from CLI flags) onto a config."""
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"override {pair!r} must look like key=value")
        key, _, raw = pair.partition("=")
        key = key.strip()
        setattr(cfg, key, parse_value(key, raw.strip()))
    return cfg


def write_config(path, cfg):
    """Write a config in the same format it is read from (stable key order)."""
    with open(path, "w") as f:
        for fld in fields(RunConfig):
            value = getattr(cfg, fld.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            f.write(f"{fld.name} = {value}\n")
