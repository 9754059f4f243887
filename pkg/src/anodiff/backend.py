"""Kernel backend selection: compiled extension when available, numpy otherwise.

The compiled kernels (``anodiff._stepcore``, built from Cython) and the numpy
fallback (``anodiff._stepcore_np``) compute identical expressions in identical
operation order, so results are bit-for-bit equal between backends. Selection
happens once at import; set ``ANODIFF_BACKEND=python`` to force the fallback,
or call :func:`set_backend` (used by the parity tests and the benchmark).
"""

import os

import numpy as np

from . import _stepcore_np as _np_impl

try:
    from . import _stepcore as _cy_impl
except ImportError:
    _cy_impl = None

COMPILED_AVAILABLE = _cy_impl is not None


def _default_backend():
    if os.environ.get("ANODIFF_BACKEND", "") == "python":
        return "python"
    return "compiled" if COMPILED_AVAILABLE else "python"


_active = _default_backend()


def set_backend(name):
    """Select 'compiled' or 'python'. Raises if the extension is missing."""
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and not COMPILED_AVAILABLE:
        raise RuntimeError("compiled kernels are not available in this install")
    global _active
    _active = name


def active_backend():
    return _active


def _flat(a):
    # all internal arrays are C-contiguous float64; ravel() is then a view
    if not a.flags.c_contiguous:
        raise ValueError("kernel input must be C-contiguous")
    return a.ravel()


def scale_mix(a, x, b, y):
    if _active == "compiled":
        out = np.empty_like(x)
        _cy_impl.scale_mix(a, _flat(x), b, _flat(y), out.ravel())
        return out
    return _np_impl.scale_mix(a, x, b, y)


def guided_eps(eps, grad, c):
    if _active == "compiled":
        out = np.empty_like(eps)
        _cy_impl.guided_eps(_flat(eps), _flat(grad), c, out.ravel())
        return out
    return _np_impl.guided_eps(eps, grad, c)


def reverse_step(x, eps, c_prev, c_noise, c_t, c_dir):
    if _active == "compiled":
        out = np.empty_like(x)
        _cy_impl.reverse_step(_flat(x), _flat(eps), c_prev, c_noise, c_t, c_dir, out.ravel())
        return out
    return _np_impl.reverse_step(x, eps, c_prev, c_noise, c_t, c_dir)


def add_scaled(out, noise, sigma):
    if _active == "compiled":
        _cy_impl.add_scaled(_flat(out), _flat(noise), sigma)
        return out
    return _np_impl.add_scaled(out, noise, sigma)


def encode_step(x, eps, root, cx, ce):
    if _active == "compiled":
        out = np.empty_like(x)
        _cy_impl.encode_step(_flat(x), _flat(eps), root, cx, ce, out.ravel())
        return out
    return _np_impl.encode_step(x, eps, root, cx, ce)


def adam_update(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    if _active == "compiled":
        _cy_impl.adam_update(_flat(p), _flat(g), _flat(m), _flat(v),
                             lr, beta1, beta2, eps, bc1, bc2)
        return
    _np_impl.adam_update(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2)
