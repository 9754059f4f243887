# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused per-step sampler updates and the Adam step.

Expression shapes and operation order mirror ``_stepcore_np`` exactly; the
build disables FP contraction so both backends agree bit for bit.
"""

from libc.math cimport sqrt


def scale_mix(double a, double[::1] x, double b, double[::1] y, double[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    if y.shape[0] != n or out.shape[0] != n:
        raise ValueError("kernel operand length mismatch")
    for i in range(n):
        out[i] = a * x[i] + b * y[i]


def guided_eps(double[::1] eps, double[::1] grad, double c, double[::1] out):
    cdef Py_ssize_t i, n = eps.shape[0]
    if grad.shape[0] != n or out.shape[0] != n:
        raise ValueError("kernel operand length mismatch")
    for i in range(n):
        out[i] = eps[i] - c * grad[i]


def reverse_step(double[::1] x, double[::1] eps, double c_prev, double c_noise,
                 double c_t, double c_dir, double[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    if eps.shape[0] != n or out.shape[0] != n:
        raise ValueError("kernel operand length mismatch")
    for i in range(n):
        out[i] = c_prev * ((x[i] - c_noise * eps[i]) / c_t) + c_dir * eps[i]


def add_scaled(double[::1] out, double[::1] noise, double sigma):
    cdef Py_ssize_t i, n = out.shape[0]
    if noise.shape[0] != n:
        raise ValueError("kernel operand length mismatch")
    for i in range(n):
        out[i] = out[i] + sigma * noise[i]


def encode_step(double[::1] x, double[::1] eps, double root, double cx,
                double ce, double[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    if eps.shape[0] != n or out.shape[0] != n:
        raise ValueError("kernel operand length mismatch")
    for i in range(n):
        out[i] = x[i] + root * (cx * x[i] + ce * eps[i])


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps,
                double bc1, double bc2):
    cdef Py_ssize_t i, n = p.shape[0]
    if g.shape[0] != n or m.shape[0] != n or v.shape[0] != n:
        raise ValueError("kernel operand length mismatch")
    for i in range(n):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i])
        p[i] = p[i] - lr * ((m[i] / bc1) / (sqrt(v[i] / bc2) + eps))
