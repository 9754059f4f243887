"""Numpy reference kernels for the per-step sampler and optimizer math.

The compiled twin (``_stepcore.pyx``) evaluates the same expressions in the
same operation order, and is built with FP contraction disabled, so the two
backends produce bit-identical float64 results. Keep any change here in
lockstep with the .pyx file.
"""

import numpy as np


def scale_mix(a, x, b, y):
    """a*x + b*y elementwise."""
    return a * x + b * y


def guided_eps(eps, grad, c):
    """eps - c*grad elementwise."""
    return eps - c * grad


def reverse_step(x, eps, c_prev, c_noise, c_t, c_dir):
    """c_prev*((x - c_noise*eps)/c_t) + c_dir*eps elementwise."""
    return c_prev * ((x - c_noise * eps) / c_t) + c_dir * eps


def add_scaled(out, noise, sigma):
    """out += sigma*noise elementwise, in place."""
    out += sigma * noise
    return out


def encode_step(x, eps, root, cx, ce):
    """x + root*(cx*x + ce*eps) elementwise."""
    return x + root * (cx * x + ce * eps)


def adam_update(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """One fused Adam step, in place on p/m/v. bc1/bc2 are the bias corrections."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    p -= lr * ((m / bc1) / (np.sqrt(v / bc2) + eps))
