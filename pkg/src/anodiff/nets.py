"""Trainable noise predictor and noise-conditional classifier.

Both are small dense networks over the flattened image concatenated with a
sinusoidal time embedding. Reverse-mode differentiation is written out by
hand: to parameters for training, to inputs for guidance. The activation is
SiLU (x * sigmoid(x)) everywhere, smooth and everywhere-differentiable so
finite-difference checks are clean; it is fixed across the repo.

Training follows the noise-prediction protocol: per iteration sample a batch
of clean images, a uniform timestep in 1..T and fresh standard-normal noise,
form the noisy batch by the closed-form jump, and step Adam on the MSE
between true and predicted noise (mean over elements, so the learning rate
is decoupled from image size). The classifier uses the same batch/noise
protocol with image-level labels and unweighted cross-entropy.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .forward import q_sample_batch

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_MAGIC = b"ADNC"
CHECKPOINT_VERSION = 1

KIND_DENOISER = 0
KIND_CLASSIFIER = 1


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


class CheckpointError(ValueError):
    """Raised on malformed, truncated, or incompatible checkpoint files."""


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def silu(z):
    return z * _sigmoid(z)


def silu_grad(z):
    s = _sigmoid(z)
    return s * (1.0 + z * (1.0 - s))


@dataclass(frozen=True)
class TimeEmbedding:
    """Sinusoidal features of the timestep at geometrically spaced frequencies."""

    dim: int
    freqs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2 != 0:
            raise ValueError(f"embedding dim must be even and >= 2, got {self.dim}")
        half = self.dim // 2
        freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
        freqs.setflags(write=False)
        object.__setattr__(self, "freqs", freqs)

    def __call__(self, t):
        """Embed a scalar timestep -> (dim,) or an integer array -> (B, dim)."""
        args = np.asarray(t, dtype=float)[..., None] * self.freqs
        return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


@dataclass
class DenseNet:
    """Fully connected network; hidden layers use SiLU, the output is linear."""

    layer_dims: tuple
    weights: list
    biases: list

    @property
    def parameter_count(self):
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def param_arrays(self):
        """Flat list of parameter arrays in layer order (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def init_dense_net(layer_dims, rng, final_scale=1.0):
    """1/sqrt(fan_in) normal init; the output layer may be scaled down."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"invalid layer dims {dims}")
    weights, biases = [], []
    n_layers = len(dims) - 1
    for l in range(n_layers):
        scale = 1.0 / math.sqrt(dims[l])
        if l == n_layers - 1:
            scale *= final_scale
        weights.append(rng.standard_normal((dims[l], dims[l + 1])) * scale)
        biases.append(np.zeros(dims[l + 1]))
    return DenseNet(layer_dims=dims, weights=weights, biases=biases)


def net_forward(net, X):
    """Batched forward pass. X: (B, in_dim). Returns (out, cache)."""
    if X.shape[1] != net.layer_dims[0]:
        raise ValueError(
            f"input width {X.shape[1]} != first layer width {net.layer_dims[0]}")
    n_layers = len(net.weights)
    acts = [X]
    zs = []
    a = X
    for l in range(n_layers - 1):
        z = a @ net.weights[l] + net.biases[l]
        zs.append(z)
        a = silu(z)
        acts.append(a)
    out = a @ net.weights[-1] + net.biases[-1]
    return out, (zs, acts)


def net_backward(net, cache, dout):
    """Reverse-mode pass. Returns (weight grads, bias grads, input grad)."""
    zs, acts = cache
    n_layers = len(net.weights)
    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    g = dout
    g_input = None
    for l in range(n_layers - 1, -1, -1):
        grads_w[l] = acts[l].T @ g
        grads_b[l] = g.sum(axis=0)
        g_input = g @ net.weights[l].T
        if l > 0:
            g = g_input * silu_grad(zs[l - 1])
    return grads_w, grads_b, g_input


@dataclass
class Denoiser:
    """Noise-prediction model; callable as (x_t, t) -> predicted noise."""

    net: DenseNet
    embed: TimeEmbedding
    image_shape: tuple
    T: int

    def __call__(self, x_t, t):
        return denoiser_forward(self, x_t, t)


def denoiser_forward(model, x_t, t):
    if tuple(x_t.shape) != tuple(model.image_shape):
        raise ValueError(f"image shape {x_t.shape} != model shape {model.image_shape}")
    inp = np.concatenate([x_t.ravel(), model.embed(t)])[None, :]
    out, _ = net_forward(model.net, inp)
    return out[0].reshape(model.image_shape)


def _denoiser_forward_batch(model, x_flat, t):
    inp = np.concatenate([x_flat, model.embed(t)], axis=1)
    return net_forward(model.net, inp)


@dataclass
class Classifier:
    """Two-class noise-conditional classifier over noisy images."""

    net: DenseNet
    embed: TimeEmbedding
    image_shape: tuple
    T: int
    healthy_class: int = 0


def classifier_logits(model, x_t, t):
    if tuple(x_t.shape) != tuple(model.image_shape):
        raise ValueError(f"image shape {x_t.shape} != model shape {model.image_shape}")
    inp = np.concatenate([x_t.ravel(), model.embed(t)])[None, :]
    out, cache = net_forward(model.net, inp)
    return out[0], cache


def classifier_forward(model, x_t, t):
    """Two-class log-probabilities (log-softmax of the logits)."""
    logits, _ = classifier_logits(model, x_t, t)
    m = logits.max()
    return logits - (m + math.log(np.exp(logits - m).sum()))


def classifier_input_grad(model, x_t, t, h):
    """Exact gradient of the class-h log-probability w.r.t. the input pixels."""
    if h not in (0, 1):
        raise ValueError(f"class index must be 0 or 1, got {h}")
    logits, cache = classifier_logits(model, x_t, t)
    m = logits.max()
    p = np.exp(logits - m)
    p /= p.sum()
    dlogits = -p
    dlogits[h] += 1.0
    _, _, g_input = net_backward(model.net, cache, dlogits[None, :])
    n_pixels = int(np.prod(model.image_shape))
    return g_input[0, :n_pixels].reshape(model.image_shape)


class ClassifierGrad:
    """Class-gradient adapter: callable (x_t, t, h) -> input gradient."""

    def __init__(self, model):
        self.model = model

    def __call__(self, x_t, t, h):
        return classifier_input_grad(self.model, x_t, t, h)


def loss_eps_mse(eps_true, eps_pred):
    """Mean squared elementwise difference (mean over all elements)."""
    if eps_true.shape != eps_pred.shape:
        raise ValueError(f"shape mismatch: {eps_true.shape} vs {eps_pred.shape}")
    d = eps_pred - eps_true
    return float(np.mean(d * d))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 10
    iterations: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.iterations < 0:
            raise ValueError(f"invalid training config {self}")


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0


def adam_init(params):
    return AdamState(m=[np.zeros_like(p) for p in params],
                     v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state, lr):
    state.step += 1
    bc1 = 1.0 - ADAM_BETA1 ** state.step
    bc2 = 1.0 - ADAM_BETA2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        backend.adam_update(p, g, m, v, lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, bc1, bc2)


def _interleave(grads_w, grads_b):
    out = []
    for w, b in zip(grads_w, grads_b):
        out.append(w)
        out.append(b)
    return out


def train_denoiser(data, schedule, cfg, hidden=(256, 256), embed_dim=64):
    """Train the noise predictor; returns (model, per-iteration loss log)."""
    images = np.asarray(data.images, dtype=float)
    if images.ndim != 4 or images.shape[0] == 0:
        raise ValueError("dataset must hold a nonempty (N, C, H, W) image stack")
    n, c, hgt, wid = images.shape
    d = c * hgt * wid
    flat = images.reshape(n, d)

    rng = np.random.default_rng(cfg.seed)
    embed = TimeEmbedding(embed_dim)
    net = init_dense_net((d + embed_dim, *hidden, d), rng, final_scale=0.1)
    model = Denoiser(net=net, embed=embed, image_shape=(c, hgt, wid), T=schedule.T)
    params = net.param_arrays()
    state = adam_init(params)

    loss_log = []
    for it in range(cfg.iterations):
        idx = rng.integers(0, n, size=cfg.batch_size)
        tb = rng.integers(1, schedule.T + 1, size=cfg.batch_size)
        eps = rng.standard_normal((cfg.batch_size, d))
        x_t = q_sample_batch(flat[idx], tb, eps, schedule)
        pred, cache = _denoiser_forward_batch(model, x_t, tb)
        loss = loss_eps_mse(eps, pred)
        if not math.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite denoiser loss at iteration {it}; "
                f"lower the learning rate or check the data")
        loss_log.append(loss)
        dout = (2.0 / pred.size) * (pred - eps)
        gw, gb, _ = net_backward(net, cache, dout)
        adam_step(params, _interleave(gw, gb), state, cfg.learning_rate)
    return model, loss_log


def train_classifier(data, schedule, cfg, hidden=(128, 64), embed_dim=64,
                     healthy_class=0):
    """Train the noise-conditional classifier; returns (model, loss log)."""
    images = np.asarray(data.images, dtype=float)
    labels = np.asarray(data.labels, dtype=int)
    if images.ndim != 4 or images.shape[0] == 0:
        raise ValueError("dataset must hold a nonempty (N, C, H, W) image stack")
    if labels.shape != (images.shape[0],):
        raise ValueError("labels must align with images")
    n, c, hgt, wid = images.shape
    d = c * hgt * wid
    flat = images.reshape(n, d)

    rng = np.random.default_rng(cfg.seed)
    embed = TimeEmbedding(embed_dim)
    net = init_dense_net((d + embed_dim, *hidden, 2), rng)
    model = Classifier(net=net, embed=embed, image_shape=(c, hgt, wid),
                       T=schedule.T, healthy_class=healthy_class)
    params = net.param_arrays()
    state = adam_init(params)

    loss_log = []
    for it in range(cfg.iterations):
        idx = rng.integers(0, n, size=cfg.batch_size)
        tb = rng.integers(1, schedule.T + 1, size=cfg.batch_size)
        eps = rng.standard_normal((cfg.batch_size, d))
        x_t = q_sample_batch(flat[idx], tb, eps, schedule)
        inp = np.concatenate([x_t, model.embed(tb)], axis=1)
        logits, cache = net_forward(net, inp)
        m = logits.max(axis=1, keepdims=True)
        logp = logits - (m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True)))
        batch_labels = labels[idx]
        loss = float(-np.mean(logp[np.arange(cfg.batch_size), batch_labels]))
        if not math.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite classifier loss at iteration {it}; "
                f"lower the learning rate or check the data")
        loss_log.append(loss)
        dlogits = np.exp(logp)
        dlogits[np.arange(cfg.batch_size), batch_labels] -= 1.0
        dlogits /= cfg.batch_size
        gw, gb, _ = net_backward(net, cache, dlogits)
        adam_step(params, _interleave(gw, gb), state, cfg.learning_rate)
    return model, loss_log


def save_checkpoint(path, model):
    """Versioned binary checkpoint: header, layer dims, float64 LE blocks."""
    if isinstance(model, Denoiser):
        kind, healthy = KIND_DENOISER, 0
    elif isinstance(model, Classifier):
        kind, healthy = KIND_CLASSIFIER, model.healthy_class
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    c, hgt, wid = model.image_shape
    dims = model.net.layer_dims
    header = struct.pack(
        "<4sIIIIIIIII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, kind,
        c, hgt, wid, model.T, model.embed.dim, healthy, len(dims))
    blob = bytearray(header)
    blob += np.asarray(dims, dtype="<u4").tobytes()
    for w, b in zip(model.net.weights, model.net.biases):
        blob += np.ascontiguousarray(w, dtype="<f8").tobytes()
        blob += np.ascontiguousarray(b, dtype="<f8").tobytes()
    with open(path, "wb") as f:
        f.write(bytes(blob))


def load_checkpoint(path):
    """Load a checkpoint; rejects bad magic, version, dims, or payload size."""
    with open(path, "rb") as f:
        raw = f.read()
    head_fmt = "<4sIIIIIIIII"
    head_size = struct.calcsize(head_fmt)
    if len(raw) < head_size:
        raise CheckpointError(f"{path}: truncated header")
    (magic, version, kind, c, hgt, wid, t_steps, embed_dim, healthy,
     n_dims) = struct.unpack_from(head_fmt, raw)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    if kind not in (KIND_DENOISER, KIND_CLASSIFIER):
        raise CheckpointError(f"{path}: unknown model kind {kind}")
    off = head_size
    if len(raw) < off + 4 * n_dims or n_dims < 2:
        raise CheckpointError(f"{path}: bad layer dims block")
    dims = tuple(int(v) for v in np.frombuffer(raw, dtype="<u4", count=n_dims,
                                               offset=off))
    off += 4 * n_dims

    d = c * hgt * wid
    expected_in = d + embed_dim
    expected_out = d if kind == KIND_DENOISER else 2
    if dims[0] != expected_in or dims[-1] != expected_out:
        raise CheckpointError(
            f"{path}: layer dims {dims} incompatible with image {c}x{hgt}x{wid} "
            f"and embedding {embed_dim}")

    n_params = sum(dims[l] * dims[l + 1] + dims[l + 1] for l in range(len(dims) - 1))
    if len(raw) - off != 8 * n_params:
        raise CheckpointError(
            f"{path}: parameter payload is {len(raw) - off} bytes, "
            f"expected {8 * n_params}")

    weights, biases = [], []
    for l in range(len(dims) - 1):
        w = np.frombuffer(raw, dtype="<f8", count=dims[l] * dims[l + 1], offset=off)
        off += 8 * w.size
        b = np.frombuffer(raw, dtype="<f8", count=dims[l + 1], offset=off)
        off += 8 * b.size
        weights.append(w.reshape(dims[l], dims[l + 1]).copy())
        biases.append(b.copy())

    net = DenseNet(layer_dims=dims, weights=weights, biases=biases)
    embed = TimeEmbedding(embed_dim)
    if kind == KIND_DENOISER:
        return Denoiser(net=net, embed=embed, image_shape=(c, hgt, wid), T=t_steps)
    return Classifier(net=net, embed=embed, image_shape=(c, hgt, wid), T=t_steps,
                      healthy_class=healthy)
