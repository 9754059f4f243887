"""Synthetic phantom dataset and the repository's portable file formats.

Images are stored in a minimal self-describing binary format: magic bytes,
a format version, C/H/W as 32-bit little-endian unsigned integers, then
C*H*W little-endian 32-bit floats. An 8-bit PGM export exists for eyeballing
anomaly maps. Generated images are rounded to float32 at creation so the
save/load round trip is bit-exact.

Healthy samples are a smooth elliptical anatomy phantom (randomized position,
axes, orientation, intensity, mild cosine texture); diseased samples add a
bright compact lesion (disc or square) fully inside the anatomy, with its
exact pixel mask as ground truth. Masks are stored for every sample and are
all-zero exactly for healthy ones.
"""

import math
import os
import struct
from dataclasses import dataclass

import numpy as np

IMAGE_MAGIC = b"AIMG"
IMAGE_VERSION = 1
MANIFEST_NAME = "manifest.txt"
SPLITS = ("train", "test")


class HeaderError(ValueError):
    """Corrupt or unsupported image file header."""


class PayloadError(ValueError):
    """Image payload shorter or longer than the header promises."""


class ManifestError(ValueError):
    """Manifest missing, malformed, or inconsistent with files on disk."""


def save_image(path, img):
    """Write a (C, H, W) tensor as the portable float32 format."""
    img = np.asarray(img)
    if img.ndim != 3:
        raise ValueError(f"image must be (C, H, W), got shape {img.shape}")
    c, h, w = img.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<4sIIII", IMAGE_MAGIC, IMAGE_VERSION, c, h, w))
        f.write(np.ascontiguousarray(img, dtype="<f4").tobytes())


def load_image(path):
    """Read the portable format back as a float64 (C, H, W) tensor."""
    with open(path, "rb") as f:
        raw = f.read()
    head_size = struct.calcsize("<4sIIII")
    if len(raw) < head_size:
        raise HeaderError(f"{path}: truncated header")
    magic, version, c, h, w = struct.unpack_from("<4sIIII", raw)
    if magic != IMAGE_MAGIC:
        raise HeaderError(f"{path}: bad magic {magic!r}")
    if version != IMAGE_VERSION:
        raise HeaderError(f"{path}: unsupported version {version}")
    if c < 1 or h < 1 or w < 1:
        raise HeaderError(f"{path}: degenerate shape ({c}, {h}, {w})")
    expected = 4 * c * h * w
    if len(raw) - head_size != expected:
        raise PayloadError(
            f"{path}: payload is {len(raw) - head_size} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", count=c * h * w, offset=head_size)
    return data.astype(np.float64).reshape(c, h, w)


def save_pgm(path, values, lo=None, hi=None):
    """8-bit binary PGM export of a 2D array, min-max scaled by default."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"PGM export needs a 2D array, got shape {arr.shape}")
    lo = float(arr.min()) if lo is None else lo
    hi = float(arr.max()) if hi is None else hi
    span = hi - lo if hi > lo else 1.0
    scaled = np.clip((arr - lo) / span * 255.0, 0.0, 255.0)
    with open(path, "wb") as f:
        f.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        f.write(scaled.astype(np.uint8).tobytes())


@dataclass
class ToySample:
    image: np.ndarray  # (C, H, W), values in [0, 1]
    label: int         # 0 = healthy, 1 = diseased (healthy_class = 0 convention)
    mask: np.ndarray   # (H, W) bool, nonempty iff diseased


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
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

    def __post_init__(self):
        if min(self.channels, self.height, self.width) < 1:
            raise ValueError("channels and dims must be positive")
        if min(self.train_healthy, self.train_diseased,
               self.test_healthy, self.test_diseased) < 0:
            raise ValueError("sample counts must be nonnegative")
        if not 0 < self.lesion_radius_min <= self.lesion_radius_max:
            raise ValueError("invalid lesion radius range")
        if self.lesion_offset <= 0:
            raise ValueError("lesion offset must be positive")


@dataclass
class DatasetManifest:
    format_version: int
    seed: int
    channels: int
    height: int
    width: int
    healthy_class: int
    n_train_healthy: int
    n_train_diseased: int
    n_test_healthy: int
    n_test_diseased: int
    lesion_offset: float
    lesion_radius_min: float
    lesion_radius_max: float


_MANIFEST_FIELDS = [
    ("format_version", int), ("seed", int), ("channels", int), ("height", int),
    ("width", int), ("healthy_class", int), ("n_train_healthy", int),
    ("n_train_diseased", int), ("n_test_healthy", int), ("n_test_diseased", int),
    ("lesion_offset", float), ("lesion_radius_min", float),
    ("lesion_radius_max", float),
]


def write_manifest(path, manifest):
    with open(path, "w") as f:
        for name, _ in _MANIFEST_FIELDS:
            f.write(f"{name} = {getattr(manifest, name)!r}\n")


def read_manifest(path):
    if not os.path.exists(path):
        raise ManifestError(f"{path}: manifest missing")
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ManifestError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            values[key.strip()] = raw.strip()
    known = dict(_MANIFEST_FIELDS)
    unknown = set(values) - set(known)
    if unknown:
        raise ManifestError(f"{path}: unknown keys {sorted(unknown)}")
    missing = set(known) - set(values)
    if missing:
        raise ManifestError(f"{path}: missing keys {sorted(missing)}")
    parsed = {}
    for name, typ in _MANIFEST_FIELDS:
        try:
            parsed[name] = typ(values[name].strip("'\""))
        except ValueError as exc:
            raise ManifestError(f"{path}: bad value for {name}: {exc}") from exc
    return DatasetManifest(**parsed)


def _grid(height, width):
    y, x = np.mgrid[0:height, 0:width]
    return x.astype(float), y.astype(float)


def _make_phantom(rng, channels, height, width):
    """Healthy anatomy phantom. Returns (image, normalized ellipse distance)."""
    x, y = _grid(height, width)
    background = rng.uniform(0.04, 0.10)
    cx = width / 2.0 + rng.uniform(-2.5, 2.5)
    cy = height / 2.0 + rng.uniform(-2.5, 2.5)
    ax = rng.uniform(0.32, 0.42) * width
    ay = rng.uniform(0.26, 0.36) * height
    theta = rng.uniform(0.0, math.pi)
    dx, dy = x - cx, y - cy
    xr = math.cos(theta) * dx + math.sin(theta) * dy
    yr = -math.sin(theta) * dx + math.cos(theta) * dy
    dist = (xr / ax) ** 2 + (yr / ay) ** 2
    edge = 1.0 / (1.0 + np.exp(-(1.0 - dist) / 0.08))  # soft ellipse boundary

    img = np.empty((channels, height, width))
    for k in range(channels):
        intensity = rng.uniform(0.38, 0.50)
        texture = np.zeros_like(dist)
        for _ in range(2):
            amp = rng.uniform(0.015, 0.035)
            fx = rng.integers(1, 4)
            fy = rng.integers(1, 4)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            texture += amp * np.cos(2.0 * math.pi * (fx * x / width + fy * y / height)
                                    + phase)
        img[k] = background + edge * (intensity - background + texture)
    return np.clip(img, 0.0, 1.0), dist


def _add_lesion(img, dist, rng, offset, r_min, r_max):
    """Add a bright compact lesion inside the anatomy; returns (image, mask)."""
    height, width = dist.shape
    x, y = _grid(height, width)
    for _ in range(200):
        r = rng.uniform(r_min, r_max)
        lx = rng.uniform(0, width)
        ly = rng.uniform(0, height)
        if dist[min(int(ly), height - 1), min(int(lx), width - 1)] > 0.45:
            continue
        if rng.integers(0, 2) == 0:
            mask = (x - lx) ** 2 + (y - ly) ** 2 <= r * r
        else:
            mask = (np.abs(x - lx) <= r) & (np.abs(y - ly) <= r)
        if mask.sum() >= 4 and dist[mask].max() <= 0.85:
            out = img + offset * mask[None, :, :]
            return np.clip(out, 0.0, 1.0), mask
    raise RuntimeError("could not place a lesion inside the anatomy")


def _round_trip32(img):
    # freeze to the on-disk precision so save/load is bit-exact
    return img.astype(np.float32).astype(np.float64)


def generate_sample(rng, cfg, diseased):
    """One deterministic sample from the generator's RNG stream."""
    img, dist = _make_phantom(rng, cfg.channels, cfg.height, cfg.width)
    if diseased:
        img, mask = _add_lesion(img, dist, rng, cfg.lesion_offset,
                                cfg.lesion_radius_min, cfg.lesion_radius_max)
    else:
        mask = np.zeros((cfg.height, cfg.width), dtype=bool)
    return ToySample(image=_round_trip32(img), label=int(diseased), mask=mask)


def generate_toy_dataset(out_dir, cfg):
    """Write a full train/test dataset plus manifest; deterministic per seed."""
    rng = np.random.default_rng(cfg.seed)
    os.makedirs(out_dir, exist_ok=True)
    counts = {
        "train": (cfg.train_healthy, cfg.train_diseased),
        "test": (cfg.test_healthy, cfg.test_diseased),
    }
    for split in SPLITS:
        split_dir = os.path.join(out_dir, split)
        os.makedirs(split_dir, exist_ok=True)
        n_healthy, n_diseased = counts[split]
        for kind, n, diseased in (("healthy", n_healthy, False),
                                  ("diseased", n_diseased, True)):
            for i in range(n):
                sample = generate_sample(rng, cfg, diseased)
                stem = os.path.join(split_dir, f"{kind}_{i:04d}")
                save_image(stem + ".img", sample.image)
                save_image(stem + "_mask.img",
                           sample.mask[None, :, :].astype(np.float64))
    manifest = DatasetManifest(
        format_version=1, seed=cfg.seed, channels=cfg.channels,
        height=cfg.height, width=cfg.width, healthy_class=0,
        n_train_healthy=cfg.train_healthy, n_train_diseased=cfg.train_diseased,
        n_test_healthy=cfg.test_healthy, n_test_diseased=cfg.test_diseased,
        lesion_offset=cfg.lesion_offset,
        lesion_radius_min=cfg.lesion_radius_min,
        lesion_radius_max=cfg.lesion_radius_max)
    write_manifest(os.path.join(out_dir, MANIFEST_NAME), manifest)
    return manifest


@dataclass
class ToyDataset:
    images: np.ndarray  # (N, C, H, W) float64
    labels: np.ndarray  # (N,) int, healthy first
    masks: np.ndarray   # (N, H, W) bool
    manifest: DatasetManifest

    def sample(self, i):
        return ToySample(image=self.images[i], label=int(self.labels[i]),
                         mask=self.masks[i])


def load_dataset(root, split):
    """Load one split; validates the manifest against the files on disk."""
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    manifest = read_manifest(os.path.join(root, MANIFEST_NAME))
    n_healthy = getattr(manifest, f"n_{split}_healthy")
    n_diseased = getattr(manifest, f"n_{split}_diseased")
    split_dir = os.path.join(root, split)
    present = sorted(f for f in os.listdir(split_dir) if f.endswith(".img"))
    expected = 2 * (n_healthy + n_diseased)  # image + mask per sample
    if len(present) != expected:
        raise ManifestError(
            f"{split_dir}: manifest promises {expected} files, found {len(present)}")

    images, labels, masks = [], [], []
    for kind, n, label in (("healthy", n_healthy, 0), ("diseased", n_diseased, 1)):
        for i in range(n):
            stem = os.path.join(split_dir, f"{kind}_{i:04d}")
            if not (os.path.exists(stem + ".img")
                    and os.path.exists(stem + "_mask.img")):
                raise ManifestError(f"{stem}: sample files missing")
            img = load_image(stem + ".img")
            mask = load_image(stem + "_mask.img")[0] > 0.5
            if bool(mask.any()) != bool(label):
                raise ManifestError(f"{stem}: mask/label inconsistency")
            images.append(img)
            labels.append(label)
            masks.append(mask)
    return ToyDataset(images=np.array(images), labels=np.array(labels),
                      masks=np.array(masks), manifest=manifest)
