"""Evaluation protocol: Otsu thresholding, Dice overlap, and AUROC.

Anomaly maps are binarized with a per-image Otsu threshold (strict > on the
returned cut value), Dice is computed against the ground-truth mask for
diseased images, and pixel-wise AUROC pools all diseased-image pixels.
Image-level AUROC ranks per-image scores when both classes are present.
"""

from dataclasses import dataclass, field

import numpy as np

OTSU_BINS = 256


class SingleClassError(ValueError):
    """AUROC needs at least one positive and one negative label."""


def otsu_threshold(values, bins=OTSU_BINS):
    """Histogram cut maximizing between-class variance.

    Values are binned over [min, max]; the returned threshold is the bin edge
    attaining the maximum (first such edge on ties). A constant input returns
    the constant itself, so strict-> binarization yields an empty mask.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("otsu_threshold needs a nonempty input")
    if not np.all(np.isfinite(v)):
        raise ValueError("otsu_threshold needs finite values")
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return lo
    hist, edges = np.histogram(v, bins=bins, range=(lo, hi))
    p = hist / hist.sum()
    centers = 0.5 * (edges[:-1] + edges[1:])
    w0 = np.cumsum(p)[:-1]
    m0 = np.cumsum(p * centers)[:-1]
    mu_total = float(np.sum(p * centers))
    w1 = 1.0 - w0
    valid = (w0 > 0) & (w1 > 0)
    between = np.zeros(bins - 1)
    between[valid] = (mu_total * w0[valid] - m0[valid]) ** 2 / (w0[valid] * w1[valid])
    k = int(np.argmax(between))
    return float(edges[k + 1])


def binarize(values, threshold):
    """Strict > comparison against the threshold."""
    return np.asarray(values) > threshold


def dice(pred, truth):
    """2|A∩B| / (|A|+|B|); defined as 1.0 when both masks are empty."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    total = int(pred.sum()) + int(truth.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((pred & truth).sum()) / total


def auroc(scores, labels):
    """Probability a random positive outranks a random negative, ties at 1/2.

    Rank-sum (Mann-Whitney) formulation with average ranks on ties.
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise ValueError(f"length mismatch: {s.shape} vs {y.shape}")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("need at least one positive and one negative label")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size)
    sorted_s = s[order]
    # average ranks within tie groups (1-based ranks)
    boundaries = np.flatnonzero(np.diff(sorted_s)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [s.size]])
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = 0.5 * (a + 1 + b)
    u = float(ranks[y].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass
class ImageEval:
    index: int
    diseased: bool
    score: float
    threshold: float = float("nan")
    dice: float = float("nan")


@dataclass
class EvalSummary:
    n_images: int
    n_diseased: int
    mean_dice: float
    pixel_auroc: float
    image_auroc: float  # nan when only one class is present
    per_image: list = field(default_factory=list)


def evaluate_set(results, masks, bins=OTSU_BINS, threshold_mode="per-image"):
    """Aggregate detection results against ground-truth masks.

    Per-image Otsu -> binarize -> Dice on diseased images; pixel AUROC pools
    all diseased-image pixels; image-level AUROC ranks per-image scores.
    ``threshold_mode="mean"`` instead binarizes every diseased image with the
    mean of the per-image Otsu thresholds (the alternative protocol reading).
    """
    if masks is None or len(results) != len(masks):
        raise ValueError("results and masks must be aligned lists")
    if threshold_mode not in ("per-image", "mean"):
        raise ValueError(f"unknown threshold mode {threshold_mode!r}")

    records = []
    diseased_idx = []
    for i, (res, mask) in enumerate(zip(results, masks)):
        mask = np.asarray(mask, dtype=bool)
        amap = res.anomaly_map[0]
        if mask.shape != amap.shape:
            raise ValueError(f"mask {i} shape {mask.shape} != map {amap.shape}")
        is_diseased = bool(mask.any())
        rec = ImageEval(index=i, diseased=is_diseased, score=res.score)
        if is_diseased:
            rec.threshold = otsu_threshold(amap, bins=bins)
            diseased_idx.append(i)
        records.append(rec)

    if threshold_mode == "mean" and diseased_idx:
        shared = float(np.mean([records[i].threshold for i in diseased_idx]))
        for i in diseased_idx:
            records[i].threshold = shared

    dices = []
    for i in diseased_idx:
        amap = results[i].anomaly_map[0]
        mask = np.asarray(masks[i], dtype=bool)
        records[i].dice = dice(binarize(amap, records[i].threshold), mask)
        dices.append(records[i].dice)

    pixel_auroc = float("nan")
    if diseased_idx:
        pooled_scores = np.concatenate(
            [results[i].anomaly_map[0].ravel() for i in diseased_idx])
        pooled_labels = np.concatenate(
            [np.asarray(masks[i], dtype=bool).ravel() for i in diseased_idx])
        if 0 < pooled_labels.sum() < pooled_labels.size:
            pixel_auroc = auroc(pooled_scores, pooled_labels)

    image_auroc = float("nan")
    labels = np.array([r.diseased for r in records])
    if 0 < labels.sum() < labels.size:
        image_auroc = auroc(np.array([r.score for r in records]), labels)

    return EvalSummary(
        n_images=len(records),
        n_diseased=len(diseased_idx),
        mean_dice=float(np.mean(dices)) if dices else float("nan"),
        pixel_auroc=pixel_auroc,
        image_auroc=image_auroc,
        per_image=records)
