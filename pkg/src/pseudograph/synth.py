"""Seeded synthetic scenes, CAM-like activations, node features and partial labels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import GenerationError, InvalidInputError
from .graph import IGNORED, FeatureGrid, PartialLabelGrid

MIN_OCCUPANCY = 0.01
MAX_ATTEMPTS = 50


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    image: np.ndarray  # (H, W, 3) in [0, 1]
    gt: np.ndarray  # (H, W) int64, 0 = background
    num_classes: int
    seed: int


def _distinct_colors(rng, count, min_dist=0.35):
    colors = []
    while len(colors) < count:
        c = rng.uniform(0.05, 0.95, size=3)
        if all(np.linalg.norm(c - o) >= min_dist for o in colors):
            colors.append(c)
    return np.array(colors)


def _attempt(rng, num_classes, h, w, shapes_per_class):
    yy, xx = np.mgrid[0:h, 0:w]
    colors = _distinct_colors(rng, num_classes + 1)
    freq = rng.uniform(0.05, 0.2, size=2)
    phase = rng.uniform(0, 2 * np.pi, size=2)
    texture = 0.04 * (np.sin(freq[0] * xx + phase[0]) + np.sin(freq[1] * yy + phase[1]))
    image = colors[0] + texture[..., None]
    gt = np.zeros((h, w), dtype=np.int64)

    jobs = [c for c in range(1, num_classes + 1) for _ in range(shapes_per_class)]
    rng.shuffle(jobs)
    for c in jobs:
        sh, sw = rng.integers(h // 8, h // 3 + 1), rng.integers(w // 8, w // 3 + 1)
        y0, x0 = rng.integers(0, h - sh + 1), rng.integers(0, w - sw + 1)
        if rng.random() < 0.5:
            mask = (yy >= y0) & (yy < y0 + sh) & (xx >= x0) & (xx < x0 + sw)
        else:
            cy, cx = y0 + (sh - 1) / 2, x0 + (sw - 1) / 2
            mask = ((yy - cy) / (sh / 2)) ** 2 + ((xx - cx) / (sw / 2)) ** 2 <= 1.0
        gt[mask] = c
        image[mask] = colors[c]

    image = image + rng.uniform(-0.05, 0.05, size=image.shape)
    return np.clip(image, 0.0, 1.0), gt


def make_scene(seed, num_classes=3, h=128, w=128, shapes_per_class=2) -> SyntheticScene:
    """Coloured rectangles and ellipses per class on a textured background."""
    if num_classes < 1:
        raise InvalidInputError("num_classes must be >= 1")
    if h < 32 or w < 32:
        raise InvalidInputError("scene dimensions must be >= 32")
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng([seed, 1, attempt])
        image, gt = _attempt(rng, num_classes, h, w, shapes_per_class)
        if shapes_per_class == 0:
            return SyntheticScene(image, gt, num_classes, seed)
        frac = np.bincount(gt.ravel(), minlength=num_classes + 1) / gt.size
        if frac[0] > 0 and np.all(frac[1:] >= MIN_OCCUPANCY):
            return SyntheticScene(image, gt, num_classes, seed)
    raise GenerationError(f"seed {seed}: occupancy constraint unmet after {MAX_ATTEMPTS} attempts")


def downsample_labels(gt, stride):
    """Sample each stride x stride cell at its centre pixel."""
    off = stride // 2
    return np.asarray(gt)[off::stride, off::stride]


def simulate_cams(scene: SyntheticScene, blur_radius=0, miss_rate=0.0, noise=0.0, stride=4):
    """Activation maps (C, h, w) in [0, 1] degraded from the ground truth.

    Indicator at feature resolution, then box blur, then each connected
    activated blob is dropped with probability ``miss_rate``, then Gaussian
    noise truncated at three standard deviations is added and the result clipped.
    """
    if blur_radius < 0 or not 0.0 <= miss_rate <= 1.0 or noise < 0:
        raise InvalidInputError("invalid CAM simulation parameters")
    rng = np.random.default_rng([scene.seed, 2])
    small = downsample_labels(scene.gt, stride)
    cams = np.zeros((scene.num_classes,) + small.shape)
    for c in range(1, scene.num_classes + 1):
        m = (small == c).astype(np.float64)
        if blur_radius > 0:
            m = ndimage.uniform_filter(m, size=2 * blur_radius + 1, mode="constant")
        blobs, count = ndimage.label(m > 0)
        drop = rng.random(count) < miss_rate
        if drop.any():
            m[np.isin(blobs, np.flatnonzero(drop) + 1)] = 0.0
        cams[c - 1] = m
    if noise > 0:
        eps = np.clip(rng.normal(0.0, noise, size=cams.shape), -3 * noise, 3 * noise)
        cams = cams + eps
    return np.clip(cams, 0.0, 1.0)


def simulate_features(scene: SyntheticScene, dim=16, class_sep=4.0, noise_sigma=1.0, stride=4):
    """Class-mean node features plus isotropic Gaussian noise."""
    rng = np.random.default_rng([scene.seed, 3])
    means = rng.normal(size=(scene.num_classes + 1, dim))
    means *= class_sep / np.linalg.norm(means, axis=1, keepdims=True)
    small = downsample_labels(scene.gt, stride)
    h, w = small.shape
    feats = means[small.ravel()] + rng.normal(0.0, noise_sigma, size=(h * w, dim))
    return FeatureGrid(h, w, feats)


def background_map(cams, alpha):
    if alpha <= 0:
        raise InvalidInputError("alpha must be positive")
    return (1.0 - np.max(cams, axis=0)) ** alpha


def consistency_partial_labels(cams, alpha_low=4.0, alpha_high=32.0, confidence_threshold=0.3):
    """Label nodes on which the low- and high-alpha score stacks agree.

    The agreed class must also score at least ``confidence_threshold`` in the
    low-alpha stack; other nodes are ignored.
    """
    if not alpha_low < alpha_high:
        raise InvalidInputError("alpha_low must be below alpha_high")
    cams = np.asarray(cams, dtype=np.float64)
    c, h, w = cams.shape
    low = np.concatenate([background_map(cams, alpha_low)[None], cams])
    high = np.concatenate([background_map(cams, alpha_high)[None], cams])
    arg_low = np.argmax(low, axis=0)
    arg_high = np.argmax(high, axis=0)
    score = np.take_along_axis(low, arg_low[None], axis=0)[0]
    labels = np.where((arg_low == arg_high) & (score >= confidence_threshold), arg_low, IGNORED)
    return PartialLabelGrid(h, w, c, labels.ravel())
