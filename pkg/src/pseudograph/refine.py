"""Feature-grid probabilities to full-resolution complete labels.

Bilinear upsampling, a windowed bilateral mean-field smoother standing in for
a dense CRF, and per-pixel argmax.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .gcn import ClassProbGrid
from .losses import EPS


@dataclass(frozen=True, eq=False)
class FullResProbMap:
    probs: np.ndarray  # (H, W, K)

    @property
    def shape(self):
        return self.probs.shape


@dataclass(frozen=True, eq=False)
class CompleteLabelGrid:
    labels: np.ndarray  # (H, W) int64, values 0..K-1

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.ndim != 2:
            raise InvalidInputError("label grid must be 2-D")
        if lab.size and lab.min() < 0:
            raise InvalidInputError("complete labels cannot contain ignored entries")
        object.__setattr__(self, "labels", lab)

    @property
    def shape(self):
        return self.labels.shape


def _axis_weights(n_in, n_out):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(arr, out_h, out_w):
    """Resize an (H, W, C) array with half-pixel-centre sampling and edge clamping."""
    a = np.asarray(arr, dtype=np.float64)
    if out_h < 1 or out_w < 1:
        raise InvalidInputError(f"output size must be positive, got {out_h}x{out_w}")
    h, w = a.shape[:2]
    y0, y1, fy = _axis_weights(h, out_h)
    x0, x1, fx = _axis_weights(w, out_w)
    fy = fy[:, None, None]
    rows = a[y0] * (1.0 - fy) + a[y1] * fy
    fx = fx[None, :, None]
    return rows[:, x0] * (1.0 - fx) + rows[:, x1] * fx


def bilinear_upsample(q: ClassProbGrid, out_h, out_w) -> FullResProbMap:
    if out_h < 1 or out_w < 1:
        raise InvalidInputError(f"output size must be positive, got {out_h}x{out_w}")
    if out_h < q.height or out_w < q.width:
        raise InvalidInputError("upsampling target is smaller than the feature grid")
    grid = q.probs.reshape(q.height, q.width, -1)
    up = resize_bilinear(grid, out_h, out_w)
    return FullResProbMap(up / up.sum(axis=2, keepdims=True))


def _window_kernels(image, window, sigma_color, sigma_xy):
    """Per-offset bilateral weights, zero where the neighbour falls outside the image."""
    h, w, _ = image.shape
    r = window // 2
    kernels = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            k = np.zeros((h, w))
            ys = slice(max(0, -dy), min(h, h - dy))
            xs = slice(max(0, -dx), min(w, w - dx))
            ys_n = slice(ys.start + dy, ys.stop + dy)
            xs_n = slice(xs.start + dx, xs.stop + dx)
            c2 = np.sum((image[ys, xs] - image[ys_n, xs_n]) ** 2, axis=2)
            k[ys, xs] = np.exp(-c2 / (2 * sigma_color ** 2) - (dy * dy + dx * dx) / (2 * sigma_xy ** 2))
            kernels.append((dy, dx, ys, xs, ys_n, xs_n, k[ys, xs][..., None]))
    return kernels


def meanfield_refine(probs: FullResProbMap, image, iters=5, window=7,
                     sigma_color=np.sqrt(3.0), sigma_xy=10.0, w_pair=1.0) -> FullResProbMap:
    """Iterate ``q_i <- softmax(log q0_i + w_pair * sum_j k(i, j) q_j)`` over a square window."""
    if window < 1 or window % 2 == 0:
        raise InvalidInputError(f"window must be odd and >= 1, got {window}")
    if iters < 0:
        raise InvalidInputError("iters must be >= 0")
    image = np.asarray(image, dtype=np.float64)
    q0 = probs.probs
    if image.shape[:2] != q0.shape[:2]:
        raise InvalidInputError(f"image {image.shape[:2]} and probabilities {q0.shape[:2]} differ")
    if iters == 0:
        return probs
    unary = np.log(np.maximum(q0, EPS))
    kernels = _window_kernels(image, window, sigma_color, sigma_xy)
    q = q0
    for _ in range(iters):
        msg = np.zeros_like(q)
        for _, _, ys, xs, ys_n, xs_n, k in kernels:
            msg[ys, xs] += k * q[ys_n, xs_n]
        logits = unary + w_pair * msg
        logits -= logits.max(axis=2, keepdims=True)
        e = np.exp(logits)
        q = e / e.sum(axis=2, keepdims=True)
    return FullResProbMap(q)


def argmax_labels(probs: FullResProbMap) -> CompleteLabelGrid:
    """Per-pixel argmax; ties go to the lowest class index."""
    return CompleteLabelGrid(np.argmax(probs.probs, axis=2))
