"""Per-image graph types and kernel constructors.

Nodes live on a ``height x width`` feature grid and are enumerated row-major:
node ``i = y * width + x``. Every module uses this enumeration.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidInputError
from .numeric import SparseMatrix, as_dense

IGNORED = -1
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    height: int
    width: int
    features: np.ndarray  # (N, D)

    def __post_init__(self):
        f = as_dense(self.features, "features")
        if f.shape[0] != self.height * self.width:
            raise InvalidInputError(
                f"{f.shape[0]} feature rows for a {self.height}x{self.width} grid"
            )
        if not np.all(np.isfinite(f)):
            raise InvalidInputError("non-finite node feature")
        object.__setattr__(self, "features", f)

    @property
    def num_nodes(self):
        return self.height * self.width

    @property
    def dim(self):
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class GuidanceImage:
    height: int
    width: int
    pixels: np.ndarray  # (N, 3), channels in [0, 1]

    def __post_init__(self):
        p = as_dense(self.pixels, "pixels")
        if p.shape != (self.height * self.width, 3):
            raise InvalidInputError(f"guidance pixels have shape {p.shape}")
        if p.min(initial=0.0) < 0.0 or p.max(initial=0.0) > 1.0:
            raise InvalidInputError("guidance pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", p)

    @classmethod
    def from_rgb(cls, rgb):
        rgb = np.asarray(rgb, dtype=np.float64)
        h, w, _ = rgb.shape
        return cls(h, w, rgb.reshape(h * w, 3))


@dataclass(frozen=True, eq=False)
class PartialLabelGrid:
    """Node labels: 0 is background, 1..num_classes foreground, ``IGNORED`` unlabeled."""

    height: int
    width: int
    num_classes: int
    labels: np.ndarray  # (N,) int64

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64).ravel()
        if lab.shape[0] != self.height * self.width:
            raise InvalidInputError("label count does not match grid size")
        bad = (lab != IGNORED) & ((lab < 0) | (lab > self.num_classes))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise InvalidInputError(f"label {lab[i]} at node {i} outside 0..{self.num_classes}")
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)

    @property
    def fg_nodes(self):
        return np.flatnonzero(self.labels > 0)

    @property
    def bg_nodes(self):
        return np.flatnonzero(self.labels == 0)

    @property
    def ignored_nodes(self):
        return np.flatnonzero(self.labels == IGNORED)

    def as_grid(self):
        return self.labels.reshape(self.height, self.width)


@dataclass(frozen=True, eq=False)
class SelfAugmentedAffinity:
    a: SparseMatrix
    a_tilde: SparseMatrix

    @property
    def num_nodes(self):
        return self.a.shape[0]

    @cached_property
    def sym_normalized(self):
        """``D^-1/2 (A + I) D^-1/2``; only used when normalisation is requested."""
        d = self.a_tilde.row_sums()
        inv = 1.0 / np.sqrt(d)
        t = self.a_tilde
        return SparseMatrix.from_triplets(
            t.rows, t.cols, t.values * inv[t.rows] * inv[t.cols], t.shape
        )


def validate_affinity(a: SparseMatrix):
    n, m = a.shape
    if n != m:
        raise InvalidInputError(f"affinity must be square, got {a.shape}")
    neg = np.flatnonzero(a.values < 0)
    if len(neg):
        k = neg[0]
        raise InvalidInputError(f"negative affinity at ({a.rows[k]}, {a.cols[k]})")
    diag = np.flatnonzero(a.rows == a.cols)
    if len(diag):
        k = diag[0]
        raise InvalidInputError(f"nonzero affinity diagonal at ({a.rows[k]}, {a.cols[k]})")
    gap, where = a.asymmetry()
    if gap > SYMMETRY_TOL:
        raise InvalidInputError(f"affinity asymmetric by {gap:.3g} at {where}")


def build_self_augmented(a: SparseMatrix) -> SelfAugmentedAffinity:
    validate_affinity(a)
    return SelfAugmentedAffinity(a, a + SparseMatrix.identity(a.shape[0]))


def grid_offsets(radius, include_self=False):
    """Half of the (2r+1)^2 window: one offset per unordered node pair."""
    offs = [(dy, dx) for dy in range(0, radius + 1) for dx in range(-radius, radius + 1)
            if dy > 0 or dx > 0]
    if include_self:
        offs.insert(0, (0, 0))
    return offs


def _pair_indices(height, width, dy, dx):
    """Node indices (i, j) for every in-bounds pair with j = i shifted by (dy, dx)."""
    ys = np.arange(max(0, -dy), min(height, height - dy))
    xs = np.arange(max(0, -dx), min(width, width - dx))
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    i = (yy * width + xx).ravel()
    j = ((yy + dy) * width + (xx + dx)).ravel()
    return i, j


def _symmetric_window(height, width, radius, weight_fn, with_diagonal):
    rows, cols, vals = [], [], []
    for dy, dx in grid_offsets(radius):
        i, j = _pair_indices(height, width, dy, dx)
        if len(i) == 0:
            continue
        w = weight_fn(i, j, dy, dx)
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
    n = height * width
    if with_diagonal:
        idx = np.arange(n)
        rows.append(idx)
        cols.append(idx)
        vals.append(np.ones(n))
    if not rows:
        return SparseMatrix.zeros(n)
    return SparseMatrix.from_triplets(np.concatenate(rows), np.concatenate(cols),
                                      np.concatenate(vals), (n, n))


def build_laplacian_kernel(img: GuidanceImage, window=5, sigma1=np.sqrt(3.0), sigma2=10.0,
                           color_scale=1.0) -> SparseMatrix:
    """Bilateral colour/position kernel over a ``window x window`` neighbourhood.

    Includes the self-term (weight 1). Positions are feature-grid pixel units;
    ``color_scale`` multiplies the [0, 1] channel values before distances are taken.
    """
    if window < 1 or window % 2 == 0:
        raise InvalidInputError(f"window must be odd and >= 1, got {window}")
    if sigma1 <= 0 or sigma2 <= 0:
        raise InvalidInputError("kernel bandwidths must be positive")
    px = img.pixels * color_scale

    def weight(i, j, dy, dx):
        c2 = np.sum((px[i] - px[j]) ** 2, axis=1)
        return np.exp(-c2 / (2 * sigma1 ** 2) - (dy * dy + dx * dx) / (2 * sigma2 ** 2))

    return _symmetric_window(img.height, img.width, window // 2, weight, with_diagonal=True)


def affinity_from_features(fg: FeatureGrid, radius=1, gamma=1.0) -> SparseMatrix:
    """Gaussian feature affinity between nodes within Chebyshev distance ``radius``."""
    if radius < 1:
        raise InvalidInputError("radius must be >= 1")
    if gamma <= 0:
        raise InvalidInputError("gamma must be positive")
    v = fg.features

    def weight(i, j, dy, dx):
        return np.exp(-gamma * np.sum((v[i] - v[j]) ** 2, axis=1))

    return _symmetric_window(fg.height, fg.width, radius, weight, with_diagonal=False)
