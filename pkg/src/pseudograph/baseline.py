"""Random-walk propagation of class scores (the label-propagation baseline)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .gcn import ClassProbGrid
from .numeric import SparseMatrix, spmm
from .refine import argmax_labels, bilinear_upsample, meanfield_refine


@dataclass(frozen=True, eq=False)
class ScoreGrid:
    height: int
    width: int
    scores: np.ndarray  # (N, K), non-negative

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] != self.height * self.width:
            raise InvalidInputError(f"score array {s.shape} does not fit a {self.height}x{self.width} grid")
        if not np.all(np.isfinite(s)) or s.min(initial=0.0) < 0:
            raise InvalidInputError("scores must be finite and non-negative")
        object.__setattr__(self, "scores", s)

    @classmethod
    def from_stack(cls, stack):
        """From a channel-first (K, H, W) array."""
        k, h, w = stack.shape
        return cls(h, w, np.asarray(stack, dtype=np.float64).reshape(k, h * w).T)

    def to_stack(self):
        return self.scores.T.reshape(-1, self.height, self.width)


def transition_matrix(a: SparseMatrix, hadamard_beta=8.0) -> SparseMatrix:
    """Row-normalised elementwise power of ``a + I``."""
    if hadamard_beta < 1:
        raise InvalidInputError("hadamard_beta must be >= 1")
    if a.nnz and a.values.min() < 0:
        raise InvalidInputError("affinity must be non-negative")
    base = a + SparseMatrix.identity(a.shape[0])
    powered = base.map_values(lambda v: v ** hadamard_beta)
    return powered.scale_rows(1.0 / powered.row_sums())


def random_walk_propagate(scores: ScoreGrid, t_matrix: SparseMatrix, iters=16) -> ScoreGrid:
    if iters < 0:
        raise InvalidInputError("iters must be >= 0")
    if t_matrix.shape != (scores.scores.shape[0],) * 2:
        raise InvalidInputError("transition matrix does not match score grid")
    s = scores.scores
    for _ in range(iters):
        s = spmm(t_matrix, s)
    return ScoreGrid(scores.height, scores.width, s)


def scores_to_probs(scores: ScoreGrid) -> ClassProbGrid:
    """Normalise score rows to the simplex; an all-zero row becomes uniform."""
    s = scores.scores
    tot = s.sum(axis=1, keepdims=True)
    k = s.shape[1]
    probs = np.where(tot > 0, s / np.where(tot > 0, tot, 1.0), 1.0 / k)
    return ClassProbGrid(scores.height, scores.width, probs)


def baseline_complete_labels(scores: ScoreGrid, t_matrix, iters, guidance, out_h, out_w,
                             refine_iters=5, **refine_kw):
    """Propagate, upsample, refine, argmax. ``guidance`` is the full-resolution RGB image."""
    walked = random_walk_propagate(scores, t_matrix, iters)
    up = bilinear_upsample(scores_to_probs(walked), out_h, out_w)
    if guidance is not None and refine_iters:
        up = meanfield_refine(up, guidance, refine_iters, **refine_kw)
    return argmax_labels(up)
