"""Training losses on class probabilities and their gradients w.r.t. Q.

Every loss function returns ``(value, grad)`` where ``grad`` has the shape of
``q``. The chain rule through the softmax lives in :mod:`pseudograph.gcn`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .graph import PartialLabelGrid
from .numeric import SparseMatrix, as_dense

EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    beta1: float = 10.0  # entropy
    beta2: float = 1e-2  # laplacian

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 < 0:
            raise InvalidInputError("loss weights must be non-negative")


@dataclass(frozen=True)
class LossBreakdown:
    fg: float
    bg: float
    ent: float
    lp: float
    total: float

    @classmethod
    def from_terms(cls, fg, bg, ent, lp, weights: LossWeights):
        return cls(fg, bg, ent, lp, fg + bg + weights.beta1 * ent + weights.beta2 * lp)

    def as_dict(self):
        return {"fg": self.fg, "bg": self.bg, "ent": self.ent, "lp": self.lp, "total": self.total}


def _check(q, p):
    q = as_dense(q, "q")
    if q.shape[0] != p.labels.shape[0]:
        raise InvalidInputError(f"q has {q.shape[0]} rows but labels cover {p.labels.shape[0]} nodes")
    if q.shape[1] != p.num_classes + 1:
        raise InvalidInputError(
            f"q has {q.shape[1]} classes, labels imply {p.num_classes + 1}"
        )
    return q


def _cross_entropy(q, labels, nodes):
    grad = np.zeros_like(q)
    if len(nodes) == 0:
        return 0.0, grad
    raw = q[nodes, labels[nodes]]
    picked = np.maximum(raw, EPS)
    n = len(nodes)
    # the clamped log is flat below EPS
    grad[nodes, labels[nodes]] = np.where(raw >= EPS, -1.0 / (n * picked), 0.0)
    return float(-np.log(picked).sum() / n) + 0.0, grad


def loss_fg(q, p: PartialLabelGrid):
    q = _check(q, p)
    return _cross_entropy(q, p.labels, p.fg_nodes)


def loss_bg(q, p: PartialLabelGrid):
    q = _check(q, p)
    return _cross_entropy(q, p.labels, p.bg_nodes)


def loss_entropy(q, p: PartialLabelGrid):
    q = _check(q, p)
    nodes = p.ignored_nodes
    grad = np.zeros_like(q)
    if len(nodes) == 0:
        return 0.0, grad
    rows = q[nodes]
    logs = np.log(np.maximum(rows, EPS))
    n = len(nodes)
    grad[nodes] = -(logs + (rows >= EPS)) / n
    return float(-(rows * logs).sum() / n) + 0.0, grad


def loss_laplacian(q, phi: SparseMatrix):
    q = as_dense(q, "q")
    n = q.shape[0]
    if phi.shape != (n, n):
        raise InvalidInputError(f"phi shape {phi.shape} does not match {n} nodes")
    gap, where = phi.asymmetry()
    if gap > 1e-12:
        raise InvalidInputError(f"phi asymmetric by {gap:.3g} at {where}")
    diff = q[phi.rows] - q[phi.cols]
    value = float(np.dot(phi.values, np.einsum("ij,ij->i", diff, diff)) / (2 * n))
    grad = phi.row_sums()[:, None] * q - phi.csr @ q
    return value, grad * (2.0 / n)


def total_loss(q, p: PartialLabelGrid, phi, weights: LossWeights, use_ent=True, use_lp=True):
    """Weighted sum of the four terms. Masked terms report 0; ``phi`` may be None if lp is off."""
    fg, g_fg = loss_fg(q, p)
    bg, g_bg = loss_bg(q, p)
    grad = g_fg + g_bg
    ent = lp = 0.0
    if use_ent:
        ent, g = loss_entropy(q, p)
        grad += weights.beta1 * g
    if use_lp:
        if phi is None:
            raise InvalidInputError("laplacian term enabled but no kernel given")
        lp, g = loss_laplacian(q, phi)
        grad += weights.beta2 * g
    return LossBreakdown.from_terms(fg, bg, ent, lp, weights), grad
