"""Two-layer graph convolutional network with hand-written backprop and Adam.

    Q = softmax(A~ relu(A~ V W1) W2),   A~ = A + I

Dropout (inverted) is applied to the input features and to the hidden
activations while training.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, TrainingDivergedError
from .fileio import read_tensor, write_tensor
from .graph import FeatureGrid, SelfAugmentedAffinity
from .numeric import as_dense, gemm, relu, row_softmax, spmm

HIDDEN = 16


@dataclass
class GcnParams:
    w1: np.ndarray  # (D, hidden)
    w2: np.ndarray  # (hidden, K)

    @property
    def num_classes(self):
        return self.w2.shape[1]

    @property
    def hidden(self):
        return self.w1.shape[1]

    def copy(self):
        return GcnParams(self.w1.copy(), self.w2.copy())


@dataclass(frozen=True, eq=False)
class ClassProbGrid:
    height: int
    width: int
    probs: np.ndarray  # (N, K)

    @property
    def num_classes(self):
        return self.probs.shape[1]


@dataclass
class AdamState:
    lr: float = 0.01
    weight_decay: float = 5e-4
    beta_m1: float = 0.9
    beta_m2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m1: list = field(default_factory=list)
    m2: list = field(default_factory=list)


@dataclass(frozen=True)
class DropoutPlan:
    """Inverted dropout on the input features and hidden activations.

    Masks are drawn from a generator keyed on ``(seed, step, layer)`` so a run
    is reproducible while masks still change from step to step.
    """

    rate: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise InvalidInputError(f"dropout rate must be in [0, 1), got {self.rate}")

    def mask(self, shape, step, layer):
        if self.rate == 0.0:
            return None
        rng = np.random.default_rng([self.seed, step, layer])
        keep = rng.random(shape) >= self.rate
        return keep / (1.0 - self.rate)


@dataclass
class ForwardCache:
    prop: object
    x0: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    mask1: np.ndarray | None
    q: np.ndarray
    w2: np.ndarray
    shapes: tuple


def init_params(dim, num_classes, seed, hidden=HIDDEN) -> GcnParams:
    """Glorot-uniform weights from a seeded generator."""
    rng = np.random.default_rng([seed, 0x6C])

    def glorot(n_in, n_out):
        lim = np.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-lim, lim, size=(n_in, n_out))

    return GcnParams(glorot(dim, hidden), glorot(hidden, num_classes))


def propagation_matrix(aff: SelfAugmentedAffinity, normalize=False):
    return aff.sym_normalized if normalize else aff.a_tilde


def forward(aff: SelfAugmentedAffinity, fg: FeatureGrid, params: GcnParams,
            dropout: DropoutPlan | None = None, step=0, normalize=False):
    """Returns ``(ClassProbGrid, ForwardCache)``; pass ``dropout=None`` for inference."""
    n, d = fg.features.shape
    if aff.num_nodes != n:
        raise InvalidInputError(f"affinity has {aff.num_nodes} nodes, features {n}")
    if params.w1.shape[0] != d or params.w1.shape[1] != params.w2.shape[0]:
        raise InvalidInputError(
            f"weight shapes {params.w1.shape}, {params.w2.shape} do not fit feature dim {d}"
        )
    prop = propagation_matrix(aff, normalize)
    x0 = fg.features
    mask1 = None
    if dropout is not None:
        m0 = dropout.mask(x0.shape, step, 0)
        if m0 is not None:
            x0 = x0 * m0
            mask1 = dropout.mask((n, params.hidden), step, 1)
    z1 = spmm(prop, gemm(x0, params.w1))
    h1 = relu(z1)
    if mask1 is not None:
        h1 = h1 * mask1
    z2 = spmm(prop, gemm(h1, params.w2))
    q = row_softmax(z2)
    cache = ForwardCache(prop, x0, z1, h1, mask1, q, params.w2,
                         (n, d, params.hidden, params.num_classes))
    return ClassProbGrid(fg.height, fg.width, q), cache


def backward(cache: ForwardCache, grad_q):
    """Gradients of a scalar loss w.r.t. ``(W1, W2)`` given ``dL/dQ``."""
    g = as_dense(grad_q, "grad_q")
    if g.shape != cache.q.shape:
        raise InvalidInputError(f"gradient shape {g.shape} does not match Q {cache.q.shape}")
    q = cache.q
    dz2 = q * (g - np.sum(g * q, axis=1, keepdims=True))
    # prop is symmetric, so prop^T = prop
    dy2 = spmm(cache.prop, dz2)
    dw2 = gemm(cache.h1.T, dy2)
    dh1 = gemm(dy2, cache.w2.T)
    if cache.mask1 is not None:
        dh1 = dh1 * cache.mask1
    dz1 = np.where(cache.z1 > 0.0, dh1, 0.0)
    dy1 = spmm(cache.prop, dz1)
    dw1 = gemm(cache.x0.T, dy1)
    return dw1, dw2


def adam_step(params: GcnParams, grads, state: AdamState):
    """One Adam update with L2 weight decay folded into the gradient. Mutates in place."""
    tensors = [params.w1, params.w2]
    if len(grads) != len(tensors) or any(g.shape != t.shape for g, t in zip(grads, tensors)):
        raise InvalidInputError("gradient shapes do not match parameters")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("non-finite gradient", state.step)
    if not state.m1:
        state.m1 = [np.zeros_like(t) for t in tensors]
        state.m2 = [np.zeros_like(t) for t in tensors]
    state.step += 1
    b1, b2 = state.beta_m1, state.beta_m2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for t, g, m, v in zip(tensors, grads, state.m1, state.m2):
        g = g + state.weight_decay * t
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def save_checkpoint(directory, params: GcnParams, seed):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensor(directory / "w1.pgt1", params.w1)
    write_tensor(directory / "w2.pgt1", params.w2)
    meta = {"hidden": params.hidden, "classes": params.num_classes, "seed": seed}
    (directory / "checkpoint.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(directory):
    directory = Path(directory)
    meta = json.loads((directory / "checkpoint.json").read_text())
    params = GcnParams(read_tensor(directory / "w1.pgt1"), read_tensor(directory / "w2.pgt1"))
    if params.hidden != meta["hidden"] or params.num_classes != meta["classes"]:
        raise InvalidInputError(f"{directory}: checkpoint sidecar disagrees with tensors")
    return params, meta
