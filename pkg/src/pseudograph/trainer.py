"""Per-image semi-supervised GCN training."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidInputError, TrainingDivergedError
from .gcn import AdamState, ClassProbGrid, DropoutPlan, GcnParams, adam_step, backward, forward, init_params
from .graph import FeatureGrid, GuidanceImage, PartialLabelGrid, SelfAugmentedAffinity, build_laplacian_kernel
from .losses import LossBreakdown, LossWeights, total_loss


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 250
    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.3
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    use_ent: bool = True
    use_lp: bool = True
    hidden: int = 16
    normalize_adj: bool = False
    lp_window: int = 5
    lp_sigma1: float = float(np.sqrt(3.0))
    lp_sigma2: float = 10.0
    lp_color_scale: float = 1.0

    def __post_init__(self):
        if self.steps < 1:
            raise InvalidInputError("steps must be >= 1")

    def as_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    trace: list  # LossBreakdown per step
    params: GcnParams
    probs: ClassProbGrid
    wall_time: float


def train_image(aff: SelfAugmentedAffinity, fg: FeatureGrid, guidance: GuidanceImage | None,
                p: PartialLabelGrid, cfg: TrainConfig = TrainConfig()) -> TrainReport:
    n = fg.num_nodes
    if aff.num_nodes != n or p.labels.shape[0] != n:
        raise InvalidInputError("affinity, features and labels disagree on node count")
    if len(p.fg_nodes) + len(p.bg_nodes) == 0:
        raise InvalidInputError("degenerate supervision: no labeled nodes")
    start = time.perf_counter()
    phi = None
    if cfg.use_lp:
        if guidance is None or guidance.pixels.shape[0] != n:
            raise InvalidInputError("laplacian term needs a guidance image on the feature grid")
        phi = build_laplacian_kernel(guidance, cfg.lp_window, cfg.lp_sigma1, cfg.lp_sigma2,
                                     cfg.lp_color_scale)

    params = init_params(fg.dim, p.num_classes + 1, cfg.seed, cfg.hidden)
    state = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    plan = DropoutPlan(cfg.dropout, cfg.seed)
    trace: list[LossBreakdown] = []
    for step in range(cfg.steps):
        probs, cache = forward(aff, fg, params, plan, step=step, normalize=cfg.normalize_adj)
        parts, grad = total_loss(probs.probs, p, phi, cfg.weights, cfg.use_ent, cfg.use_lp)
        if not np.isfinite(parts.total):
            raise TrainingDivergedError("non-finite loss", step, trace)
        trace.append(parts)
        try:
            adam_step(params, backward(cache, grad), state)
        except TrainingDivergedError as err:
            raise TrainingDivergedError("non-finite gradient", step, trace) from err
    final, _ = forward(aff, fg, params, None, normalize=cfg.normalize_adj)
    return TrainReport(trace, params, final, time.perf_counter() - start)
