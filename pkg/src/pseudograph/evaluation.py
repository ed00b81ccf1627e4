"""Confusion matrices, mIoU, and the loss-ablation / baseline comparison harness."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, UndefinedMetricError

log = logging.getLogger(__name__)


def confusion(gt, pred, num_classes) -> np.ndarray:
    """K x K counts; entry (g, p) = pixels with ground truth g predicted p."""
    g = np.asarray(getattr(gt, "labels", gt), dtype=np.int64)
    p = np.asarray(getattr(pred, "labels", pred), dtype=np.int64)
    if g.shape != p.shape:
        raise InvalidInputError(f"label grids differ in shape: {g.shape} vs {p.shape}")
    k = num_classes
    if g.size and (min(g.min(), p.min()) < 0 or max(g.max(), p.max()) >= k):
        raise InvalidInputError(f"label outside 0..{k - 1}")
    return np.bincount(k * g.ravel() + p.ravel(), minlength=k * k).reshape(k, k)


def miou(cm):
    """Returns ``(mean, per_class)``; classes with a zero denominator are NaN and excluded."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    denom = cm.sum(axis=0) + cm.sum(axis=1) - tp
    present = denom > 0
    if not present.any():
        raise UndefinedMetricError("no class present in ground truth or prediction")
    iou = np.full(len(tp), np.nan)
    iou[present] = tp[present] / denom[present]
    return float(iou[present].mean()), iou


# name -> (use_ent, use_lp, refine)
ABLATION_CONFIGS = {
    "base": (False, False, False),
    "base+ent": (True, False, False),
    "base+lp": (False, True, False),
    "base+ent+lp": (True, True, False),
    "base+ent+lp+refine": (True, True, True),
}


@dataclass
class SceneRecord:
    scene_id: str
    config: str
    miou: float
    per_class_iou: list
    seed: int
    config_hash: str

    def as_dict(self):
        return {"scene_id": self.scene_id, "config": self.config, "miou": self.miou,
                "per_class_iou": self.per_class_iou, "seed": self.seed,
                "config_hash": self.config_hash}


def score_labels(gt, pred, num_classes):
    m, per = miou(confusion(gt, pred, num_classes))
    return m, [None if np.isnan(v) else float(v) for v in per]


def ablate_scene(data, train_cfg, refine_cfg, baseline_cfg=None, configs=ABLATION_CONFIGS):
    """All ablation configurations (and optionally the baseline) on one scene.

    Runs sharing the same loss mask reuse one training run.
    """
    from .pipeline import refine_and_label, run_baseline, train_scene

    k = data.num_classes + 1
    trained = {}
    out = {}
    for name, (use_ent, use_lp, refine) in configs.items():
        key = (use_ent, use_lp)
        if key not in trained:
            trained[key] = train_scene(data, replace(train_cfg, use_ent=use_ent, use_lp=use_lp))
        labels = refine_and_label(trained[key].probs, data.image, replace(refine_cfg, enabled=refine))
        out[name] = score_labels(data.gt, labels, k)
    if baseline_cfg is not None:
        out["random-walk"] = score_labels(data.gt, run_baseline(data, baseline_cfg, refine_cfg), k)
    return out


def summarize(records):
    """Mean mIoU per configuration over scenes, in first-seen configuration order."""
    table = {}
    for r in records:
        table.setdefault(r.config, []).append(r.miou)
    return {name: {"mean_miou": float(np.mean(v)), "scenes": len(v)} for name, v in table.items()}
