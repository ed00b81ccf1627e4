"""Scene directories and the end-to-end per-scene jobs.

A scene directory holds::

    image.ppm  gt.pgl1  cams.pgt1  features.pgt1  affinity.pgs1  partial.pgl1  manifest.json

``cams.pgt1`` is (C, h, w); ``features.pgt1`` is (h, w, D).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from .baseline import ScoreGrid, baseline_complete_labels, transition_matrix
from .graph import FeatureGrid, GuidanceImage, PartialLabelGrid, affinity_from_features, build_self_augmented
from .numeric import SparseMatrix
from .refine import CompleteLabelGrid, argmax_labels, bilinear_upsample, meanfield_refine, resize_bilinear
from .synth import (background_map, consistency_partial_labels, make_scene, simulate_cams,
                    simulate_features)
from .trainer import TrainConfig, TrainReport, train_image


@dataclass(frozen=True)
class SynthConfig:
    size: int = 128
    num_classes: int = 3
    shapes_per_class: int = 2
    stride: int = 4
    feature_dim: int = 16
    class_sep: float = 4.0
    feature_noise: float = 1.0
    cam_blur: int = 1
    cam_miss: float = 0.0
    cam_noise: float = 0.02
    affinity_radius: int = 1
    affinity_gamma: float = 0.03125  # 1 / (2 * dim * noise^2)
    alpha_low: float = 4.0
    alpha_high: float = 32.0
    confidence: float = 0.3


@dataclass(frozen=True)
class RefineConfig:
    enabled: bool = True
    iters: int = 5
    window: int = 7
    sigma_color: float = float(np.sqrt(3.0))
    sigma_xy: float = 10.0
    w_pair: float = 1.0


@dataclass(frozen=True)
class BaselineConfig:
    hadamard_beta: float = 8.0
    iters: int = 16
    bg_alpha: float = 16.0


@dataclass(frozen=True, eq=False)
class SceneData:
    scene_id: str
    image: np.ndarray  # (H, W, 3)
    gt: np.ndarray  # (H, W)
    num_classes: int
    cams: np.ndarray  # (C, h, w)
    features: FeatureGrid
    affinity: SparseMatrix
    partial: PartialLabelGrid
    meta: dict = field(default_factory=dict)

    @property
    def full_shape(self):
        return self.gt.shape

    def guidance(self) -> GuidanceImage:
        small = resize_bilinear(self.image, self.features.height, self.features.width)
        return GuidanceImage.from_rgb(np.clip(small, 0.0, 1.0))


def build_scene(seed, cfg: SynthConfig = SynthConfig(), scene_id=None) -> SceneData:
    scene = make_scene(seed, cfg.num_classes, cfg.size, cfg.size, cfg.shapes_per_class)
    cams = simulate_cams(scene, cfg.cam_blur, cfg.cam_miss, cfg.cam_noise, cfg.stride)
    feats = simulate_features(scene, cfg.feature_dim, cfg.class_sep, cfg.feature_noise, cfg.stride)
    aff = affinity_from_features(feats, cfg.affinity_radius, cfg.affinity_gamma)
    partial = consistency_partial_labels(cams, cfg.alpha_low, cfg.alpha_high, cfg.confidence)
    meta = {"seed": seed, "synth": asdict(cfg)}
    image = _image_bytes(scene.image) / 255.0  # quantised so a saved scene reloads identically
    return SceneData(scene_id or f"scene_{seed:05d}", image, scene.gt, cfg.num_classes,
                     cams, feats, aff, partial, meta)


def _image_bytes(image):
    return np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)


def save_scene(directory, data: SceneData):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    fileio.write_ppm(d / "image.ppm", _image_bytes(data.image))
    fileio.write_labels(d / "gt.pgl1", data.gt, data.num_classes)
    fileio.write_tensor(d / "cams.pgt1", data.cams)
    f = data.features
    fileio.write_tensor(d / "features.pgt1", f.features.reshape(f.height, f.width, f.dim))
    fileio.write_sparse(d / "affinity.pgs1", data.affinity)
    fileio.write_labels(d / "partial.pgl1", data.partial.as_grid(), data.num_classes)
    manifest = {"scene_id": data.scene_id, **data.meta}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_scene(directory) -> SceneData:
    d = Path(directory)
    manifest_path = d / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"missing file: {manifest_path}")
    meta = json.loads(manifest_path.read_text())
    image = fileio.read_ppm(d / "image.ppm")
    gt, num_classes = fileio.read_labels(d / "gt.pgl1")
    cams = fileio.read_tensor(d / "cams.pgt1")
    ft = fileio.read_tensor(d / "features.pgt1")
    h, w, dim = ft.shape
    feats = FeatureGrid(h, w, ft.reshape(h * w, dim))
    aff = fileio.read_sparse(d / "affinity.pgs1")
    plab, _ = fileio.read_labels(d / "partial.pgl1")
    partial = PartialLabelGrid(h, w, num_classes, plab.ravel())
    return SceneData(meta.get("scene_id", d.name), image, gt, num_classes, cams, feats, aff,
                     partial, meta)


def refine_and_label(probs, image, rcfg: RefineConfig) -> CompleteLabelGrid:
    h, w = image.shape[:2]
    up = bilinear_upsample(probs, h, w)
    if rcfg.enabled:
        up = meanfield_refine(up, image, rcfg.iters, rcfg.window, rcfg.sigma_color,
                              rcfg.sigma_xy, rcfg.w_pair)
    return argmax_labels(up)


def train_scene(data: SceneData, cfg: TrainConfig) -> TrainReport:
    aff = build_self_augmented(data.affinity)
    guidance = data.guidance() if cfg.use_lp else None
    return train_image(aff, data.features, guidance, data.partial, cfg)


def run_gcn(data: SceneData, cfg: TrainConfig, rcfg: RefineConfig):
    report = train_scene(data, cfg)
    return refine_and_label(report.probs, data.image, rcfg), report


def baseline_scores(data: SceneData, bg_alpha) -> ScoreGrid:
    stack = np.concatenate([background_map(data.cams, bg_alpha)[None], data.cams])
    return ScoreGrid.from_stack(stack)


def run_baseline(data: SceneData, bcfg: BaselineConfig, rcfg: RefineConfig) -> CompleteLabelGrid:
    t = transition_matrix(data.affinity, bcfg.hadamard_beta)
    h, w = data.full_shape
    kw = dict(window=rcfg.window, sigma_color=rcfg.sigma_color, sigma_xy=rcfg.sigma_xy,
              w_pair=rcfg.w_pair)
    return baseline_complete_labels(baseline_scores(data, bcfg.bg_alpha), t, bcfg.iters,
                                    data.image, h, w, rcfg.iters if rcfg.enabled else 0, **kw)
