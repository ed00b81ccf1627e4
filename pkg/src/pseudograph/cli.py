"""Command-line front end: ``pseudograph generate|train|baseline|eval|ablate|render``.

A run manifest is a JSON file::

    {"scenes": ["scene_00000", ...],      # relative to the manifest's directory
     "train": {...}, "refine": {...}, "baseline": {...}, "workers": 4}

Only ``scenes`` is required; command-line flags override the other sections.
``generate`` writes such a manifest next to the scenes it creates.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import fileio
from .errors import GenerationError, InvalidInputError, TrainingDivergedError, UndefinedMetricError
from .evaluation import SceneRecord, ablate_scene, score_labels, summarize
from .gcn import save_checkpoint
from .losses import LossWeights
from .pipeline import (BaselineConfig, RefineConfig, SynthConfig, build_scene, load_scene,
                       refine_and_label, run_baseline, save_scene, train_scene)
from .trainer import TrainConfig

log = logging.getLogger("pseudograph")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3


def _voc_palette(n=21):
    pal = np.zeros((n, 3), dtype=np.uint8)
    for i in range(n):
        c, r, g, b = i, 0, 0, 0
        for shift in range(7, -1, -1):
            r |= (c & 1) << shift
            g |= ((c >> 1) & 1) << shift
            b |= ((c >> 2) & 1) << shift
            c >>= 3
        pal[i] = r, g, b
    return pal


PALETTE = _voc_palette()
IGNORED_COLOR = np.array([224, 224, 192], dtype=np.uint8)


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class RunManifest:
    scenes: list
    train: TrainConfig = field(default_factory=TrainConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    workers: int | None = None  # None: one per logical core
    out: str = ""

    @property
    def config_hash(self):
        knobs = {"train": asdict(self.train), "refine": asdict(self.refine),
                 "baseline": asdict(self.baseline)}
        return hashlib.sha256(_canonical(knobs).encode()).hexdigest()

    def as_dict(self):
        return {"scenes": [str(s) for s in self.scenes], "train": asdict(self.train),
                "refine": asdict(self.refine), "baseline": asdict(self.baseline),
                "workers": self.workers, "out": str(self.out), "config_hash": self.config_hash}


def _train_config(d):
    d = dict(d)
    if isinstance(d.get("weights"), dict):
        d["weights"] = LossWeights(**d["weights"])
    return TrainConfig(**d)


def load_manifest(path) -> RunManifest:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing file: {path}")
    try:
        raw = json.loads(path.read_text())
        scenes = [path.parent / s for s in raw.get("scenes", [])]
        return RunManifest(scenes, _train_config(raw.get("train", {})),
                           RefineConfig(**raw.get("refine", {})),
                           BaselineConfig(**raw.get("baseline", {})),
                           raw.get("workers"))
    except (ValueError, TypeError) as err:
        raise InvalidInputError(f"bad manifest {path}: {err}") from err


def _apply_flags(m: RunManifest, args) -> RunManifest:
    t = m.train
    if args.steps is not None:
        t = replace(t, steps=args.steps)
    if args.beta1 is not None or args.beta2 is not None:
        w = t.weights
        t = replace(t, weights=LossWeights(args.beta1 if args.beta1 is not None else w.beta1,
                                           args.beta2 if args.beta2 is not None else w.beta2))
    if args.seed is not None:
        t = replace(t, seed=args.seed)
    if args.no_ent:
        t = replace(t, use_ent=False)
    if args.no_lp:
        t = replace(t, use_lp=False)
    if args.normalize_adj:
        t = replace(t, normalize_adj=True)
    r = replace(m.refine, enabled=False) if args.no_refine else m.refine
    workers = args.workers or m.workers or os.cpu_count() or 1
    if int(workers) < 1:
        raise InvalidInputError("--workers must be >= 1")
    return replace(m, train=t, refine=r, workers=int(workers), out=args.out)


def _scene_seed(data, base_seed):
    # per-scene seed recorded in the scene manifest, offset by the run seed
    return int(data.meta.get("seed", 0)) + base_seed


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --- per-scene jobs (module level so worker processes can import them) -------------------

def _job_train(scene_dir, out, train, refine, config_hash):
    data = load_scene(scene_dir)
    seed = _scene_seed(data, train.seed)
    report = train_scene(data, replace(train, seed=seed))
    labels = refine_and_label(report.probs, data.image, refine)
    d = Path(out) / data.scene_id
    d.mkdir(parents=True, exist_ok=True)
    fileio.write_labels(d / "labels.pgl1", labels.labels, data.num_classes)
    save_checkpoint(d / "checkpoint", report.params, seed)
    m, per = score_labels(data.gt, labels, data.num_classes + 1)
    rec = SceneRecord(data.scene_id, "gcn", m, per, seed, config_hash)
    final = report.trace[-1].as_dict()
    _write_json(d / "metrics.json", {**rec.as_dict(), "final_loss": final,
                                     "wall_time": report.wall_time})
    return rec.as_dict()


def _job_baseline(scene_dir, out, baseline, refine, config_hash):
    data = load_scene(scene_dir)
    labels = run_baseline(data, baseline, refine)
    d = Path(out) / data.scene_id
    d.mkdir(parents=True, exist_ok=True)
    fileio.write_labels(d / "labels.pgl1", labels.labels, data.num_classes)
    m, per = score_labels(data.gt, labels, data.num_classes + 1)
    rec = SceneRecord(data.scene_id, "random-walk", m, per, int(data.meta.get("seed", 0)),
                      config_hash)
    _write_json(d / "metrics.json", rec.as_dict())
    return rec.as_dict()


def _job_ablate(scene_dir, train, refine, baseline, config_hash):
    data = load_scene(scene_dir)
    seed = _scene_seed(data, train.seed)
    out = ablate_scene(data, replace(train, seed=seed), refine, baseline)
    return [SceneRecord(data.scene_id, name, m, per, seed, config_hash).as_dict()
            for name, (m, per) in out.items()]


def _safe(fn, scene_dir, *rest):
    """Run one job, turning expected failures into a record instead of an exception."""
    with threadpool_limits(1):
        try:
            return {"ok": fn(scene_dir, *rest)}
        except (InvalidInputError, TrainingDivergedError, UndefinedMetricError,
                FileNotFoundError, GenerationError) as err:
            return {"error": f"{type(err).__name__}: {err}", "scene": str(scene_dir)}


def run_jobs(fn, scene_dirs, rest, workers):
    """Results in scene order; scheduling never affects what a job computes."""
    if workers == 1 or len(scene_dirs) <= 1:
        return [_safe(fn, s, *rest) for s in scene_dirs]
    n = len(scene_dirs)
    with ProcessPoolExecutor(max_workers=min(workers, n)) as pool:
        return list(pool.map(_safe, [fn] * n, scene_dirs, *[[r] * n for r in rest]))


def _collect(results):
    ok, failed = [], []
    for res in results:
        if "ok" in res:
            ok.append(res["ok"])
        else:
            failed.append(res)
            log.warning("scene failed: %s (%s)", res["scene"], res["error"])
    return ok, failed


def _records_summary(records, failed, config_hash):
    mious = [r["miou"] for r in records]
    return {"config_hash": config_hash, "scenes": len(records), "failed": failed,
            "mean_miou": float(np.mean(mious)) if mious else None,
            "records": records}


def _prepare(args) -> RunManifest:
    m = _apply_flags(load_manifest(args.manifest), args)
    if not m.scenes:
        raise InvalidInputError("no scenes")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "run_manifest.json", m.as_dict())
    return m


# --- commands ------------------------------------------------------------------------------

def cmd_generate(args):
    out = Path(args.out)
    cfg = SynthConfig(size=args.size, num_classes=args.classes)
    seeds = range(args.seed, args.seed + args.count)
    names = []
    for s in seeds:
        data = build_scene(s, cfg)
        save_scene(out / data.scene_id, data)
        names.append(data.scene_id)
    _write_json(out / "manifest.json", {"scenes": names, "synth": asdict(cfg)})
    print(f"wrote {len(names)} scenes to {out}")
    return EXIT_OK


def cmd_train(args):
    m = _prepare(args)
    h = m.config_hash
    ok, failed = _collect(run_jobs(_job_train, m.scenes, (m.out, m.train, m.refine, h), m.workers))
    summary = _records_summary(ok, failed, h)
    _write_json(Path(m.out) / "summary.json", summary)
    print(f"gcn: {len(ok)} scenes, mean mIoU {summary['mean_miou']}, {len(failed)} failed")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_baseline(args):
    m = _prepare(args)
    h = m.config_hash
    ok, failed = _collect(run_jobs(_job_baseline, m.scenes, (m.out, m.baseline, m.refine, h),
                                   m.workers))
    summary = _records_summary(ok, failed, h)
    _write_json(Path(m.out) / "summary.json", summary)
    print(f"random-walk: {len(ok)} scenes, mean mIoU {summary['mean_miou']}, {len(failed)} failed")
    return EXIT_FAILED if failed else EXIT_OK


def _write_table(out, name, rows, columns):
    with open(Path(out) / f"{name}.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    _write_json(Path(out) / f"{name}.json", rows)


def cmd_ablate(args):
    m = _prepare(args)
    h = m.config_hash
    ok, failed = _collect(run_jobs(_job_ablate, m.scenes, (m.train, m.refine, m.baseline, h),
                                   m.workers))
    records = [r for scene in ok for r in scene]
    table = summarize([SceneRecord(**r) for r in records])
    rows = [{"config": k, **v} for k, v in table.items()]
    _write_table(m.out, "ablation", rows, ["config", "mean_miou", "scenes"])
    _write_table(m.out, "records", records, ["scene_id", "config", "miou", "seed", "config_hash"])
    _write_json(Path(m.out) / "summary.json", {"config_hash": h, "table": table,
                                                "failed": failed, "scenes": len(ok)})
    for row in rows:
        print(f"{row['config']:<22} {100 * row['mean_miou']:6.2f}")
    if failed:
        print(f"{len(failed)} scenes failed and were excluded")
    return EXIT_FAILED if failed else EXIT_OK


def _label_files(root, name):
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"missing directory: {root}")
    return {p.parent.name: p for p in sorted(root.glob(f"*/{name}"))}


def cmd_eval(args):
    preds = _label_files(args.pred, "labels.pgl1")
    gts = _label_files(args.gt, "gt.pgl1")
    if not preds:
        raise InvalidInputError("no scenes")
    records = []
    for scene_id, path in preds.items():
        if scene_id not in gts:
            raise FileNotFoundError(f"missing file: {Path(args.gt) / scene_id / 'gt.pgl1'}")
        pred, k = fileio.read_labels(path)
        gt, _ = fileio.read_labels(gts[scene_id])
        m, per = score_labels(gt, pred, k + 1)
        records.append({"scene_id": scene_id, "miou": m, "per_class_iou": per})
    mean = float(np.mean([r["miou"] for r in records]))
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        _write_table(out, "eval", records, ["scene_id", "miou"])
        _write_json(out / "summary.json", {"scenes": len(records), "mean_miou": mean})
    print(f"{len(records)} scenes, mean mIoU {mean:.4f}")
    return EXIT_OK


def render_labels(labels):
    labels = np.asarray(labels)
    if labels.size and labels.max() >= len(PALETTE):
        raise InvalidInputError(f"render supports at most {len(PALETTE)} classes")
    rgb = PALETTE[np.clip(labels, 0, None)]
    rgb[labels < 0] = IGNORED_COLOR
    return rgb


def cmd_render(args):
    src = Path(args.labels)
    if src.is_dir():
        pairs = [(p, p.with_suffix(".ppm")) for p in sorted(src.rglob("*.pgl1"))]
    else:
        pairs = [(src, Path(args.out) if args.out else src.with_suffix(".ppm"))]
    for path, dest in pairs:
        labels, _ = fileio.read_labels(path)
        fileio.write_ppm(dest, render_labels(labels))
    print(f"rendered {len(pairs)} label maps")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="pseudograph", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic scene suite")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0, help="first scene seed")
    g.add_argument("--count", type=int, default=20)
    g.add_argument("--size", type=int, default=128)
    g.add_argument("--classes", type=int, default=3)
    g.set_defaults(fn=cmd_generate)

    for name, fn, text in [("train", cmd_train, "train a GCN per scene and emit labels"),
                           ("baseline", cmd_baseline, "random-walk propagation per scene"),
                           ("ablate", cmd_ablate, "loss-ablation table plus baseline")]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--seed", type=int, default=None, help="offset added to scene seeds")
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--beta1", type=float, default=None)
        p.add_argument("--beta2", type=float, default=None)
        p.add_argument("--no-ent", action="store_true")
        p.add_argument("--no-lp", action="store_true")
        p.add_argument("--no-refine", action="store_true")
        p.add_argument("--normalize-adj", action="store_true")
        p.set_defaults(fn=fn)

    e = sub.add_parser("eval", help="score predicted labels against ground truth")
    e.add_argument("--pred", required=True, help="directory of <scene>/labels.pgl1")
    e.add_argument("--gt", required=True, help="dataset directory of <scene>/gt.pgl1")
    e.add_argument("--out", default=None)
    e.set_defaults(fn=cmd_eval)

    r = sub.add_parser("render", help="palette PPM from a label file or directory")
    r.add_argument("--labels", required=True)
    r.add_argument("--out", default=None)
    r.set_defaults(fn=cmd_render)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (InvalidInputError, FileNotFoundError, UndefinedMetricError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (TrainingDivergedError, GenerationError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
