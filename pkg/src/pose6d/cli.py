"""``pose6d`` command line: synthesize scenes, perturb ground truth into
detections, evaluate detections, train the toy pose head, run gradient checks."""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .codec import encode_pose
from .detection import iou
from .evaluation import EvalConfig, evaluate, format_report
from .gradcheck import GRAD_TOL, run_suite
from .io import (DetectionRecord, GTRecord, ParseError, Scene, dump_json, format_detections,
                 format_mlp, parse_detections, read_scene, write_scene)
from .pose_head import TOY_CONFIG, TrainConfig, make_toy_dataset, train_toy
from .so3 import Intrinsics
from .synthetic import (DEFAULT_INTRINSICS, SHAPES, make_model, offset_pose, render_instance,
                        sample_visible_pose)

DEFAULT_CLASSES = (
    {"id": 1, "shape": "box"},
    {"id": 2, "shape": "cylinder"},
    {"id": 3, "shape": "asymmetric-blob"},
)


def _from_dict(cls, d: dict, what: str):
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise ValueError(f"unknown {what} keys: {sorted(extra)}")
    return cls(**d)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    images: int = 4
    objects_per_image: int = 2
    image_size: tuple = (640, 480)
    intrinsics: tuple = (DEFAULT_INTRINSICS.fx, DEFAULT_INTRINSICS.fy,
                         DEFAULT_INTRINSICS.cx, DEFAULT_INTRINSICS.cy)
    tz_range: tuple = (0.6, 1.2)
    theta_max: float = math.pi
    margin: float = 10.0
    max_overlap: float = 0.3  # box IoU allowed between instances of one image
    points: int = 500
    classes: tuple = DEFAULT_CLASSES

    def __post_init__(self):
        if self.images < 0 or self.objects_per_image < 0:
            raise ValueError("images and objects_per_image must be non-negative")
        if not self.classes:
            raise ValueError("at least one class is required")
        ids = [c["id"] for c in self.classes]
        if len(set(ids)) != len(ids) or min(ids) < 1:
            raise ValueError("class ids must be unique positive integers")
        for c in self.classes:
            if set(c) - {"id", "shape", "extents"}:
                raise ValueError(f"unknown class keys: {sorted(set(c) - {'id', 'shape', 'extents'})}")
            if c.get("shape") not in SHAPES:
                raise ValueError(f"class {c['id']}: shape must be one of {SHAPES}")


def cmd_synthesize(cfg: SynthConfig, out_dir) -> Scene:
    """Render ``cfg.images`` images with randomly placed, fully visible,
    mostly non-overlapping instances and write the scene directory."""
    k = Intrinsics(*cfg.intrinsics)
    size = tuple(int(x) for x in cfg.image_size)
    models = {c["id"]: make_model(c["shape"], cfg.points, seed=cfg.seed + c["id"], extents=c.get("extents"))
              for c in cfg.classes}
    ids = sorted(models)
    instances = []
    for img in range(cfg.images):
        rng = np.random.default_rng([cfg.seed, img])
        placed = []
        for _ in range(cfg.objects_per_image):
            cls = ids[int(rng.integers(len(ids)))]
            for _ in range(1000):
                pose, inst = sample_visible_pose(models[cls], k, size, rng, cfg.tz_range,
                                                 cfg.theta_max, cfg.margin)
                if all(iou(inst.bbox, p.bbox) <= cfg.max_overlap for p in placed):
                    break
            else:
                raise RuntimeError(f"image {img}: could not place {cfg.objects_per_image} separated objects")
            placed.append(inst)
            instances.append(GTRecord(img, cls, inst.bbox, pose, inst.mask))
    scene = Scene(k, size[0], size[1], cfg.images, models, instances)
    write_scene(scene, out_dir)
    return scene


def cmd_perturb(scene: Scene, rot_deg: float, trans_cm: float, seed: int = 0,
                score: float = 1.0) -> list[DetectionRecord]:
    """One detection per ground-truth instance, offset by exactly ``rot_deg``
    degrees and ``trans_cm`` centimetres along random directions.

    Box and mask come from rendering the offset pose; if it leaves the image,
    the ground-truth box is shifted by the motion of the projected origin and
    the mask is dropped.
    """
    dets = []
    size = (scene.image_w, scene.image_h)
    k = scene.intrinsics
    for idx, g in enumerate(scene.instances):
        rng = np.random.default_rng([seed, idx])
        est = offset_pose(g.pose, np.deg2rad(rot_deg), trans_cm / 100.0, rng)
        if not est.translation[2] > 0:
            raise ValueError(f"instance {idx}: offset moves the object behind the camera")
        try:
            inst = render_instance(scene.models[g.class_id], est, k, size, g.class_id)
            bbox, mask = inst.bbox, inst.mask
        except ValueError:
            (u0, v0), (u1, v1) = (
                (k.fx * t[0] / t[2] + k.cx, k.fy * t[1] / t[2] + k.cy)
                for t in (g.pose.translation, est.translation))
            bbox, mask = g.bbox.shifted(u1 - u0, v1 - v0), None
        dets.append(DetectionRecord(g.image_id, g.class_id, score, bbox, encode_pose(est), mask))
    return dets


def cmd_evaluate(gt_dir, det_file, cfg: EvalConfig) -> dict:
    scene = read_scene(gt_dir)
    dets = parse_detections(Path(det_file).read_text(), det_file)
    return evaluate(scene, dets, cfg)


@dataclass(frozen=True)
class ToyRunConfig:
    shape: str = "asymmetric-blob"
    n: int = 2000
    data_seed: int = 0
    theta_max: float = 1.2
    tz_range: tuple = (0.5, 1.0)
    test_fraction: float = 0.2
    train: dict = field(default_factory=lambda: asdict(TOY_CONFIG))

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}")
        if self.n < 10:
            raise ValueError("n must be >= 10")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")

    def train_config(self) -> TrainConfig:
        merged = {**asdict(TOY_CONFIG), **self.train}
        return _from_dict(TrainConfig, merged, "train")


def cmd_train_toy(cfg: ToyRunConfig, out_dir) -> dict:
    data = make_toy_dataset(cfg.shape, cfg.n, cfg.data_seed, cfg.theta_max, tuple(cfg.tz_range))
    tcfg = cfg.train_config()
    mlp, report = train_toy(data, tcfg, test_fraction=cfg.test_fraction)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mlp.txt").write_text(format_mlp(mlp))
    doc = {"config": {**asdict(cfg), "train": asdict(tcfg)}, "report": asdict(report)}
    (out / "report.json").write_text(dump_json(doc))
    return doc


def _load_json(path, cls, what):
    if path is None:
        return cls()
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(d, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return _from_dict(cls, d, what)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(
        prog="pose6d", formatter_class=fmt, description=__doc__,
        epilog="POSE6D_THREADS sets the number of threads used per image by 'evaluate' (default 1).")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", formatter_class=fmt, help="render a synthetic scene directory",
                       description="Render a synthetic scene. Keys missing from the JSON spec take "
                                   f"these defaults: {json.dumps(asdict(SynthConfig()))}")
    s.add_argument("--spec", help="JSON scene spec (defaults when omitted)")
    s.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("perturb", formatter_class=fmt, help="turn ground truth into offset detections")
    s.add_argument("--gt", required=True, help="scene directory")
    s.add_argument("--out", required=True, help="detections file to write")
    s.add_argument("--rot-deg", type=float, default=0.0, help="rotation offset in degrees")
    s.add_argument("--trans-cm", type=float, default=0.0, help="translation offset in centimetres")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--score", type=float, default=1.0, help="score given to every detection")

    s = sub.add_parser("evaluate", formatter_class=fmt, help="score detections against a scene")
    s.add_argument("--gt", required=True, help="scene directory")
    s.add_argument("--det", required=True, help="detections file")
    s.add_argument("--score-thresh", type=float, default=0.9, help="keep scores strictly above this")
    s.add_argument("--nms", type=float, default=0.5, help="per-class NMS IoU threshold")
    s.add_argument("--match-iou", type=float, default=0.1, help="box IoU pairing detections for pose metrics")
    s.add_argument("--report", help="also write the JSON report here")

    s = sub.add_parser("train-toy", formatter_class=fmt, help="train the toy pose head",
                       description="Train the toy pose head. Keys missing from the JSON config take "
                                   f"these defaults: {json.dumps(asdict(ToyRunConfig()))}")
    s.add_argument("--config", help="JSON run config (defaults when omitted)")
    s.add_argument("--out", default="toy_run", help="directory for mlp.txt and report.json")

    s = sub.add_parser("gradcheck", formatter_class=fmt, help="finite-difference gradient suite")
    s.add_argument("--instances", type=int, default=100, help="random instances per check")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=GRAD_TOL, help="maximum relative error")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synthesize":
            scene = cmd_synthesize(_load_json(args.spec, SynthConfig, "spec"), args.out)
            print(f"wrote {len(scene.instances)} instances in {scene.n_images} images to {args.out}")
        elif args.command == "perturb":
            dets = cmd_perturb(read_scene(args.gt), args.rot_deg, args.trans_cm, args.seed, args.score)
            Path(args.out).write_text(format_detections(dets))
            print(f"wrote {len(dets)} detections to {args.out}")
        elif args.command == "evaluate":
            cfg = EvalConfig(args.score_thresh, args.nms, args.match_iou)
            report = cmd_evaluate(args.gt, args.det, cfg)
            if args.report:
                Path(args.report).write_text(dump_json(report))
            sys.stdout.write(format_report(report))
        elif args.command == "train-toy":
            doc = cmd_train_toy(_load_json(args.config, ToyRunConfig, "config"), args.out)
            r = doc["report"]
            print(f"median angle {r['median_angle_deg']:.3f} deg, median t_z error "
                  f"{r['median_tz_err_m']:.4f} m; wrote {args.out}/mlp.txt and {args.out}/report.json")
        elif args.command == "gradcheck":
            if args.instances < 1:
                raise ValueError("--instances must be >= 1")
            errs = run_suite(args.instances, args.seed)
            for name, e in errs.items():
                print(f"{name:24s} {e:.3e}")
            worst = max(errs.values())
            print(f"max relative error {worst:.3e} (tolerance {args.tol:g})")
            return 0 if worst <= args.tol else 1
    except (ValueError, ParseError, FileNotFoundError, RuntimeError, TypeError) as e:
        print(f"pose6d {args.command}: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
