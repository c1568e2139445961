"""Benchmark harness: score filtering, NMS, matching, pose metrics and F1 over a
rendered scene."""

from __future__ import annotations

from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .codec import decode_pose
from .detection import iou_matrix, nms
from .io import DetectionRecord, Scene, thread_count
from .metrics import f1_from_counts, greedy_match, judge_pose, mask_iou_matrix

F1_THRESHOLDS = (0.5, 0.9)
RATE_KEYS = ("acc_2d", "acc_5cm5deg", "acc_add",
             "det_f1_50", "det_f1_90", "seg_f1_50", "seg_f1_90")


@dataclass(frozen=True)
class EvalConfig:
    score_thresh: float = 0.9
    nms_iou: float = 0.5
    match_iou: float = 0.1  # loose enough that any estimate within 5 cm still pairs

    def __post_init__(self):
        if not 0 <= self.score_thresh <= 1:
            raise ValueError("score_thresh must lie in [0, 1]")
        for name in ("nms_iou", "match_iou"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")


def filter_detections(dets: list[DetectionRecord], cfg: EvalConfig) -> list[DetectionRecord]:
    """Keep scores strictly above the threshold, then run NMS per image and class."""
    dets = [d for d in dets if d.score > cfg.score_thresh]
    kept = []
    for key in sorted({(d.image_id, d.class_id) for d in dets}):
        group = [d for d in dets if (d.image_id, d.class_id) == key]
        keep = nms([d.bbox for d in group], [d.score for d in group], cfg.nms_iou)
        kept.extend(group[i] for i in sorted(keep))
    return kept


def _counts():
    return {"n_gt": 0, "n_det": 0, "ok_2d": 0, "ok_5cm5deg": 0, "ok_add": 0,
            "det_tp_50": 0, "det_tp_90": 0, "seg_tp_50": 0, "seg_tp_90": 0}


def evaluate_image(scene: Scene, gts, dets, cfg: EvalConfig) -> dict:
    """Per-class counts for one image (detections already filtered)."""
    out = defaultdict(_counts)
    for g in gts:
        out[g.class_id]["n_gt"] += 1
    for d in dets:
        out[d.class_id]["n_det"] += 1
    if not gts or not dets:
        return dict(out)

    scores = [d.score for d in dets]
    dcls = [d.class_id for d in dets]
    gcls = [g.class_id for g in gts]
    box_ov = iou_matrix([d.bbox for d in dets], [g.bbox for g in gts])
    for thr in F1_THRESHOLDS:
        for i, _ in greedy_match(scores, dcls, gcls, box_ov, thr):
            out[dcls[i]][f"det_tp_{round(thr * 100)}"] += 1

    # a detection without a mask can never match in the segmentation task
    mask_ov = np.zeros_like(box_ov)
    with_mask = [i for i, d in enumerate(dets) if d.mask is not None]
    gt_masks = [g.mask for g in gts]
    if with_mask and all(m is not None for m in gt_masks):
        mask_ov[with_mask] = mask_iou_matrix([dets[i].mask for i in with_mask], gt_masks)
    for thr in F1_THRESHOLDS:
        for i, _ in greedy_match(scores, dcls, gcls, mask_ov, thr):
            out[dcls[i]][f"seg_tp_{round(thr * 100)}"] += 1

    for i, j in greedy_match(scores, dcls, gcls, box_ov, cfg.match_iou):
        d, g = dets[i], gts[j]
        est = decode_pose(d.code, d.bbox, scene.intrinsics)
        verdict = judge_pose(scene.models[g.class_id], g.pose, est, scene.intrinsics)
        c = out[g.class_id]
        c["ok_2d"] += verdict.accepted_2d
        c["ok_5cm5deg"] += verdict.accepted_5cm5deg
        c["ok_add"] += verdict.accepted_add
    return dict(out)


def _rates(c: dict) -> dict:
    n_gt = c["n_gt"]
    r = {"n_gt": n_gt, "n_det": c["n_det"]}
    for key in ("2d", "5cm5deg", "add"):
        r[f"acc_{key}"] = c[f"ok_{key}"] / n_gt if n_gt else 0.0
    for task in ("det", "seg"):
        for t in ("50", "90"):
            r[f"{task}_f1_{t}"] = f1_from_counts(c[f"{task}_tp_{t}"], c["n_det"], n_gt)
    return r


def evaluate(scene: Scene, dets: list[DetectionRecord], cfg: EvalConfig = EvalConfig(),
             threads: int | None = None) -> dict:
    """Machine-readable report: per-class rates plus their mean over classes
    that have ground truth. Pose accuracy counts unmatched ground truth as failures.
    """
    for d in dets:
        if d.class_id not in scene.models:
            raise ValueError(f"detection references class {d.class_id} without a model")
        if not 0 <= d.image_id < scene.n_images:
            raise ValueError(f"detection image id {d.image_id} outside [0, {scene.n_images})")
    kept = filter_detections(dets, cfg)
    by_img_gt, by_img_det = defaultdict(list), defaultdict(list)
    for g in scene.instances:
        by_img_gt[g.image_id].append(g)
    for d in kept:
        by_img_det[d.image_id].append(d)

    def work(img):
        return evaluate_image(scene, by_img_gt[img], by_img_det[img], cfg)

    images = range(scene.n_images)
    n = threads if threads is not None else thread_count()
    if n > 1:
        with ThreadPoolExecutor(n) as pool:
            per_image = list(pool.map(work, images))  # map preserves order
    else:
        per_image = [work(i) for i in images]

    totals = {cls: _counts() for cls in scene.models}
    for res in per_image:
        for cls, c in res.items():
            for key, v in c.items():
                totals[cls][key] += v

    classes = {str(cls): _rates(totals[cls]) for cls in sorted(totals)}
    scored = [classes[str(cls)] for cls in sorted(totals) if totals[cls]["n_gt"]]
    mean = {key: float(np.mean([c[key] for c in scored])) if scored else 0.0 for key in RATE_KEYS}
    return {"config": asdict(cfg), "classes": classes, "mean": mean,
            "n_images": scene.n_images, "n_detections_kept": len(kept)}


def format_report(report: dict) -> str:
    cols = ("class",) + RATE_KEYS
    rows = [[cls, *(f"{c[k]:.4f}" for k in RATE_KEYS)] for cls, c in report["classes"].items()]
    rows.append(["mean", *(f"{report['mean'][k]:.4f}" for k in RATE_KEYS)])
    widths = [max(len(str(x)) for x in col) for col in zip(cols, *rows)]
    line = lambda cells: "  ".join(str(c).rjust(w) for c, w in zip(cells, widths))
    cfg = report["config"]
    head = (f"score > {cfg['score_thresh']:g}, nms {cfg['nms_iou']:g}, "
            f"pose matching at IoU {cfg['match_iou']:g}")
    return "\n".join([head, line(cols), *map(line, rows)]) + "\n"
