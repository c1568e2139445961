"""Pose acceptance metrics (2D-pose, 5cm5deg, ADD) and F1 scoring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from .codec import BBox
from .detection import iou, iou_matrix
from .so3 import Intrinsics, Pose, angular_distance, project_points, transform_points

TRANS_THRESH_M = 0.05
ANGLE_THRESH_RAD = np.deg2rad(5.0)
ADD_FRACTION = 0.1
IOU_2D_THRESH = 0.5


def model_diameter(points) -> float:
    """Largest pairwise distance. Uses the convex hull to prune large clouds."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 2:
        raise ValueError("need at least two points")
    if pts.shape[0] > 64:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass
    return float(pdist(pts).max())


@dataclass(frozen=True, eq=False)
class ObjectModel:
    """Point cloud in the object frame (metres) with its diameter."""

    points: np.ndarray
    diameter: float = 0.0
    name: str = ""
    parts: np.ndarray | None = None  # optional per-point surface-part id (texture)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 4:
            raise ValueError("model needs at least 4 points of shape (N, 3)")
        if np.linalg.matrix_rank(pts - pts.mean(axis=0), tol=1e-9) < 3:
            raise ValueError("model points are coplanar")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        d = model_diameter(pts)
        if self.diameter and not np.isclose(self.diameter, d, rtol=1e-12, atol=0):
            raise ValueError(f"diameter {self.diameter} does not match points ({d})")
        object.__setattr__(self, "diameter", d)
        if self.parts is not None:
            parts = np.array(self.parts, dtype=int)
            if parts.shape != (pts.shape[0],) or parts.min() < 0:
                raise ValueError("parts must hold one non-negative id per point")
            parts.setflags(write=False)
            object.__setattr__(self, "parts", parts)


@dataclass(frozen=True)
class PoseJudgement:
    iou_2d: float
    trans_err_m: float
    ang_err_rad: float
    add_m: float
    accepted_2d: bool
    accepted_5cm5deg: bool
    accepted_add: bool


def projected_bbox(model: ObjectModel, pose: Pose, k: Intrinsics) -> BBox:
    uv = project_points(transform_points(pose, model.points), k)
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    return BBox(lo[0], lo[1], hi[0], hi[1])


def pose_2d_metric(model: ObjectModel, gt: Pose, est: Pose, k: Intrinsics) -> tuple[float, bool]:
    """IoU of the projected model boxes; accepted when strictly above 0.5."""
    v = iou(projected_bbox(model, gt, k), projected_bbox(model, est, k))
    return v, bool(v > IOU_2D_THRESH)


def metric_5cm5deg(gt: Pose, est: Pose) -> tuple[float, float, bool]:
    """Translation error (m), angular error (rad), accepted when both are within
    5 cm and 5 degrees (inclusive)."""
    te = float(np.linalg.norm(gt.translation - est.translation))
    ae = angular_distance(gt.rotation, est.rotation)
    return te, ae, bool(te <= TRANS_THRESH_M and ae <= ANGLE_THRESH_RAD)


def add_metric(model: ObjectModel, gt: Pose, est: Pose) -> tuple[float, bool]:
    """Mean distance between corresponding model points; accepted when below
    10% of the diameter. Not meaningful for symmetric objects."""
    d = transform_points(gt, model.points) - transform_points(est, model.points)
    avg = float(np.linalg.norm(d, axis=1).mean())
    return avg, bool(avg < ADD_FRACTION * model.diameter)


def judge_pose(model: ObjectModel, gt: Pose, est: Pose, k: Intrinsics) -> PoseJudgement:
    i2d, ok2d = pose_2d_metric(model, gt, est, k)
    te, ae, ok5 = metric_5cm5deg(gt, est)
    add, okadd = add_metric(model, gt, est)
    return PoseJudgement(i2d, te, ae, add, ok2d, ok5, okadd)


def f1_from_counts(tp: int, n_pred: int, n_gt: int) -> float:
    if tp == 0 or n_pred == 0 or n_gt == 0:
        return 0.0
    precision = tp / n_pred
    recall = tp / n_gt
    return 2 * precision * recall / (precision + recall)


def greedy_match(scores: Sequence[float], pred_classes, gt_classes, overlaps: np.ndarray,
                 iou_thresh: float) -> list[tuple[int, int]]:
    """One-to-one matching in descending score order (ties by index).

    Each prediction takes the unmatched same-class ground truth with the
    highest overlap, provided that overlap is at least ``iou_thresh``.
    """
    order = np.lexsort((np.arange(len(scores)), -np.asarray(scores, dtype=float)))
    taken: set[int] = set()
    pairs = []
    for i in order:
        best, best_j = -1.0, -1
        for j in range(len(gt_classes)):
            if j in taken or gt_classes[j] != pred_classes[i]:
                continue
            if overlaps[i, j] >= iou_thresh and overlaps[i, j] > best:
                best, best_j = overlaps[i, j], j
        if best_j >= 0:
            taken.add(best_j)
            pairs.append((int(i), best_j))
    return pairs


def detection_f1(pred, gt, iou_thresh: float) -> float:
    """F1 of ``pred = [(class, score, BBox)]`` against ``gt = [(class, BBox)]``."""
    if not 0 < iou_thresh < 1:
        raise ValueError("iou_thresh must lie in (0, 1)")
    if not pred or not gt:
        return 0.0
    ov = iou_matrix([p[2] for p in pred], [g[1] for g in gt])
    pairs = greedy_match([p[1] for p in pred], [p[0] for p in pred], [g[0] for g in gt], ov, iou_thresh)
    return f1_from_counts(len(pairs), len(pred), len(gt))


def mask_iou_matrix(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> np.ndarray:
    out = np.zeros((len(a), len(b)))
    for i, ma in enumerate(a):
        for j, mb in enumerate(b):
            if ma.shape != mb.shape:
                raise ValueError(f"mask resolution mismatch: {ma.shape} vs {mb.shape}")
            union = np.logical_or(ma, mb).sum()
            out[i, j] = np.logical_and(ma, mb).sum() / union if union else 0.0
    return out


def segmentation_f1(pred, gt, iou_thresh: float) -> float:
    """Like :func:`detection_f1` but with ``(class, score, mask)`` / ``(class, mask)``."""
    if not 0 < iou_thresh < 1:
        raise ValueError("iou_thresh must lie in (0, 1)")
    shapes = {np.shape(m) for m in [p[2] for p in pred] + [g[1] for g in gt]}
    if len(shapes) > 1:
        raise ValueError(f"mask resolution mismatch: {sorted(shapes)}")
    if not pred or not gt:
        return 0.0
    ov = mask_iou_matrix([np.asarray(p[2], bool) for p in pred], [np.asarray(g[1], bool) for g in gt])
    pairs = greedy_match([p[1] for p in pred], [p[0] for p in pred], [g[0] for g in gt], ov, iou_thresh)
    return f1_from_counts(len(pairs), len(pred), len(gt))
