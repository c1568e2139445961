"""Region-proposal primitives: anchors, IoU, NMS, RoI sampling and RoIAlign.

Boxes are ``(x_min, y_min, x_max, y_max)`` in continuous pixel coordinates;
pixel ``(row i, col j)`` has its center at ``(j + 0.5, i + 0.5)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .codec import BBox

DEFAULT_SCALES = (16.0, 32.0, 64.0, 128.0, 256.0)
DEFAULT_RATIOS = (2.0, 1.0, 0.5)  # h:w


@dataclass(frozen=True)
class AnchorConfig:
    scales: Sequence[float] = DEFAULT_SCALES
    ratios: Sequence[float] = DEFAULT_RATIOS
    stride: float = 16.0

    def __post_init__(self):
        if not self.scales or not self.ratios:
            raise ValueError("scales and ratios must be non-empty")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def num_anchors(self) -> int:
        return len(self.scales) * len(self.ratios)


@dataclass(frozen=True)
class RoISample:
    box: BBox
    positive: bool
    matched_gt: Optional[int] = None
    iou: float = 0.0


def _boxes(b) -> np.ndarray:
    if isinstance(b, BBox):
        return b.as_array()[None, :]
    if isinstance(b, (list, tuple)) and b and isinstance(b[0], BBox):
        return np.array([x.as_array() for x in b])
    arr = np.asarray(b, dtype=float)
    return arr.reshape(-1, 4)


def generate_anchors(cfg: AnchorConfig, feature_h: int, feature_w: int) -> np.ndarray:
    """All anchors as an ``(H * W * A, 4)`` array, cell-major then scale then ratio.

    A ratio-``r`` anchor of scale ``s`` has ``h / w = r`` and area ``s**2``.
    Anchors are not clipped to the image.
    """
    if feature_h < 1 or feature_w < 1:
        raise ValueError("feature map dimensions must be >= 1")
    base = []
    for s in cfg.scales:
        for r in cfg.ratios:
            w = s / np.sqrt(r)
            h = s * np.sqrt(r)
            base.append((-w / 2, -h / 2, w / 2, h / 2))
    base = np.array(base)
    ys = (np.arange(feature_h) + 0.5) * cfg.stride
    xs = (np.arange(feature_w) + 0.5) * cfg.stride
    cy, cx = np.meshgrid(ys, xs, indexing="ij")
    shifts = np.stack([cx, cy, cx, cy], axis=-1).reshape(-1, 1, 4)
    return (shifts + base[None]).reshape(-1, 4)


def inside_image(boxes, image_w: float, image_h: float) -> np.ndarray:
    """Mask of boxes lying entirely within the image (cross-boundary filter)."""
    b = _boxes(boxes)
    return (b[:, 0] >= 0) & (b[:, 1] >= 0) & (b[:, 2] <= image_w) & (b[:, 3] <= image_h)


def iou_matrix(a, b) -> np.ndarray:
    a, b = _boxes(a), _boxes(b)
    ix0 = np.maximum(a[:, None, 0], b[None, :, 0])
    iy0 = np.maximum(a[:, None, 1], b[None, :, 1])
    ix1 = np.minimum(a[:, None, 2], b[None, :, 2])
    iy1 = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(ix1 - ix0, 0, None) * np.clip(iy1 - iy0, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def iou(a, b) -> float:
    return float(iou_matrix(a, b)[0, 0])


def nms(boxes, scores, iou_threshold: float = 0.5) -> list[int]:
    """Greedy non-maximum suppression.

    Returns kept indices in descending score order; equal scores are broken
    by the lower original index.
    """
    b = _boxes(boxes)
    s = np.asarray(scores, dtype=float)
    if b.shape[0] != s.shape[0]:
        raise ValueError("boxes and scores differ in length")
    order = np.lexsort((np.arange(s.size), -s))
    area = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    keep = []
    while order.size:
        i = order[0]
        keep.append(int(i))
        rest = order[1:]
        ix0 = np.maximum(b[i, 0], b[rest, 0])
        iy0 = np.maximum(b[i, 1], b[rest, 1])
        ix1 = np.minimum(b[i, 2], b[rest, 2])
        iy1 = np.minimum(b[i, 3], b[rest, 3])
        inter = np.clip(ix1 - ix0, 0, None) * np.clip(iy1 - iy0, 0, None)
        union = area[i] + area[rest] - inter
        ov = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
        order = rest[ov <= iou_threshold]
    return keep


def top_k(boxes, scores, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Keep the ``k`` highest-scoring proposals (stable on ties)."""
    b = _boxes(boxes)
    s = np.asarray(scores, dtype=float)
    order = np.lexsort((np.arange(s.size), -s))[:k]
    return b[order], s[order]


def assign_and_sample_rois(
    rois,
    gt_boxes,
    total: int,
    rng: np.random.Generator | int,
    pos_iou: float = 0.5,
    pos_fraction: float = 0.25,
) -> list[RoISample]:
    """Label RoIs against ground truth and draw a fixed-ratio training sample.

    An RoI is positive when its best IoU with any ground-truth box is at least
    ``pos_iou``. At most ``floor(pos_fraction * total)`` positives are drawn;
    negatives fill the rest. When positives are scarce all of them are taken
    and negatives backfill.
    """
    if total <= 0:
        raise ValueError("total must be positive")
    rng = np.random.default_rng(rng)
    r = _boxes(rois)
    g = _boxes(gt_boxes)
    if g.shape[0]:
        ov = iou_matrix(r, g)
        best = ov.argmax(axis=1)
        best_iou = ov[np.arange(r.shape[0]), best]
    else:
        best = np.zeros(r.shape[0], dtype=int)
        best_iou = np.zeros(r.shape[0])
    pos_idx = np.flatnonzero(best_iou >= pos_iou)
    neg_idx = np.flatnonzero(best_iou < pos_iou)

    n_pos = min(int(np.floor(pos_fraction * total)), pos_idx.size)
    n_neg = min(total - n_pos, neg_idx.size)
    pos_pick = rng.permutation(pos_idx)[:n_pos]
    neg_pick = rng.permutation(neg_idx)[:n_neg]

    out = [RoISample(BBox.from_array(r[i]), True, int(best[i]), float(best_iou[i])) for i in pos_pick]
    out += [RoISample(BBox.from_array(r[i]), False, None, float(best_iou[i])) for i in neg_pick]
    return out


def bilinear(feature_map, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample an ``(H, W, C)`` map at continuous coordinates.

    Samples further than one pixel outside the map read as zero; others are
    clamped to the border, following the usual RoIAlign convention.
    """
    f = np.asarray(feature_map, dtype=float)
    h, w = f.shape[:2]
    # continuous coordinate -> index space (pixel centers at +0.5)
    ix = np.asarray(x, dtype=float) - 0.5
    iy = np.asarray(y, dtype=float) - 0.5
    valid = (iy >= -1.0) & (iy <= h) & (ix >= -1.0) & (ix <= w)
    ix = np.clip(ix, 0.0, w - 1)
    iy = np.clip(iy, 0.0, h - 1)
    x0 = np.minimum(np.floor(ix).astype(int), max(w - 2, 0))
    y0 = np.minimum(np.floor(iy).astype(int), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    lx = (ix - x0)[..., None]
    ly = (iy - y0)[..., None]
    out = (
        f[y0, x0] * (1 - ly) * (1 - lx)
        + f[y0, x1] * (1 - ly) * lx
        + f[y1, x0] * ly * (1 - lx)
        + f[y1, x1] * ly * lx
    )
    return out * valid[..., None]


def roi_sample_points(roi: BBox, out: int = 7, sampling: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Sample coordinates ``(out, out, s*s)`` for each output cell of ``roi``."""
    bin_w = roi.width / out
    bin_h = roi.height / out
    frac = (np.arange(sampling) + 0.5) / sampling
    cols = roi.x_min + (np.arange(out)[:, None] + frac[None, :]) * bin_w  # (out, s)
    rows = roi.y_min + (np.arange(out)[:, None] + frac[None, :]) * bin_h
    ys = np.broadcast_to(rows[:, None, :, None], (out, out, sampling, sampling))
    xs = np.broadcast_to(cols[None, :, None, :], (out, out, sampling, sampling))
    return xs.reshape(out, out, -1), ys.reshape(out, out, -1)


def roi_align(feature_map, roi, out: int = 7, sampling: int = 2) -> np.ndarray:
    """Pool ``roi`` of an ``(H, W, C)`` map to ``(out, out, C)`` without quantization.

    Each output cell averages ``sampling x sampling`` bilinear samples taken
    on a regular grid inside the cell.
    """
    f = np.asarray(feature_map, dtype=float)
    if f.ndim == 2:
        f = f[:, :, None]
    if not isinstance(roi, BBox):
        x0, y0, x1, y1 = (float(v) for v in roi)
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"empty RoI: {(x0, y0, x1, y1)}")
        roi = BBox(x0, y0, x1, y1)
    h, w = f.shape[:2]
    if roi.x_min < -1 or roi.y_min < -1 or roi.x_max > w + 1 or roi.y_max > h + 1:
        raise ValueError(f"RoI {roi} lies outside the {h}x{w} feature map")
    xs, ys = roi_sample_points(roi, out, sampling)
    return bilinear(f, xs, ys).mean(axis=2)
