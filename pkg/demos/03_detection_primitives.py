"""
Anchors, suppression, RoI sampling and RoIAlign
===============================================
"""

import numpy as np

from pose6d.codec import BBox
from pose6d.detection import (DEFAULT_RATIOS, DEFAULT_SCALES, AnchorConfig, assign_and_sample_rois,
                              generate_anchors, iou_matrix, nms, roi_align)

np.set_printoptions(precision=2, suppress=True)

# 5 scales x 3 aspect ratios at every cell of a stride-16 grid
cfg = AnchorConfig(DEFAULT_SCALES, DEFAULT_RATIOS, 16)
anchors = generate_anchors(cfg, 30, 40)
print(anchors.shape[0], "anchors;", cfg.num_anchors, "per cell. First cell:")
print(anchors[:cfg.num_anchors])

# greedy NMS: highest score first, drop anything overlapping by more than 0.5
boxes = np.array([[10, 10, 60, 60], [12, 12, 62, 62], [100, 100, 150, 140], [14, 8, 58, 64]], float)
scores = np.array([0.8, 0.95, 0.7, 0.6])
print("pairwise IoU:\n", iou_matrix(boxes, boxes))
print("kept:", nms(boxes, scores, 0.5))

# RoIs with IoU >= 0.5 against a ground-truth box are positives; keep 1:3
rng = np.random.default_rng(0)
gt = np.array([[100, 100, 200, 200]], float)
far = rng.uniform(300, 400, (90, 2))
rois = np.vstack([gt + rng.uniform(-6, 6, (30, 4)), np.hstack([far, far + 30])])
sample = assign_and_sample_rois(rois, gt, 64, rng=1)
print("positives:", sum(s.positive for s in sample), " negatives:", sum(not s.positive for s in sample))

# RoIAlign reads a ramp exactly, since bilinear sampling is linear
h, w = 20, 30
ramp = np.tile(np.arange(w) + 0.5, (h, 1))[..., None]
pooled = roi_align(ramp, BBox(4.0, 2.0, 18.0, 16.0), out=7)[..., 0]
print("pooled ramp row:", pooled[0], "(bin centers are 5, 7, ..., 17)")
