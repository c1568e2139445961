"""
Judging a pose estimate
=======================

Three acceptance rules: the 2D box IoU of the projected model, the
5 cm / 5 degree rule, and ADD (mean point distance under a tenth of the
object diameter).
"""

import numpy as np

from pose6d.codec import BBox
from pose6d.metrics import detection_f1, judge_pose
from pose6d.so3 import Pose, exp_map
from pose6d.synthetic import DEFAULT_INTRINSICS as K, make_model, offset_pose

model = make_model("box", 1000, seed=0)
print(f"box diameter {model.diameter * 100:.1f} cm -> ADD threshold {model.diameter * 10:.2f} cm")

gt = Pose(exp_map([0.3, -0.4, 0.2]), [0.02, -0.01, 0.8])
rng = np.random.default_rng(0)
print(f"{'offset':>14s}  {'IoU':>6s} {'2D':>3s}  {'dt cm':>6s} {'deg':>5s} {'5/5':>3s}  {'ADD cm':>6s} {'ADD':>3s}")
for deg, cm in [(0, 0), (3, 3), (4, 6), (10, 3), (2, 1), (20, 10)]:
    j = judge_pose(model, gt, offset_pose(gt, np.deg2rad(deg), cm / 100, rng), K)
    yn = lambda b: "yes" if b else "no"
    print(f"{deg:>4d} deg {cm:>2d} cm  {j.iou_2d:6.3f} {yn(j.accepted_2d):>3s}  {j.trans_err_m * 100:6.2f} "
          f"{np.rad2deg(j.ang_err_rad):5.2f} {yn(j.accepted_5cm5deg):>3s}  {j.add_m * 100:6.2f} {yn(j.accepted_add):>3s}")

# detection F1: one-to-one greedy matching in score order
gt_boxes = [(1, BBox(0, 0, 10, 10)), (1, BBox(20, 20, 30, 30))]
preds = [(1, 0.9, BBox(0, 0, 10, 10)), (1, 0.8, BBox(0.5, 0, 10, 10)), (1, 0.7, BBox(21, 21, 31, 31))]
for t in (0.5, 0.9):
    print(f"F1 at IoU {t}: {detection_f1(preds, gt_boxes, t):.3f}")
