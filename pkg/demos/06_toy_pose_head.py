"""
A small pose head learns the pose code
======================================

A 4-layer MLP maps 64 hand-built features of each rendered instance
to (rotation vector, t_z). On the asymmetric blob the rotation is
learnable; on the cylinder the spin about its axis is not.

Pass --quick for a shorter run.
"""

import sys

from pose6d.pose_head import TOY_CONFIG, TrainConfig, make_toy_dataset, train_toy

quick = "--quick" in sys.argv
cfg = TrainConfig(iterations=3000, lr_step=2400, weight_decay=0.05) if quick else TOY_CONFIG
n = 600 if quick else 2000

for shape in ("asymmetric-blob", "cylinder"):
    data = make_toy_dataset(shape, n, seed=0)
    _, rep = train_toy(data, cfg)
    print(f"{shape}: trained on {rep.n_train}, tested on {rep.n_test}")
    print(f"  loss {rep.initial_loss:.3f} -> {rep.final_loss:.3f}")
    print(f"  median rotation error {rep.median_angle_deg:.2f} deg "
          f"(axis tilt {rep.median_tilt_deg:.2f}, spin about axis {rep.median_yaw_deg:.2f})")
    print(f"  median t_z error {rep.median_tz_err_m * 100:.2f} cm")
