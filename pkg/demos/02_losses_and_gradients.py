"""
Training losses and their gradients
===================================

Each loss returns its value and its analytic gradient. Central
differences confirm the gradients.
"""

import numpy as np

from pose6d.gradcheck import central_difference, relative_error, run_suite
from pose6d.losses import (LossWeights, binary_cross_entropy_mask, multi_task_loss, pose_loss,
                           smooth_l1, softmax_cross_entropy)

np.set_printoptions(precision=4, suppress=True)

gt = np.array([0.2, 0.1, -0.3, 1.0])  # rotation vector + t_z
pred = gt + [0.1, -0.2, 0.2, 0.1]

# L1 on the rotation part plus a weighted L1 on depth (beta = 1.5)
loss, grad = pose_loss(pred, gt)
print("pose loss p=1:", loss, " grad:", grad)

w2 = LossWeights(p=2)
loss, grad = pose_loss(pred, gt, w2)
num = central_difference(lambda x: pose_loss(x, gt, w2)[0], pred)
print("pose loss p=2:", loss, " gradient rel. error:", relative_error(grad, num))

print("softmax CE, uniform logits over 4 classes:", softmax_cross_entropy(np.zeros(4), 2)[0], "= log 4")
print("smooth L1 of 0.5 and 2.0:", smooth_l1([0.5, 2.0], [0, 0])[0])
m = np.full((28, 28), 0.5)
print("mask BCE at p = 0.5:", binary_cross_entropy_mask(m, np.ones((28, 28)))[0], "= log 2")

# three RoIs: two positives and one background
logits = np.array([[0.1, 2.0, -1.0], [1.5, 0.0, 0.2], [0.0, 0.3, 2.2]])
labels = [1, 0, 2]
out = multi_task_loss(
    logits, labels,
    [np.array([0.1, 0, 0, 0.2]), None, np.array([1.5, 0, 0, 0])], [np.zeros(4), None, np.zeros(4)],
    [m, None, m], [np.ones((28, 28)), None, np.zeros((28, 28))],
    [pred, None, gt], [gt, None, gt])
print(f"cls {out.l_cls:.4f}  box {out.l_box:.4f}  mask {out.l_mask:.4f}  pose {out.l_pose:.4f}  total {out.total:.4f}")

# the whole finite-difference suite, as `pose6d gradcheck` runs it
for name, err in run_suite(100).items():
    print(f"{name:24s} worst rel. error {err:.1e}")
