"""
Rotation vectors, rotation matrices and the 4-value pose code
=============================================================

A rotation is stored as a 3-vector whose direction is the axis and whose
length is the angle. The pose head only regresses that vector plus the
depth t_z; the sideways translation comes back from the box center.
"""

import numpy as np

from pose6d.codec import centered_bbox, decode_pose, encode_pose, recover_translation
from pose6d.so3 import Intrinsics, Pose, angular_distance, exp_map, hat, log_map

np.set_printoptions(precision=4, suppress=True)

# a quarter turn about x
r = np.array([np.pi / 2, 0, 0])
print("hat(r):\n", hat(r))
print("exp(r):\n", exp_map(r))

# log undoes exp, including tiny and near-half-turn angles
for angle in (1e-8, 0.3, 2.0, np.pi - 1e-6):
    axis = np.array([1.0, -2.0, 0.5]) / np.linalg.norm([1.0, -2.0, 0.5])
    back = log_map(exp_map(angle * axis))
    print(f"angle {angle:.3g}: round-trip error {np.linalg.norm(back - angle * axis):.1e}")

# angles past pi come back through the opposite axis
print("1.5 pi about z ->", log_map(exp_map([0, 0, 1.5 * np.pi])))

# the pose code drops t_x and t_y
k = Intrinsics(572.4, 573.6, 325.3, 242.0)
pose = Pose(exp_map([0.2, -0.4, 0.9]), [0.07, -0.05, 0.85])
code = encode_pose(pose)
print("code r =", code.r, " t_z =", code.t_z)

# a box centered on the projected origin gives them back exactly
box = centered_bbox(pose, k, 80, 60)
back = decode_pose(code, box, k)
print("recovered t:", back.translation, " true t:", pose.translation)
print("rotation error (rad):", angular_distance(back.rotation, pose.rotation))

# moving the box by du pixels moves t_x by du * t_z / f_x
t0 = recover_translation(box, code.t_z, k)
t1 = recover_translation(box.shifted(10, 0), code.t_z, k)
print("t_x shift for 10 px:", t1[0] - t0[0], "=", 10 * code.t_z / k.fx)
