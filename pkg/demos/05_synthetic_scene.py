"""
Rendering ground truth from a pose
==================================

Masks, boxes and pose codes all follow from a model and a pose. The
cylinder is spin-symmetric about its axis, which is why its yaw cannot
be recovered from appearance.
"""

import numpy as np

from pose6d.so3 import Pose, exp_map
from pose6d.synthetic import DEFAULT_INTRINSICS as K, SHAPES, make_model, render_instance

for shape in SHAPES:
    m = make_model(shape, 1500, seed=0)
    inst = render_instance(m, Pose(exp_map([0.5, 0.3, 0.2]), [0.0, 0.0, 0.7]), K, (640, 480))
    b = inst.bbox
    print(f"{shape:16s} diameter {m.diameter:.3f} m  box {b.width:.0f}x{b.height:.0f} px  "
          f"mask {inst.mask.sum()} px  code {np.round(inst.pose_code.as_array(), 3)}")

# a coarse look at the blob's texture: parts carry distinct gray levels
m = make_model("asymmetric-blob", 1500, seed=0)
inst = render_instance(m, Pose(exp_map([0.5, 0.3, 0.2]), [0.0, 0.0, 0.5]), K, (640, 480))
x0, y0, x1, y1 = (int(v) for v in inst.bbox.as_array())
crop = inst.texture[y0:y1:8, x0:x1:5]
print("\n".join("".join(" .:-=+*#%@"[min(int(v), 9)] for v in row) for row in crop))

# spinning the cylinder about its own axis leaves the mask unchanged
cyl = make_model("cylinder", 3000, seed=0)
base = Pose(exp_map([0.6, 0.0, 0.0]), [0, 0, 0.7])
for spin in (0.0, 0.7, 2.0):
    spun = Pose(base.rotation @ exp_map([0, 0, spin]), base.translation)
    a = render_instance(cyl, base, K, (640, 480)).mask
    b = render_instance(cyl, spun, K, (640, 480)).mask
    print(f"cylinder spin {spin:.1f} rad: mask IoU {(a & b).sum() / (a | b).sum():.3f}")
