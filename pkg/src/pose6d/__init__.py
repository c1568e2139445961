"""6D object pose estimation geometry toolkit.

Modules: ``so3`` (rotation maps, poses, projection), ``codec`` (pose code
and translation recovery), ``losses``, ``gradcheck``, ``detection``
(anchors, IoU, NMS, RoI sampling, RoIAlign), ``metrics``, ``synthetic``
(models, poses, rendering), ``pose_head`` (toy MLP), ``io`` (file formats),
``evaluation`` and ``cli``.
"""

__version__ = "0.1.0"
