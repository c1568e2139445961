"""4-value pose code (rotation vector + depth) and translation recovery."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .so3 import Intrinsics, Pose, exp_map, log_map


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in continuous pixel coordinates, half-open ``[min, max)``."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(np.isfinite(vals)):
            raise ValueError(f"bbox has non-finite coordinates: {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate bbox: {vals}")

    @classmethod
    def from_array(cls, a) -> "BBox":
        x0, y0, x1, y1 = (float(v) for v in a)
        return cls(x0, y0, x1, y1)

    def as_array(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max])

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def shifted(self, du: float = 0.0, dv: float = 0.0) -> "BBox":
        return BBox(self.x_min + du, self.y_min + dv, self.x_max + du, self.y_max + dv)


@dataclass(frozen=True, eq=False)
class PoseCode:
    """What the pose head regresses: a rotation vector and the depth ``t_z``."""

    r: np.ndarray
    t_z: float

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        if r.shape != (3,) or not np.all(np.isfinite(r)):
            raise ValueError(f"r must be a finite 3-vector, got {r}")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t_z", float(self.t_z))

    @classmethod
    def from_array(cls, a) -> "PoseCode":
        a = np.asarray(a, dtype=float)
        return cls(a[:3], a[3])

    def as_array(self) -> np.ndarray:
        return np.append(self.r, self.t_z)

    def __eq__(self, other):
        if not isinstance(other, PoseCode):
            return NotImplemented
        return bool(np.array_equal(self.r, other.r) and self.t_z == other.t_z)

    def __repr__(self):
        return f"PoseCode(r={self.r.tolist()}, t_z={self.t_z!r})"


def encode_pose(pose: Pose) -> PoseCode:
    """Keep the rotation (as a canonical rotation vector) and the depth only."""
    t_z = float(pose.translation[2])
    if not t_z > 0:
        raise ValueError(f"object must be in front of the camera, got t_z = {t_z}")
    return PoseCode(log_map(pose.rotation), t_z)


def recover_translation(bbox: BBox, t_z: float, k: Intrinsics) -> np.ndarray:
    """Back-project the box center at depth ``t_z``.

    Assumes the box center is the image of the object origin. Note the
    vertical offset is taken from ``cy``.
    """
    if not t_z > 0:
        raise ValueError(f"t_z must be positive, got {t_z}")
    u0, v0 = bbox.center
    return np.array([(u0 - k.cx) * t_z / k.fx, (v0 - k.cy) * t_z / k.fy, t_z])


def decode_pose(code: PoseCode, bbox: BBox, k: Intrinsics) -> Pose:
    return Pose(exp_map(code.r), recover_translation(bbox, code.t_z, k))


def centered_bbox(pose: Pose, k: Intrinsics, width: float = 2.0, height: float = 2.0) -> BBox:
    """Box of the given size centered on the projection of the object origin."""
    t = pose.translation
    if not t[2] > 0:
        raise ValueError("object origin is behind the camera")
    u = k.fx * t[0] / t[2] + k.cx
    v = k.fy * t[1] / t[2] + k.cy
    return BBox(u - width / 2, v - height / 2, u + width / 2, v + height / 2)
