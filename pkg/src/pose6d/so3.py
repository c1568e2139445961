"""Rotation-vector / rotation-matrix maps and rigid-transform helpers.

Rotation vectors are plain ``(3,)`` float arrays whose norm is the rotation
angle in radians. Rotation matrices are ``(3, 3)`` arrays. Everything here is
a pure function of its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-9
_SMALL_ANGLE = 1e-4
# Below cos(theta) = -0.9 the antisymmetric part is too small to carry the axis.
_NEAR_PI_COS = -0.9
# sin(theta) below this is rounding noise: treat the angle as exactly pi
_PI_NOISE = 1e-14


def _vec3(r, name="r") -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError(f"{name} has non-finite components: {r}")
    return r


def hat(r) -> np.ndarray:
    """Skew-symmetric matrix ``S`` such that ``S @ v == np.cross(r, v)``."""
    x, y, z = _vec3(r)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(s) -> np.ndarray:
    """Inverse of :func:`hat`; reads the vector from the antisymmetric part."""
    s = np.asarray(s, dtype=float)
    return 0.5 * np.array([s[2, 1] - s[1, 2], s[0, 2] - s[2, 0], s[1, 0] - s[0, 1]])


def _exp_coeffs(theta: float) -> tuple[float, float]:
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0
    return np.sin(theta) / theta, (1.0 - np.cos(theta)) / (theta * theta)


def exp_map(r) -> np.ndarray:
    """Rodrigues exponential: rotation vector -> rotation matrix.

    Total on R^3; vectors longer than pi are accepted and wrap naturally.
    """
    r = _vec3(r)
    theta = float(np.linalg.norm(r))
    a, b = _exp_coeffs(theta)
    k = hat(r)
    return np.eye(3) + a * k + b * (k @ k)


def orthonormality_error(m) -> float:
    m = np.asarray(m, dtype=float)
    return float(np.linalg.norm(m.T @ m - np.eye(3)))


def check_rotation(m, tol: float = ORTHO_TOL) -> np.ndarray:
    """Return ``m`` as a float array, raising if it is not a proper rotation."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("rotation has non-finite entries")
    err = orthonormality_error(m)
    det = float(np.linalg.det(m))
    if err > tol or abs(det - 1.0) > tol:
        raise ValueError(
            f"not a rotation: |M^T M - I|_F = {err:.3e}, det = {det:.12f} (tol {tol:g})"
        )
    return m


def nearest_rotation(m) -> np.ndarray:
    """Project a near-rotation onto SO(3) (polar decomposition via SVD).

    This is the explicit repair step for drifted matrices; :func:`log_map`
    never applies it on its own.
    """
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def log_map(m, tol: float = ORTHO_TOL) -> np.ndarray:
    """Rodrigues logarithm: rotation matrix -> rotation vector with norm in [0, pi].

    At exactly pi the axis sign is ambiguous; the returned axis then has its
    first non-zero component positive.
    """
    m = check_rotation(m, tol)
    w = vee(m)  # sin(theta) * axis
    s = float(np.linalg.norm(w))
    c = 0.5 * (np.trace(m) - 1.0)
    theta = float(np.arctan2(s, c))

    if c > _NEAR_PI_COS:
        if theta < _SMALL_ANGLE:
            t2 = theta * theta
            return w / (1.0 - t2 / 6.0 + t2 * t2 / 120.0)
        return w * (theta / s)

    # Near pi: (M + M^T)/2 - cos(theta) I = (1 - cos(theta)) a a^T.
    outer = (0.5 * (m + m.T) - c * np.eye(3)) / (1.0 - c)
    k = int(np.argmax(np.diag(outer)))
    axis = outer[:, k] / np.sqrt(outer[k, k])
    axis /= np.linalg.norm(axis)
    if s > _PI_NOISE and float(axis @ w) < 0.0:
        axis = -axis
    elif s <= _PI_NOISE:
        nz = axis[np.abs(axis) > 1e-12]
        if nz.size and nz[0] < 0.0:
            axis = -axis
    return theta * axis


def angular_distance(r1, r2) -> float:
    """Geodesic angle in radians between two rotation matrices."""
    rel = np.asarray(r1, dtype=float) @ np.asarray(r2, dtype=float).T
    c = 0.5 * (np.trace(rel) - 1.0)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform taking object coordinates to camera coordinates (metres)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise ValueError(f"translation must be a finite 3-vector, got {t}")
        rot.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_rotvec(cls, r, t) -> "Pose":
        return cls(exp_map(r), t)

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        """Build from a 3x4 ``[R|t]`` or 4x4 homogeneous matrix."""
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __repr__(self):
        return f"Pose(rotvec={log_map(self.rotation, tol=1e-6)!r}, t={self.translation!r})"


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera parameters in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        for name in ("fx", "fy", "cx", "cy"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} is not finite")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


def transform_points(pose: Pose, points) -> np.ndarray:
    """Apply ``R p + t`` to an ``(N, 3)`` array (or a single 3-vector)."""
    pts = np.asarray(points, dtype=float)
    return pts @ pose.rotation.T + pose.translation


def project_points(points_cam, k: Intrinsics) -> np.ndarray:
    """Pinhole projection of camera-frame points to pixel coordinates ``(N, 2)``."""
    pts = np.atleast_2d(np.asarray(points_cam, dtype=float))
    z = pts[:, 2]
    if np.any(z <= 0):
        bad = int(np.argmax(z <= 0))
        raise ValueError(f"point {bad} is behind the camera (z = {z[bad]:g})")
    u = k.fx * pts[:, 0] / z + k.cx
    v = k.fy * pts[:, 1] / z + k.cy
    return np.stack([u, v], axis=1)
