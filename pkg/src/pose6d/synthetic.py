"""Procedural object models, pose sampling and silhouette rendering.

Ground truth is derived the same way as for real data: from an object
model, a pose and the camera matrix, the instance mask and box follow by
projection. Masks are the filled 2D convex hull of the projected points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .codec import BBox, PoseCode, encode_pose
from .metrics import ObjectModel
from .so3 import Intrinsics, Pose, exp_map, project_points, transform_points

SHAPES = ("box", "cylinder", "asymmetric-blob")
DEFAULT_INTRINSICS = Intrinsics(572.4, 573.6, 325.3, 242.0)
DEFAULT_IMAGE_SIZE = (640, 480)  # (width, height)

# Sphere centers/radii of the blob: a core plus three antipodal lobe pairs.
# Pair radii differ and the pair axes are skew to each other, so no proper
# rotation maps the shape onto itself; the point reflection it does have
# keeps its silhouette box centred on the projected origin.
_BLOB_CORE = np.array([[0.0, 0.0, 0.0, 0.045]])
_BLOB_PAIRS = np.array([
    [0.052, 0.010, -0.006, 0.030],
    [-0.014, 0.044, 0.012, 0.024],
    [0.008, -0.012, 0.046, 0.019],
])
_BLOB_LOBES = np.vstack([_BLOB_CORE, _BLOB_PAIRS, _BLOB_PAIRS * [-1, -1, -1, 1]])
# each lobe is cut into two halves; opposite lobes are cut along different
# planes so the texture breaks the point reflection
_BLOB_SPLITS = np.array([
    [0.0, 0.0, 1.0],
    [0.0, 1.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.577, -0.577, 0.577],
    [0.0, 0.0, 1.0],
    [0.0, 1.0, 0.0],
    [1.0, 0.0, 0.0],
])


def gaussian(rng: np.random.Generator, n: int) -> np.ndarray:
    """Standard normals by Box-Muller on the generator's uniform stream."""
    m = (n + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1]
    u2 = rng.random(m)
    rad = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([rad * np.cos(2 * np.pi * u2), rad * np.sin(2 * np.pi * u2)])
    return z[:n]


def _unit_vectors(rng, n):
    v = gaussian(rng, 3 * n).reshape(n, 3)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _box_points(extents, n, rng):
    e = np.asarray(extents, dtype=float) / 2.0
    corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]) * e
    m = n - 8
    areas = np.array([e[1] * e[2], e[1] * e[2], e[0] * e[2], e[0] * e[2], e[0] * e[1], e[0] * e[1]])
    face = rng.choice(6, size=m, p=areas / areas.sum())
    pts = (rng.random((m, 3)) * 2 - 1) * e
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    pts[np.arange(m), axis] = sign * e[axis]
    return np.vstack([corners, pts]), np.concatenate([np.zeros(8, dtype=int), face])


def _cylinder_points(extents, n, rng):
    radius = extents[0] / 2.0
    half_h = extents[2] / 2.0
    # evenly spaced rim points keep the silhouette invariant to spin
    n_rim = max(4, 2 * (n // 8))
    ang = 2 * np.pi * np.arange(n_rim) / n_rim
    rim = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    rims = np.vstack([np.column_stack([rim, np.full(n_rim, -half_h)]),
                      np.column_stack([rim, np.full(n_rim, half_h)])])
    rim_parts = np.repeat([2, 1], n_rim)  # bottom cap 2, top cap 1, side 0
    m = n - 2 * n_rim
    if m <= 0:
        return rims[:n], rim_parts[:n]
    side_area = 2 * np.pi * radius * 2 * half_h
    cap_area = 2 * np.pi * radius ** 2
    on_side = rng.random(m) < side_area / (side_area + cap_area)
    theta = 2 * np.pi * rng.random(m)
    z = np.where(on_side, (2 * rng.random(m) - 1) * half_h, np.where(rng.random(m) < 0.5, -half_h, half_h))
    rr = np.where(on_side, radius, radius * np.sqrt(rng.random(m)))
    body = np.column_stack([rr * np.cos(theta), rr * np.sin(theta), z])
    body_parts = np.where(on_side, 0, np.where(z > 0, 1, 2))
    return np.vstack([rims, body]), np.concatenate([rim_parts, body_parts])


def _blob_points(scale, n, rng):
    lobes = _BLOB_LOBES.copy()
    lobes *= scale / 0.15
    radii = lobes[:, 3]
    weights = radii ** 2 / (radii ** 2).sum()
    pts, parts = [], []
    need = n
    while need > 0:
        k = rng.choice(len(lobes), size=2 * need, p=weights)
        cand = lobes[k, :3] + radii[k, None] * _unit_vectors(rng, 2 * need)
        # drop points buried inside another lobe
        d = np.linalg.norm(cand[:, None, :] - lobes[None, :, :3], axis=2)
        buried = (d < radii[None, :] - 1e-12) & (np.arange(len(lobes))[None, :] != k[:, None])
        keep = ~buried.any(axis=1)
        cand, k = cand[keep][:need], k[keep][:need]
        # split every lobe into two differently textured halves
        half = ((cand - lobes[k, :3]) * _BLOB_SPLITS[k]).sum(axis=1) > 0
        pts.append(cand)
        parts.append(2 * k + half)
        need -= len(pts[-1])
    return np.vstack(pts), np.concatenate(parts)


def make_model(shape: str, n_points: int = 1000, seed: int = 0, extents=None) -> ObjectModel:
    """Deterministic surface point cloud, centred on its 3D bounding-box center.

    ``extents`` are full side lengths in metres: ``(sx, sy, sz)`` for a box,
    ``(diameter, diameter, height)`` for a cylinder whose axis is the object
    z axis, and a single overall size for the blob.
    """
    if n_points < 8:
        raise ValueError("n_points must be >= 8")
    rng = np.random.default_rng(seed)
    if shape == "box":
        pts, parts = _box_points(extents if extents is not None else (0.1, 0.1, 0.1), n_points, rng)
    elif shape == "cylinder":
        pts, parts = _cylinder_points(extents if extents is not None else (0.08, 0.08, 0.12), n_points, rng)
    elif shape == "asymmetric-blob":
        size = float(np.max(extents)) if extents is not None else 0.15
        pts, parts = _blob_points(size, n_points, rng)
    else:
        raise ValueError(f"unknown shape {shape!r}; expected one of {SHAPES}")
    pts = pts - 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    return ObjectModel(pts, name=shape, parts=parts)


def uniform_ball(rng: np.random.Generator, radius: float) -> np.ndarray:
    if radius == 0:
        return np.zeros(3)
    direction = _unit_vectors(rng, 1)[0]
    return direction * radius * rng.random() ** (1.0 / 3.0)


def sample_pose(
    tz_range=(0.6, 1.2),
    theta_max: float = np.pi,
    rng: np.random.Generator | int = 0,
    k: Intrinsics = DEFAULT_INTRINSICS,
    image_size=DEFAULT_IMAGE_SIZE,
    margin: float = 0.0,
) -> Pose:
    """Random pose whose origin projects inside the image.

    The rotation vector is uniform in the ball of radius ``theta_max``; the
    depth is uniform in ``tz_range``; the projected origin is uniform over the
    image shrunk by ``margin`` pixels on every side.
    """
    lo, hi = tz_range
    if not 0 < lo <= hi:
        raise ValueError("tz_range must be positive and ordered")
    if not 0 <= theta_max <= np.pi:
        raise ValueError("theta_max must lie in [0, pi]")
    w, h = image_size
    if 2 * margin >= min(w, h):
        raise ValueError("margin leaves no room in the image")
    rng = np.random.default_rng(rng)
    r = uniform_ball(rng, theta_max)
    tz = lo + (hi - lo) * rng.random()
    u = margin + (w - 2 * margin) * rng.random()
    v = margin + (h - 2 * margin) * rng.random()
    t = np.array([(u - k.cx) * tz / k.fx, (v - k.cy) * tz / k.fy, tz])
    return Pose(exp_map(r), t)


def perturb_pose(pose: Pose, rot_sigma: float, trans_sigma: float,
                 rng: np.random.Generator | int = 0) -> Pose:
    """Left-multiply by ``exp(eps)`` with Gaussian ``eps`` and add Gaussian
    translation noise."""
    if rot_sigma < 0 or trans_sigma < 0:
        raise ValueError("sigmas must be non-negative")
    rng = np.random.default_rng(rng)
    eps = rot_sigma * gaussian(rng, 3)
    dt = trans_sigma * gaussian(rng, 3)
    return Pose(exp_map(eps) @ pose.rotation, pose.translation + dt)


def offset_pose(pose: Pose, angle: float, distance: float,
                rng: np.random.Generator | int = 0) -> Pose:
    """Perturb by exactly ``angle`` radians and ``distance`` metres along
    random directions."""
    rng = np.random.default_rng(rng)
    axis = _unit_vectors(rng, 1)[0]
    direction = _unit_vectors(rng, 1)[0]
    return Pose(exp_map(angle * axis) @ pose.rotation, pose.translation + distance * direction)


@dataclass(frozen=True, eq=False)
class GroundTruthInstance:
    class_id: int
    bbox: BBox
    mask: np.ndarray
    pose: Pose
    pose_code: PoseCode
    hull: np.ndarray = field(repr=False, default=None)
    texture: np.ndarray = field(repr=False, default=None)  # see paint_parts


def _convex_polygon(uv: np.ndarray) -> np.ndarray:
    hull = ConvexHull(uv)
    return uv[hull.vertices]  # counter-clockwise for 2D input


def rasterize_convex(poly: np.ndarray, width: int, height: int) -> np.ndarray:
    """Boolean mask of pixels whose centers fall inside a convex polygon.

    Scanline fill: each pixel-center row is clipped against every edge and
    the covered span is the min/max of the crossings (boundary inclusive).
    """
    mask = np.zeros((height, width), dtype=bool)
    y0 = max(int(np.floor(poly[:, 1].min() - 0.5)) + 1, 0)
    y1 = min(int(np.floor(poly[:, 1].max() - 0.5)) + 1, height)
    if y0 >= y1:
        return mask
    yc = np.arange(y0, y1) + 0.5
    a = poly
    b = np.roll(poly, -1, axis=0)
    dy = b[:, 1] - a[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (yc[None, :] - a[:, 1, None]) / dy[:, None]
    hit = (t >= 0) & (t <= 1) & (dy[:, None] != 0)
    xs = a[:, 0, None] + np.where(hit, t, 0.0) * (b[:, 0] - a[:, 0])[:, None]
    xl = np.where(hit, xs, np.inf).min(axis=0)
    xr = np.where(hit, xs, -np.inf).max(axis=0)
    # vertices lying exactly on a row (covers horizontal edges)
    on_row = poly[:, 1, None] == yc[None, :]
    xl = np.minimum(xl, np.where(on_row, poly[:, 0, None], np.inf).min(axis=0))
    xr = np.maximum(xr, np.where(on_row, poly[:, 0, None], -np.inf).max(axis=0))
    ok = np.isfinite(xl) & np.isfinite(xr)
    c0 = np.where(ok, np.ceil(xl - 0.5), 0).astype(int).clip(0, width)
    c1 = np.where(ok, np.floor(xr - 0.5) + 1, 0).astype(int).clip(0, width)
    cols = np.arange(width)
    mask[y0:y1] = (cols[None, :] >= c0[:, None]) & (cols[None, :] < c1[:, None])
    return mask


def mask_bbox(mask: np.ndarray) -> BBox:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise ValueError("empty mask")
    return BBox(float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))


def render_instance(model: ObjectModel, pose: Pose, k: Intrinsics,
                    image_size=DEFAULT_IMAGE_SIZE, class_id: int = 1) -> GroundTruthInstance:
    """Project ``model`` under ``pose`` and fill its silhouette.

    Raises if any point is behind the camera or the silhouette leaves the image.
    """
    w, h = image_size
    uv = project_points(transform_points(pose, model.points), k)
    if uv.min() < 0 or uv[:, 0].max() > w or uv[:, 1].max() > h:
        raise ValueError("object projects (partly) outside the image")
    poly = _convex_polygon(uv)
    mask = rasterize_convex(poly, w, h)
    if not mask.any():
        raise ValueError("object covers no pixel centers")
    texture = paint_parts(model, pose, uv, mask)
    return GroundTruthInstance(class_id, mask_bbox(mask), mask, pose, encode_pose(pose), poly, texture)


def paint_parts(model: ObjectModel, pose: Pose, uv: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Label image of the visible surface part at each pixel.

    0 is background, 1 a silhouette pixel no part covers, ``i + 2`` part
    ``i``. Parts are painted far to near (by mean depth) as filled convex
    hulls, which is exact for the convex pieces used here.
    """
    h, w = mask.shape
    texture = mask.astype(np.int16)
    if model.parts is None:
        return texture
    depth = transform_points(pose, model.points)[:, 2]
    ids = np.unique(model.parts)
    order = sorted(ids, key=lambda i: -depth[model.parts == i].mean())
    for i in order:
        sel = uv[model.parts == i]
        if len(sel) < 3:
            continue
        try:
            poly = _convex_polygon(sel)
        except QhullError:  # part seen edge-on
            continue
        texture[rasterize_convex(poly, w, h) & mask] = i + 2
    return texture


def sample_visible_pose(model: ObjectModel, k: Intrinsics, image_size, rng: np.random.Generator,
                        tz_range=(0.6, 1.2), theta_max: float = np.pi, margin: float = 0.0,
                        max_tries: int = 1000) -> tuple[Pose, GroundTruthInstance]:
    """Rejection-sample poses until the object renders fully inside the image."""
    for _ in range(max_tries):
        pose = sample_pose(tz_range, theta_max, rng, k, image_size, margin)
        try:
            return pose, render_instance(model, pose, k, image_size)
        except ValueError:
            continue
    raise RuntimeError("could not place the object inside the image")


@dataclass(frozen=True, eq=False)
class SceneObject:
    model: ObjectModel
    pose: Pose
    class_id: int


@dataclass(frozen=True, eq=False)
class SceneSpec:
    objects: list
    intrinsics: Intrinsics = DEFAULT_INTRINSICS
    image_w: int = 640
    image_h: int = 480
    seed: int = 0

    def __post_init__(self):
        for obj in self.objects:
            t = obj.pose.translation
            if not t[2] > 0:
                raise ValueError("object behind the camera")
            u, v = project_points(t[None], self.intrinsics)[0]
            if not (0 <= u < self.image_w and 0 <= v < self.image_h):
                raise ValueError("object center projects outside the image")


def render_scene(spec: SceneSpec) -> list[GroundTruthInstance]:
    return [render_instance(o.model, o.pose, spec.intrinsics, (spec.image_w, spec.image_h), o.class_id)
            for o in spec.objects]
