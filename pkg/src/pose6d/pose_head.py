"""A small fully connected pose head trained from scratch with SGD.

Four affine layers with ReLU after the first three; the last layer emits the
raw 4-value pose code (rotation vector, depth) with no activation because the
targets take both signs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .codec import PoseCode
from .detection import roi_align
from .losses import LossWeights, _floats, pose_loss_batch
from .metrics import ObjectModel
from .so3 import Intrinsics, angular_distance, exp_map, log_map
from .synthetic import (DEFAULT_IMAGE_SIZE, DEFAULT_INTRINSICS, GroundTruthInstance,
                        make_model, render_instance, sample_visible_pose)

log = logging.getLogger(__name__)

DESK_WIDTHS = (64, 128, 64, 4)
FULL_WIDTHS = (4096, 4096, 384, 4)  # full-size head; pass as TrainConfig(widths=...)
# Gradient entries smaller than this are compared absolutely in grad checks.
REL_FLOOR = 1e-7


@dataclass(frozen=True, eq=False)
class MLP:
    weights: tuple  # each (fan_in, fan_out)
    biases: tuple

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights)

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    def params(self) -> list[np.ndarray]:
        return list(self.weights) + list(self.biases)

    def __eq__(self, other):
        if not isinstance(other, MLP):
            return NotImplemented
        return all(a.shape == b.shape and np.array_equal(a, b)
                   for a, b in zip(self.params(), other.params())) and self.widths == other.widths


def _check_widths(widths):
    if len(widths) != 4:
        raise ValueError(f"pose head needs exactly 4 layers, got {len(widths)}")
    if widths[-1] != 4:
        raise ValueError(f"pose head must output 4 values, got {widths[-1]}")


def init_mlp(n_inputs: int, widths=DESK_WIDTHS, seed: int = 0) -> MLP:
    """Fan-in scaled uniform weights (He limit ``sqrt(6 / fan_in)``), zero biases."""
    _check_widths(widths)
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    fan_in = n_inputs
    for width in widths:
        limit = np.sqrt(6.0 / fan_in)
        ws.append(rng.uniform(-limit, limit, size=(fan_in, width)))
        bs.append(np.zeros(width))
        fan_in = width
    return MLP(tuple(ws), tuple(bs))


def _forward_cache(mlp: MLP, x: np.ndarray):
    acts = [x]
    h = x
    n = len(mlp.weights)
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = h @ w + b
        h = np.maximum(z, 0.0) if i < n - 1 else z
        acts.append(h)
    return acts


def forward(mlp: MLP, features) -> np.ndarray:
    """Raw pose codes for a feature vector ``(d,)`` or batch ``(N, d)``."""
    x = np.asarray(features, dtype=float)
    if x.shape[-1] != mlp.n_inputs:
        raise ValueError(f"expected {mlp.n_inputs} input features, got {x.shape[-1]}")
    return _forward_cache(mlp, x)[-1]


def loss_and_grads(mlp: MLP, x, y, w: LossWeights) -> tuple[float, list[np.ndarray]]:
    """Mean pose loss over the batch and its gradient for every parameter
    (weights first, then biases, in layer order)."""
    x = np.atleast_2d(_floats(x))
    acts = _forward_cache(mlp, x)
    loss, g = pose_loss_batch(acts[-1], y, w)
    gw, gb = [], []
    for i in reversed(range(len(mlp.weights))):
        if i < len(mlp.weights) - 1:
            g = g * (acts[i + 1] > 0)
        gw.append(acts[i].T @ g)
        gb.append(g.sum(axis=0))
        g = g @ mlp.weights[i].T
    return loss, gw[::-1] + gb[::-1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    iterations: int = 6000
    lr_step: int = 4500  # learning rate drops 10x from this iteration on
    batch_size: int = 32
    seed: int = 0
    widths: tuple = DESK_WIDTHS

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(x) for x in self.widths))
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        _check_widths(self.widths)


# Settings for the desk-scale synthetic runs: stronger weight decay than the
# default keeps the small net from memorizing 1600 samples.
TOY_CONFIG = TrainConfig(learning_rate=0.01, weight_decay=0.05, iterations=20000,
                         lr_step=16000, batch_size=32, seed=0)


def train_step(mlp: MLP, x, y, cfg: TrainConfig, w: LossWeights, velocity=None,
               lr: float | None = None) -> tuple[MLP, list[np.ndarray], float]:
    """One SGD step with momentum and decoupled weight decay (weights only).

    Returns the updated network, the new momentum buffers and the batch loss
    measured before the update.
    """
    if len(x) == 0:
        raise ValueError("empty batch")
    lr = cfg.learning_rate if lr is None else lr
    loss, grads = loss_and_grads(mlp, x, y, w)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
        raise FloatingPointError(f"non-finite loss/gradient (loss={loss}); try a smaller learning rate")
    params = mlp.params()
    if velocity is None:
        velocity = [np.zeros_like(p) for p in params]
    n_w = len(mlp.weights)
    new_v, new_p = [], []
    for i, (p, g, v) in enumerate(zip(params, grads, velocity)):
        v = cfg.momentum * v + g
        p = p - lr * v
        if i < n_w:
            p = p - lr * cfg.weight_decay * params[i]
        new_v.append(v)
        new_p.append(p)
    return MLP(tuple(new_p[:n_w]), tuple(new_p[n_w:])), new_v, loss


def grad_check(mlp: MLP, x, y, eps: float = 1e-6, w: LossWeights = LossWeights(p=2)) -> float:
    """Largest relative gap between backprop and central differences over all parameters.

    The difference quotients are evaluated in extended precision so their
    round-off stays far below the tolerance being checked.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    _, analytic = loss_and_grads(mlp, x, y, w)
    params = [p.astype(np.longdouble) for p in mlp.params()]
    x = np.asarray(x, dtype=np.longdouble)
    y = np.asarray(y, dtype=np.longdouble)
    n_w = len(mlp.weights)

    def loss():
        return loss_and_grads(MLP(tuple(params[:n_w]), tuple(params[n_w:])), x, y, w)[0]

    worst = 0.0
    for idx, p in enumerate(params):
        num = np.zeros(p.shape)
        for j in np.ndindex(p.shape):
            orig = p[j]
            p[j] = orig + eps
            lp = loss()
            p[j] = orig - eps
            lm = loss()
            p[j] = orig
            num[j] = float((lp - lm) / (2 * eps))
        a = analytic[idx]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), REL_FLOOR)
        worst = max(worst, float((np.abs(a - num) / denom).max()))
    return worst


# -- toy data -----------------------------------------------------------------

N_FEATURES = 64
_GRID = 7
_GRAY_LEVELS = 16.0


def instance_features(inst: GroundTruthInstance, k: Intrinsics = DEFAULT_INTRINSICS) -> np.ndarray:
    """Fixed 64-value description of a rendered instance.

    Stands in for pooled backbone features. Layout: box center offset from
    the principal point and log box size (4); mask centroid offset in the box,
    normalized second moments and log area (6); mean texture intensity with
    its centroid offset and spread (5); 7x7 RoIAlign pooling of the texture
    intensity over the box (49).
    """
    b = inst.bbox
    u0, v0 = b.center
    f = 0.5 * (k.fx + k.fy)
    geom = [(u0 - k.cx) / f, (v0 - k.cy) / f, np.log(b.width / f), np.log(b.height / f)]

    ys, xs = np.nonzero(inst.mask)
    xs = (xs + 0.5 - u0) / b.width
    ys = (ys + 0.5 - v0) / b.height
    mx, my = xs.mean(), ys.mean()
    dx, dy = xs - mx, ys - my
    shape = [mx, my, 12 * (dx * dx).mean(), 12 * (dy * dy).mean(), 12 * (dx * dy).mean(),
             0.1 * np.log(xs.size / f ** 2)]

    texture = inst.texture if inst.texture is not None else inst.mask
    gray = texture / _GRAY_LEVELS
    g = gray[inst.mask]
    gw = g / g.sum()
    tx, ty = (gw * xs).sum(), (gw * ys).sum()
    tone = [g.mean(), tx - mx, ty - my, 12 * (gw * (xs - tx) ** 2).sum(), 12 * (gw * (ys - ty) ** 2).sum()]

    pooled = roi_align(gray, b, out=_GRID).ravel()
    return np.concatenate([geom, shape, tone, pooled])


@dataclass(frozen=True, eq=False)
class ToyDataset:
    features: np.ndarray  # (N, 64)
    codes: np.ndarray  # (N, 4) rotation vector + t_z
    rotations: np.ndarray  # (N, 3, 3)
    model: ObjectModel = field(repr=False)
    shape: str = ""


def make_toy_dataset(shape: str = "asymmetric-blob", n: int = 2000, seed: int = 0,
                     theta_max: float = 1.2, tz_range=(0.5, 1.0), constant_pose=None,
                     k: Intrinsics = DEFAULT_INTRINSICS, image_size=DEFAULT_IMAGE_SIZE,
                     n_points: int = 1500, margin: float = 60.0) -> ToyDataset:
    """Render ``n`` random poses of one shape and collect features and targets.

    With ``constant_pose`` every sample uses that pose.
    """
    model = make_model(shape, n_points=n_points, seed=seed)
    rng = np.random.default_rng(seed + 1)
    feats, codes, rots = [], [], []
    for _ in range(n):
        if constant_pose is not None:
            inst = render_instance(model, constant_pose, k, image_size)
        else:
            _, inst = sample_visible_pose(model, k, image_size, rng, tz_range, theta_max, margin)
        feats.append(instance_features(inst, k))
        codes.append(inst.pose_code.as_array())
        rots.append(inst.pose.rotation)
    return ToyDataset(np.array(feats), np.array(codes), np.array(rots), model, shape)


@dataclass(frozen=True)
class ErrorReport:
    median_angle_deg: float
    median_tz_err_m: float
    n_train: int
    n_test: int
    initial_loss: float
    final_loss: float
    median_yaw_deg: float = float("nan")
    median_tilt_deg: float = float("nan")


def swing_twist_errors(r_gt, r_est, axis=(0.0, 0.0, 1.0)) -> tuple[float, float]:
    """Split the error rotation into tilt of the object ``axis`` and spin about it.

    Returns ``(tilt, twist)`` in radians: tilt is the angle between the axis
    direction under the two rotations; twist is the residual rotation about
    the axis.
    """
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    rel = np.asarray(r_gt).T @ np.asarray(r_est)  # object-frame error
    tilt = float(np.arccos(np.clip((r_gt @ a) @ (r_est @ a), -1.0, 1.0)))
    # quaternion of rel; its twist part about ``a`` is (w, (v.a) a)
    rv = log_map(rel, tol=1e-6)
    angle = np.linalg.norm(rv)
    qw = np.cos(angle / 2)
    qv = np.sin(angle / 2) * (rv / angle) if angle > 0 else np.zeros(3)
    twist = 2 * np.arctan2(abs(qv @ a), abs(qw))
    return tilt, float(twist)


def _fold_standardization(mlp: MLP, mean, std) -> MLP:
    w0 = mlp.weights[0] / std[:, None]
    b0 = mlp.biases[0] - mean @ w0
    return MLP((w0,) + mlp.weights[1:], (b0,) + mlp.biases[1:])


def train_toy(data: ToyDataset, cfg: TrainConfig = TOY_CONFIG,
              w: LossWeights = LossWeights(p=1), test_fraction: float = 0.2) -> tuple[MLP, ErrorReport]:
    """Train on the first 80% of ``data`` and report errors on the rest.

    Inputs are standardized with training statistics; the standardization is
    folded into the first layer of the returned network so it consumes raw
    features.
    """
    n = len(data.features)
    n_test = max(1, int(round(test_fraction * n)))
    n_train = n - n_test
    x_tr, y_tr = data.features[:n_train], data.codes[:n_train]
    mean = x_tr.mean(axis=0)
    std = x_tr.std(axis=0)
    std = np.where(std > 1e-8, std, 1.0)
    xs = (x_tr - mean) / std

    mlp = init_mlp(xs.shape[1], cfg.widths, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    velocity = None
    initial = loss_and_grads(mlp, xs, y_tr, w)[0]
    order = rng.permutation(n_train)
    pos = 0
    for it in range(cfg.iterations):
        if pos + cfg.batch_size > n_train:
            order = rng.permutation(n_train)
            pos = 0
        idx = order[pos:pos + cfg.batch_size]
        pos += cfg.batch_size
        lr = cfg.learning_rate if it < cfg.lr_step else cfg.learning_rate / 10
        mlp, velocity, loss = train_step(mlp, xs[idx], y_tr[idx], cfg, w, velocity, lr)
        if it % 1000 == 0:
            log.debug("iter %d loss %.5f", it, loss)
    final = loss_and_grads(mlp, xs, y_tr, w)[0]
    mlp = _fold_standardization(mlp, mean, std)

    pred = forward(mlp, data.features[n_train:])
    rot_gt = data.rotations[n_train:]
    angles, yaws, tilts = [], [], []
    for p, r in zip(pred, rot_gt):
        r_est = exp_map(p[:3])
        angles.append(angular_distance(r, r_est))
        tilt, twist = swing_twist_errors(r, r_est)
        tilts.append(tilt)
        yaws.append(twist)
    tz_err = np.abs(pred[:, 3] - data.codes[n_train:, 3])
    report = ErrorReport(
        median_angle_deg=float(np.rad2deg(np.median(angles))),
        median_tz_err_m=float(np.median(tz_err)),
        n_train=n_train,
        n_test=n_test,
        initial_loss=float(initial),
        final_loss=float(final),
        median_yaw_deg=float(np.rad2deg(np.median(yaws))),
        median_tilt_deg=float(np.rad2deg(np.median(tilts))),
    )
    return mlp, report


def predict_code(mlp: MLP, features) -> PoseCode:
    return PoseCode.from_array(forward(mlp, features))
