"""Training losses with analytic gradients.

Each single-instance loss returns ``(value, gradient)`` where the gradient is
taken with respect to the prediction argument.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

BCE_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Scale factors for the four task losses plus the depth weight and norm.

    Defaults are the published settings: alphas (1, 1, 2, 2), beta 1.5, p = 1.
    """

    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 2.0
    alpha4: float = 2.0
    beta: float = 1.5
    p: int = 1

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha3", "alpha4", "beta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.p not in (1, 2):
            raise ValueError(f"p must be 1 or 2, got {self.p}")


@dataclass(frozen=True)
class LossBreakdown:
    l_cls: float
    l_box: float
    l_mask: float
    l_pose: float
    total: float


def _floats(x) -> np.ndarray:
    """Array view keeping extended-precision input (used by gradient checks)."""
    x = np.asarray(x)
    return x if x.dtype == np.longdouble else x.astype(float, copy=False)


def _as4(x) -> np.ndarray:
    if hasattr(x, "as_array"):
        x = x.as_array()
    x = _floats(x)
    if x.shape[-1] != 4:
        raise ValueError(f"pose code must have 4 entries, got shape {x.shape}")
    return x


def pose_loss(pred, gt, w: LossWeights = LossWeights()) -> tuple[float, np.ndarray]:
    """``||r - r_gt||_p + beta * |t_z - t_z_gt|`` and its gradient w.r.t. ``pred``.

    The rotation residual is taken in rotation-vector coordinates, not as a
    geodesic angle. At zero residual the (sub)gradient is 0.
    """
    pred, gt = _as4(pred), _as4(gt)
    d = pred - gt
    dr, dt = d[:3], d[3]
    grad = np.zeros(4)
    if w.p == 1:
        loss_r = float(np.abs(dr).sum())
        grad[:3] = np.sign(dr)
    else:
        loss_r = float(np.hypot.reduce(dr))  # no underflow from squaring
        if loss_r > 0:
            grad[:3] = dr / loss_r
    grad[3] = w.beta * np.sign(dt)
    return loss_r + w.beta * abs(float(dt)), grad


def pose_loss_batch(pred, gt, w: LossWeights = LossWeights()) -> tuple[float, np.ndarray]:
    """Mean :func:`pose_loss` over rows of ``(N, 4)`` arrays; gradient is ``(N, 4)``."""
    pred, gt = np.atleast_2d(_as4(pred)), np.atleast_2d(_as4(gt))
    n = pred.shape[0]
    d = pred - gt
    dr, dt = d[:, :3], d[:, 3]
    grad = np.zeros_like(d)
    if w.p == 1:
        loss_r = np.abs(dr).sum(axis=1)
        grad[:, :3] = np.sign(dr)
    else:
        loss_r = np.hypot.reduce(dr, axis=1)
        safe = np.where(loss_r > 0, loss_r, 1.0)
        grad[:, :3] = np.where(loss_r[:, None] > 0, dr / safe[:, None], 0.0)
    grad[:, 3] = w.beta * np.sign(dt)
    loss = loss_r + w.beta * np.abs(dt)
    return loss.mean(), grad / n  # numpy scalar: keeps longdouble for grad checks


def softmax_cross_entropy(logits, label: int) -> tuple[float, np.ndarray]:
    z = np.asarray(logits, dtype=float)
    if not 0 <= label < z.size:
        raise ValueError(f"label {label} out of range for {z.size} classes")
    shifted = z - z.max()
    log_norm = np.log(np.exp(shifted).sum())
    log_p = shifted - log_norm
    grad = np.exp(log_p)
    grad[label] -= 1.0
    return float(-log_p[label]), grad


def smooth_l1(pred, gt) -> tuple[float, np.ndarray]:
    """Huber loss with unit transition, summed over coordinates."""
    d = np.asarray(pred, dtype=float) - np.asarray(gt, dtype=float)
    a = np.abs(d)
    quad = a < 1.0
    loss = np.where(quad, 0.5 * d * d, a - 0.5).sum()
    grad = np.where(quad, d, np.sign(d))
    return float(loss), grad


def binary_cross_entropy_mask(pred, gt, eps: float = BCE_EPS) -> tuple[float, np.ndarray]:
    """Mean per-pixel BCE. Probabilities are clamped to ``[eps, 1 - eps]``;
    the gradient is zero where the clamp is active."""
    p_raw = np.asarray(pred, dtype=float)
    g = np.asarray(gt, dtype=float)
    if p_raw.shape != g.shape:
        raise ValueError(f"mask shapes differ: {p_raw.shape} vs {g.shape}")
    p = np.clip(p_raw, eps, 1.0 - eps)
    n = p.size
    loss = -(g * np.log(p) + (1.0 - g) * np.log1p(-p)).sum() / n
    grad = (p - g) / (p * (1.0 - p)) / n
    grad = np.where((p_raw > eps) & (p_raw < 1.0 - eps), grad, 0.0)
    return float(loss), grad


def combine(l_cls: float, l_box: float, l_mask: float, l_pose: float,
            w: LossWeights = LossWeights()) -> LossBreakdown:
    total = w.alpha1 * l_cls + w.alpha2 * l_box + w.alpha3 * l_mask + w.alpha4 * l_pose
    return LossBreakdown(float(l_cls), float(l_box), float(l_mask), float(l_pose), float(total))


def multi_task_loss(
    cls_logits,
    labels: Sequence[int],
    box_deltas: Optional[Sequence] = None,
    box_targets: Optional[Sequence] = None,
    mask_probs: Optional[Sequence] = None,
    mask_targets: Optional[Sequence] = None,
    pose_pred: Optional[Sequence] = None,
    pose_targets: Optional[Sequence] = None,
    w: LossWeights = LossWeights(),
) -> LossBreakdown:
    """Weighted sum of classification, box, mask and pose losses over sampled RoIs.

    ``labels[i] == 0`` marks a negative (background) RoI. Target sequences are
    indexed like ``labels`` and must hold ``None`` at negative positions.
    Classification is averaged over all RoIs; the other terms over positives.
    """
    logits = np.atleast_2d(np.asarray(cls_logits, dtype=float))
    labels = [int(x) for x in labels]
    if len(labels) != logits.shape[0]:
        raise ValueError("labels and cls_logits disagree in length")
    pos = [i for i, lab in enumerate(labels) if lab > 0]

    for name, targets in (("box", box_targets), ("mask", mask_targets), ("pose", pose_targets)):
        if targets is None:
            continue
        if len(targets) != len(labels):
            raise ValueError(f"{name} targets disagree in length with labels")
        for i, lab in enumerate(labels):
            if lab == 0 and targets[i] is not None:
                raise ValueError(f"{name} target attached to negative RoI {i}")

    l_cls = float(np.mean([softmax_cross_entropy(z, lab)[0] for z, lab in zip(logits, labels)]))

    def positive_mean(fn, preds, targets):
        if not pos or targets is None:
            return 0.0
        if preds is None:
            raise ValueError("targets supplied without predictions")
        return float(np.mean([fn(preds[i], targets[i])[0] for i in pos]))

    l_box = positive_mean(smooth_l1, box_deltas, box_targets)
    l_mask = positive_mean(binary_cross_entropy_mask, mask_probs, mask_targets)
    l_pose = positive_mean(lambda a, b: pose_loss(a, b, w), pose_pred, pose_targets)
    return combine(l_cls, l_box, l_mask, l_pose, w)
