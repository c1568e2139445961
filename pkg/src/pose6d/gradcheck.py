"""Finite-difference checks of every analytic gradient in the package."""

from __future__ import annotations

import numpy as np

from .losses import LossWeights, binary_cross_entropy_mask, pose_loss, smooth_l1, softmax_cross_entropy
from .pose_head import REL_FLOOR, MLP, _forward_cache, grad_check, init_mlp

GRAD_TOL = 1e-4
FD_STEP = 1e-6


def central_difference(f, x: np.ndarray, eps: float = FD_STEP) -> np.ndarray:
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        orig = x[i]
        x[i] = orig + eps
        fp = f(x)
        x[i] = orig - eps
        fm = f(x)
        x[i] = orig
        g[i] = (fp - fm) / (2 * eps)
    return g


def relative_error(analytic, numeric, floor: float = REL_FLOOR) -> float:
    """Max elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps near-zero entries from amplifying round-off in the
    difference quotient (about 1e-10 absolute at the default step).
    """
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float((np.abs(a - n) / denom).max())


def check_pose_loss(rng, p: int = 2) -> float:
    w = LossWeights(p=p)
    while True:
        gt = np.append(rng.uniform(-np.pi / 2, np.pi / 2, 3), rng.uniform(0.5, 1.5))
        pred = gt + rng.normal(0, 0.3, 4)
        # stay clear of the kinks at zero residual
        if np.abs(pred[3] - gt[3]) > 1e-3 and (p == 2 or np.all(np.abs(pred[:3] - gt[:3]) > 1e-3)):
            break
    _, g = pose_loss(pred, gt, w)
    return relative_error(g, central_difference(lambda x: pose_loss(x, gt, w)[0], pred))


def check_softmax(rng) -> float:
    n = int(rng.integers(2, 10))
    logits = rng.normal(0, 2, n)
    label = int(rng.integers(n))
    _, g = softmax_cross_entropy(logits, label)
    return relative_error(g, central_difference(lambda x: softmax_cross_entropy(x, label)[0], logits))


def check_smooth_l1(rng) -> float:
    while True:
        gt = rng.normal(0, 1, 4)
        pred = gt + rng.normal(0, 1.5, 4)
        if np.all(np.abs(np.abs(pred - gt) - 1.0) > 1e-3):
            break
    _, g = smooth_l1(pred, gt)
    return relative_error(g, central_difference(lambda x: smooth_l1(x, gt)[0], pred))


def check_bce(rng, size: int = 6) -> float:
    gt = (rng.random((size, size)) < 0.5).astype(float)
    pred = rng.uniform(0.05, 0.95, (size, size))
    _, g = binary_cross_entropy_mask(pred, gt)
    return relative_error(g, central_difference(lambda x: binary_cross_entropy_mask(x, gt)[0], pred))


def _clear_of_kinks(mlp: MLP, x, margin: float = 1e-4) -> bool:
    acts = _forward_cache(mlp, x)
    pre = [a @ w + b for a, w, b in zip(acts[:-2], mlp.weights[:-1], mlp.biases[:-1])]
    return all(np.all(np.abs(z) > margin) for z in pre)


def check_mlp(rng, n_inputs: int = 5, widths=(6, 5, 4, 4)) -> float:
    """Backprop through a small random pose head against central differences."""
    while True:
        mlp = init_mlp(n_inputs, widths, seed=int(rng.integers(2 ** 31)))
        mlp = MLP(mlp.weights, tuple(rng.normal(0, 0.1, b.shape) for b in mlp.biases))
        x = rng.normal(0, 1, (2, n_inputs))
        y = np.column_stack([rng.normal(0, 1, (2, 3)), rng.uniform(0.5, 1.5, 2)])
        if _clear_of_kinks(mlp, x):
            break
    return grad_check(mlp, x, y, FD_STEP, LossWeights(p=2))


CHECKS = {
    "pose_loss_p2": check_pose_loss,
    "softmax_cross_entropy": check_softmax,
    "smooth_l1": check_smooth_l1,
    "bce_mask": check_bce,
    "mlp_backprop": check_mlp,
}


def run_suite(n_instances: int = 100, seed: int = 0) -> dict[str, float]:
    """Worst relative error per check over ``n_instances`` random instances."""
    rng = np.random.default_rng(seed)
    return {name: max(fn(rng) for _ in range(n_instances)) for name, fn in CHECKS.items()}
