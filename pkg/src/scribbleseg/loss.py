"""Supervised-cell losses: focal cross-entropy, soft Dice, and L2 weight decay.

All three terms are evaluated only over supervised cells (labels different
from the ignore value) and return both the scalar value and analytic
gradients, in float64. The combined objective is

    total = focal_ce + lambda_dice * soft_dice + lambda_w * sum_i ||theta_i||^2

where the L2 sum runs over the trainable head parameters only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, SupervisionError
from .ops import softmax

IGNORE_INDEX = 255

_P_FLOOR = 1e-12  # clamp for log/division; random-logit probabilities stay far above


@dataclass(frozen=True)
class LossConfig:
    """Loss weights and shape parameters."""

    gamma: float = 2.0
    lambda_dice: float = 0.33
    lambda_w: float = 1e-4
    dice_smooth: float = 1.0
    ignore_index: int = IGNORE_INDEX

    def __post_init__(self):
        if self.gamma < 0 or self.lambda_dice < 0 or self.lambda_w < 0:
            raise ConfigurationError("gamma, lambda_dice, lambda_w must be >= 0")
        if self.dice_smooth <= 0:
            raise ConfigurationError(f"dice_smooth must be > 0, got {self.dice_smooth}")

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "lambda_dice": self.lambda_dice,
            "lambda_w": self.lambda_w,
            "dice_smooth": self.dice_smooth,
            "ignore_index": self.ignore_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        return cls(
            gamma=float(d.get("gamma", 2.0)),
            lambda_dice=float(d.get("lambda_dice", 0.33)),
            lambda_w=float(d.get("lambda_w", 1e-4)),
            dice_smooth=float(d.get("dice_smooth", 1.0)),
            ignore_index=int(d.get("ignore_index", IGNORE_INDEX)),
        )


def _check_shapes(logits: np.ndarray, target: np.ndarray, cfg: LossConfig):
    if logits.shape[:-1] != target.shape:
        raise ContractError(
            f"logits grid {logits.shape[:-1]} does not match target {target.shape}"
        )
    mask = target != cfg.ignore_index
    if not mask.any():
        raise SupervisionError("all cells are ignored; nothing to supervise")
    k = logits.shape[-1]
    labels = target[mask]
    if labels.min() < 0 or labels.max() >= k:
        raise ContractError(f"target labels outside [0, {k - 1}]")
    return mask


def focal_ce(logits: np.ndarray, target: np.ndarray, cfg: LossConfig):
    """Mean focal cross-entropy over supervised cells.

    Per cell: -(1 - p_t)^gamma * log(p_t) with p_t the softmax probability of
    the true class. gamma = 0 reduces to plain cross-entropy.

    Returns:
        (value, d_logits) with d_logits shaped like `logits`.
    """
    mask = _check_shapes(logits, target, cfg)
    z = logits[mask].astype(np.float64)  # (n, K)
    labels = target[mask].astype(np.intp)
    n, k = z.shape
    p = softmax(z, axis=-1)
    idx = np.arange(n)
    pt = np.clip(p[idx, labels], _P_FLOOR, 1.0)
    one_minus = 1.0 - pt
    log_pt = np.log(pt)
    loss = float(np.mean(one_minus**cfg.gamma * (-log_pt)))

    # dL/dp_t, then through softmax: dL/dz_k = dL/dp_t * p_t * (delta_tk - p_k)
    if cfg.gamma == 0.0:
        dl_dpt = -1.0 / pt
    else:
        dl_dpt = cfg.gamma * one_minus ** (cfg.gamma - 1.0) * log_pt - one_minus**cfg.gamma / pt
    coeff = dl_dpt * pt / n  # (n,)
    d_z = -coeff[:, None] * p
    d_z[idx, labels] += coeff
    d_logits = np.zeros(logits.shape, dtype=np.float64)
    d_logits[mask] = d_z
    return loss, d_logits


def soft_dice(logits: np.ndarray, target: np.ndarray, cfg: LossConfig):
    """Class-mean soft Dice loss over supervised cells.

    For each class present among the supervised cells:
        dice_c = (2 * sum(p_c * y_c) + eps) / (sum(p_c) + sum(y_c) + eps)
    and the loss is 1 - mean_c dice_c. Classes absent from the supervision
    are excluded from the mean.

    Returns:
        (value, d_logits).
    """
    mask = _check_shapes(logits, target, cfg)
    z = logits[mask].astype(np.float64)
    labels = target[mask].astype(np.intp)
    n, k = z.shape
    p = softmax(z, axis=-1)
    y = np.zeros((n, k), dtype=np.float64)
    y[np.arange(n), labels] = 1.0
    present = np.unique(labels)
    eps = cfg.dice_smooth

    inter = (p * y).sum(axis=0)  # (K,)
    psum = p.sum(axis=0)
    ysum = y.sum(axis=0)
    num = 2.0 * inter + eps
    den = psum + ysum + eps
    dice = num / den
    loss = float(1.0 - dice[present].mean())

    # d dice_c / d p_{ci} = (2 y_ci * den_c - num_c) / den_c^2; mean over present classes
    d_p = np.zeros((n, k), dtype=np.float64)
    m = len(present)
    for c in present:
        d_p[:, c] = -(2.0 * y[:, c] * den[c] - num[c]) / (den[c] ** 2) / m
    # softmax backward: dL/dz = p * (dL/dp - sum_j dL/dp_j p_j)
    dot = (d_p * p).sum(axis=1, keepdims=True)
    d_z = p * (d_p - dot)
    d_logits = np.zeros(logits.shape, dtype=np.float64)
    d_logits[mask] = d_z
    return loss, d_logits


def l2_penalty(params: dict[str, np.ndarray]):
    """Sum of squared parameter values and its gradient (2 * theta)."""
    value = 0.0
    grads = {}
    for name, theta in params.items():
        value += float(np.sum(np.asarray(theta, dtype=np.float64) ** 2))
        grads[name] = 2.0 * np.asarray(theta, dtype=np.float64)
    return value, grads


def total_loss(
    logits: np.ndarray,
    target: np.ndarray,
    params: dict[str, np.ndarray] | None,
    cfg: LossConfig,
):
    """Combined objective: focal + lambda_dice * dice + lambda_w * L2.

    Returns:
        (value, d_logits, d_params) where d_params maps parameter names to
        the gradient of the L2 term (empty when params is None or lambda_w
        is 0).
    """
    focal_val, d_focal = focal_ce(logits, target, cfg)
    value = focal_val
    d_logits = d_focal
    if cfg.lambda_dice > 0.0:
        dice_val, d_dice = soft_dice(logits, target, cfg)
        value = value + cfg.lambda_dice * dice_val
        d_logits = d_logits + cfg.lambda_dice * d_dice
    d_params: dict[str, np.ndarray] = {}
    if params is not None and cfg.lambda_w > 0.0:
        l2_val, l2_grads = l2_penalty(params)
        value = value + cfg.lambda_w * l2_val
        d_params = {name: cfg.lambda_w * g for name, g in l2_grads.items()}
    return value, d_logits, d_params
