"""Binary focal loss on logits.

The per-pixel loss is alpha * (1 - p_t)**gamma * (-log p_t) with p_t the
predicted probability of the true class; alpha scales both classes equally,
so gamma=0, alpha=1 reduces exactly to mean binary cross-entropy. The loss
is averaged over valid pixels.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError, UndefinedLossError


def sigmoid(z):
    """Numerically stable logistic function."""
    z = np.asarray(z)
    out = np.empty_like(z, dtype=z.dtype if z.dtype.kind == "f" else np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _prepare(logits, target, valid):
    logits = np.asarray(logits)
    target = np.asarray(target).astype(bool)
    if logits.shape != target.shape:
        raise ShapeError(f"logits shape {logits.shape} != target shape {target.shape}")
    if valid is None:
        valid = np.ones(logits.shape, dtype=bool)
    else:
        valid = np.asarray(valid).astype(bool)
        if valid.shape != logits.shape:
            raise ShapeError(f"valid mask shape {valid.shape} != logits shape {logits.shape}")
    n_valid = int(np.count_nonzero(valid))
    if n_valid == 0:
        raise UndefinedLossError("focal loss is undefined with no valid pixels")
    return logits, target, valid, n_valid


def focal_loss(logits, target, gamma: float = 2.0, alpha: float = 0.25, valid=None) -> float:
    """Mean focal loss over valid pixels."""
    logits, target, valid, n_valid = _prepare(logits, target, valid)
    z = logits
    # -log p_t, computed without forming p_t: softplus(-z) for positives,
    # softplus(z) for negatives.
    neg_log_pt = np.where(target, np.logaddexp(0.0, -z), np.logaddexp(0.0, z))
    p = sigmoid(z)
    one_minus_pt = np.where(target, 1.0 - p, p)
    per_pixel = alpha * one_minus_pt**gamma * neg_log_pt
    return float(per_pixel[valid].sum() / n_valid)


def focal_loss_with_grad(logits, target, gamma: float = 2.0, alpha: float = 0.25, valid=None):
    """Mean focal loss and its gradient with respect to the logits."""
    logits, target, valid, n_valid = _prepare(logits, target, valid)
    z = logits
    p = sigmoid(z)
    log_p = -np.logaddexp(0.0, -z)
    log_1mp = -np.logaddexp(0.0, z)

    neg_log_pt = np.where(target, -log_p, -log_1mp)
    one_minus_pt = np.where(target, 1.0 - p, p)
    loss = float((alpha * one_minus_pt**gamma * neg_log_pt)[valid].sum() / n_valid)

    grad_pos = alpha * (1.0 - p) ** gamma * (gamma * p * log_p - (1.0 - p))
    grad_neg = alpha * p**gamma * (p - gamma * (1.0 - p) * log_1mp)
    grad = np.where(target, grad_pos, grad_neg)
    grad = np.where(valid, grad, 0.0) / n_valid
    return loss, grad.astype(logits.dtype, copy=False)
