"""Training losses; targets are plain numpy, predictions are graph tensors."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


def cross_entropy(logits: Tensor, bits) -> Tensor:
    """Mean 2-class log loss over every node; bits in {0,1} match logits[..., 2]."""
    bits = np.asarray(bits)
    if bits.shape != logits.shape[:-1] or logits.shape[-1] != 2:
        raise ValueError(f"shape mismatch: logits {logits.shape}, bits {bits.shape}")
    shift = Tensor(np.max(logits.data, axis=-1, keepdims=True))
    z = logits + shift * -1.0
    lse = T.log(T.sum_(T.exp(z), axis=-1, keepdims=True)) + shift
    onehot = np.eye(2, dtype=logits.data.dtype)[bits]
    picked = T.sum_(logits * onehot, axis=-1, keepdims=True)
    return T.mean(lse + picked * -1.0)


def l1(pred: Tensor, target) -> Tensor:
    target = np.asarray(target, dtype=pred.data.dtype)
    if target.shape != pred.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, target {target.shape}")
    return T.mean(T.absolute(pred + Tensor(-target)))


def weighted_l1(pred: Tensor, target, scale: float) -> Tensor:
    """L1 against a frozen per-task scale; per-element clip keeps it in [0, 1]."""
    target = np.asarray(target, dtype=pred.data.dtype)
    if target.shape != pred.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, target {target.shape}")
    if scale <= 0:
        scale = 1.0
    err = T.clip_upper(T.absolute(pred + Tensor(-target)), scale)
    return T.mean(err) * (1.0 / scale)


def bce_with_logits(logit: Tensor, target) -> Tensor:
    """Binary cross-entropy on a scalar logit; softplus(s) - s*y is the stable form."""
    target = np.asarray(target, dtype=logit.data.dtype)
    if target.shape != logit.shape:
        raise ValueError(f"shape mismatch: logit {logit.shape}, target {target.shape}")
    return T.mean(T.softplus(logit) + logit * Tensor(-target))
