"""Scalar losses, each returning ``(value, gradient w.r.t. the prediction)``.

All losses average over their elements (rows for cross-entropy).
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from ..errors import NumericError


def _finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite loss input")


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax_cross_entropy(logits: np.ndarray, targets) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy of ``(N, K)`` logits against integer class targets."""
    _finite(logits)
    targets = np.asarray(targets, dtype=np.int64)
    n = logits.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(logits)
    logp = log_softmax(logits)
    rows = np.arange(n)
    loss = -logp[rows, targets].sum(dtype=np.float64) / n
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    return float(loss), grad / n


def sigmoid_bce(logits: np.ndarray, targets) -> Tuple[float, np.ndarray]:
    """Mean binary cross-entropy computed in logit space."""
    _finite(logits)
    targets = np.asarray(targets, dtype=logits.dtype)
    if logits.size == 0:
        return 0.0, np.zeros_like(logits)
    # log(1 + exp(-|x|)) + max(x, 0) - x*y
    per = np.logaddexp(0.0, -np.abs(logits)) + np.maximum(logits, 0.0) - logits * targets
    grad = (sigmoid(logits) - targets) / logits.size
    return float(per.sum(dtype=np.float64) / logits.size), grad


def mse(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    _finite(pred, target)
    if pred.size == 0:
        return 0.0, np.zeros_like(pred)
    diff = pred - target
    return float(np.sum(diff * diff, dtype=np.float64) / pred.size), 2.0 * diff / pred.size


def l1(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    _finite(pred, target)
    if pred.size == 0:
        return 0.0, np.zeros_like(pred)
    diff = pred - target
    return float(np.sum(np.abs(diff), dtype=np.float64) / pred.size), np.sign(diff) / pred.size
