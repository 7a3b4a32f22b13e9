"""Per-output losses and the multi-task total used by the nested model."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

BCE_EPS = 1e-7


def bce_loss(pred: np.ndarray, label: np.ndarray,
             class_balance: bool = False) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. pred.

    Predictions are clamped to [eps, 1-eps] before the logs. With
    class_balance on, the positive/negative terms get per-image weights
    w+ = |neg|/|total| and w- = |pos|/|total|, so the rarer class counts
    more; degenerate all-one or all-zero labels fall back to weights 1.
    """
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if pred.shape != label.shape:
        raise DimensionError(f"pred {pred.shape} vs label {label.shape}")
    n = pred.size
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    w_pos = w_neg = 1.0
    if class_balance:
        pos = float(label.sum())
        if 0.0 < pos < n:
            w_pos = (n - pos) / n
            w_neg = pos / n
    loss = -(w_pos * label * np.log(p) + w_neg * (1.0 - label) * np.log1p(-p)).sum() / n
    grad = (-w_pos * label / p + w_neg * (1.0 - label) / (1.0 - p)) / n
    return float(loss), grad


def mse_loss(pred: np.ndarray, label: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient w.r.t. pred."""
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if pred.shape != label.shape:
        raise DimensionError(f"pred {pred.shape} vs label {label.shape}")
    diff = pred - label
    return float((diff * diff).mean()), 2.0 * diff / pred.size


def pixel_loss(kind: str, pred: np.ndarray, label: np.ndarray,
               class_balance: bool) -> tuple[float, np.ndarray]:
    if kind == "bce":
        return bce_loss(pred, label, class_balance)
    if kind == "mse":
        return mse_loss(pred, label)
    raise ValueError(f"unknown loss kind {kind!r}")
