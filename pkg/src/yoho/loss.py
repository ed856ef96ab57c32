"""Masked sum-squared error for YOHO grids, and BCE for the frame baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .label_codec import YohoGrid

__all__ = ["LossBreakdown", "yoho_loss", "yoho_loss_grad", "batch_loss_and_grad",
           "frame_bce", "frame_bce_grad"]


@dataclass
class LossBreakdown:
    total: float
    classification: float
    regression: float
    per_class: dict = field(default_factory=dict)


def _triplets(x, n_classes=None):
    if isinstance(x, YohoGrid):
        return x.values, x.classes
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % 3:
        raise ValueError(f"last axis must hold triplets, got {x.shape}")
    return x.reshape(x.shape[:-1] + (x.shape[-1] // 3, 3)), None


def yoho_loss(pred, target) -> LossBreakdown:
    """Sum over steps and classes of ``(p1-y1)^2 + [y1=1]((p2-y2)^2 + (p3-y3)^2)``.

    Accepts :class:`YohoGrid` objects or arrays whose last axis holds class
    triplets; leading axes (batch, steps) are summed.
    """
    p, classes = _triplets(pred)
    y, tclasses = _triplets(target)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {y.shape}")
    if classes and tclasses and classes != tclasses:
        raise ValueError("class lists differ")
    classes = classes or tclasses
    mask = y[..., 0] == 1
    sq = np.square(p - y)
    cls = sq[..., 0]
    reg = (sq[..., 1] + sq[..., 2]) * mask
    axes = tuple(range(cls.ndim - 1))
    cls_c = cls.sum(axis=axes)
    reg_c = reg.sum(axis=axes)
    names = classes or list(range(len(cls_c)))
    per_class = {n: (float(a), float(b)) for n, a, b in zip(names, cls_c, reg_c)}
    c, r = float(cls_c.sum()), float(reg_c.sum())
    return LossBreakdown(c + r, c, r, per_class)


def yoho_loss_grad(pred, target) -> np.ndarray:
    """Gradient of :func:`yoho_loss` w.r.t. ``pred``, same layout as ``pred``."""
    p, _ = _triplets(pred)
    y, _ = _triplets(target)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {y.shape}")
    g = 2.0 * (p - y)
    g[..., 1:] *= (y[..., 0] == 1)[..., None]
    if isinstance(pred, YohoGrid):
        return g
    return g.reshape(np.shape(pred))


def batch_loss_and_grad(pred: np.ndarray, target: np.ndarray):
    """Loss summed per example then averaged over the batch, with its gradient."""
    n = pred.shape[0]
    return yoho_loss(pred, target).total / n, yoho_loss_grad(pred, target) / n


def frame_bce(pred: np.ndarray, target: np.ndarray, eps: float = 1e-7) -> float:
    p = np.clip(np.asarray(pred, dtype=np.float64), eps, 1 - eps)
    y = np.asarray(target, dtype=np.float64)
    return float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).sum())


def frame_bce_grad(pred: np.ndarray, target: np.ndarray, eps: float = 1e-7) -> np.ndarray:
    p = np.clip(np.asarray(pred, dtype=np.float64), eps, 1 - eps)
    y = np.asarray(target, dtype=np.float64)
    return (p - y) / (p * (1 - p))
