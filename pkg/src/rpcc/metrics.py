"""Evaluation measures for background recovery and block support classification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .tensor import support_mask

DEFAULT_GRID = np.linspace(0.0, 1.0, 1001)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ThresholdCurve:
    tau: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if tau.shape != values.shape or tau.ndim != 1:
            raise ValueError("tau and values must be 1-d arrays of equal length")
        if np.any(np.diff(tau) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        if tau.size and (tau[0] < 0 or tau[-1] > 1):
            raise ValueError("thresholds must lie in [0, 1]")
        if not np.all(np.isfinite(values)):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "values", values)


def rrse(est: np.ndarray, truth: np.ndarray) -> float:
    """Relative root squared error ``||est - truth||_F / ||truth||_F``."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    denom = np.linalg.norm(truth)
    if denom == 0:
        raise ValueError("RRSE is undefined for an all-zero reference")
    return float(np.linalg.norm(est - truth) / denom)


def iou(a: Iterable[int], b: Iterable[int]) -> float:
    """Intersection over union of two block supports; two empty supports give 1."""
    a, b = set(a), set(b)
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def confusion(pred: Iterable[int], truth: Iterable[int], K: int) -> ConfusionCounts:
    p = support_mask(pred, K)
    t = support_mask(truth, K)
    return ConfusionCounts(
        tp=int(np.sum(p & t)),
        fp=int(np.sum(p & ~t)),
        fn=int(np.sum(~p & t)),
        tn=int(np.sum(~p & ~t)),
    )


def f1_fa(pred: Iterable[int], truth: Iterable[int], K: int) -> tuple[float, float, ConfusionCounts]:
    """F1 score and false-alarm rate over blocks.

    F1 is 0 when there are no true positives; Fa is 0 when there are no
    negatives at all.
    """
    c = confusion(pred, truth, K)
    if c.tp == 0:
        f1 = 0.0
    else:
        precision = c.tp / (c.tp + c.fp)
        recall = c.tp / (c.tp + c.fn)
        f1 = 2 * precision * recall / (precision + recall)
    neg = c.fp + c.tn
    fa = c.fp / neg if neg else 0.0
    return f1, fa, c


def auc(curve: ThresholdCurve) -> float:
    """Trapezoidal area under a threshold curve on ``[0, 1]``."""
    if curve.tau.size < 2:
        raise ValueError("need at least two samples")
    if curve.tau[0] != 0.0 or curve.tau[-1] != 1.0:
        raise ValueError("curve must span [0, 1]")
    return float(np.trapezoid(curve.values, curve.tau))


def threshold_sweep(
    scores: np.ndarray, truth: Iterable[int], grid: np.ndarray | None = None
) -> tuple[ThresholdCurve, ThresholdCurve, ThresholdCurve]:
    """F1, IoU and Fa as functions of the threshold ``pred = {k : score_k >= tau}``."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1:
        raise ValueError("scores must be a 1-d array")
    if np.any(~np.isfinite(scores)) or np.any((scores < 0) | (scores > 1)):
        raise ValueError("scores must lie in [0, 1]")
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    if np.any((grid < 0) | (grid > 1)):
        raise ValueError("threshold grid must lie in [0, 1]")
    K = scores.size
    truth = frozenset(truth)
    f1s, ious, fas = [], [], []
    for tau in grid:
        pred = np.flatnonzero(scores >= tau)
        f1, fa, _ = f1_fa(pred, truth, K)
        f1s.append(f1)
        fas.append(fa)
        ious.append(iou(pred.tolist(), truth))
    return ThresholdCurve(grid, f1s), ThresholdCurve(grid, ious), ThresholdCurve(grid, fas)
