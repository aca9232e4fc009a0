"""Interval and trust-score quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BISInput",
    "AccuracyRejectionCurve",
    "coverage",
    "mean_width",
    "bis",
    "accuracy_rejection_curve",
    "ar_auc",
]


def _bounds(intervals):
    if hasattr(intervals, "lower") and np.ndim(intervals.lower) == 1:
        return np.asarray(intervals.lower), np.asarray(intervals.upper)
    lower = np.array([iv.lower for iv in intervals], dtype=float)
    upper = np.array([iv.upper for iv in intervals], dtype=float)
    return lower, upper


def coverage(intervals, y_true):
    """Fraction of truths inside their closed interval."""
    lower, upper = _bounds(intervals)
    y = np.asarray(y_true, dtype=float)
    if y.shape != lower.shape:
        raise ValueError("intervals and y_true differ in length")
    return float(np.mean((lower <= y) & (y <= upper)))


def mean_width(intervals):
    lower, upper = _bounds(intervals)
    return float(np.mean(upper - lower))


@dataclass(frozen=True)
class BISInput:
    width: float
    coverage: float
    target_coverage: float
    lam: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("width must be positive")
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError("coverage must lie in [0, 1]")
        if not 0.0 < self.target_coverage < 1.0:
            raise ValueError("target_coverage must lie in (0, 1)")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")


def bis(inp):
    """Balanced interval score, ``1 / (width * (1 + lam * |coverage - target|))``.

    With ``lam = 1`` a 10% wider interval costs as much as a 10-point coverage miss.
    """
    return 1.0 / (inp.width * (1.0 + inp.lam * abs(inp.coverage - inp.target_coverage)))


@dataclass(frozen=True)
class AccuracyRejectionCurve:
    rejection: np.ndarray
    accuracy: np.ndarray

    @property
    def r_max(self):
        return float(self.rejection[-1])


def accuracy_rejection_curve(scores, correct):
    """Accuracy on retained instances as low-score instances are rejected.

    Instances sharing a score are rejected together. The curve stops at the
    last threshold that leaves at least one instance.
    """
    if hasattr(scores, "scores"):
        scores = scores.scores
    s = np.asarray(scores, dtype=float)
    c = np.asarray(correct, dtype=float)
    if s.size == 0:
        raise ValueError("empty input")
    if s.shape != c.shape:
        raise ValueError("scores and correct differ in length")
    if np.isnan(s).any():
        raise ValueError("scores contain NaN")
    n = s.size
    order = np.argsort(s, kind="stable")
    s, c = s[order], c[order]
    # group boundaries: index of the first instance of each distinct score
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    suffix_hits = np.cumsum(c[::-1])[::-1]
    # point g rejects every group before group g
    acc = suffix_hits[starts] / (n - starts)
    return AccuracyRejectionCurve(starts / n, acc.astype(float))


def ar_auc(curve):
    """Trapezoidal area under the curve divided by its rejection span."""
    r, a = curve.rejection, curve.accuracy
    if r.size == 1:
        return float(a[0])
    area = math.fsum((r[1:] - r[:-1]) * (a[1:] + a[:-1]) / 2.0)
    return area / curve.r_max
