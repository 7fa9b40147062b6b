"""Rank and linear correlation between predictions and MOS.

SRCC is Pearson over average-tied ranks (short-form MOS data contains
ties); PLCC is raw Pearson with no nonlinear remapping stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetricError


@dataclass(frozen=True)
class MetricPair:
    srcc: float
    plcc: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise DegenerateMetricError(f"need at least 2 points, got {self.n}")

    def format(self) -> str:
        """Three-decimal "SRCC / PLCC" presentation."""
        return f"{self.srcc:.3f} / {self.plcc:.3f}"


def rankify(values) -> np.ndarray:
    """Ranks 1..n; tied values receive the average of their occupied ranks."""
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("rankify expects a non-empty 1-D sequence")
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size, dtype=np.float64)
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def plcc(x, y) -> float:
    """Pearson linear correlation coefficient."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise DegenerateMetricError(f"need at least 2 points, got {a.size}")
    a = a - a.mean()
    b = b - b.mean()
    sxx = float(np.dot(a, a))
    syy = float(np.dot(b, b))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateMetricError("constant input: correlation undefined")
    return float(np.dot(a, b) / np.sqrt(sxx * syy))


def srcc(x, y) -> float:
    """Spearman rank correlation: Pearson over average-tied ranks."""
    return plcc(rankify(x), rankify(y))


def metric_pair(predictions, targets) -> MetricPair:
    return MetricPair(
        srcc=srcc(predictions, targets),
        plcc=plcc(predictions, targets),
        n=len(predictions),
    )
