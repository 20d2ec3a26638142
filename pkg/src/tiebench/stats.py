"""Rank-correlation statistics with exact tie handling.

All functions operate on a :class:`PairedSeries` of predictions ``x`` against
ground truth ``y``. A constant side makes the correlation coefficients
undefined and raises :class:`DegenerateSeries` rather than returning a silent
zero or NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats as _scipy_stats

from .errors import DegenerateSeries, LengthMismatch, ValidationFailure

__all__ = [
    "PairedSeries",
    "CorrelationReport",
    "srcc",
    "krcc",
    "plcc",
    "rmse",
    "qa_accuracy",
    "correlation_report",
]


@dataclass(frozen=True)
class PairedSeries:
    """Paired prediction/ground-truth vectors of equal length >= 2."""

    x: np.ndarray
    y: np.ndarray
    labels: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or y.ndim != 1:
            raise ValidationFailure("series must be one-dimensional")
        if x.shape[0] != y.shape[0]:
            raise LengthMismatch(f"|x|={x.shape[0]} != |y|={y.shape[0]}")
        if x.shape[0] < 2:
            raise ValidationFailure("series needs at least 2 points")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ValidationFailure("series contains NaN or infinite entries")
        if self.labels is not None and len(self.labels) != x.shape[0]:
            raise LengthMismatch("labels length differs from series length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.x.shape[0])


@dataclass(frozen=True)
class CorrelationReport:
    """SRCC/KRCC/PLCC/RMSE for one series."""

    srcc: float
    krcc: float
    plcc: float
    rmse: float
    n: int


def _check_not_constant(series: PairedSeries) -> None:
    if np.all(series.x == series.x[0]):
        raise DegenerateSeries("x is constant; coefficient undefined")
    if np.all(series.y == series.y[0]):
        raise DegenerateSeries("y is constant; coefficient undefined")


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Fractional ranks (1-based); tied values share the mean of their ranks."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        # positions i..j (0-based) share rank mean of (i+1 .. j+1)
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        raise DegenerateSeries("zero variance; coefficient undefined")
    return float(np.clip((xc * yc).sum() / denom, -1.0, 1.0))


def srcc(series: PairedSeries) -> float:
    """Spearman rank correlation: Pearson correlation of tie-averaged ranks.

    Equals ``1 - 6*sum(d^2)/(n*(n^2-1))`` when no ties exist.
    """
    _check_not_constant(series)
    return _pearson(_average_ranks(series.x), _average_ranks(series.y))


def krcc(series: PairedSeries) -> float:
    """Kendall tau-b (tie-corrected); equals tau-a on tie-free input."""
    _check_not_constant(series)
    tau = _scipy_stats.kendalltau(series.x, series.y, variant="b").statistic
    return float(np.clip(tau, -1.0, 1.0))


def plcc(series: PairedSeries) -> float:
    """Pearson linear correlation on the raw values (no nonlinear remap)."""
    _check_not_constant(series)
    return _pearson(series.x, series.y)


def rmse(series: PairedSeries) -> float:
    """Root mean squared difference between the two sides."""
    d = series.x - series.y
    return float(np.sqrt(np.mean(d * d)))


def qa_accuracy(predicted: Sequence[bool], truth: Sequence[bool]) -> float:
    """Fraction of positions where predicted equals truth."""
    if len(predicted) != len(truth):
        raise LengthMismatch(f"|predicted|={len(predicted)} != |truth|={len(truth)}")
    if len(predicted) == 0:
        raise ValidationFailure("accuracy needs at least one pair")
    hits = sum(1 for p, t in zip(predicted, truth) if bool(p) == bool(t))
    return hits / len(predicted)


def correlation_report(series: PairedSeries) -> CorrelationReport:
    """All four statistics for one series."""
    return CorrelationReport(
        srcc=srcc(series),
        krcc=krcc(series),
        plcc=plcc(series),
        rmse=rmse(series),
        n=series.n,
    )
