"""Agreement between predicted and subjective scores: SROCC, PLCC, KROCC and RMSE.

No logistic mapping is fitted before PLCC or RMSE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from rrvqa.errors import DataError, UndefinedCorrelationError

REPORT_FIELDS = ("srocc", "plcc", "krocc", "rmse", "n")


def _pair(pred, truth, min_len: int = 2):
    a = np.asarray(pred, dtype=np.float64).ravel()
    b = np.asarray(truth, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DataError(f"length mismatch: {a.size} predictions vs {b.size} labels")
    if a.size < min_len:
        raise DataError(f"need at least {min_len} pairs, got {a.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DataError("scores must be finite")
    return a, b


def _clamp(r: float) -> float:
    return max(-1.0, min(1.0, r))


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    saa = float(np.dot(da, da))
    sbb = float(np.dot(db, db))
    if saa == 0.0 or sbb == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant input")
    return _clamp(float(np.dot(da, db)) / math.sqrt(saa * sbb))


def plcc(pred, truth) -> float:
    """Pearson linear correlation."""
    return _pearson(*_pair(pred, truth))


def srocc(pred, truth) -> float:
    """Spearman correlation: Pearson on ranks, ties get their average rank."""
    a, b = _pair(pred, truth)
    return _pearson(stats.rankdata(a, method="average"), stats.rankdata(b, method="average"))


def krocc(pred, truth) -> float:
    """Kendall tau-b."""
    a, b = _pair(pred, truth)
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise UndefinedCorrelationError("Kendall tau is undefined when one input is all ties")
    tau = stats.kendalltau(a, b, variant="b").statistic
    return _clamp(float(tau))


def rmse(pred, truth) -> float:
    a, b = _pair(pred, truth, min_len=1)
    d = a - b
    return math.sqrt(float(np.mean(d * d)))


@dataclass(frozen=True)
class MetricsReport:
    srocc: float
    plcc: float
    krocc: float
    rmse: float
    n: int

    def row(self) -> list:
        return [f"{self.srocc:.9g}", f"{self.plcc:.9g}", f"{self.krocc:.9g}",
                f"{self.rmse:.9g}", str(self.n)]


def evaluate(pred, truth) -> MetricsReport:
    a, b = _pair(pred, truth)
    return MetricsReport(srocc(a, b), plcc(a, b), krocc(a, b), rmse(a, b), int(a.size))
