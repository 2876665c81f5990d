"""
Accuracy and calibration metrics for binary probabilistic classifiers.

``probs`` is always the predicted probability of the positive class.  For
calibration, the confidence of a prediction is ``max(p, 1 - p)`` and the
predicted class is ``p >= 0.5``.  Bins are equal-width on [0, 1]; a value x
falls in bin ``floor(x * n_bins)`` with x = 1.0 sent to the last bin, so bin
i is ``[i/n_bins, (i+1)/n_bins)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidInputError, UndefinedMetricError

DEFAULT_BINS = 15


def _prediction_set(probs, labels):
    p = np.asarray(probs, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if p.size == 0 or p.size != y.size:
        raise InvalidInputError(
            f"probs and labels must be non-empty and of equal length, got {p.size} and {y.size}"
        )
    if not np.all((p >= 0.0) & (p <= 1.0)):
        raise InvalidInputError("probabilities must lie in [0, 1]")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidInputError("labels must be 0 or 1")
    return p, y.astype(np.int8)


def auc(probs, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney rank statistic.

    Equals the fraction of (positive, negative) pairs in which the positive
    scores higher, with ties counting one half.
    """
    p, y = _prediction_set(probs, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")
    ranks = rankdata(p)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class BinStat:
    lower: float
    upper: float
    count: int
    mean_confidence: Optional[float]
    accuracy: Optional[float]

    def to_dict(self):
        return {
            "lower": self.lower,
            "upper": self.upper,
            "count": self.count,
            "mean_confidence": self.mean_confidence,
            "accuracy": self.accuracy,
        }


def bin_index(x, n_bins: int):
    """Equal-width bin of each value in [0, 1].

    ``floor(x * n_bins)``, nudged by one where the product rounds across an
    edge, so that bin i holds exactly ``i/n_bins <= x < (i+1)/n_bins``.
    """
    x = np.asarray(x, dtype=np.float64)
    idx = np.clip(np.floor(x * n_bins).astype(np.int64), 0, n_bins - 1)
    idx = np.where(x < idx / n_bins, idx - 1, idx)
    idx = np.where((idx < n_bins - 1) & (x >= (idx + 1) / n_bins), idx + 1, idx)
    return idx


def _binned(p, y, n_bins):
    conf = np.maximum(p, 1.0 - p)
    correct = ((p >= 0.5).astype(np.int8) == y).astype(np.float64)
    idx = bin_index(conf, n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=n_bins)
    acc_sum = np.bincount(idx, weights=correct, minlength=n_bins)
    return counts, conf_sum, acc_sum


def _ece_from_bins(counts, conf_sum, acc_sum, n):
    nz = counts > 0
    gap = np.abs(acc_sum[nz] / counts[nz] - conf_sum[nz] / counts[nz])
    return float(np.sum(counts[nz] / n * gap))


def _check_bins(n_bins):
    if int(n_bins) != n_bins or n_bins < 1:
        raise InvalidInputError(f"n_bins must be a positive integer, got {n_bins!r}")
    return int(n_bins)


def reliability_table(probs, labels, n_bins: int = DEFAULT_BINS) -> List[BinStat]:
    """Per-bin statistics behind the reliability diagram.

    Empty bins are returned with ``count=0`` and ``None`` for accuracy and
    mean confidence.
    """
    n_bins = _check_bins(n_bins)
    p, y = _prediction_set(probs, labels)
    counts, conf_sum, acc_sum = _binned(p, y, n_bins)
    return _bin_stats(counts, conf_sum, acc_sum, n_bins)


def _bin_stats(counts, conf_sum, acc_sum, n_bins):
    bins = []
    for i in range(n_bins):
        c = int(counts[i])
        bins.append(
            BinStat(
                lower=i / n_bins,
                upper=(i + 1) / n_bins,
                count=c,
                mean_confidence=float(conf_sum[i] / c) if c else None,
                accuracy=float(acc_sum[i] / c) if c else None,
            )
        )
    return bins


def ece(probs, labels, n_bins: int = DEFAULT_BINS) -> Tuple[float, List[BinStat]]:
    """Expected calibration error and the bins it was computed from.

    ECE is the count-weighted mean of ``|accuracy - mean confidence|`` over
    the non-empty bins.
    """
    n_bins = _check_bins(n_bins)
    p, y = _prediction_set(probs, labels)
    counts, conf_sum, acc_sum = _binned(p, y, n_bins)
    return _ece_from_bins(counts, conf_sum, acc_sum, p.size), _bin_stats(counts, conf_sum, acc_sum, n_bins)


def ece_score(probs, labels, n_bins: int = DEFAULT_BINS) -> float:
    """ECE alone, skipping construction of the bin table."""
    n_bins = _check_bins(n_bins)
    p, y = _prediction_set(probs, labels)
    return _ece_from_bins(*_binned(p, y, n_bins), p.size)


@dataclass(frozen=True)
class CalibrationReport:
    auc: float
    ece: float
    n: int
    bins: Tuple[BinStat, ...] = field(default=(), repr=False)

    def to_dict(self):
        return {
            "auc": self.auc,
            "ece": self.ece,
            "n": self.n,
            "bins": [b.to_dict() for b in self.bins],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            auc=d["auc"],
            ece=d["ece"],
            n=d["n"],
            bins=tuple(BinStat(**b) for b in d.get("bins", ())),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def evaluate(probs, labels, n_bins: int = DEFAULT_BINS) -> CalibrationReport:
    """AUC, ECE and reliability bins for one set of predictions."""
    e, bins = ece(probs, labels, n_bins)
    return CalibrationReport(auc=auc(probs, labels), ece=e, n=len(np.ravel(probs)), bins=tuple(bins))


def write_reliability_csv(bins: Sequence[BinStat], path) -> None:
    """Write ``bin_lower,bin_upper,count,mean_confidence,accuracy``; empty bins leave the last two blank."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lower", "bin_upper", "count", "mean_confidence", "accuracy"])
        for b in bins:
            w.writerow([
                f"{b.lower:.12g}",
                f"{b.upper:.12g}",
                b.count,
                "" if b.mean_confidence is None else f"{b.mean_confidence:.12g}",
                "" if b.accuracy is None else f"{b.accuracy:.12g}",
            ])


def _mean_std(values):
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


@dataclass(frozen=True)
class Summary:
    """Mean and sample standard deviation of AUC and ECE, in percentage points."""

    n: int
    auc_mean: float
    auc_std: float
    ece_mean: float
    ece_std: float

    @staticmethod
    def format_pm(mean: float, std: float) -> str:
        return f"{mean:.1f} ± {std:.1f}"

    @property
    def auc_row(self) -> str:
        return self.format_pm(self.auc_mean, self.auc_std)

    @property
    def ece_row(self) -> str:
        return self.format_pm(self.ece_mean, self.ece_std)

    def to_dict(self):
        return {
            "n": self.n,
            "auc_mean": self.auc_mean,
            "auc_std": self.auc_std,
            "ece_mean": self.ece_mean,
            "ece_std": self.ece_std,
        }


def aggregate(reports: Sequence[CalibrationReport]) -> Summary:
    """Summarise reports from several seeds.

    The standard deviation uses divisor n - 1 (0 for a single report).
    Sums are exact (``math.fsum``) so the result does not depend on the
    order of ``reports``.
    """
    reports = list(reports)
    if not reports:
        raise InvalidInputError("aggregate needs at least one report")
    auc_m, auc_s = _mean_std([100.0 * r.auc for r in reports])
    ece_m, ece_s = _mean_std([100.0 * r.ece for r in reports])
    return Summary(len(reports), auc_m, auc_s, ece_m, ece_s)
