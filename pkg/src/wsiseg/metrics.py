"""Pixel contingency tables, overlap statistics and cohort aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from wsiseg.raster import Raster
from wsiseg.special import t_ppf


@dataclass(frozen=True)
class ContingencyTable:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: ContingencyTable) -> ContingencyTable:
        return ContingencyTable(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


def _check_pair(a: Raster, b: Raster, what: str):
    if a.data.shape[:2] != b.data.shape[:2]:
        raise ValueError(f"{what} dimensions differ: {a.data.shape[:2]} vs {b.data.shape[:2]}")
    if a.spacing != b.spacing:
        raise ValueError(f"{what} spacing differs: {a.spacing} vs {b.spacing}")


def contingency(pred: Raster, ref: Raster, domain: Raster | None = None) -> ContingencyTable:
    _check_pair(pred, ref, "prediction/reference")
    p = pred.data.astype(bool)
    r = ref.data.astype(bool)
    if domain is not None:
        _check_pair(pred, domain, "prediction/domain")
        d = domain.data.astype(bool)
        p = p & d
        r = r & d
        n = int(np.count_nonzero(d))
    else:
        n = p.size
    tp = int(np.count_nonzero(p & r))
    fp = int(np.count_nonzero(p)) - tp
    fn = int(np.count_nonzero(r)) - tp
    return ContingencyTable(tp, fp, fn, n - tp - fp - fn)


def dsc(t: ContingencyTable) -> float:
    """Dice similarity coefficient; two empty masks count as perfect agreement."""
    denom = 2 * t.tp + t.fp + t.fn
    if denom == 0:
        return 1.0
    return 2 * t.tp / denom


def _ratio(num: int | float, den: int | float) -> float | None:
    return None if den == 0 else num / den


@dataclass(frozen=True)
class SummaryStats:
    """Contingency summary statistics; ``None`` marks a zero denominator.

    ``dsc`` follows :func:`dsc` and is 1 when both masks are empty.
    """

    dsc: float | None
    jaccard: float | None
    sensitivity: float | None
    specificity: float | None
    precision: float | None
    npv: float | None
    fpr: float | None
    fnr: float | None
    accuracy: float | None
    balanced_accuracy: float | None
    mcc: float | None
    prevalence: float | None
    predicted_positive_fraction: float | None

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in self.names()}


def summary_stats(t: ContingencyTable) -> SummaryStats:
    tp, fp, fn, tn = t.tp, t.fp, t.fn, t.tn
    n = t.total
    sens = _ratio(tp, tp + fn)
    spec = _ratio(tn, tn + fp)
    balanced = None if sens is None or spec is None else (sens + spec) / 2
    mcc_den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = None if mcc_den == 0 else (tp * tn - fp * fn) / math.sqrt(mcc_den)
    return SummaryStats(
        dsc=dsc(t),
        jaccard=_ratio(tp, tp + fp + fn),
        sensitivity=sens,
        specificity=spec,
        precision=_ratio(tp, tp + fp),
        npv=_ratio(tn, tn + fn),
        fpr=_ratio(fp, fp + tn),
        fnr=_ratio(fn, fn + tp),
        accuracy=_ratio(tp + tn, n),
        balanced_accuracy=balanced,
        mcc=mcc,
        prevalence=_ratio(tp + fn, n),
        predicted_positive_fraction=_ratio(tp + fp, n),
    )


@dataclass(frozen=True)
class MeanCI:
    n: int
    mean: float
    lo: float
    hi: float
    alpha: float

    @property
    def half_width(self) -> float:
        return (self.hi - self.lo) / 2


def cohort_mean_ci(values, alpha: float = 0.05) -> MeanCI:
    """Mean with a two-sided Student-t confidence interval (not clipped)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ValueError(f"a confidence interval needs at least 2 values, got {v.size}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    # sort so the result does not depend on input order
    v = np.sort(v)
    mean = float(math.fsum(v) / v.size)
    s = math.sqrt(math.fsum((v - mean) ** 2) / (v.size - 1))
    half = t_ppf(1.0 - alpha / 2.0, v.size - 1) * s / math.sqrt(v.size)
    return MeanCI(int(v.size), mean, mean - half, mean + half, alpha)
