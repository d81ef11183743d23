"""Spearman rank correlation with t-based p-values and Fisher-z intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from wsiseg.special import norm_ppf, t_sf


@dataclass(frozen=True)
class RankedSample:
    ranks: np.ndarray

    @property
    def n(self) -> int:
        return len(self.ranks)


def ranks(x) -> RankedSample:
    """1-based ranks; tied values share the mean of the positions they cover."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("ranks needs a non-empty 1-D sequence")
    if not np.all(np.isfinite(x)):
        raise ValueError("ranks needs finite values")
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    # boundaries of tie blocks in sorted order
    starts = np.flatnonzero(np.r_[True, sorted_x[1:] != sorted_x[:-1]])
    ends = np.r_[starts[1:], x.size]
    block_rank = (starts + ends + 1) / 2.0
    out = np.empty(x.size)
    out[order] = np.repeat(block_rank, ends - starts)
    return RankedSample(out)


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def spearman(x, y) -> float | None:
    """Spearman's rho, or ``None`` when either variable is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"spearman needs two equal-length 1-D sequences, got {x.shape} and {y.shape}")
    if x.size < 3:
        raise ValueError(f"spearman needs at least 3 samples, got {x.size}")
    return pearson(ranks(x).ranks, ranks(y).ranks)


def spearman_t(rho: float, n: int) -> float:
    if abs(rho) >= 1.0:
        return math.copysign(math.inf, rho)
    return rho * math.sqrt((n - 2) / (1.0 - rho * rho))


def spearman_p(rho: float, n: int) -> float:
    """Two-sided p-value from the t approximation with n - 2 degrees of freedom."""
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [-1, 1], got {rho}")
    if n < 3:
        raise ValueError(f"need n >= 3, got {n}")
    if abs(rho) == 1.0:
        return 0.0
    t = spearman_t(rho, n)
    return min(1.0, 2.0 * t_sf(abs(t), n - 2))


def fisher_ci(r: float, n: int, alpha: float = 0.05) -> tuple[float, float]:
    """Correlation interval from the normal approximation of arctanh(r)."""
    if not -1.0 < r < 1.0:
        raise ValueError(f"|r| must be < 1 for a Fisher interval, got {r}")
    if n <= 3:
        raise ValueError(f"Fisher interval needs n >= 4, got {n}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    z = math.atanh(r)
    half = norm_ppf(1.0 - alpha / 2.0) / math.sqrt(n - 3)
    return math.tanh(z - half), math.tanh(z + half)


@dataclass(frozen=True)
class Correlation:
    n: int
    rho: float | None
    p: float | None
    ci: tuple[float, float] | None
    alpha: float

    @property
    def significant(self) -> bool | None:
        if self.p is None:
            return None
        return self.p < 0.05

    @property
    def defined(self) -> bool:
        return self.rho is not None


def correlate(x, y, alpha: float = 0.05) -> Correlation:
    """Spearman rho with p-value and Fisher interval; undefined parts are ``None``."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    rho = spearman(x, y)
    if rho is None:
        return Correlation(n, None, None, None, alpha)
    p = spearman_p(rho, n)
    ci = fisher_ci(rho, n, alpha) if abs(rho) < 1.0 and n > 3 else None
    return Correlation(n, rho, p, ci, alpha)
