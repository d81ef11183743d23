"""Gaussian kernel density estimation with Scott's bandwidth rule.

Matches ``scipy.stats.gaussian_kde`` on well-conditioned data. When the
sample covariance is singular (constant or perfectly collinear data) the
kernel covariance falls back to a diagonal with a floor so densities stay
finite.
"""

from __future__ import annotations

import math

import numpy as np

MIN_BANDWIDTH = 1e-3


class GaussianKDE:
    def __init__(self, data, min_bandwidth: float = MIN_BANDWIDTH):
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        self.dataset = data
        self.d, self.n = data.shape
        if self.n < 2:
            raise ValueError(f"KDE needs at least 2 points, got {self.n}")
        self.factor = self.n ** (-1.0 / (self.d + 4))
        cov = np.atleast_2d(np.cov(data, bias=False))
        kernel = cov * self.factor ** 2
        self.degenerate = not _positive_definite(kernel)
        if self.degenerate:
            var = np.maximum(np.diag(kernel), min_bandwidth ** 2)
            kernel = np.diag(var)
        self.covariance = kernel
        self._inv = np.linalg.inv(kernel)
        self._norm = 1.0 / (self.n * math.sqrt(np.linalg.det(2 * math.pi * kernel)))

    @property
    def bandwidth(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def __call__(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if points.shape[0] != self.d:
            if points.shape[1] == self.d:
                points = points.T
            else:
                raise ValueError(f"points must have {self.d} rows")
        out = np.empty(points.shape[1])
        # chunk over evaluation points to bound memory
        for start in range(0, points.shape[1], 2048):
            p = points[:, start:start + 2048]
            diff = self.dataset[:, :, None] - p[:, None, :]
            m = np.einsum("inq,ij,jnq->nq", diff, self._inv, diff)
            out[start:start + p.shape[1]] = np.exp(-0.5 * m).sum(axis=0) * self._norm
        return out


def _positive_definite(a: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return np.linalg.cond(a) < 1e12
