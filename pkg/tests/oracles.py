"""Slow, obviously-correct reference implementations used only by the tests."""

from collections import deque
from fractions import Fraction
import math

import numpy as np


def area_average(src: np.ndarray, factor: Fraction, out_h: int, out_w: int) -> np.ndarray:
    """Exact fractional-coverage box filter using rational arithmetic."""
    h, w = src.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        ys, ye = i * factor, min((i + 1) * factor, h)
        for j in range(out_w):
            xs, xe = j * factor, min((j + 1) * factor, w)
            total = Fraction(0)
            area = Fraction(0)
            for y in range(math.floor(ys), math.ceil(ye)):
                cy = min(ye, y + 1) - max(ys, y)
                for x in range(math.floor(xs), math.ceil(xe)):
                    cx = min(xe, x + 1) - max(xs, x)
                    total += cy * cx * Fraction(float(src[y, x]))
                    area += cy * cx
            out[i, j] = float(total / area)
    return out


def min_tiles(dim: int, tile: int, overlap: int) -> int:
    """Smallest tile count whose extent with the given overlap reaches ``dim``."""
    if dim <= tile:
        return 1
    n = 1
    while n * tile - (n - 1) * overlap < dim:
        n += 1
    return n


def flood_components(mask: np.ndarray, connectivity: int = 4) -> list[set]:
    """Connected components by breadth-first search, in scanline order of first pixel."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    steps = [(0, 1), (1, 0), (0, -1), (-1, 0)]
    if connectivity == 8:
        steps += [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    comps = []
    for y in range(h):
        for x in range(w):
            if mask[y, x] and not seen[y, x]:
                comp = set()
                q = deque([(y, x)])
                seen[y, x] = True
                while q:
                    cy, cx = q.popleft()
                    comp.add((cy, cx))
                    for dy, dx in steps:
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            q.append((ny, nx))
                comps.append(comp)
    return comps


def hysteresis(score: np.ndarray, low: float, high: float, connectivity: int = 4) -> np.ndarray:
    out = np.zeros(score.shape, dtype=bool)
    for comp in flood_components(score >= low, connectivity):
        if any(score[p] >= high for p in comp):
            for p in comp:
                out[p] = True
    return out


def pixel_counts(pred: np.ndarray, ref: np.ndarray, domain=None):
    tp = fp = fn = tn = 0
    for y in range(pred.shape[0]):
        for x in range(pred.shape[1]):
            if domain is not None and not domain[y, x]:
                continue
            p, r = bool(pred[y, x]), bool(ref[y, x])
            if p and r:
                tp += 1
            elif p:
                fp += 1
            elif r:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def naive_stats(tp, fp, fn, tn) -> dict:
    def div(a, b):
        return None if b == 0 else a / b

    n = tp + fp + fn + tn
    sens = div(tp, tp + fn)
    spec = div(tn, tn + fp)
    den = math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)) if (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn) else 0
    return {
        "dsc": 1.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn),
        "jaccard": div(tp, tp + fp + fn),
        "sensitivity": sens,
        "specificity": spec,
        "precision": div(tp, tp + fp),
        "npv": div(tn, tn + fn),
        "fpr": div(fp, fp + tn),
        "fnr": div(fn, fn + tp),
        "accuracy": div(tp + tn, n),
        "balanced_accuracy": None if sens is None or spec is None else (sens + spec) / 2,
        "mcc": None if den == 0 else (tp * tn - fp * fn) / den,
        "prevalence": div(tp + fn, n),
        "predicted_positive_fraction": div(tp + fp, n),
    }


def kernel_sum(data: np.ndarray, cov: np.ndarray, point: np.ndarray) -> float:
    """Gaussian KDE value at one point as an explicit loop over samples."""
    d, n = data.shape
    inv = np.linalg.inv(cov)
    norm = 1.0 / math.sqrt((2 * math.pi) ** d * np.linalg.det(cov))
    total = 0.0
    for i in range(n):
        diff = data[:, i] - point
        total += math.exp(-0.5 * float(diff @ inv @ diff))
    return norm * total / n


def smooth_random_mask(rng, shape, threshold=0.55, sigma=2.5):
    """Blobby random mask: smoothed noise above a threshold."""
    from scipy import ndimage

    noise = ndimage.gaussian_filter(rng.random(shape), sigma)
    noise = (noise - noise.min()) / (np.ptp(noise) or 1.0)
    return noise > threshold
