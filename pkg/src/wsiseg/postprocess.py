"""Dichotomisation of score images and mask cleaning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from wsiseg.raster import Raster

MIN_REGION_AREA = 1600

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)
EIGHT_CONNECTED = ndimage.generate_binary_structure(2, 2)


def structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return FOUR_CONNECTED
    if connectivity == 8:
        return EIGHT_CONNECTED
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


@dataclass(frozen=True)
class HysteresisParams:
    low: float = 0.5
    high: float = 0.9

    def __post_init__(self):
        if not (0.0 <= self.low <= 1.0 and 0.0 <= self.high <= 1.0):
            raise ValueError(f"thresholds must lie in [0, 1], got {self.low}, {self.high}")
        if self.low > self.high:
            raise ValueError(f"low threshold {self.low} exceeds high threshold {self.high}")


def hysteresis_threshold(score: Raster, p: HysteresisParams, connectivity: int = 4) -> Raster:
    """Keep connected components of ``score >= low`` holding a pixel ``>= high``."""
    weak = score.data >= p.low
    labels, n = ndimage.label(weak, structure=structure(connectivity))
    if n == 0:
        return Raster(weak, score.spacing, "mask")
    seeded = np.zeros(n + 1, dtype=bool)
    seeded[labels[score.data >= p.high]] = True
    seeded[0] = False
    return Raster(seeded[labels], score.spacing, "mask")


def remove_small_regions(mask: Raster, min_area: int = MIN_REGION_AREA, connectivity: int = 4) -> Raster:
    """Clear every connected component with fewer than ``min_area`` pixels."""
    if min_area <= 1:
        return mask
    labels, n = ndimage.label(mask.data, structure=structure(connectivity))
    if n == 0:
        return mask
    areas = np.bincount(labels.ravel())
    keep = areas >= min_area
    keep[0] = False
    return Raster(keep[labels], mask.spacing, "mask")


@dataclass(frozen=True)
class TissueParams:
    max_luminance: float = 0.92
    min_saturation: float = 0.05
    min_area: int = MIN_REGION_AREA


def tissue_mask(slide: Raster, params: TissueParams = TissueParams()) -> Raster:
    """Non-white tissue: dark enough or saturated enough, minus small specks."""
    rgb = slide.data.astype(np.float64) / 255.0
    luminance = rgb @ np.array([0.299, 0.587, 0.114])
    hi = rgb.max(axis=2)
    lo = rgb.min(axis=2)
    saturation = np.divide(hi - lo, hi, out=np.zeros_like(hi), where=hi > 0)
    fg = (luminance < params.max_luminance) | (saturation > params.min_saturation)
    return remove_small_regions(Raster(fg, slide.spacing, "mask"), params.min_area)
