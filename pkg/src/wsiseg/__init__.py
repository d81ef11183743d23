"""Tile-based tumour segmentation of whole-slide images and its evaluation toolkit."""

from wsiseg.raster import Raster, Rect, crop, downscale

__all__ = ["Raster", "Rect", "crop", "downscale"]
__version__ = "0.1.0"
