"""Immutable raster containers and area-averaging resampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

KINDS = ("mask", "score", "rgb")


@dataclass(frozen=True)
class Rect:
    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"rect must be at least 1x1, got {self.width}x{self.height}")
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"rect origin must be non-negative, got ({self.x0}, {self.y0})")

    @property
    def x1(self) -> int:
        return self.x0 + self.width

    @property
    def y1(self) -> int:
        return self.y0 + self.height

    @property
    def slices(self) -> tuple[slice, slice]:
        """Row/column slices for indexing a (height, width, ...) array."""
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def inside(self, width: int, height: int) -> bool:
        return self.x1 <= width and self.y1 <= height


@dataclass(frozen=True, eq=False)
class Raster:
    """A pixel grid with physical spacing in micrometres per pixel.

    ``data`` is stored row-major with shape ``(height, width)`` for masks and
    scores and ``(height, width, 3)`` for RGB. Masks are ``bool``, scores
    ``float64`` in [0, 1] and RGB ``uint8``. The array is made read-only.
    """

    data: np.ndarray
    spacing: float
    kind: str = "score"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown raster kind {self.kind!r}")
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        data = np.asarray(self.data)
        if self.kind == "rgb":
            if data.ndim != 3 or data.shape[2] != 3:
                raise ValueError(f"rgb raster needs shape (h, w, 3), got {data.shape}")
            if data.dtype != np.uint8:
                raise ValueError(f"rgb raster needs uint8 data, got {data.dtype}")
        else:
            if data.ndim != 2:
                raise ValueError(f"{self.kind} raster needs shape (h, w), got {data.shape}")
            if self.kind == "mask":
                if data.dtype != bool:
                    if not np.isin(data, (0, 1)).all():
                        raise ValueError("mask values must be 0 or 1")
                    data = data.astype(bool)
            else:
                data = data.astype(np.float64, copy=False)
                if data.size and not (np.all(data >= 0.0) and np.all(data <= 1.0)):
                    raise ValueError("score values must lie in [0, 1]")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"raster must be at least 1x1, got {data.shape[:2]}")
        if data.flags.writeable:
            data = data.copy()
            data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def mask(cls, data, spacing: float) -> Raster:
        return cls(np.asarray(data, dtype=bool), spacing, "mask")

    @classmethod
    def score(cls, data, spacing: float) -> Raster:
        return cls(np.asarray(data, dtype=np.float64), spacing, "score")

    @classmethod
    def rgb(cls, data, spacing: float) -> Raster:
        return cls(np.asarray(data, dtype=np.uint8), spacing, "rgb")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return 3 if self.kind == "rgb" else 1

    @property
    def full_rect(self) -> Rect:
        return Rect(0, 0, self.width, self.height)

    def pixel(self, x: int, y: int):
        return self.data[y, x]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Raster):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.spacing == other.spacing
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


def crop(src: Raster, r: Rect) -> Raster:
    if not r.inside(src.width, src.height):
        raise ValueError(f"{r} does not lie inside a {src.width}x{src.height} raster")
    return Raster(src.data[r.slices], src.spacing, src.kind)


def output_size(n: int, src_spacing: float, target_spacing: float) -> int:
    # the epsilon absorbs float error in products like 100 * 0.29
    return max(1, math.floor(n * src_spacing / target_spacing + 1e-9))


def area_weights(n_in: int, n_out: int, factor: float) -> sparse.csr_matrix:
    """Sparse (n_out, n_in) matrix of fractional source coverage per output pixel.

    Output pixel ``i`` covers the source interval ``[i * factor, (i + 1) * factor)``
    clipped to the source extent; rows are normalised to sum to one.
    """
    rows, cols, vals = [], [], []
    for i in range(n_out):
        start = i * factor
        end = min((i + 1) * factor, n_in)
        j0 = int(math.floor(start))
        j1 = min(int(math.ceil(end)), n_in)
        js = np.arange(j0, j1)
        w = np.minimum(end, js + 1) - np.maximum(start, js)
        keep = w > 0
        js, w = js[keep], w[keep]
        rows.append(np.full(js.size, i))
        cols.append(js)
        vals.append(w / w.sum())
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_out, n_in),
    )


def _resample_plane(plane: np.ndarray, wy: sparse.csr_matrix, wx: sparse.csr_matrix) -> np.ndarray:
    tmp = wy @ plane.astype(np.float64)
    return np.asarray((wx @ tmp.T).T)


def downscale(src: Raster, target_spacing: float) -> Raster:
    """Resample ``src`` to a coarser spacing by exact area averaging.

    Masks are averaged as scores and re-thresholded at 0.5 (ties become
    foreground); RGB values are rounded back to 8 bits.
    """
    if target_spacing < src.spacing:
        raise ValueError(
            f"refusing to upsample from {src.spacing} to {target_spacing} um/px"
        )
    if target_spacing == src.spacing:
        return src
    factor = target_spacing / src.spacing
    out_w = output_size(src.width, src.spacing, target_spacing)
    out_h = output_size(src.height, src.spacing, target_spacing)
    wx = area_weights(src.width, out_w, factor)
    wy = area_weights(src.height, out_h, factor)

    if src.kind == "rgb":
        planes = [_resample_plane(src.data[:, :, c], wy, wx) for c in range(3)]
        out = np.clip(np.rint(np.stack(planes, axis=-1)), 0, 255).astype(np.uint8)
        return Raster(out, target_spacing, "rgb")
    out = np.clip(_resample_plane(src.data, wy, wx), 0.0, 1.0)
    if src.kind == "mask":
        return Raster(out >= 0.5, target_spacing, "mask")
    return Raster(out, target_spacing, "score")
