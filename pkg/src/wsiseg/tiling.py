"""Overlapping tile grids and distance-weighted merging of score tiles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wsiseg.raster import Raster, Rect


def axis_offsets(dim: int, tile_size: int, min_overlap: int) -> list[int]:
    """Tile origins along one axis.

    Uses the fewest tiles whose combined extent with ``min_overlap`` covers
    ``dim``, then spreads them evenly from 0 to ``dim - tile_size``.
    """
    if tile_size < 1:
        raise ValueError(f"tile_size must be >= 1, got {tile_size}")
    if not 0 <= min_overlap < tile_size:
        raise ValueError(
            f"min_overlap must satisfy 0 <= min_overlap < tile_size, got {min_overlap} and {tile_size}"
        )
    if dim < 1:
        raise ValueError(f"image dimension must be >= 1, got {dim}")
    if dim <= tile_size:
        return [0]
    stride = tile_size - min_overlap
    # smallest n with n*T - (n-1)*O >= dim
    n = 1 + -(-(dim - tile_size) // stride)
    last = dim - tile_size
    offsets = [int(round(i * last / (n - 1))) for i in range(n)]
    offsets[-1] = last
    return offsets


@dataclass(frozen=True)
class TileGrid:
    width: int
    height: int
    tile_size: int
    min_overlap: int
    offsets_x: tuple[int, ...]
    offsets_y: tuple[int, ...]

    @property
    def tile_width(self) -> int:
        return min(self.tile_size, self.width)

    @property
    def tile_height(self) -> int:
        return min(self.tile_size, self.height)

    def rects(self) -> list[Rect]:
        """Tile rectangles in canonical (row-major) order, clipped to the image."""
        return [
            Rect(x0, y0, self.tile_width, self.tile_height)
            for y0 in self.offsets_y
            for x0 in self.offsets_x
        ]

    def __len__(self) -> int:
        return len(self.offsets_x) * len(self.offsets_y)


def plan_tiles(width: int, height: int, tile_size: int, min_overlap: int) -> TileGrid:
    return TileGrid(
        width=width,
        height=height,
        tile_size=tile_size,
        min_overlap=min_overlap,
        offsets_x=tuple(axis_offsets(width, tile_size, min_overlap)),
        offsets_y=tuple(axis_offsets(height, tile_size, min_overlap)),
    )


def axis_ramp(offsets: tuple[int, ...], index: int, length: int) -> np.ndarray:
    """Blending weights along one axis for the tile at ``offsets[index]``.

    Where the tile overlaps its predecessor by ``o`` pixels the weight rises
    as ``(i + 1) / (o + 1)``; the trailing overlap mirrors it. Interior pixels
    and image-border sides keep weight 1.
    """
    w = np.ones(length)
    i = np.arange(length)
    if index > 0:
        o = offsets[index - 1] + length - offsets[index]
        if o > 0:
            w = np.minimum(w, np.minimum((i + 1) / (o + 1), 1.0))
    if index < len(offsets) - 1:
        o = offsets[index] + length - offsets[index + 1]
        if o > 0:
            w = np.minimum(w, np.minimum((length - i) / (o + 1), 1.0))
    return w


def tile_weights(grid: TileGrid, rect: Rect) -> np.ndarray:
    ix = grid.offsets_x.index(rect.x0)
    iy = grid.offsets_y.index(rect.y0)
    wx = axis_ramp(grid.offsets_x, ix, grid.tile_width)
    wy = axis_ramp(grid.offsets_y, iy, grid.tile_height)
    return np.outer(wy, wx)


def merge_tiles(tiles, grid: TileGrid) -> Raster:
    """Blend per-tile score rasters into one score image.

    ``tiles`` is an iterable of ``(Rect, Raster)``. Tiles are accumulated in
    the grid's canonical order regardless of input order, so the result is
    bit-identical under any permutation.
    """
    by_rect: dict[Rect, Raster] = {}
    for rect, tile in tiles:
        if rect in by_rect:
            raise ValueError(f"duplicate tile for {rect}")
        by_rect[rect] = tile
    rects = grid.rects()
    missing = [r for r in rects if r not in by_rect]
    if missing:
        raise ValueError(f"missing score tile for {missing[0]} ({len(missing)} missing)")
    extra = set(by_rect) - set(rects)
    if extra:
        raise ValueError(f"tile {sorted(extra, key=lambda r: (r.y0, r.x0))[0]} is not in the grid")

    acc = np.zeros((grid.height, grid.width))
    norm = np.zeros((grid.height, grid.width))
    spacing = None
    for rect in rects:
        tile = by_rect[rect]
        if tile.data.shape != (rect.height, rect.width):
            raise ValueError(
                f"tile for {rect} has shape {tile.data.shape}, expected {(rect.height, rect.width)}"
            )
        spacing = tile.spacing if spacing is None else spacing
        w = tile_weights(grid, rect)
        acc[rect.slices] += w * tile.data
        norm[rect.slices] += w
    out = np.clip(acc / norm, 0.0, 1.0)
    return Raster(out, spacing, "score")


def split(image: Raster, grid: TileGrid) -> list[tuple[Rect, Raster]]:
    """Cut an image into the grid's tiles (no padding)."""
    return [(r, Raster(image.data[r.slices], image.spacing, image.kind)) for r in grid.rects()]
