"""Deterministic SVG report plots: grouped violins and density-coloured scatter."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
from matplotlib import colormaps

from wsiseg.kde import GaussianKDE

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def _f(x: float) -> str:
    return f"{x:.2f}"


@dataclass(frozen=True)
class ViolinDensity:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float


def violin_density(values, n_grid: int = 512, cut: float = 5.0) -> ViolinDensity | None:
    """KDE outline for one violin, or ``None`` when all values coincide."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ValueError(f"a violin needs at least 2 values, got {v.size}")
    if np.ptp(v) == 0:
        return None
    kde = GaussianKDE(v)
    bw = float(kde.bandwidth[0])
    grid = np.linspace(v.min() - cut * bw, v.max() + cut * bw, n_grid)
    return ViolinDensity(grid, kde(grid), bw)


def plot_violin(groups: dict[str, list[float]], out_path=None, title: str = "",
                ylabel: str = "DSC", ylim: tuple[float, float] | None = (0.0, 1.0)) -> str:
    """Violins per group, left to right in insertion order.

    Each group shows its KDE outline, the interquartile range as a light box,
    the mean as a black line, the median as a coloured line and every value
    as a point.
    """
    if not groups:
        raise ValueError("plot_violin needs at least one group")
    names = list(groups)
    data = {k: np.asarray(groups[k], dtype=np.float64) for k in names}
    for k, v in data.items():
        if v.size < 2:
            raise ValueError(f"group {k!r} needs at least 2 values, got {v.size}")
    if ylim is None:
        lo = min(float(v.min()) for v in data.values())
        hi = max(float(v.max()) for v in data.values())
        pad = 0.05 * (hi - lo) or 0.5
        ylim = (lo - pad, hi + pad)
    y0, y1 = ylim

    slot, half = 120.0, 48.0
    left, top, plot_h = 60.0, 40.0, 360.0
    width = left + slot * len(names) + 20
    height = top + plot_h + 60

    def sy(v):
        return top + (y1 - np.clip(v, y0, y1)) / (y1 - y0) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}">',
        f'<rect x="0" y="0" width="{_f(width)}" height="{_f(height)}" fill="white"/>',
        f'<text x="{_f(width / 2)}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{_f(left)}" y1="{_f(top)}" x2="{_f(left)}" y2="{_f(top + plot_h)}" stroke="black"/>',
        f'<text x="15" y="{_f(top + plot_h / 2)}" font-size="12" transform="rotate(-90 15 {_f(top + plot_h / 2)})" '
        f'text-anchor="middle">{escape(ylabel)}</text>',
    ]
    for tick in np.linspace(y0, y1, 6):
        parts.append(
            f'<line x1="{_f(left - 4)}" y1="{_f(sy(tick))}" x2="{_f(left)}" y2="{_f(sy(tick))}" stroke="black"/>'
            f'<text x="{_f(left - 6)}" y="{_f(sy(tick) + 4)}" font-size="10" text-anchor="end">{tick:.2f}</text>'
        )
    for gi, name in enumerate(names):
        v = data[name]
        cx = left + slot * (gi + 0.5)
        colour = PALETTE[gi % len(PALETTE)]
        parts.append(f'<g class="group" data-name="{escape(name)}" data-index="{gi}">')
        dens = violin_density(v)
        if dens is None:
            parts.append(
                f'<line class="violin spike" x1="{_f(cx - half)}" y1="{_f(sy(v[0]))}" '
                f'x2="{_f(cx + half)}" y2="{_f(sy(v[0]))}" stroke="{colour}" stroke-width="2"/>'
            )
        else:
            inside = (dens.grid >= y0) & (dens.grid <= y1)
            g, d = dens.grid[inside], dens.density[inside]
            scale = half / dens.density.max()
            right = [f"{_f(cx + di * scale)},{_f(sy(gv))}" for gv, di in zip(g, d)]
            leftside = [f"{_f(cx - di * scale)},{_f(sy(gv))}" for gv, di in zip(g[::-1], d[::-1])]
            parts.append(
                f'<polygon class="violin" points="{" ".join(right + leftside)}" '
                f'fill="{colour}" fill-opacity="0.35" stroke="{colour}"/>'
            )
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        mean = float(v.mean())
        parts.append(
            f'<rect class="iqr" x="{_f(cx - half / 3)}" y="{_f(sy(q3))}" width="{_f(2 * half / 3)}" '
            f'height="{_f(sy(q1) - sy(q3))}" fill="#dddddd" fill-opacity="0.7"/>'
        )
        parts.append(
            f'<line class="mean" x1="{_f(cx - half / 2)}" y1="{_f(sy(mean))}" x2="{_f(cx + half / 2)}" '
            f'y2="{_f(sy(mean))}" stroke="black" stroke-width="2"/>'
        )
        parts.append(
            f'<line class="median" x1="{_f(cx - half / 2)}" y1="{_f(sy(med))}" x2="{_f(cx + half / 2)}" '
            f'y2="{_f(sy(med))}" stroke="{colour}" stroke-width="2"/>'
        )
        # deterministic jitter so identical values stay visible
        jitter = np.random.Generator(np.random.PCG64(gi)).uniform(-half / 4, half / 4, v.size)
        for val, jx in zip(v, jitter):
            parts.append(f'<circle class="point" cx="{_f(cx + jx)}" cy="{_f(sy(val))}" r="1.8" fill="black"/>')
        parts.append(
            f'<text x="{_f(cx)}" y="{_f(top + plot_h + 18)}" font-size="11" text-anchor="middle">{escape(name)}</text>'
            f'<text x="{_f(cx)}" y="{_f(top + plot_h + 32)}" font-size="9" text-anchor="middle">n={v.size}</text>'
        )
        parts.append("</g>")
    parts.append("</svg>")
    svg = "\n".join(parts) + "\n"
    if out_path is not None:
        Path(out_path).write_text(svg, encoding="utf-8")
    return svg


def scatter_density(x, y) -> np.ndarray:
    """2-D Gaussian KDE density evaluated at each point."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pts = np.vstack([x, y])
    return GaussianKDE(pts)(pts)


def _hex(rgba) -> str:
    r, g, b = (int(round(255 * c)) for c in rgba[:3])
    return f"#{r:02x}{g:02x}{b:02x}"


def plot_scatter_density(x, y, out_path=None, xlabel: str = "A", ylabel: str = "B",
                         title: str = "", cmap: str = "viridis") -> str:
    """Paired scores on [0, 1]², coloured by density, with the equality diagonal."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length 1-D sequences")
    if x.size < 2:
        raise ValueError(f"scatter needs at least 2 points, got {x.size}")
    density = scatter_density(x, y)
    lo, hi = float(density.min()), float(density.max())
    level = (density - lo) / (hi - lo) if hi > lo else np.ones_like(density)
    colours = colormaps[cmap](level)

    left, top, size = 60.0, 40.0, 360.0
    width, height = left + size + 30, top + size + 60

    def sx(v):
        return left + np.clip(v, 0.0, 1.0) * size

    def sy(v):
        return top + (1.0 - np.clip(v, 0.0, 1.0)) * size

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}">',
        f'<rect x="0" y="0" width="{_f(width)}" height="{_f(height)}" fill="white"/>',
        f'<text x="{_f(width / 2)}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect class="axes" x="{_f(left)}" y="{_f(top)}" width="{_f(size)}" height="{_f(size)}" '
        f'fill="none" stroke="black"/>',
        f'<line class="diagonal" x1="{_f(sx(0.0))}" y1="{_f(sy(0.0))}" x2="{_f(sx(1.0))}" y2="{_f(sy(1.0))}" '
        f'stroke="grey" stroke-dasharray="4 3"/>',
        f'<text x="{_f(left + size / 2)}" y="{_f(top + size + 36)}" font-size="12" text-anchor="middle">'
        f'{escape(xlabel)}</text>',
        f'<text x="15" y="{_f(top + size / 2)}" font-size="12" transform="rotate(-90 15 {_f(top + size / 2)})" '
        f'text-anchor="middle">{escape(ylabel)}</text>',
    ]
    for tick in np.linspace(0.0, 1.0, 6):
        parts.append(
            f'<text x="{_f(sx(tick))}" y="{_f(top + size + 16)}" font-size="10" text-anchor="middle">{tick:.1f}</text>'
            f'<text x="{_f(left - 6)}" y="{_f(sy(tick) + 4)}" font-size="10" text-anchor="end">{tick:.1f}</text>'
        )
    # densest points drawn last so they stay on top
    for i in np.argsort(density, kind="stable"):
        parts.append(
            f'<circle class="point" cx="{_f(sx(x[i]))}" cy="{_f(sy(y[i]))}" r="3" '
            f'fill="{_hex(colours[i])}" data-density="{density[i]:.6g}"/>'
        )
    parts.append("</svg>")
    svg = "\n".join(parts) + "\n"
    if out_path is not None:
        Path(out_path).write_text(svg, encoding="utf-8")
    return svg
