"""Deterministic synthetic slides with known tumour masks.

Randomness comes from numpy's PCG64 bit generator. A slide seeded with
``s`` uses ``np.random.Generator(np.random.PCG64(s))``; slide ``i`` of a
cohort with master seed ``m`` uses the first 64-bit word of
``np.random.SeedSequence([m, i]).generate_state(1, np.uint64)`` as its seed.
Both algorithms are fixed by numpy's stability guarantees for bit streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from wsiseg.io import SlideManifest, write_manifest, write_png
from wsiseg.raster import Raster


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class Palette:
    background: tuple[int, int, int] = (246, 246, 248)
    stroma: tuple[int, int, int] = (232, 168, 196)
    tumour: tuple[int, int, int] = (214, 140, 186)
    nucleus: tuple[int, int, int] = (96, 52, 132)


@dataclass(frozen=True)
class SynthSpec:
    """Synthetic slide parameters. Lengths in micrometres unless named ``*_px``.

    In fragmented mode the tumour is a set of small fragments, plus (with
    probability ``core_probability``) the regular ``blob_count`` blobs.
    """

    seed: int = 0
    width: int = 4000
    height: int = 4000
    spacing: float = 0.25
    blob_count: tuple[int, int] = (1, 4)
    blob_radius_um: tuple[float, float] = (60.0, 200.0)
    aspect: tuple[float, float] = (0.6, 1.0)
    fragmented: bool = False
    fragment_count: tuple[int, int] = (15, 40)
    fragment_radius_um: tuple[float, float] = (6.0, 20.0)
    core_probability: float = 0.6
    gap_um: float = 6.0
    nucleus_um: float = 6.0
    stroma_nuclear_density: float = 0.08
    tumour_nuclear_density: float = 0.35
    palette: Palette = Palette()

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise SynthError(f"slide dims must be >= 1, got {self.width}x{self.height}")
        if not self.spacing > 0:
            raise SynthError(f"spacing must be positive, got {self.spacing}")
        for name in ("blob_radius_um", "fragment_radius_um", "aspect"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise SynthError(f"{name} must satisfy 0 < lo <= hi, got {(lo, hi)}")
        for name in ("blob_count", "fragment_count"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise SynthError(f"{name} must satisfy 0 <= lo <= hi, got {(lo, hi)}")
        if self.aspect[1] > 1.0:
            raise SynthError("aspect ratios must not exceed 1")

    @property
    def width_um(self) -> float:
        return self.width * self.spacing

    @property
    def height_um(self) -> float:
        return self.height * self.spacing

    def expected_tumour_fraction(self) -> float:
        """Expected tumour area over slide area, ignoring pixel discretisation."""

        def mean_area(count, radius):
            n = (count[0] + count[1]) / 2
            r0, r1 = radius
            mean_r2 = (r0 * r0 + r0 * r1 + r1 * r1) / 3
            mean_aspect = (self.aspect[0] + self.aspect[1]) / 2
            return n * math.pi * mean_r2 * mean_aspect

        area = mean_area(self.blob_count, self.blob_radius_um)
        if self.fragmented:
            area = self.core_probability * area + mean_area(self.fragment_count, self.fragment_radius_um)
        return area / (self.width_um * self.height_um)


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    a: float
    b: float
    theta: float

    def scaled(self, factor: float) -> Ellipse:
        return Ellipse(self.cx, self.cy, self.a * factor, self.b * factor, self.theta)


def _place(rng, count, radius, aspect, spec: SynthSpec, placed: list[Ellipse],
           inside=None, max_tries: int = 2000) -> list[Ellipse]:
    out = []
    for _ in range(count):
        a = rng.uniform(*radius)
        b = a * rng.uniform(*aspect)
        theta = rng.uniform(0.0, math.pi)
        for _ in range(max_tries):
            cx = rng.uniform(a + spec.gap_um, spec.width_um - a - spec.gap_um) if spec.width_um > 2 * (a + spec.gap_um) else None
            cy = rng.uniform(a + spec.gap_um, spec.height_um - a - spec.gap_um) if spec.height_um > 2 * (a + spec.gap_um) else None
            if cx is None or cy is None:
                raise SynthError(f"blob of radius {a:.1f} um cannot fit in a {spec.width_um}x{spec.height_um} um slide")
            if inside is not None and not inside(cx, cy):
                continue
            if all(math.hypot(cx - e.cx, cy - e.cy) > a + e.a + spec.gap_um for e in placed + out):
                out.append(Ellipse(cx, cy, a, b, theta))
                break
        else:
            raise SynthError(f"could not place {count} non-overlapping blobs of radius up to {radius[1]} um")
    return out


def _rasterise(ellipses: list[Ellipse], spec: SynthSpec, out: np.ndarray) -> np.ndarray:
    s = spec.spacing
    h, w = out.shape
    for e in ellipses:
        x0 = max(0, int(math.floor((e.cx - e.a) / s)))
        x1 = min(w, int(math.ceil((e.cx + e.a) / s)) + 1)
        y0 = max(0, int(math.floor((e.cy - e.a) / s)))
        y1 = min(h, int(math.ceil((e.cy + e.a) / s)) + 1)
        if x0 >= x1 or y0 >= y1:
            continue
        # pixel centres in micrometres
        xs = (np.arange(x0, x1) + 0.5) * s - e.cx
        ys = (np.arange(y0, y1) + 0.5) * s - e.cy
        c, sn = math.cos(e.theta), math.sin(e.theta)
        u = xs[None, :] * c + ys[:, None] * sn
        v = -xs[None, :] * sn + ys[:, None] * c
        out[y0:y1, x0:x1] |= (u / e.a) ** 2 + (v / e.b) ** 2 <= 1.0
    return out


def _count(rng, bounds) -> int:
    return int(rng.integers(bounds[0], bounds[1] + 1))


def synth_slide(spec: SynthSpec) -> tuple[Raster, Raster]:
    """Render an RGB slide and its exact tumour mask at ``spec.spacing``."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    W, H = spec.width_um, spec.height_um

    if spec.fragmented:
        n_core = _count(rng, spec.blob_count) if rng.random() < spec.core_probability else 0
        cores = _place(rng, n_core, spec.blob_radius_um, spec.aspect, spec, [])
        frags = _place(rng, _count(rng, spec.fragment_count), spec.fragment_radius_um,
                       spec.aspect, spec, cores)
        tumour = cores + frags
        # tissue: halo around each tumour piece plus benign fragments
        tissue = [e.scaled(1.8) for e in tumour]
        tissue += _place(rng, _count(rng, spec.fragment_count), spec.fragment_radius_um,
                         spec.aspect, spec, [e.scaled(1.8) for e in tumour])
    else:
        body = Ellipse(W / 2, H / 2, 0.46 * W, 0.46 * H * rng.uniform(0.8, 1.0), 0.0)

        def in_body(x, y):
            return ((x - body.cx) / body.a) ** 2 + ((y - body.cy) / body.b) ** 2 <= 0.8

        tumour = _place(rng, _count(rng, spec.blob_count), spec.blob_radius_um, spec.aspect,
                        spec, [], inside=in_body)
        tissue = [body]

    shape = (spec.height, spec.width)
    mask = _rasterise(tumour, spec, np.zeros(shape, dtype=bool))
    tissue_px = _rasterise(tissue, spec, np.zeros(shape, dtype=bool)) | mask

    # blocky nuclei: one random draw per nucleus-sized cell
    cell = max(1, int(round(spec.nucleus_um / spec.spacing)))
    ch, cw = -(-spec.height // cell), -(-spec.width // cell)
    draw = rng.random((ch, cw))
    draw = np.repeat(np.repeat(draw, cell, axis=0), cell, axis=1)[: spec.height, : spec.width]
    density = np.where(mask, spec.tumour_nuclear_density, spec.stroma_nuclear_density)
    nuclei = tissue_px & (draw < density)

    pal = spec.palette
    rgb = np.empty(shape + (3,), dtype=np.int16)
    rgb[:] = pal.background
    rgb[tissue_px] = pal.stroma
    rgb[mask] = pal.tumour
    rgb[nuclei] = pal.nucleus
    rgb += rng.integers(-4, 5, size=shape + (3,), dtype=np.int16)
    rgb = np.clip(rgb, 0, 255).astype(np.uint8)
    return Raster(rgb, spec.spacing, "rgb"), Raster(mask, spec.spacing, "mask")


def derive_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1, np.uint64)[0])


def synth_cohort(template: SynthSpec, count: int, seed: int, out_dir, cohort_id: str = "synthetic",
                 scanner_id: str = "synthetic", compress_level: int = 1) -> Path:
    """Write ``count`` slides and masks plus a ``manifest.json``; returns the manifest path."""
    if count < 1:
        raise SynthError(f"cohort count must be >= 1, got {count}")
    out_dir = Path(out_dir)
    (out_dir / "slides").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(count):
        scan_id = f"{cohort_id}-{i:04d}"
        slide_seed = derive_seed(seed, i)
        slide, mask = synth_slide(replace(template, seed=slide_seed))
        image_path = out_dir / "slides" / f"{scan_id}.png"
        mask_path = out_dir / "masks" / f"{scan_id}.png"
        try:
            write_png(image_path, slide, compress_level=compress_level)
            write_png(mask_path, mask)
        except OSError as exc:
            raise OSError(f"failed writing synthetic scan {scan_id} under {out_dir}: {exc}") from exc
        entries.append(SlideManifest(
            scan_id=scan_id,
            cohort_id=cohort_id,
            scanner_id=scanner_id,
            image=image_path,
            spacing=template.spacing,
            reference=mask_path,
            covariates={"seed": slide_seed, "fragmented": int(template.fragmented)},
        ))
    return write_manifest(out_dir / "manifest.json", entries, cohort_id=cohort_id)
