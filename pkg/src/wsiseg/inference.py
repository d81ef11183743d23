"""Tile-scoring backends and the end-to-end segmentation pipeline."""

from __future__ import annotations

import json
import queue
import subprocess
import sys
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from wsiseg.io import read_png, write_png
from wsiseg.postprocess import (
    MIN_REGION_AREA,
    HysteresisParams,
    hysteresis_threshold,
    remove_small_regions,
    tissue_mask,
)
from wsiseg.raster import Raster, Rect, crop, downscale
from wsiseg.tiling import TileGrid, merge_tiles, plan_tiles

BACKEND_KINDS = ("oracle-mock", "score-cache", "external-process")
WHITE = 255


class BackendError(RuntimeError):
    pass


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str = "oracle-mock"
    noise: float = 0.0
    seed: int = 0
    directory: str | None = None
    command: tuple[str, ...] | None = None
    pool_size: int = 1
    send_reference: bool = False

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}; expected one of {BACKEND_KINDS}")
        if self.noise < 0:
            raise ValueError(f"oracle noise must be >= 0, got {self.noise}")
        if self.kind == "score-cache" and not self.directory:
            raise ValueError("score-cache backend needs a directory")
        if self.kind == "external-process" and not self.command:
            raise ValueError("external-process backend needs a command")
        if self.pool_size < 1:
            raise ValueError(f"pool_size must be >= 1, got {self.pool_size}")
        if self.command is not None and not isinstance(self.command, tuple):
            object.__setattr__(self, "command", tuple(self.command))

    @classmethod
    def from_dict(cls, d: dict) -> BackendDescriptor:
        return cls(**d)


@dataclass(frozen=True)
class PipelineConfig:
    working_spacing: float = 1.0
    tile_size: int = 7680
    min_overlap: int = 1024
    low: float = 0.5
    high: float = 0.9
    min_region_area: int = MIN_REGION_AREA
    connectivity: int = 4
    restrict_to_tissue: bool = False

    def __post_init__(self):
        if not self.working_spacing > 0:
            raise ValueError(f"working spacing must be positive, got {self.working_spacing}")
        if not 0 <= self.min_overlap < self.tile_size:
            raise ValueError(
                f"need tile_size > min_overlap >= 0, got {self.tile_size} and {self.min_overlap}"
            )
        HysteresisParams(self.low, self.high)
        if self.min_region_area < 0:
            raise ValueError(f"min_region_area must be >= 0, got {self.min_region_area}")

    @property
    def hysteresis(self) -> HysteresisParams:
        return HysteresisParams(self.low, self.high)

    @classmethod
    def from_dict(cls, d: dict) -> PipelineConfig:
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def tile_id(rect: Rect) -> str:
    return f"x{rect.x0}_y{rect.y0}"


def pad_tile(tile: Raster, size: int, fill) -> Raster:
    if tile.width == size and tile.height == size:
        return tile
    shape = (size, size) + tile.data.shape[2:]
    out = np.full(shape, fill, dtype=tile.data.dtype)
    out[: tile.height, : tile.width] = tile.data
    return Raster(out, tile.spacing, tile.kind)


class OracleBackend:
    """Scores a tile with the reference mask plus clipped Gaussian noise.

    Noise for a tile is drawn from a generator seeded by ``(seed, x0, y0)``
    so results do not depend on scoring order or worker count.
    """

    fixed_size = False

    def __init__(self, reference: Raster, noise: float = 0.0, seed: int = 0):
        if reference is None:
            raise BackendError("oracle-mock backend needs a reference mask")
        self.reference = reference
        self.noise = noise
        self.seed = seed

    def score(self, tile: Raster, rect: Rect, tid: str) -> Raster:
        truth = self.reference.data[rect.slices].astype(np.float64)
        out = np.zeros((tile.height, tile.width))
        if self.noise > 0:
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, rect.x0, rect.y0])))
            truth = np.clip(truth + rng.normal(0.0, self.noise, truth.shape), 0.0, 1.0)
        out[: rect.height, : rect.width] = truth
        return Raster(out, tile.spacing, "score")

    def close(self):
        pass


class ScoreCacheBackend:
    """Loads previously stored 16-bit score tiles named ``<tile_id>.png``."""

    fixed_size = False

    def __init__(self, directory):
        self.directory = Path(directory)

    def score(self, tile: Raster, rect: Rect, tid: str) -> Raster:
        path = self.directory / f"{tid}.png"
        if not path.exists():
            raise BackendError(f"score cache miss for tile {rect} (expected {path})")
        cached = read_png(path, tile.spacing, "score")
        if cached.data.shape not in ((rect.height, rect.width), (tile.height, tile.width)):
            raise BackendError(
                f"cached score {path} has shape {cached.data.shape}, expected {(rect.height, rect.width)}"
            )
        out = np.zeros((tile.height, tile.width))
        out[: rect.height, : rect.width] = cached.data[: rect.height, : rect.width]
        return Raster(out, tile.spacing, "score")

    def close(self):
        pass


def export_score_cache(score: Raster, grid: TileGrid, directory) -> Path:
    """Store a score image as per-tile PNGs readable by :class:`ScoreCacheBackend`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for rect in grid.rects():
        write_png(directory / f"{tile_id(rect)}.png", crop(score, rect))
    return directory


class _Worker:
    def __init__(self, command, workdir: Path):
        self.stderr = tempfile.TemporaryFile(dir=workdir)
        self.proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=self.stderr,
            text=True,
            bufsize=1,
        )

    def diagnostics(self) -> str:
        self.stderr.seek(0)
        return self.stderr.read().decode("utf-8", "replace")[-4000:]

    def close(self, timeout: float = 10.0):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=timeout)
            except (OSError, subprocess.TimeoutExpired):
                self.proc.kill()
                self.proc.wait()
        self.stderr.close()


class ExternalProcessBackend:
    """Round-trips tiles through child processes speaking a JSON-lines protocol.

    Each request line is ``{"tile_id", "path_rgb", "path_score"}`` (plus
    ``"path_reference"`` when a reference is shared); the child replies with
    ``{"tile_id", "path_score"}`` after writing a 16-bit PNG there. One
    request is in flight per child; the parent owns all temporary files.
    """

    fixed_size = True

    def __init__(self, command, pool_size: int = 1, reference: Raster | None = None):
        self.command = tuple(command)
        self.reference = reference
        self._tmp = tempfile.TemporaryDirectory(prefix="wsiseg-ext-")
        self.workdir = Path(self._tmp.name)
        self._idle: queue.Queue[_Worker] = queue.Queue()
        self._all: list[_Worker] = []
        self._lock = threading.Lock()
        self.pool_size = pool_size
        self._counter = 0

    def _acquire(self) -> _Worker:
        with self._lock:
            if self._idle.empty() and len(self._all) < self.pool_size:
                w = _Worker(self.command, self.workdir)
                self._all.append(w)
                return w
        return self._idle.get()

    def _next_name(self) -> str:
        with self._lock:
            self._counter += 1
            return f"req{self._counter:08d}"

    def score(self, tile: Raster, rect: Rect, tid: str) -> Raster:
        name = self._next_name()
        rgb_path = self.workdir / f"{name}.rgb.png"
        score_path = self.workdir / f"{name}.score.png"
        write_png(rgb_path, tile, compress_level=1)
        request = {"tile_id": tid, "path_rgb": str(rgb_path), "path_score": str(score_path)}
        temp = [rgb_path, score_path]
        if self.reference is not None:
            ref_path = self.workdir / f"{name}.ref.png"
            ref_tile = pad_tile(crop(self.reference, rect), tile.width, False)
            write_png(ref_path, Raster(ref_tile.data.astype(np.float64), tile.spacing, "score"))
            request["path_reference"] = str(ref_path)
            temp.append(ref_path)
        worker = self._acquire()
        try:
            return self._exchange(worker, request, tile)
        finally:
            for p in temp:
                p.unlink(missing_ok=True)
            if worker.proc.poll() is None:
                self._idle.put(worker)

    def _exchange(self, worker: _Worker, request: dict, tile: Raster) -> Raster:
        tid = request["tile_id"]
        try:
            worker.proc.stdin.write(json.dumps(request) + "\n")
            worker.proc.stdin.flush()
            line = worker.proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            worker.proc.wait()
            raise BackendError(
                f"backend process {self.command} failed on tile {tid} "
                f"(exit {worker.proc.returncode}): {exc}\n{worker.diagnostics()}"
            ) from exc
        if not line:
            code = worker.proc.wait()
            raise BackendError(
                f"backend process {self.command} exited with code {code} before answering tile {tid}\n"
                f"{worker.diagnostics()}"
            )
        try:
            response = json.loads(line)
            if response["tile_id"] != tid:
                raise ValueError(f"answered tile {response['tile_id']!r}, expected {tid!r}")
            path = Path(response["path_score"])
            score = read_png(path, tile.spacing, "score")
        except (ValueError, KeyError, TypeError, OSError) as exc:
            raise BackendError(
                f"malformed response from backend {self.command} for tile {tid}: {line.strip()!r} ({exc})\n"
                f"{worker.diagnostics()}"
            ) from exc
        finally:
            if "path_score" in request:
                Path(request["path_score"]).unlink(missing_ok=True)
        if score.data.shape != (tile.height, tile.width):
            raise BackendError(
                f"backend returned shape {score.data.shape} for tile {tid}, expected {(tile.height, tile.width)}"
            )
        return score

    def close(self):
        for w in self._all:
            w.close()
        self._all.clear()
        self._tmp.cleanup()


def echo_command() -> tuple[str, ...]:
    """Command line for the bundled reference echo backend."""
    return (sys.executable, "-m", "wsiseg.echo_backend")


def make_backend(desc: BackendDescriptor, reference: Raster | None = None):
    if desc.kind == "oracle-mock":
        return OracleBackend(reference, desc.noise, desc.seed)
    if desc.kind == "score-cache":
        return ScoreCacheBackend(desc.directory)
    return ExternalProcessBackend(
        desc.command, desc.pool_size, reference if desc.send_reference else None
    )


def score_tile(backend, tile: Raster, rect: Rect, tile_size: int) -> Raster:
    """Score one unpadded tile, padding with white for fixed-size backends."""
    if getattr(backend, "fixed_size", False):
        padded = pad_tile(tile, tile_size, WHITE)
    else:
        padded = tile
    scored = backend.score(padded, rect, tile_id(rect))
    if scored.data.shape != (padded.height, padded.width):
        raise BackendError(f"backend returned shape {scored.data.shape} for tile {rect}")
    if not (np.all(scored.data >= 0) and np.all(scored.data <= 1)):
        raise BackendError(f"backend returned scores outside [0, 1] for tile {rect}")
    return Raster(scored.data[: rect.height, : rect.width], tile.spacing, "score")


@dataclass
class PipelineResult:
    score: Raster
    mask: Raster
    grid: TileGrid
    reference: Raster | None = None
    timings: dict = field(default_factory=dict)

    @property
    def no_prediction(self) -> bool:
        return not self.mask.data.any()


def run_pipeline(slide: Raster, reference: Raster | None, backend, config: PipelineConfig = PipelineConfig(),
                 workers: int = 1) -> PipelineResult:
    """Downscale, tile, score, merge, dichotomise and clean one slide.

    ``backend`` is a :class:`BackendDescriptor` (instantiated and closed
    here, bound to the working-spacing reference) or a ready backend object.
    """
    if slide is None or slide.kind != "rgb":
        raise ValueError("run_pipeline needs an RGB slide")
    if slide.spacing > config.working_spacing:
        raise ValueError(
            f"slide spacing {slide.spacing} is coarser than working spacing {config.working_spacing}"
        )
    timings = {}
    t0 = time.perf_counter()
    working = downscale(slide, config.working_spacing)
    ref = downscale(reference, config.working_spacing) if reference is not None else None
    if ref is not None and ref.data.shape != working.data.shape[:2]:
        raise ValueError(f"reference shape {ref.data.shape} does not match slide {working.data.shape[:2]}")
    timings["downscale"] = time.perf_counter() - t0

    grid = plan_tiles(working.width, working.height, config.tile_size, config.min_overlap)
    rects = grid.rects()
    owned = isinstance(backend, BackendDescriptor)
    impl = make_backend(backend, ref) if owned else backend
    t0 = time.perf_counter()
    try:
        def job(rect):
            return rect, score_tile(impl, crop(working, rect), rect, config.tile_size)

        if workers > 1 and len(rects) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                scored = list(pool.map(job, rects))
        else:
            scored = [job(r) for r in rects]
    finally:
        if owned:
            impl.close()
    timings["score"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    merged = merge_tiles(scored, grid)
    timings["merge"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    mask = hysteresis_threshold(merged, config.hysteresis, config.connectivity)
    if config.restrict_to_tissue:
        tissue = tissue_mask(working)
        mask = Raster(mask.data & tissue.data, mask.spacing, "mask")
    mask = remove_small_regions(mask, config.min_region_area, config.connectivity)
    timings["postprocess"] = time.perf_counter() - t0
    return PipelineResult(merged, mask, grid, ref, timings)
