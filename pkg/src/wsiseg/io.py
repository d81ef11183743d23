"""PNG rasters, cohort manifests and per-scan record tables."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from wsiseg.metrics import SummaryStats
from wsiseg.raster import Raster

MANIFEST_FORMAT_VERSION = 1
SCORE_SCALE = 65535


# -- PNG rasters ---------------------------------------------------------------

def quantize_score(data: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(data, 0.0, 1.0) * SCORE_SCALE).astype(np.uint16)


def dequantize_score(data: np.ndarray) -> np.ndarray:
    return data.astype(np.float64) / SCORE_SCALE


def write_png(path, raster: Raster, compress_level: int = 6):
    """Write ``raster`` as PNG to a path or binary file object."""
    if not hasattr(path, "write"):
        path = Path(path)
    if raster.kind == "rgb":
        img = Image.fromarray(np.ascontiguousarray(raster.data), mode="RGB")
    elif raster.kind == "mask":
        img = Image.fromarray(np.ascontiguousarray(raster.data, dtype=bool))
    else:
        img = Image.fromarray(quantize_score(raster.data))
    img.save(path, format="PNG", compress_level=compress_level)
    return path


def read_png(path, spacing: float, kind: str) -> Raster:
    with Image.open(path) as img:
        if kind == "rgb":
            return Raster(np.asarray(img.convert("RGB")), spacing, "rgb")
        if kind == "mask":
            arr = np.asarray(img)
            return Raster(arr != 0, spacing, "mask")
        if img.mode not in ("I;16", "I;16B", "I;16L", "I"):
            raise ValueError(f"{path}: expected a 16-bit greyscale score image, got mode {img.mode}")
        arr = np.asarray(img).astype(np.int64)
        if arr.min(initial=0) < 0 or arr.max(initial=0) > SCORE_SCALE:
            raise ValueError(f"{path}: score values outside 16-bit range")
        return Raster(dequantize_score(arr), spacing, "score")


def png_bytes(raster: Raster) -> bytes:
    buf = io.BytesIO()
    write_png(buf, raster)
    return buf.getvalue()


# -- manifests -----------------------------------------------------------------

@dataclass(frozen=True)
class SlideManifest:
    scan_id: str
    cohort_id: str
    scanner_id: str
    image: Path
    spacing: float
    reference: Path | None = None
    cached_scores: Path | None = None
    covariates: dict = field(default_factory=dict)


def _rel(path: Path | None, base: Path) -> str | None:
    if path is None:
        return None
    try:
        return Path(path).resolve().relative_to(base.resolve()).as_posix()
    except ValueError:
        return str(path)


def write_manifest(path, entries: list[SlideManifest], cohort_id: str | None = None) -> Path:
    path = Path(path)
    base = path.parent
    doc = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "cohort_id": cohort_id,
        "scans": [
            {
                "scan_id": e.scan_id,
                "cohort_id": e.cohort_id,
                "scanner_id": e.scanner_id,
                "image": _rel(e.image, base),
                "spacing": e.spacing,
                "reference": _rel(e.reference, base),
                "cached_scores": _rel(e.cached_scores, base),
                "covariates": dict(sorted(e.covariates.items())),
            }
            for e in entries
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


def load_manifest(path, check_files: bool = True) -> list[SlideManifest]:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    version = doc.get("format_version")
    if version != MANIFEST_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported manifest format_version {version!r}")
    base = path.parent
    entries = []
    seen = set()
    for raw in doc.get("scans", []):
        scan_id = str(raw["scan_id"])
        if scan_id in seen:
            raise ValueError(f"{path}: duplicate scan id {scan_id!r}")
        seen.add(scan_id)
        spacing = float(raw["spacing"])
        if not spacing > 0:
            raise ValueError(f"{path}: scan {scan_id!r} has non-positive spacing {spacing}")

        def resolve(key):
            value = raw.get(key)
            return None if value is None else base / value

        entry = SlideManifest(
            scan_id=scan_id,
            cohort_id=str(raw.get("cohort_id") or doc.get("cohort_id") or ""),
            scanner_id=str(raw.get("scanner_id") or ""),
            image=resolve("image"),
            spacing=spacing,
            reference=resolve("reference"),
            cached_scores=resolve("cached_scores"),
            covariates=dict(raw.get("covariates") or {}),
        )
        if check_files:
            for p in (entry.image, entry.reference, entry.cached_scores):
                if p is not None and not p.exists():
                    raise FileNotFoundError(f"{path}: scan {scan_id!r} references missing file {p}")
        entries.append(entry)
    return entries


# -- per-scan records ----------------------------------------------------------

@dataclass(frozen=True)
class ScanRecord:
    scan_id: str
    cohort: str
    scanner: str
    dsc: float
    stats: SummaryStats
    no_prediction: bool
    tp_regions: int
    fp_regions: int
    fn_regions: int
    manual_area_mm2: float
    predicted_area_mm2: float
    prediction_missing: bool = False
    covariates: dict = field(default_factory=dict)


STAT_COLUMNS = [name for name in SummaryStats.names() if name != "dsc"]
RECORD_COLUMNS = (
    ["scan_id", "cohort", "scanner", "dsc"]
    + STAT_COLUMNS
    + ["no_prediction", "prediction_missing", "tp_regions", "fp_regions", "fn_regions",
       "manual_area_mm2", "predicted_area_mm2"]
)
COVARIATE_PREFIX = "cov_"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _num(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _opt_float(text: str) -> float | None:
    return None if text == "" else float(text)


def records_to_csv(records: list[ScanRecord]) -> str:
    cov_names = sorted({k for r in records for k in r.covariates})
    header = RECORD_COLUMNS + [COVARIATE_PREFIX + k for k in cov_names]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in records:
        row = [r.scan_id, r.cohort, r.scanner, _fmt(r.dsc)]
        row += [_fmt(getattr(r.stats, name)) for name in STAT_COLUMNS]
        row += [_fmt(r.no_prediction), _fmt(r.prediction_missing), _fmt(r.tp_regions),
                _fmt(r.fp_regions), _fmt(r.fn_regions), _fmt(r.manual_area_mm2),
                _fmt(r.predicted_area_mm2)]
        row += [_fmt(r.covariates.get(k)) for k in cov_names]
        writer.writerow(row)
    return buf.getvalue()


def write_records(path, records: list[ScanRecord]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(records_to_csv(records))
    return path


def records_from_csv(text: str) -> list[ScanRecord]:
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in RECORD_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise ValueError(f"records table lacks columns {missing}")
    out = []
    for row in reader:
        dsc = float(row["dsc"])
        stats = SummaryStats(
            dsc=dsc, **{name: _opt_float(row[name]) for name in STAT_COLUMNS}
        )
        covariates = {
            k[len(COVARIATE_PREFIX):]: _num(v)
            for k, v in row.items()
            if k.startswith(COVARIATE_PREFIX) and v != ""
        }
        out.append(ScanRecord(
            scan_id=row["scan_id"],
            cohort=row["cohort"],
            scanner=row["scanner"],
            dsc=dsc,
            stats=stats,
            no_prediction=row["no_prediction"] == "1",
            tp_regions=int(row["tp_regions"]),
            fp_regions=int(row["fp_regions"]),
            fn_regions=int(row["fn_regions"]),
            manual_area_mm2=float(row["manual_area_mm2"]),
            predicted_area_mm2=float(row["predicted_area_mm2"]),
            prediction_missing=row["prediction_missing"] == "1",
            covariates=covariates,
        ))
    return out


def read_records(path) -> list[ScanRecord]:
    return records_from_csv(Path(path).read_text(encoding="utf-8"))


def read_columns(path) -> tuple[list[str], list[dict[str, str]]]:
    """Raw header and rows of any CSV, for column-based analyses."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return list(reader.fieldnames or []), rows


def json_dump(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


def finite_or_none(x: float | None) -> float | None:
    if x is None or not math.isfinite(x):
        return None
    return x


__all__ = [
    "SlideManifest", "ScanRecord", "RECORD_COLUMNS", "load_manifest", "write_manifest",
    "read_png", "write_png", "png_bytes", "quantize_score", "dequantize_score",
    "records_to_csv", "records_from_csv", "write_records", "read_records", "read_columns",
    "json_dump",
]
