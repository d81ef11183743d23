"""Command-line entry point: ``wsiseg <command> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from wsiseg.evaluation import cohort_summary, compare_per_scan, evaluate_scan, missing_record
from wsiseg.inference import BackendDescriptor, PipelineConfig, echo_command, run_pipeline
from wsiseg.io import (
    SlideManifest,
    json_dump,
    load_manifest,
    read_columns,
    read_png,
    read_records,
    write_png,
    write_records,
)
from wsiseg.plots import plot_scatter_density, plot_violin
from wsiseg.raster import downscale
from wsiseg.regions import (
    DEFAULT_BIN_EDGES_MM2,
    analyse_regions,
    region_size_histogram,
    tp_only_dsc,
)
from wsiseg.stats import correlate
from wsiseg.synth import SynthSpec, synth_cohort

log = logging.getLogger("wsiseg")


class CliError(Exception):
    pass


def load_config(path) -> dict:
    if path is None:
        return {}
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    unknown = set(doc) - {"pipeline", "backend", "synth"}
    if unknown:
        raise CliError(f"unknown config sections {sorted(unknown)} in {path}")
    return doc


def scan_seed(master: int, scan_id: str) -> int:
    return int(np.random.SeedSequence([master, zlib.crc32(scan_id.encode())]).generate_state(1, np.uint64)[0])


def pipeline_config(args) -> PipelineConfig:
    cfg = dict(load_config(args.config).get("pipeline", {}))
    for key in ("tile_size", "min_overlap", "low", "high", "min_region_area"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return PipelineConfig.from_dict(cfg)


def backend_descriptor(args) -> BackendDescriptor:
    cfg = dict(load_config(args.config).get("backend", {}))
    if getattr(args, "backend", None):
        cfg["kind"] = args.backend
    if getattr(args, "noise", None) is not None:
        cfg["noise"] = args.noise
    if cfg.get("kind") == "external-process" and cfg.get("command") in (None, "echo"):
        cfg["command"] = echo_command()
        cfg.setdefault("send_reference", True)
    return BackendDescriptor.from_dict(cfg)


# -- segment -------------------------------------------------------------------

def _segment_one(entry: SlideManifest, desc: BackendDescriptor, cfg: PipelineConfig, out: Path,
                 seed: int) -> dict:
    t0 = time.perf_counter()
    slide = read_png(entry.image, entry.spacing, "rgb")
    reference = read_png(entry.reference, entry.spacing, "mask") if entry.reference else None
    if desc.kind == "oracle-mock":
        desc = replace(desc, seed=scan_seed(seed, entry.scan_id))
    elif desc.kind == "score-cache":
        directory = entry.cached_scores or Path(desc.directory) / entry.scan_id
        desc = replace(desc, directory=str(directory))
    result = run_pipeline(slide, reference, desc, cfg)
    write_png(out / f"{entry.scan_id}.score.png", result.score)
    write_png(out / f"{entry.scan_id}.mask.png", result.mask)
    sidecar = {
        "scan_id": entry.scan_id,
        "spacing": result.mask.spacing,
        "width": result.mask.width,
        "height": result.mask.height,
        "n_tiles": len(result.grid),
        "no_prediction": result.no_prediction,
        "pipeline": cfg.to_dict(),
        "backend": {k: v for k, v in asdict(desc).items() if k != "command"}
        | {"command": list(desc.command) if desc.command else None},
        "timings": {k: round(v, 6) for k, v in result.timings.items()}
        | {"total": round(time.perf_counter() - t0, 6)},
    }
    json_dump(sidecar, out / f"{entry.scan_id}.json")
    return sidecar


def cmd_segment(args) -> int:
    entries = load_manifest(args.manifest)
    if not entries:
        raise CliError(f"manifest {args.manifest} lists no scans")
    cfg = pipeline_config(args)
    desc = backend_descriptor(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def job(entry):
        try:
            _segment_one(entry, desc, cfg, out, args.seed)
            log.info("segmented %s", entry.scan_id)
            return entry.scan_id, None
        except Exception as exc:  # per-scan failures are collected, not fatal
            log.error("scan %s failed: %s", entry.scan_id, exc)
            return entry.scan_id, f"{type(exc).__name__}: {exc}"

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(job, entries))
    else:
        results = [job(e) for e in entries]
    failures = {sid: err for sid, err in results if err}
    if failures:
        print(f"{len(failures)} of {len(entries)} scans failed:", file=sys.stderr)
        for sid, err in failures.items():
            print(f"  {sid}: {err}", file=sys.stderr)
        return 1
    print(f"segmented {len(entries)} scans into {out}")
    return 0


# -- evaluate / regions --------------------------------------------------------

def _prediction_spacing(pred_dir: Path, scan_id: str, fallback: float) -> float:
    sidecar = pred_dir / f"{scan_id}.json"
    if sidecar.exists():
        return float(json.loads(sidecar.read_text(encoding="utf-8"))["spacing"])
    return fallback


def _load_pair(entry: SlideManifest, pred_dir: Path, working_spacing: float):
    if entry.reference is None:
        raise CliError(f"scan {entry.scan_id!r} has no reference mask")
    spacing = _prediction_spacing(pred_dir, entry.scan_id, working_spacing)
    ref = downscale(read_png(entry.reference, entry.spacing, "mask"), spacing)
    path = pred_dir / f"{entry.scan_id}.mask.png"
    pred = read_png(path, spacing, "mask") if path.exists() else None
    if pred is not None and pred.data.shape != ref.data.shape:
        raise CliError(f"prediction {path} has shape {pred.data.shape}, reference {ref.data.shape}")
    return pred, ref


def cmd_evaluate(args) -> int:
    entries = load_manifest(args.manifest)
    if not entries:
        raise CliError(f"manifest {args.manifest} lists no scans")
    pred_dir = Path(args.predictions)
    cfg = pipeline_config(args)

    def job(entry):
        pred, ref = _load_pair(entry, pred_dir, cfg.working_spacing)
        if pred is None:
            if args.on_missing == "fail":
                raise CliError(f"no prediction for scan {entry.scan_id!r} in {pred_dir}")
            if args.on_missing == "skip":
                log.warning("skipping scan %s without prediction", entry.scan_id)
                return None
            return missing_record(entry.scan_id, entry.cohort_id, entry.scanner_id, ref, entry.covariates)
        return evaluate_scan(pred, ref, entry.scan_id, entry.cohort_id, entry.scanner_id,
                             entry.covariates, min_ref_area=cfg.min_region_area)

    records = [r for r in _map(job, entries, args.workers) if r is not None]
    write_records(args.out_csv, records)
    summary = {
        "cohorts": cohort_summary(records, args.alpha) if records else {},
        "skipped": [e.scan_id for e in entries if e.scan_id not in {r.scan_id for r in records}],
    }
    if args.out_json:
        json_dump(summary, args.out_json)
    for cohort, block in summary["cohorts"].items():
        ci = "n/a" if block["ci_lo"] is None else f"[{block['ci_lo']:.4f}, {block['ci_hi']:.4f}]"
        print(f"{cohort}: n={block['n']} mean DSC={block['mean_dsc']:.4f} CI={ci} "
              f"no-prediction={block['no_prediction_count']} ({100 * block['no_prediction_fraction']:.2f}%)")
    return 0


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _cell(v) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def cmd_regions(args) -> int:
    entries = load_manifest(args.manifest)
    if not entries:
        raise CliError(f"manifest {args.manifest} lists no scans")
    pred_dir = Path(args.predictions)
    cfg = pipeline_config(args)
    edges = tuple(args.bins) if args.bins else DEFAULT_BIN_EDGES_MM2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def job(entry):
        pred, ref = _load_pair(entry, pred_dir, cfg.working_spacing)
        if pred is None:
            raise CliError(f"no prediction for scan {entry.scan_id!r} in {pred_dir}")
        analysis = analyse_regions(pred, ref, cfg.min_region_area)
        return entry, ref.spacing, analysis

    results = _map(job, entries, args.workers)
    scan_rows, hist_rows = [], []
    by_cohort: dict[str, list] = {}
    labels = ["<" + _cell(edges[0])] + [
        f"[{_cell(a)},{_cell(b)})" for a, b in zip(edges[:-1], edges[1:])
    ] + [">=" + _cell(edges[-1])]
    for entry, spacing, analysis in results:
        tp = tp_only_dsc([(analysis.correspondence, None)])
        scan_rows.append([
            entry.scan_id, entry.cohort_id, len(analysis.ref_regions), len(analysis.pred_regions),
            len(analysis.classes.tp_ref), len(analysis.classes.fp_pred), len(analysis.classes.fn_ref),
            _cell(tp.per_image[0]),
        ])
        by_cohort.setdefault(entry.cohort_id, []).append(analysis.correspondence)
        for kind, regs in (("reference", analysis.ref_regions), ("predicted", analysis.pred_regions)):
            counts = region_size_histogram(regs, spacing, edges)
            for label, c in zip(labels, counts):
                hist_rows.append([entry.cohort_id, entry.scan_id, kind, label, int(c)])
    (out / "regions.csv").write_text(_csv_text(
        ["scan_id", "cohort", "ref_regions", "pred_regions", "tp_regions", "fp_regions", "fn_regions",
         "tp_only_dsc"], scan_rows), encoding="utf-8")
    (out / "histograms.csv").write_text(_csv_text(
        ["cohort", "scan_id", "kind", "bin_mm2", "count"], hist_rows), encoding="utf-8")
    summary = {}
    for cohort in sorted(by_cohort):
        tp = tp_only_dsc([(c, None) for c in by_cohort[cohort]])
        summary[cohort] = {
            "n_images": len(tp.per_image),
            "tp_only_mean_dsc": tp.mean,
            "n_contributing": tp.n_contributing,
            "n_excluded": tp.n_excluded,
        }
    json_dump({"cohorts": summary, "bin_edges_mm2": list(edges)}, out / "regions.json")
    for cohort, block in summary.items():
        mean = "n/a" if block["tp_only_mean_dsc"] is None else f"{block['tp_only_mean_dsc']:.4f}"
        print(f"{cohort}: TP-only DSC={mean} over {block['n_contributing']} images "
              f"({block['n_excluded']} without corresponding regions)")
    return 0


# -- correlate / compare / report ----------------------------------------------

def _as_float(text: str | None) -> float | None:
    if text is None or text == "":
        return None
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def cmd_correlate(args) -> int:
    header, rows = read_columns(args.records)
    for col in (args.x, args.y):
        if col not in header:
            raise CliError(f"column {col!r} not in {args.records} (have {header})")
    pairs = [(_as_float(r[args.x]), _as_float(r[args.y])) for r in rows]
    pairs = [(a, b) for a, b in pairs if a is not None and b is not None]
    if len(pairs) < 4:
        raise CliError(f"need at least 4 joint numeric values, got {len(pairs)}")
    x, y = zip(*pairs)
    res = correlate(x, y, args.alpha)
    doc = {
        "x": args.x,
        "y": args.y,
        "n": res.n,
        "rho": res.rho,
        "p": res.p,
        "ci_lo": res.ci[0] if res.ci else None,
        "ci_hi": res.ci[1] if res.ci else None,
        "alpha": args.alpha,
        "significant": res.significant,
        "defined": res.defined,
    }
    if args.out:
        json_dump(doc, args.out)
    if not res.defined:
        print(f"rho undefined: {args.x} or {args.y} is constant (n={res.n})")
    else:
        ci = "n/a" if res.ci is None else f"[{res.ci[0]:.4f}, {res.ci[1]:.4f}]"
        flag = "significant" if res.significant else "not significant"
        print(f"rho={res.rho:.4f} p={res.p:.4g} CI={ci} n={res.n} ({flag} at 0.05)")
    return 0


def cmd_compare(args) -> int:
    a = read_records(args.a)
    b = read_records(args.b)
    try:
        result = compare_per_scan(a, b, args.metric)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if args.out:
        json_dump(result.to_dict(), args.out)
    print(f"{len(result.scan_ids)} paired scans: mean {args.metric} difference {result.mean_difference:+.4f}, "
          f"mean absolute difference {result.mean_abs_difference:.4f}, no-prediction A={result.no_prediction_a} "
          f"B={result.no_prediction_b}")
    return 0


def cmd_report(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tables = [read_records(p) for p in args.records]
    groups: dict[str, list[float]] = {}
    for records in tables:
        for r in records:
            key = r.cohort if args.group_by == "cohort" else r.scanner
            groups.setdefault(key, []).append(r.dsc)
    groups = {k: v for k, v in groups.items() if len(v) >= 2}
    if not groups:
        raise CliError("no group has at least 2 records to plot")
    plot_violin(groups, out / "violin.svg", title=args.title)
    written = ["violin.svg"]
    if args.scatter:
        if len(tables) != 2:
            raise CliError("--scatter needs exactly two records tables")
        ia = {r.scan_id: r.dsc for r in tables[0]}
        ib = {r.scan_id: r.dsc for r in tables[1]}
        common = sorted(set(ia) & set(ib))
        if len(common) < 2:
            raise CliError("scatter needs at least 2 scans present in both tables")
        plot_scatter_density([ia[s] for s in common], [ib[s] for s in common], out / "scatter.svg",
                             xlabel=Path(args.records[0]).stem, ylabel=Path(args.records[1]).stem,
                             title=args.title)
        written.append("scatter.svg")
    print("wrote " + ", ".join(str(out / w) for w in written))
    return 0


def cmd_synth(args) -> int:
    base = load_config(args.config).get("synth", {})
    spec = SynthSpec(**{**base, **{
        k: v for k, v in {
            "width": args.width, "height": args.height, "spacing": args.spacing,
        }.items() if v is not None
    }, "fragmented": args.fragmented or base.get("fragmented", False)})
    manifest = synth_cohort(spec, args.count, args.seed, args.out, args.cohort_id, args.scanner_id)
    print(f"wrote {args.count} synthetic scans; manifest {manifest}")
    return 0


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with pipeline/backend/synth sections")
    common.add_argument("--workers", type=int, default=1, help="parallel workers (default 1)")
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("-v", "--verbose", action="store_true")

    pipeline_flags = argparse.ArgumentParser(add_help=False)
    pipeline_flags.add_argument("--tile-size", dest="tile_size", type=int)
    pipeline_flags.add_argument("--min-overlap", dest="min_overlap", type=int)
    pipeline_flags.add_argument("--low", type=float)
    pipeline_flags.add_argument("--high", type=float)
    pipeline_flags.add_argument("--min-region-area", dest="min_region_area", type=int)

    parser = argparse.ArgumentParser(prog="wsiseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", parents=[common, pipeline_flags], help="segment every scan of a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=["oracle-mock", "score-cache", "external-process"])
    p.add_argument("--noise", type=float, help="oracle-mock noise standard deviation")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", parents=[common, pipeline_flags], help="per-scan metrics and cohort CIs")
    p.add_argument("manifest")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-json")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--on-missing", choices=["skip", "zero", "fail"], default="fail")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("regions", parents=[common, pipeline_flags], help="region correspondence analysis")
    p.add_argument("manifest")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=float, nargs="+", help="histogram bin edges in mm²")
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("correlate", parents=[common], help="Spearman correlation between two columns")
    p.add_argument("records")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("compare", parents=[common], help="paired per-scan comparison of two record tables")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--metric", default="dsc")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--fragmented", action="store_true")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--spacing", type=float)
    p.add_argument("--cohort-id", dest="cohort_id", default="synthetic")
    p.add_argument("--scanner-id", dest="scanner_id", default="synthetic")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", parents=[common], help="violin and density-scatter SVG plots")
    p.add_argument("records", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--group-by", dest="group_by", choices=["cohort", "scanner"], default="cohort")
    p.add_argument("--scatter", action="store_true", help="paired DSC scatter of two tables")
    p.add_argument("--title", default="")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (CliError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
