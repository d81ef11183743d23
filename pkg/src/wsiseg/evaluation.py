"""Per-scan evaluation records, cohort summaries and paired comparisons."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace

import numpy as np

from wsiseg.io import ScanRecord
from wsiseg.metrics import contingency, cohort_mean_ci, dsc, summary_stats
from wsiseg.postprocess import MIN_REGION_AREA
from wsiseg.raster import Raster
from wsiseg.regions import analyse_regions, area_mm2


def evaluate_scan(pred: Raster, ref: Raster, scan_id: str, cohort: str = "", scanner: str = "",
                  covariates: dict | None = None, domain: Raster | None = None,
                  min_ref_area: int = MIN_REGION_AREA) -> ScanRecord:
    table = contingency(pred, ref, domain)
    regions = analyse_regions(pred, ref, min_ref_area)
    pred_px = int(np.count_nonzero(pred.data))
    ref_px = int(np.count_nonzero(ref.data))
    return ScanRecord(
        scan_id=scan_id,
        cohort=cohort,
        scanner=scanner,
        dsc=dsc(table),
        stats=summary_stats(table),
        no_prediction=pred_px == 0,
        tp_regions=len(regions.classes.tp_ref),
        fp_regions=len(regions.classes.fp_pred),
        fn_regions=len(regions.classes.fn_ref),
        manual_area_mm2=area_mm2(ref_px, ref.spacing),
        predicted_area_mm2=area_mm2(pred_px, pred.spacing),
        covariates=dict(covariates or {}),
    )


def missing_record(scan_id: str, cohort: str, scanner: str, ref: Raster,
                   covariates: dict | None = None) -> ScanRecord:
    """Row for a scan whose prediction file is absent, scored as an empty mask."""
    empty = Raster(np.zeros(ref.data.shape, dtype=bool), ref.spacing, "mask")
    record = evaluate_scan(empty, ref, scan_id, cohort, scanner, covariates)
    return replace(record, prediction_missing=True)


def cohort_summary(records: list[ScanRecord], alpha: float = 0.05) -> dict:
    """Mean DSC with Student-t CI and no-prediction counts, keyed by cohort."""
    by_cohort: dict[str, list[ScanRecord]] = defaultdict(list)
    for r in records:
        by_cohort[r.cohort].append(r)
    out = {}
    for cohort in sorted(by_cohort):
        rows = by_cohort[cohort]
        values = [r.dsc for r in rows]
        block = {
            "n": len(rows),
            "mean_dsc": float(np.mean(values)),
            "ci_lo": None,
            "ci_hi": None,
            "alpha": alpha,
            "no_prediction_count": sum(r.no_prediction for r in rows),
            "no_prediction_fraction": sum(r.no_prediction for r in rows) / len(rows),
            "prediction_missing_count": sum(r.prediction_missing for r in rows),
            "mean_dsc_with_prediction": None,
        }
        if len(rows) >= 2:
            ci = cohort_mean_ci(values, alpha)
            block.update(mean_dsc=ci.mean, ci_lo=ci.lo, ci_hi=ci.hi)
        with_pred = [r.dsc for r in rows if not r.no_prediction]
        if with_pred:
            block["mean_dsc_with_prediction"] = float(np.mean(with_pred))
        out[cohort] = block
    return out


@dataclass(frozen=True)
class PairedComparison:
    scan_ids: tuple[str, ...]
    differences: tuple[float, ...]
    mean_difference: float
    mean_abs_difference: float
    no_prediction_a: int
    no_prediction_b: int
    only_a: tuple[str, ...]
    only_b: tuple[str, ...]
    metric: str = "dsc"

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "n": len(self.scan_ids),
            "mean_difference": self.mean_difference,
            "mean_abs_difference": self.mean_abs_difference,
            "no_prediction_a": self.no_prediction_a,
            "no_prediction_b": self.no_prediction_b,
            "only_a": list(self.only_a),
            "only_b": list(self.only_b),
            "per_scan": [
                {"scan_id": s, "difference": d} for s, d in zip(self.scan_ids, self.differences)
            ],
        }


def _metric(record: ScanRecord, metric: str) -> float:
    if metric == "dsc":
        return record.dsc
    value = getattr(record.stats, metric)
    if value is None:
        raise ValueError(f"{metric} is undefined for scan {record.scan_id!r}")
    return value


def compare_per_scan(a: list[ScanRecord], b: list[ScanRecord], metric: str = "dsc") -> PairedComparison:
    """Per-scan differences ``a - b`` over scan ids present in both lists."""
    ia = {r.scan_id: r for r in a}
    ib = {r.scan_id: r for r in b}
    common = sorted(set(ia) & set(ib))
    if not common:
        raise ValueError("the two record sets share no scan ids")
    diffs = [_metric(ia[s], metric) - _metric(ib[s], metric) for s in common]
    return PairedComparison(
        scan_ids=tuple(common),
        differences=tuple(diffs),
        mean_difference=float(np.mean(diffs)),
        mean_abs_difference=float(np.mean(np.abs(diffs))),
        no_prediction_a=sum(ia[s].no_prediction for s in common),
        no_prediction_b=sum(ib[s].no_prediction for s in common),
        only_a=tuple(sorted(set(ia) - set(ib))),
        only_b=tuple(sorted(set(ib) - set(ia))),
        metric=metric,
    )
