"""Connected regions, one-to-one region correspondence and region-level scores.

Regions store their pixels as row runs ``(row, start, stop)`` with ``stop``
exclusive, sorted by row then start. Overlaps between regions are computed on
the runs directly so no dense per-region bitmap is ever built.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from wsiseg.metrics import ContingencyTable, dsc
from wsiseg.postprocess import MIN_REGION_AREA, structure
from wsiseg.raster import Raster, Rect

DEFAULT_BIN_EDGES_MM2 = tuple(10.0 ** k for k in range(-3, 4))


@dataclass(frozen=True, eq=False)
class Region:
    id: int
    area: int
    bbox: Rect
    runs: np.ndarray = field(repr=False)

    def to_mask(self, width: int, height: int) -> np.ndarray:
        out = np.zeros((height, width), dtype=bool)
        for row, start, stop in self.runs:
            out[row, start:stop] = True
        return out


def label_runs(labels: np.ndarray):
    """All foreground runs of a label image as (label, row, start, stop) arrays."""
    h, w = labels.shape
    padded = np.zeros((h, w + 2), dtype=labels.dtype)
    padded[:, 1:-1] = labels
    change = padded[:, 1:] != padded[:, :-1]
    rows, cols = np.nonzero(change)
    # each change position closes the previous run and/or opens a new one
    left = padded[rows, cols]
    right = padded[rows, cols + 1]
    open_mask = right != 0
    close_mask = left != 0
    o_rows, o_cols, o_lab = rows[open_mask], cols[open_mask], right[open_mask]
    c_cols = cols[close_mask]
    # runs open and close in the same scan order, so they pair up positionally
    return o_lab, o_rows, o_cols, c_cols


def connected_components(mask: Raster, connectivity: int = 4) -> list[Region]:
    """Maximal connected foreground components, ordered by their first pixel in scan order."""
    labels, n = ndimage.label(mask.data, structure=structure(connectivity))
    if n == 0:
        return []
    lab, rows, starts, stops = label_runs(labels)
    order = np.argsort(lab, kind="stable")
    lab, rows, starts, stops = lab[order], rows[order], starts[order], stops[order]
    bounds = np.searchsorted(lab, np.arange(1, n + 2))
    # ndimage labels in scan order; rank labels by first pixel to make the order explicit
    first = np.array([rows[bounds[k]] * mask.width + starts[bounds[k]] for k in range(n)])
    regions = []
    for new_id, k in enumerate(np.argsort(first, kind="stable")):
        s, e = bounds[k], bounds[k + 1]
        runs = np.stack([rows[s:e], starts[s:e], stops[s:e]], axis=1).astype(np.int64)
        area = int((runs[:, 2] - runs[:, 1]).sum())
        x0 = int(runs[:, 1].min())
        y0 = int(runs[:, 0].min())
        bbox = Rect(x0, y0, int(runs[:, 2].max()) - x0, int(runs[:, 0].max()) + 1 - y0)
        regions.append(Region(new_id, area, bbox, runs))
    return regions


def _bbox_array(regions: list[Region]) -> np.ndarray:
    return np.array([(r.bbox.x0, r.bbox.y0, r.bbox.x1, r.bbox.y1) for r in regions])


def rle_intersection(a: np.ndarray, b: np.ndarray) -> int:
    """Number of pixels shared by two run lists (both sorted by row, start)."""
    a = a.tolist() if isinstance(a, np.ndarray) else a
    b = b.tolist() if isinstance(b, np.ndarray) else b
    i = j = 0
    total = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        ra, sa, ea = a[i]
        rb, sb, eb = b[j]
        if ra < rb:
            i += 1
        elif rb < ra:
            j += 1
        else:
            lo = max(sa, sb)
            hi = min(ea, eb)
            if hi > lo:
                total += hi - lo
            if ea <= eb:
                i += 1
            else:
                j += 1
    return int(total)


@dataclass(frozen=True)
class Pair:
    ref_id: int
    pred_id: int
    iou: float
    intersection: int
    ref_area: int
    pred_area: int

    def table(self) -> ContingencyTable:
        """Contingency over the pair's combined pixels (no true negatives)."""
        return ContingencyTable(
            tp=self.intersection,
            fp=self.pred_area - self.intersection,
            fn=self.ref_area - self.intersection,
            tn=0,
        )


@dataclass(frozen=True)
class Correspondence:
    pairs: tuple[Pair, ...]
    unmatched_ref: tuple[int, ...]
    unmatched_pred: tuple[int, ...]


def correspond(ref_regions: list[Region], pred_regions: list[Region]) -> Correspondence:
    """Pair reference and predicted regions whose IoU exceeds one half.

    IoU > 0.5 makes each pairing unique, so every qualifying pair is kept
    without an assignment step. A duplicate would mean the inputs overlap
    themselves and is reported as an error.
    """
    pairs = []
    used_ref: set[int] = set()
    used_pred: set[int] = set()
    if ref_regions and pred_regions:
        rb = _bbox_array(ref_regions)
        pb = _bbox_array(pred_regions)
        hit = (
            (rb[:, None, 0] < pb[None, :, 2]) & (pb[None, :, 0] < rb[:, None, 2])
            & (rb[:, None, 1] < pb[None, :, 3]) & (pb[None, :, 1] < rb[:, None, 3])
        )
        for i, j in zip(*np.nonzero(hit)):
            r, p = ref_regions[i], pred_regions[j]
            inter = rle_intersection(r.runs, p.runs)
            union = r.area + p.area - inter
            if 2 * inter > union:
                if r.id in used_ref or p.id in used_pred:
                    raise ValueError(f"region matched twice (ref {r.id}, pred {p.id}); regions overlap")
                used_ref.add(r.id)
                used_pred.add(p.id)
                pairs.append(Pair(r.id, p.id, inter / union, inter, r.area, p.area))
    return Correspondence(
        pairs=tuple(pairs),
        unmatched_ref=tuple(r.id for r in ref_regions if r.id not in used_ref),
        unmatched_pred=tuple(p.id for p in pred_regions if p.id not in used_pred),
    )


@dataclass(frozen=True)
class RegionClasses:
    tp_ref: tuple[int, ...]
    tp_pred: tuple[int, ...]
    fn_ref: tuple[int, ...]
    fp_pred: tuple[int, ...]


def classify_regions(c: Correspondence) -> RegionClasses:
    return RegionClasses(
        tp_ref=tuple(p.ref_id for p in c.pairs),
        tp_pred=tuple(p.pred_id for p in c.pairs),
        fn_ref=c.unmatched_ref,
        fp_pred=c.unmatched_pred,
    )


@dataclass(frozen=True)
class TpOnlyDsc:
    per_image: tuple[float | None, ...]
    mean: float | None

    @property
    def n_contributing(self) -> int:
        return sum(v is not None for v in self.per_image)

    @property
    def n_excluded(self) -> int:
        return len(self.per_image) - self.n_contributing


def tp_only_dsc(images) -> TpOnlyDsc:
    """DSC restricted to corresponding region pairs.

    ``images`` holds ``(Correspondence, tables)`` per image, where ``tables``
    may be ``None`` to use each pair's own table. Images without pairs give
    ``None`` and are left out of the mean.
    """
    per_image = []
    for corr, tables in images:
        if tables is None:
            tables = [p.table() for p in corr.pairs]
        if not tables:
            per_image.append(None)
            continue
        total = tables[0]
        for t in tables[1:]:
            total = total + t
        per_image.append(dsc(total))
    scores = [v for v in per_image if v is not None]
    mean = float(np.mean(scores)) if scores else None
    return TpOnlyDsc(tuple(per_image), mean)


def region_size_histogram(regions: list[Region], spacing: float | None,
                          bin_edges=DEFAULT_BIN_EDGES_MM2) -> np.ndarray:
    """Region counts per area bin in mm².

    Returns ``len(bin_edges) + 1`` counts: below the first edge, each
    ``[edge_i, edge_i+1)`` interval, then at or above the last edge.
    """
    if spacing is None or not spacing > 0:
        raise ValueError("region size histogram needs a known positive pixel spacing")
    edges = np.asarray(bin_edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 1 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be a strictly increasing sequence")
    areas = np.array([r.area for r in regions], dtype=np.float64) * (spacing / 1000.0) ** 2
    idx = np.searchsorted(edges, areas, side="right")
    return np.bincount(idx, minlength=edges.size + 1)


def area_mm2(pixels: int, spacing: float) -> float:
    return pixels * (spacing / 1000.0) ** 2


@dataclass(frozen=True)
class RegionAnalysis:
    ref_regions: list[Region]
    pred_regions: list[Region]
    correspondence: Correspondence
    classes: RegionClasses


def analyse_regions(pred: Raster, ref: Raster, min_ref_area: int = MIN_REGION_AREA) -> RegionAnalysis:
    """Region correspondence after discarding reference regions below ``min_ref_area``."""
    if pred.data.shape != ref.data.shape:
        raise ValueError(f"mask dimensions differ: {pred.data.shape} vs {ref.data.shape}")
    ref_regions = [r for r in connected_components(ref) if r.area >= min_ref_area]
    pred_regions = connected_components(pred)
    corr = correspond(ref_regions, pred_regions)
    return RegionAnalysis(ref_regions, pred_regions, corr, classify_regions(corr))
