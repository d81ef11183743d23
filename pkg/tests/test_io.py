import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import smooth_random_mask
from wsiseg.evaluation import evaluate_scan, missing_record
from wsiseg.io import (
    RECORD_COLUMNS,
    SlideManifest,
    load_manifest,
    png_bytes,
    read_columns,
    read_png,
    read_records,
    records_from_csv,
    records_to_csv,
    write_manifest,
    write_png,
    write_records,
)
from wsiseg.raster import Raster


def test_rgb_and_mask_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    rgb = Raster.rgb(rng.integers(0, 256, (17, 23, 3), dtype=np.uint8), 0.5)
    mask = Raster.mask(rng.random((17, 23)) < 0.5, 0.5)
    assert read_png(write_png(tmp_path / "a.png", rgb), 0.5, "rgb") == rgb
    assert read_png(write_png(tmp_path / "m.png", mask), 0.5, "mask") == mask


@given(st.integers(0, 2**31))
def test_score_round_trip_within_quantum(seed):
    import io

    data = np.random.default_rng(seed).random((9, 11))
    data[0, 0], data[0, 1] = 0.0, 1.0
    got = read_png(io.BytesIO(png_bytes(Raster.score(data, 1.0))), 1.0, "score")
    assert np.max(np.abs(got.data - data)) <= 0.5 / 65535
    assert got.data[0, 0] == 0.0 and got.data[0, 1] == 1.0
    # quantised values survive a second trip unchanged
    again = read_png(io.BytesIO(png_bytes(got)), 1.0, "score")
    assert np.array_equal(again.data, got.data)


def test_score_reader_rejects_rgb(tmp_path):
    rgb = Raster.rgb(np.zeros((4, 4, 3), np.uint8), 1.0)
    with pytest.raises(ValueError):
        read_png(write_png(tmp_path / "x.png", rgb), 1.0, "score")


def test_png_bytes_deterministic():
    m = Raster.mask(smooth_random_mask(np.random.default_rng(2), (50, 60)), 1.0)
    assert png_bytes(m) == png_bytes(Raster.mask(m.data.copy(), 1.0))


def make_entries(tmp_path):
    entries = []
    for i in range(2):
        img = tmp_path / "slides" / f"s{i}.png"
        img.parent.mkdir(exist_ok=True)
        write_png(img, Raster.rgb(np.zeros((2, 2, 3), np.uint8), 0.25))
        entries.append(SlideManifest(f"s{i}", "c", "scanA", img, 0.25, None, None, {"age": 60 + i}))
    return entries


def test_manifest_round_trip(tmp_path):
    entries = make_entries(tmp_path)
    path = write_manifest(tmp_path / "manifest.json", entries, cohort_id="c")
    doc = json.loads(path.read_text())
    assert doc["scans"][0]["image"] == "slides/s0.png"
    loaded = load_manifest(path)
    assert [e.scan_id for e in loaded] == ["s0", "s1"]
    assert loaded[1].image.resolve() == entries[1].image.resolve()
    assert loaded[1].covariates == {"age": 61}


def test_manifest_errors(tmp_path):
    entries = make_entries(tmp_path)
    dup = write_manifest(tmp_path / "dup.json", [entries[0], entries[0]])
    with pytest.raises(ValueError, match="duplicate"):
        load_manifest(dup)
    entries[1].image.unlink()
    path = write_manifest(tmp_path / "m.json", entries)
    with pytest.raises(FileNotFoundError, match="s1"):
        load_manifest(path)
    assert len(load_manifest(path, check_files=False)) == 2
    (tmp_path / "v.json").write_text('{"format_version": 99, "scans": []}')
    with pytest.raises(ValueError):
        load_manifest(tmp_path / "v.json")


def test_empty_manifest(tmp_path):
    path = write_manifest(tmp_path / "e.json", [])
    assert load_manifest(path) == []


def sample_records():
    rng = np.random.default_rng(5)
    out = []
    for i in range(4):
        ref = Raster.mask(smooth_random_mask(rng, (80, 80), 0.3), 2.0)
        pred = Raster.mask(smooth_random_mask(rng, (80, 80), 0.3), 2.0)
        out.append(evaluate_scan(pred, ref, f"scan{i}", "cohortA", "S1", {"age": 50.5 + i, "grade": "high"},
                                 min_ref_area=10))
    empty = Raster.mask(np.zeros((80, 80), bool), 2.0)
    out.append(evaluate_scan(empty, empty, "blank", "cohortA", "S1", {"age": 1.0, "grade": "low"}))
    out.append(missing_record("gone", "cohortB", "S2", ref))
    return out


def test_records_csv_round_trip_exact(tmp_path):
    records = sample_records()
    text = records_to_csv(records)
    assert text.splitlines()[0].split(",")[: len(RECORD_COLUMNS)] == RECORD_COLUMNS
    assert "\r" not in text
    back = records_from_csv(text)
    assert back == records
    path = write_records(tmp_path / "r.csv", records)
    assert read_records(path) == records
    header, rows = read_columns(path)
    assert "cov_age" in header and rows[0]["scan_id"] == "scan0"


def test_records_csv_null_cells():
    records = sample_records()
    blank = next(r for r in records if r.scan_id == "blank")
    assert blank.stats.sensitivity is None and blank.dsc == 1.0
    row = records_to_csv([blank]).splitlines()[1].split(",")
    header = RECORD_COLUMNS
    assert row[header.index("sensitivity")] == ""
    assert row[header.index("no_prediction")] == "1"


def test_records_csv_missing_column():
    with pytest.raises(ValueError):
        records_from_csv("scan_id,cohort\nx,y\n")
