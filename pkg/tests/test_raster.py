from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import area_average
from wsiseg.raster import Raster, Rect, crop, downscale


def test_rejects_bad_construction():
    with pytest.raises(ValueError):
        Raster.score(np.zeros((2, 2)), 0.0)
    with pytest.raises(ValueError):
        Raster.score(np.full((2, 2), 1.5), 1.0)
    with pytest.raises(ValueError):
        Raster(np.full((2, 2), 2), 1.0, "mask")
    with pytest.raises(ValueError):
        Raster(np.zeros((0, 3)), 1.0, "score")
    with pytest.raises(ValueError):
        Raster(np.zeros((2, 2, 3)), 1.0, "rgb")  # float rgb


def test_raster_is_read_only():
    data = np.zeros((3, 3))
    r = Raster.score(data, 1.0)
    data[0, 0] = 1.0
    assert r.data[0, 0] == 0.0
    with pytest.raises(ValueError):
        r.data[0, 0] = 1.0


def test_downscale_native_to_working_dims():
    src = Raster.score(np.zeros((100, 250)), 0.24)
    out = downscale(src, 1.0)
    assert out.spacing == 1.0
    assert (out.height, out.width) == (24, 60)


def test_downscale_identity():
    src = Raster.score(np.random.default_rng(0).random((7, 5)), 0.5)
    assert downscale(src, 0.5) == src


def test_downscale_two_by_two():
    src = Raster.score([[0.0, 1.0], [1.0, 1.0]], 0.5)
    out = downscale(src, 1.0)
    assert out.data.shape == (1, 1)
    assert out.data[0, 0] == pytest.approx(0.75, abs=1e-15)


def test_downscale_refuses_upsampling():
    with pytest.raises(ValueError):
        downscale(Raster.score(np.zeros((4, 4)), 1.0), 0.5)


def test_downscale_mask_rethresholds():
    m = np.zeros((4, 4), bool)
    m[:2, :2] = True  # top-left block fully on
    m[2, 2] = m[2, 3] = True  # half of bottom-right block
    m[0, 3] = True  # quarter of top-right block
    out = downscale(Raster.mask(m, 1.0), 2.0)
    assert out.kind == "mask"
    assert out.data.tolist() == [[True, False], [False, True]]


@pytest.mark.parametrize("shape,src_sp,dst_sp", [
    ((9, 7), 1.0, 2.5),
    ((10, 10), 0.25, 1.0),
    ((13, 11), 0.4, 1.0),
    ((5, 8), 0.3, 0.7),
])
def test_downscale_matches_rational_area_oracle(shape, src_sp, dst_sp):
    data = np.random.default_rng(1).random(shape)
    out = downscale(Raster.score(data, src_sp), dst_sp)
    factor = Fraction(dst_sp).limit_denominator(1000) / Fraction(src_sp).limit_denominator(1000)
    expected = area_average(data, factor, out.height, out.width)
    np.testing.assert_allclose(out.data, expected, atol=1e-12)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31))
def test_downscale_preserves_mean_for_exact_factor(nh, nw, k, seed):
    data = np.random.default_rng(seed).random((nh * k, nw * k))
    out = downscale(Raster.score(data, 1.0), float(k))
    assert out.data.shape == (nh, nw)
    assert abs(out.data.mean() - data.mean()) < 1e-9


def test_downscale_is_deterministic():
    data = np.random.default_rng(2).integers(0, 256, (37, 41, 3), dtype=np.uint8)
    a = downscale(Raster.rgb(data, 0.25), 1.0)
    b = downscale(Raster.rgb(data, 0.25), 1.0)
    assert a.data.tobytes() == b.data.tobytes()


def test_crop_identity_and_single_pixel():
    src = Raster.score(np.random.default_rng(3).random((6, 9)), 0.5)
    assert crop(src, src.full_rect) == src
    px = crop(src, Rect(0, 0, 1, 1))
    assert px.data[0, 0] == src.pixel(0, 0)
    assert px.spacing == src.spacing


def test_crop_out_of_bounds():
    src = Raster.score(np.zeros((4, 4)), 1.0)
    with pytest.raises(ValueError):
        crop(src, Rect(2, 2, 3, 1))


@given(st.data())
def test_crop_composes_and_indexes(data):
    h = data.draw(st.integers(1, 20))
    w = data.draw(st.integers(1, 20))
    src = Raster.score(np.random.default_rng(data.draw(st.integers(0, 1000))).random((h, w)), 1.0)
    x0 = data.draw(st.integers(0, w - 1))
    y0 = data.draw(st.integers(0, h - 1))
    rw = data.draw(st.integers(1, w - x0))
    rh = data.draw(st.integers(1, h - y0))
    outer = crop(src, Rect(x0, y0, rw, rh))
    for i in range(rw):
        for j in range(rh):
            assert outer.pixel(i, j) == src.pixel(x0 + i, y0 + j)
    ix = data.draw(st.integers(0, rw - 1))
    iy = data.draw(st.integers(0, rh - 1))
    iw = data.draw(st.integers(1, rw - ix))
    ih = data.draw(st.integers(1, rh - iy))
    twice = crop(outer, Rect(ix, iy, iw, ih))
    once = crop(src, Rect(x0 + ix, y0 + iy, iw, ih))
    assert twice == once
