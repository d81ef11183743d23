import xml.etree.ElementTree as ET

import numpy as np
import pytest
from scipy import integrate

from oracles import kernel_sum
from wsiseg.kde import GaussianKDE
from wsiseg.plots import plot_scatter_density, plot_violin, scatter_density, violin_density

NS = {"s": "http://www.w3.org/2000/svg"}


def parse(svg):
    return ET.fromstring(svg)


def by_class(root, cls):
    return [e for e in root.iter() if cls in (e.get("class") or "").split()]


def test_kde_matches_kernel_sum_1d_and_2d():
    rng = np.random.default_rng(0)
    for d in (1, 2):
        data = rng.normal(size=(d, 40))
        kde = GaussianKDE(data)
        probes = rng.normal(size=(d, 10))
        got = kde(probes)
        for i in range(10):
            assert got[i] == pytest.approx(kernel_sum(data, kde.covariance, probes[:, i]), abs=1e-9)


def test_kde_scott_bandwidth():
    data = np.random.default_rng(1).normal(size=(2, 64))
    kde = GaussianKDE(data)
    factor = 64 ** (-1 / 6)
    assert np.allclose(kde.covariance, np.cov(data) * factor ** 2)


def test_kde_singular_covariance_falls_back():
    t = np.linspace(0, 1, 20)
    kde = GaussianKDE(np.vstack([t, t]))
    assert kde.degenerate
    assert np.all(np.isfinite(kde(np.vstack([t, t]))))


@pytest.mark.parametrize("seed", range(5))
def test_violin_density_integrates_to_one(seed):
    v = np.random.default_rng(seed).beta(5, 2, size=30)
    dens = violin_density(v)
    assert integrate.trapezoid(dens.density, dens.grid) == pytest.approx(1.0, abs=1e-3)


def test_violin_order_and_elements(tmp_path):
    rng = np.random.default_rng(2)
    groups = {"zeta": rng.random(12), "alpha": rng.random(9), "mid": rng.random(5)}
    svg = plot_violin(groups, tmp_path / "v.svg", title="t")
    assert (tmp_path / "v.svg").read_text() == svg
    root = parse(svg)
    g = by_class(root, "group")
    assert [e.get("data-name") for e in g] == ["zeta", "alpha", "mid"]
    for e in g:
        for cls in ("violin", "iqr", "mean", "median"):
            assert len(by_class(e, cls)) == 1
    assert len(by_class(root, "point")) == 26
    xs = [float(by_class(e, "mean")[0].get("x1")) for e in g]
    assert xs == sorted(xs)
    assert by_class(root, "mean")[0].get("stroke") == "black"


def test_violin_spike_for_identical_values():
    root = parse(plot_violin({"same": [0.7] * 6}))
    assert len(by_class(root, "spike")) == 1
    assert not root.findall(".//s:polygon", NS)


def test_violin_needs_two_values():
    with pytest.raises(ValueError):
        plot_violin({"one": [0.5]})


def test_plots_deterministic():
    rng = np.random.default_rng(3)
    g = {"a": rng.random(10), "b": rng.random(10)}
    assert plot_violin(g) == plot_violin(g)
    x, y = rng.random(20), rng.random(20)
    assert plot_scatter_density(x, y) == plot_scatter_density(x, y)


def test_scatter_points_on_diagonal():
    t = np.linspace(0.05, 0.95, 15)
    root = parse(plot_scatter_density(t, t))
    (diag,) = by_class(root, "diagonal")
    x1, y1, x2, y2 = (float(diag.get(k)) for k in ("x1", "y1", "x2", "y2"))
    for c in by_class(root, "point"):
        cx, cy = float(c.get("cx")), float(c.get("cy"))
        # cross product of (p - p1) and (p2 - p1)
        assert abs((cx - x1) * (y2 - y1) - (cy - y1) * (x2 - x1)) < 1e-6 * (x2 - x1) ** 2


def test_scatter_cluster_is_densest():
    rng = np.random.default_rng(4)
    x = np.concatenate([rng.random(30), np.full(10, 0.8)])
    y = np.concatenate([rng.random(30), np.full(10, 0.3)])
    dens = scatter_density(x, y)
    assert set(np.argsort(dens)[-10:]) == set(range(30, 40))
    root = parse(plot_scatter_density(x, y))
    last = by_class(root, "point")[-1]
    assert (last.get("cx"), last.get("cy")) == (by_class(root, "point")[-2].get("cx"),
                                                by_class(root, "point")[-2].get("cy"))


def test_scatter_input_errors():
    with pytest.raises(ValueError):
        plot_scatter_density([0.1, 0.2], [0.3])
    with pytest.raises(ValueError):
        plot_scatter_density([0.1], [0.3])
