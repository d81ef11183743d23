import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from wsiseg.special import betainc, norm_ppf, t_ppf, t_sf
from wsiseg.stats import correlate, fisher_ci, ranks, spearman, spearman_p, spearman_t

mp.mp.dps = 40


def mp_t_sf(t, df):
    t, df = mp.mpf(t), mp.mpf(df)
    return mp.quad(lambda u: mp.gamma((df + 1) / 2) / (mp.sqrt(df * mp.pi) * mp.gamma(df / 2))
                   * (1 + u * u / df) ** (-(df + 1) / 2), [t, mp.inf])


@pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (2.0, 3.0, 0.7), (10.0, 0.5, 0.99), (1.5, 40.0, 0.01)])
def test_betainc_against_mpmath(a, b, x):
    assert betainc(a, b, x) == pytest.approx(float(mp.betainc(a, b, 0, x, regularized=True)), abs=1e-14)


@pytest.mark.parametrize("df", [1, 2, 3, 7.5, 30, 200])
@pytest.mark.parametrize("t", [0.0, 0.3, 1.0, 2.3, 6.0])
def test_t_sf_against_quadrature(t, df):
    assert t_sf(t, df) == pytest.approx(float(mp_t_sf(t, df)), abs=1e-13)


@pytest.mark.parametrize("df", [1, 2, 4, 9, 49])
@pytest.mark.parametrize("q", [0.5, 0.6, 0.9, 0.975, 0.995])
def test_t_ppf_inverts_high_precision_cdf(q, df):
    got = t_ppf(q, df)
    exact = mp.findroot(lambda t: 1 - mp_t_sf(t, df) - q, got if got else 0.0)
    assert abs(got - float(exact)) < 1e-10


@pytest.mark.parametrize("q", [1e-10, 0.001, 0.02, 0.3, 0.5, 0.8, 0.975, 0.999999])
def test_norm_ppf(q):
    exact = mp.sqrt(2) * mp.erfinv(2 * mp.mpf(q) - 1)
    assert abs(norm_ppf(q) - float(exact)) < 1e-12


def test_ranks_examples():
    assert ranks([10, 20, 30]).ranks.tolist() == [1, 2, 3]
    assert ranks([5, 5]).ranks.tolist() == [1.5, 1.5]
    assert ranks([3, 1, 4, 1, 5]).ranks.tolist() == [3, 1.5, 4, 1.5, 5]


def test_ranks_rejects_non_finite():
    with pytest.raises(ValueError):
        ranks([1.0, float("nan")])


def sort_oracle_ranks(x):
    out = []
    for v in x:
        less = sum(1 for u in x if u < v)
        equal = sum(1 for u in x if u == v)
        out.append(less + (equal + 1) / 2)
    return out


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=40), st.randoms())
def test_ranks_oracle_and_equivariance(x, rnd):
    r = ranks(x)
    assert r.ranks.tolist() == sort_oracle_ranks(x)
    assert r.ranks.sum() == pytest.approx(r.n * (r.n + 1) / 2)
    perm = list(range(len(x)))
    rnd.shuffle(perm)
    assert ranks([x[i] for i in perm]).ranks.tolist() == [r.ranks[i] for i in perm]


def test_spearman_examples():
    assert spearman([1, 2, 3, 4], [2, 4, 8, 16]) == 1.0
    assert spearman([1, 2, 3, 4], [9, 4, 1, 0]) == -1.0
    # rank-then-Pearson at 40 digits
    rx, ry = [1, 2, 3, 4, 5], [2, 1, 4, 3, 5]
    mx, my = mp.mpf(3), mp.mpf(3)
    num = mp.fsum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = mp.sqrt(mp.fsum((a - mx) ** 2 for a in rx) * mp.fsum((b - my) ** 2 for b in ry))
    assert float(num / den) == 0.8
    assert spearman(rx, ry) == pytest.approx(0.8, abs=1e-15)


def test_spearman_undefined_for_constant():
    assert spearman([1, 2, 3], [4, 4, 4]) is None
    res = correlate([1, 2, 3, 4], [4, 4, 4, 4])
    assert not res.defined and res.p is None


def test_spearman_p_examples():
    assert spearman_p(0.0, 10) == 1.0
    assert spearman_t(0.8, 5) == pytest.approx(2.3094010767585, abs=1e-12)
    expected = 2 * float(mp_t_sf(mp.mpf("0.8") * mp.sqrt(mp.mpf(3) / mp.mpf("0.36")), 3))
    assert spearman_p(0.8, 5) == pytest.approx(expected, abs=1e-9)
    assert spearman_p(0.8, 5) == pytest.approx(0.1041, abs=1e-4)
    assert spearman_p(1.0, 10) == 0.0
    assert spearman_p(-1.0, 10) == 0.0
    assert spearman_p(0.999999, 50) < 1e-12


def mp_fisher(r, n, alpha):
    z = mp.sqrt(2) * mp.erfinv(1 - mp.mpf(alpha))
    h = z / mp.sqrt(n - 3)
    return float(mp.tanh(mp.atanh(r) - h)), float(mp.tanh(mp.atanh(r) + h))


@pytest.mark.parametrize("r,n", [(0.0, 12), (0.5, 28), (-0.3, 100), (0.95, 5)])
def test_fisher_against_high_precision(r, n):
    lo, hi = fisher_ci(r, n, 0.05)
    elo, ehi = mp_fisher(r, n, 0.05)
    assert lo == pytest.approx(elo, abs=1e-12)
    assert hi == pytest.approx(ehi, abs=1e-12)


def test_fisher_frozen_values():
    assert fisher_ci(0.0, 12) == pytest.approx((-0.57390, 0.57390), abs=1e-4)
    assert fisher_ci(0.5, 28) == pytest.approx((0.15603, 0.73582), abs=1e-4)


def test_fisher_errors_and_collapse():
    with pytest.raises(ValueError):
        fisher_ci(1.0, 10)
    with pytest.raises(ValueError):
        fisher_ci(0.2, 3)
    lo, hi = fisher_ci(0.3, 20, 1 - 1e-12)
    assert hi - lo < 1e-10 and lo <= 0.3 <= hi


@given(st.floats(-0.99, 0.99), st.integers(4, 500), st.floats(0.001, 0.5))
def test_fisher_contains_r_and_narrows(r, n, alpha):
    lo, hi = fisher_ci(r, n, alpha)
    assert -1 < lo <= r <= hi < 1
    lo2, hi2 = fisher_ci(r, n + 1, alpha)
    assert hi2 - lo2 < hi - lo


@given(st.lists(st.integers(-1000, 1000), min_size=3, max_size=30, unique=True), st.integers(0, 1000))
def test_spearman_invariance_and_antisymmetry(x, seed):
    y = np.random.default_rng(seed).permutation(len(x)).astype(float)
    rho = spearman(x, y)
    assume(rho is not None)
    cubed = np.asarray(x, dtype=float) ** 3 + 7.0  # strictly increasing, exact for these ints
    assert spearman(cubed, y) == pytest.approx(rho, abs=1e-12)
    assert spearman(x, -y) == pytest.approx(-rho, abs=1e-12)
    assert -1 <= rho <= 1


def test_null_calibration():
    rng = np.random.default_rng(2024)
    hits = 0
    for _ in range(1000):
        x, y = rng.normal(size=(2, 50))
        hits += correlate(x, y).p < 0.05
    assert 0.03 <= hits / 1000 <= 0.07
    assert math.isfinite(hits)
