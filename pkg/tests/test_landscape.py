import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mp, mpf, sqrt as msqrt, log as mlog

from metaspin import landscape as L
from metaspin.errors import ParameterError, RegimeError
from metaspin.spin import ModelParams

CW = ModelParams(1.0, 1.5, 0.1)
ER = ModelParams(0.5, 3.0, 0.05)


def test_entropy_values():
    assert L.entropy_I(0.0) == pytest.approx(-math.log(2), abs=1e-15)
    assert L.entropy_I(1.0) == 0.0 and L.entropy_I(-1.0) == 0.0
    a = np.linspace(-0.99, 0.99, 199)
    assert np.argmin(L.entropy_I(a)) == 99
    with pytest.raises(ParameterError):
        L.entropy_I(1.5)


def test_entropy_In_stirling():
    n, a = 1000, 0.2
    diff = L.entropy_In(a, n) - L.entropy_I(a)
    assert diff == pytest.approx(math.log(math.pi * n * (1 - a * a) / 2) / (2 * n), rel=1e-3)
    assert L.entropy_In(-1.0, 10) == 0.0
    assert L.entropy_In(0.0, 4) == pytest.approx(-math.log(6) / 4, rel=1e-14)
    with pytest.raises(ParameterError):
        L.entropy_In(0.1, 4)


def test_drift_special_values():
    assert L.drift_J(0.0, CW) == pytest.approx(2 * CW.beta * CW.h)
    a = -ER.h / ER.p
    assert L.drift_J(a, ER) == pytest.approx(math.log((1 + ER.h / ER.p) / (1 - ER.h / ER.p)), rel=1e-13)
    assert L.drift_J(-1.0, CW) == math.inf and L.drift_J(1.0, CW) == -math.inf
    prm = ModelParams(1.0, 2.0, 0.05)
    assert L.a_lambda(prm) == pytest.approx(-math.sqrt(0.5))
    assert L.drift_J_prime(L.a_lambda(prm), prm) == pytest.approx(0.0, abs=1e-12)


def test_jn_close_to_j():
    n = 2000
    k = np.arange(1, n)
    a = 2 * k / n - 1
    d = L.drift_Jn(a, CW, n) - L.drift_J(a, CW)
    # the digamma form equals log((1-a+1/n)/(1+a+1/n)) + O(n^-2), so J_n - J = O(1/(n(1-a^2)))
    assert np.max(np.abs(d) * n * (1 - a * a)) < 5
    star = L.drift_Jn_star(a, CW, n)
    assert np.max(np.abs(star - L.drift_J(a, CW))[100:-100]) < 0.1


def test_free_energy_values():
    for prm in (CW, ER):
        assert L.free_energy_R(-1.0, prm) == pytest.approx(-prm.p / 2 + prm.h, abs=1e-15)
        assert L.free_energy_R(0.0, prm) == pytest.approx(-math.log(2) / prm.beta, abs=1e-15)


def test_free_energy_derivative_is_minus_j():
    a = np.linspace(-0.95, 0.95, 20)
    eps = 1e-6
    fd = (L.free_energy_R(a + eps, ER) - L.free_energy_R(a - eps, ER)) / (2 * eps)
    assert np.max(np.abs(fd + L.drift_J(a, ER) / (2 * ER.beta)) / np.abs(L.drift_J(a, ER) / (2 * ER.beta))) < 1e-6


def test_rn_discrete_derivative():
    # R_n(a + 2/n) - R_n(a) = -(1/(2 beta)) int J_n; check the midpoint rule is consistent with J_n
    n = 400
    a = -1 + 2 * np.arange(n + 1) / n
    rn = L.free_energy_Rn(a, CW, n)
    slope = np.diff(rn) / (2 / n)
    mid = -(L.drift_Jn(a[:-1], CW, n) + L.drift_Jn(a[1:], CW, n)) / (4 * CW.beta)
    assert np.max(np.abs(slope - mid)[5:-5]) < 5e-3


def test_j_prime_matches_finite_difference():
    a = np.linspace(-0.9, 0.9, 37)
    eps = 1e-6
    fd = (L.drift_J(a + eps, CW) - L.drift_J(a - eps, CW)) / (2 * eps)
    assert np.max(np.abs(fd - L.drift_J_prime(a, CW)) / np.abs(L.drift_J_prime(a, CW))) < 1e-6


def test_chi():
    assert L.chi_threshold(1.0) == 0.0
    assert L.chi_threshold(1e6) > 0.99
    with mp.workdps(40):
        lam = mpf(2)
        r = msqrt(1 - 1 / lam)
        ref = r - mlog(lam * (1 + r) ** 2) / (2 * lam)
    assert L.chi_threshold(2.0) == pytest.approx(float(ref), rel=1e-14)
    assert L.chi_threshold(2.0) == pytest.approx(0.266420, abs=5e-7)
    assert L.chi_threshold(1.5) == pytest.approx(0.1384, abs=5e-5)
    with pytest.raises(ParameterError):
        L.chi_threshold(0.5)
    lams = np.linspace(1, 50, 100)
    assert np.all(np.diff([L.chi_threshold(x) for x in lams]) > 0)


def test_regimes():
    assert L.classify_regime(CW) is L.Regime.METASTABLE
    assert L.classify_regime(ModelParams(0.5, 1.0, 0.01)) is L.Regime.SUBCRITICAL
    assert L.classify_regime(ModelParams(0.5, 4.0, 0.6)) is L.Regime.STRONG_FIELD
    assert L.classify_regime(ModelParams(0.5, 4.0, 0.0)) is L.Regime.ZERO_FIELD


def test_roots_continuum():
    r = L.find_roots(CW)
    assert r.m < L.a_lambda(CW) < r.t < 0 < r.s
    for x in (r.m, r.t, r.s):
        assert abs(L.drift_J(x, CW)) < 1e-10
        assert (1 - x) / (1 + x) == pytest.approx(math.exp(-2 * CW.beta * (CW.p * x + CW.h)), rel=1e-10)


def test_grid_roots_close_to_continuum():
    r = L.find_roots(ER, 100)
    assert (r.M_n, r.T_n, r.S_n) == (12, 35, 96)
    assert abs(r.m_n - r.m) <= 2 / 100 and abs(r.s_n - r.s) <= 2 / 100
    # J_n - J = O(1/n) moves the crossing near t, where J is flat, by about one more grid step
    assert abs(r.t_n - r.t) <= 3 / 100
    assert r.M_n == 100 * (r.m_n + 1) / 2


def test_grid_roots_converge():
    r = L.find_roots(CW)
    errs = [abs(L.find_roots(CW, n).t_n - r.t) for n in (100, 1000, 10000)]
    assert errs[2] < errs[1] < errs[0] and errs[2] < 3e-4


def test_grid_scan_is_literal():
    n = 200
    M, T, S = L.grid_roots(CW, n)
    a = -1 + 2 * np.arange(n + 1) / n
    jn = L.drift_Jn(a, CW, n)
    assert jn[M] <= 0 and np.all(jn[:M] > 0)
    assert jn[T] >= 0 and np.all(jn[M + 1:T] < 0)
    assert jn[S] <= 0 and np.all(jn[T + 1:S] > 0)


def test_roots_need_metastability():
    with pytest.raises(RegimeError):
        L.find_roots(ModelParams(0.5, 4.0, 0.6))
    with pytest.raises(RegimeError):
        L.barrier(ModelParams(0.5, 1.0, 0.01))


def test_sign_pattern_and_double_well():
    r = L.find_roots(CW)
    a = np.linspace(-0.999, 0.999, 20001)
    j = L.drift_J(a, CW)
    assert np.all(j[a < r.m - 1e-9] > 0) and np.all(j[(a > r.m + 1e-9) & (a < r.t - 1e-9)] < 0)
    assert np.all(j[(a > r.t + 1e-9) & (a < r.s - 1e-9)] > 0) and np.all(j[a > r.s + 1e-9] < 0)
    R = L.free_energy_R(a, CW)
    inner = R[1:-1]
    minima = np.flatnonzero((inner < R[:-2]) & (inner < R[2:]))
    maxima = np.flatnonzero((inner > R[:-2]) & (inner > R[2:]))
    assert len(minima) == 2 and len(maxima) == 1


def test_strong_field_single_sign_change():
    prm = ModelParams(0.5, 4.0, 0.6)
    a = np.tanh(np.linspace(-15, 15, 30001))
    a = a[np.abs(a) < 1]
    s = np.sign(L.drift_J(a, prm))
    assert np.count_nonzero(np.diff(s)) == 1
    assert L.drift_J(L.unique_root(prm), prm) == pytest.approx(0, abs=1e-10)


def test_barrier():
    r = L.find_roots(CW)
    gam = L.barrier(CW)
    assert gam == pytest.approx(L.free_energy_R(r.t, CW) - L.free_energy_R(r.m, CW))
    assert gam == pytest.approx(0.0108772, rel=1e-5)
    hs = np.linspace(0.01, 0.99, 20) * CW.p * L.chi_threshold(CW.lam)
    bars = [L.barrier(CW.with_h(h)) for h in hs]
    assert all(b > 0 for b in bars) and np.all(np.diff(bars) < 0)


@settings(max_examples=40, deadline=None)
@given(p=st.floats(0.2, 1.0), lam=st.floats(1.05, 8.0), frac=st.floats(0.02, 0.98))
def test_roots_property(p, lam, frac):
    beta = lam / p
    h = frac * p * L.chi_threshold(lam)
    prm = ModelParams(p, beta, h)
    m, t, s = L.continuum_roots(prm)
    assert -1 < m < t < s < 1
    assert L.barrier(prm) > 0
    for x in (m, t, s):
        # J(x) = 0 is the mean-field equation x = tanh(beta (p x + h))
        assert abs(x - math.tanh(beta * (p * x + h))) < 1e-12


def test_field_for_barrier():
    h = L.field_for_barrier(0.5, 3.0, 6 / 168)
    assert L.barrier(ModelParams(0.5, 3.0, h)) == pytest.approx(6 / 168, rel=1e-10)
    with pytest.raises(ParameterError):
        L.field_for_barrier(0.5, 3.0, 10.0)


def test_tables_and_thetas():
    tab = L.build_tables(CW, 50)
    assert tab.grid.size == 51 and np.allclose(np.diff(tab.grid), 2 / 50, rtol=0, atol=1e-15)
    assert tab.roots.M_n < tab.roots.T_n < tab.roots.S_n
    with pytest.raises(ValueError):
        tab.J_n[0] = 1.0
    k = np.arange(51)
    assert np.allclose(L.vartheta_k(CW, k, 50), CW.p * (1 - 2 * k / 50) - CW.h)
    assert np.allclose(L.theta_k(CW, k, 50), CW.p * (1 - k / 50) - CW.h)
    strong = L.build_tables(ModelParams(0.5, 4.0, 0.6), 30)
    assert strong.roots is None and strong.barrier is None
