import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from wavecool import analysis as an
from wavecool.grid import LogFrequencyGrid, Spectrum


def spec(lo, hi, n, f, t=0.0):
    g = LogFrequencyGrid(lo, hi, n)
    return Spectrum(g, f(g.nodes), t)


# --- RJ estimators ----------------------------------------------------------------------

def test_rj_peak_recovers_parameters():
    s = spec(1e-4, 1e4, 801, lambda w: 3.0 / (0.7 + w))
    fit = an.fit_rj_peak(s)
    assert abs(math.log(fit.mu / 0.7)) <= s.grid.log_step
    assert fit.T == pytest.approx(3.0, rel=5e-3)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10), st.floats(1e-3, 1e3))
def test_rj_peak_on_refined_grids(T, mu):
    s = spec(mu * 1e-3, mu * 1e3, 2001, lambda w: T / (mu + w))
    fit = an.fit_rj_peak(s)
    assert fit.mu == pytest.approx(mu, rel=1e-4)
    assert fit.T == pytest.approx(T, rel=1e-6)


def test_rj_peak_no_fit_on_constant():
    with pytest.raises(an.NoFit):
        an.fit_rj_peak(spec(1, 100, 50, np.ones_like))


@pytest.mark.parametrize("E0,N0,wp,T,mu", [(1, 1, 10, 0.1, 10 * math.exp(-10)),
                                           (2, 1, 2, 1.0, 2 * math.exp(-1))])
def test_rj_conservation_formula(E0, N0, wp, T, mu):
    fit = an.fit_rj_conservation(E0, N0, wp)
    assert fit.T == pytest.approx(T, rel=1e-15) and fit.mu == pytest.approx(mu, rel=1e-15)


def test_rj_conservation_values():
    assert an.fit_rj_conservation(1, 1, 10).mu == pytest.approx(4.54e-4, rel=1e-3)
    assert an.fit_rj_conservation(2, 1, 2).mu == pytest.approx(0.7358, rel=1e-4)
    with pytest.raises(ValueError):
        an.fit_rj_conservation(1, 0, 1)


# --- fronts ------------------------------------------------------------------------------

def test_front_right_analytic_crossing():
    # E = exp(-(ln w)^2) crosses 1/e at w = e
    s = spec(1e-3, 1e3, 4001, lambda w: np.exp(-np.log(w) ** 2) / w)
    assert an.front_right(s, math.exp(-1)) == pytest.approx(math.e, rel=1e-5)


def test_front_right_truncated_rj():
    # E = T w / (mu + w) saturates, so the threshold is met only where the truncation cuts it
    s = spec(1e-2, 1e3, 501, lambda w: np.where(w < 100, 1.0 / (1.0 + w), 1e-12))
    fr = an.front_right(s, 0.4)
    assert 90 < fr < 110


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.9), st.floats(0.05, 0.9))
def test_front_right_threshold_monotone(s1, s2):
    s = spec(1e-2, 1e4, 801, lambda w: 1.0 / (1 + w) * np.exp(-w / 300))
    lo, hi = sorted((s1, s2))
    assert an.front_right(s, lo) >= an.front_right(s, hi)


def test_front_left_half_max():
    s = spec(1e-3, 1e3, 4001, lambda w: np.exp(-np.log(w / 10) ** 2))
    assert an.front_left(s, 0.5) == pytest.approx(10 * math.exp(-math.sqrt(math.log(2))), rel=1e-5)


def test_front_left_missing_for_decreasing():
    with pytest.raises(an.NoFront):
        an.front_left(spec(1e-2, 1e2, 100, lambda w: 1 / (1 + w)), 0.4)


def test_front_validation():
    s = spec(1, 10, 20, np.ones_like)
    for sig in (0.0, 1.0):
        with pytest.raises(ValueError):
            an.front_right(s, sig)
        with pytest.raises(ValueError):
            an.front_left(s, sig)


def test_absolute_fronts():
    bump = spec(0.1, 20, 801, lambda w: np.where((w >= 1) & (w <= 2), 1.0, 1e-30))
    ab = an.absolute_fronts(bump)
    assert ab.omega_minus == pytest.approx(1.0, rel=0.01)
    assert ab.omega_plus == pytest.approx(2.0, rel=0.01)
    assert not ab.boundary
    assert an.absolute_fronts(spec(0.1, 20, 100, lambda w: 1 / (1 + w))).boundary


def test_front_ordering():
    s = spec(1e-4, 1e3, 1201, lambda w: 1e-30 + np.exp(-(0.05 / w) ** 2 - (w / 30) ** 2) / (0.3 + w))
    f = an.fronts(s, 0.4, 0.4)
    assert f.omega_minus <= f.omega_hat_minus <= f.omega_hat_plus <= f.omega_plus


# --- fits ------------------------------------------------------------------------------------

def test_powerlaw_exact():
    t = np.geomspace(1, 1e3, 30)
    e, p, r = an.fit_powerlaw(t, 7 * np.cbrt(t))
    assert e == pytest.approx(1 / 3, abs=1e-12) and p == pytest.approx(7, rel=1e-12)
    assert r < 1e-12


def test_powerlaw_perturbed():
    t = np.geomspace(1, 1e4, 200)
    e, _, _ = an.fit_powerlaw(t, t ** (-1 / 3) * (1 + 0.01 * np.sin(np.log(t))))
    assert e == pytest.approx(-1 / 3, abs=0.01)


def test_powerlaw_window_and_errors():
    t = np.geomspace(1, 1e3, 30)
    v = np.where(t < 10, t, t ** 2)
    assert an.fit_powerlaw(t, v, window=(20, 1e3))[0] == pytest.approx(2, abs=1e-12)
    with pytest.raises(an.NoFit):
        an.fit_powerlaw(t[:3], t[:3])
    with pytest.raises(an.NoFit):
        an.fit_powerlaw(t, -t)


def test_stretched_exact_and_prefactor():
    t = np.geomspace(1, 1e3, 40)
    C, off, r = an.fit_stretched_exp(t, np.exp(5 * np.cbrt(t)))
    assert C == pytest.approx(5, rel=1e-12) and r < 1e-10
    t = np.geomspace(1e3, 1e6, 200)
    C, _, _ = an.fit_stretched_exp(t, t ** 2 * np.exp(5 * np.cbrt(t)))
    assert C == pytest.approx(5, rel=0.05)


def test_estimators_are_sklearn_compatible():
    from sklearn.base import clone
    est = an.PowerLawFit(window=(1, 10))
    assert clone(est).get_params() == {"window": (1, 10)}
    t = np.geomspace(1, 10, 10)
    assert np.allclose(est.fit(t, 2 * t ** 0.5).predict(t), 2 * t ** 0.5)
    se = an.StretchedExpFit().fit(t, np.exp(np.cbrt(t)))
    assert np.allclose(se.predict(t), np.exp(np.cbrt(t)))


def test_last_decade():
    assert an.last_decade([1, 10, 300]) == (30.0, 300.0)


def test_scaling_series_validation():
    with pytest.raises(ValueError):
        an.ScalingSeries([1, 1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        an.ScalingSeries([1, 2], [1, 2, 3])


# --- blowup norms and profiles ----------------------------------------------------------

def test_wg_series_on_rj():
    snaps = [spec(1e-4, 1e4, 2001, lambda w, T=T: T / (0.5 + w), t) for t, T in ((1, 1.0), (2, 2.0), (3, 3.0))]
    ser = an.wg_series(snaps, 0.0)
    assert np.allclose(ser.values, [T / (2 * math.sqrt(0.5)) for T in (1, 2, 3)], rtol=1e-5)
    assert np.allclose(ser.argmax_omega, 0.5, rtol=0.01)
    with pytest.raises(ValueError):
        an.wg_series(snaps[:2], 0.0)


def test_wg_ignores_floor_nodes():
    g = LogFrequencyGrid(0.1, 1e4, 400)
    v = np.where(g.nodes < 10, 1.0, 1e-30)
    s = [Spectrum(g, v, t) for t in (1, 2, 3)]
    assert np.all(an.wg_series(s, 3.5).argmax_omega < 10)


def test_rescaled_power_law():
    s = spec(1, 100, 201, lambda w: w ** -0.5)
    p = an.rescale_profile(s, 0.75)
    assert np.max(p.omega_values) == 1.0
    assert np.allclose(p.omega_values, np.exp(0.75 * (p.kappa - p.kappa[-1])), rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(-3, 3))
def test_rescale_normalisation_invariance(lam, g):
    s = spec(0.01, 100, 200, lambda w: 1 / (0.3 + w) * np.exp(-w / 40))
    a = an.rescale_profile(s, g)
    b = an.rescale_profile(Spectrum(s.grid, lam * s.values), g)
    assert np.allclose(a.omega_values, b.omega_values, rtol=1e-12)
    assert b.tau - a.tau == pytest.approx(math.log(lam), abs=1e-9)


def test_rescaled_rj_matches_normalised_profile():
    g, mu = -0.125, 0.3
    s = spec(1e-4, 1e4, 2001, lambda w: 1.0 / (mu + w))
    p = an.rescale_profile(s, g)
    sigma = p.kappa - math.log(mu)
    assert np.allclose(p.omega_values, an.psi_rj_normalised(sigma, g), atol=1e-5)


@pytest.mark.parametrize("g", np.linspace(-0.45, 0.45, 7))
def test_psi_rj_peak(g):
    res = optimize.minimize_scalar(lambda x: -float(an.psi_rj_normalised(x, g)),
                                   bounds=(-20, 20), method="bounded", options={"xatol": 1e-10})
    assert -res.fun == pytest.approx(1.0, abs=1e-12)
    assert res.x == pytest.approx(math.log((g + 0.5) / (0.5 - g)), abs=1e-5)
    # same shape as the closed form, only the constant differs
    x = np.linspace(-5, 5, 11)
    ratio = an.psi_rj(x, g) / an.psi_rj_normalised(x, g)
    assert np.allclose(ratio, ratio[0], rtol=1e-12)


def _rigid(c, taus, shape=lambda k: np.exp(-k ** 2)):
    k = np.linspace(-10, 10, 2001)
    return [an.RescaledProfile(k, tau, shape(k - c * tau), 1.0) for tau in taus]


@pytest.mark.parametrize("c", [0.5, -0.5, 0.123])
def test_traveling_speed_rigid(c):
    fit = an.traveling_speed(_rigid(c, [0.0, 2.0, 4.0]))
    assert fit.c_measured == pytest.approx(c, abs=1e-4)
    assert fit.collapse_error < 1e-3 and not fit.unreliable


def test_traveling_speed_needs_range():
    with pytest.raises(ValueError):
        an.traveling_speed(_rigid(0.5, [0.0, 0.2, 0.4]))
    with pytest.raises(ValueError):
        an.traveling_speed(_rigid(0.5, [0.0, 2.0]))


def test_predicted_speed():
    assert an.predicted_speed(3.5) == 0.5
    assert an.predicted_speed(-2) == -0.5
    with pytest.raises(ValueError):
        an.predicted_speed(1.0)


# --- exponent report -----------------------------------------------------------------------

def test_selfsimilar_exponents_exact():
    t = np.geomspace(1, 1e3, 30)
    C, w0 = 5.0, 1.0
    rep = an.selfsimilar_exponents(t, C * np.cbrt(t), 2 * t ** (-1 / 3),
                                   mu_hat=np.exp(-C * np.cbrt(t) / w0), omega0=w0)
    assert rep.b == pytest.approx(1 / 3, abs=1e-12)
    assert rep.temperature_exponent == pytest.approx(-1 / 3, abs=1e-12)
    assert rep.a == pytest.approx(-2 / 3, abs=1e-12)
    assert rep.consistency == pytest.approx(0, abs=1e-12)
    assert rep.cooling_slope == pytest.approx(rep.cooling_slope_predicted, rel=1e-12)


def test_selfsimilar_needs_range():
    t = np.geomspace(1, 10, 10)
    with pytest.raises(an.NoFit):
        an.selfsimilar_exponents(t, t, t)


def test_front_prefactor_and_time_unit():
    t = np.geomspace(1, 100, 20)
    C = an.front_prefactor(t, 4.0 * np.cbrt(t))
    assert C == pytest.approx(4.0, rel=1e-12)
    s = an.time_unit(C, 0.5, target=5.0)
    # in t' = s t the same front reads 2.5 t'^(1/3) = 5 w0 t'^(1/3)
    assert 4.0 * np.cbrt(t[3]) == pytest.approx(2.5 * np.cbrt(s * t[3]), rel=1e-12)
