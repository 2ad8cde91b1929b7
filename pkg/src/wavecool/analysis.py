"""Cooling kinematics: RJ estimators, fronts, blowup norms, rescaled profiles and fits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .grid import Spectrum, energy_spectrum, weighted_profile


class NoFit(ValueError):
    """The estimator has no well-defined answer for this input."""


class NoFront(ValueError):
    pass


# --- Rayleigh-Jeans estimators ---------------------------------------------

@dataclass(frozen=True)
class RJFit:
    T: float
    mu: float
    method: str
    sigma: float | None = None


def _finite(s: Spectrum):
    ok = np.isfinite(s.values)
    return s.omega[ok], s.grid.log_nodes[ok], s.values[ok]


def _parabolic_peak(x, y, i):
    """Vertex of the parabola through (x[i-1..i+1], y[i-1..i+1])."""
    x0, x1, x2 = x[i - 1], x[i], x[i + 1]
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    d0 = (y1 - y0) / (x1 - x0)
    d1 = (y2 - y1) / (x2 - x1)
    curv = (d1 - d0) / (x2 - x0)
    if curv >= 0:
        return x1, y1
    xv = 0.5 * (x0 + x1) - d0 / (2.0 * curv)
    xv = min(max(xv, x0), x2)
    # evaluate the interpolating parabola in Newton form
    yv = y0 + d0 * (xv - x0) + curv * (xv - x0) * (xv - x1)
    return xv, yv


def fit_rj_peak(s: Spectrum) -> RJFit:
    """mu = argmax of W = sqrt(w) N (parabola in ln w), T = 2 sqrt(mu) max W."""
    w, lw, v = _finite(s)
    W = np.sqrt(w) * v
    i = int(np.argmax(W))
    if i == 0 or i == W.size - 1:
        raise NoFit("maximum of W on the grid boundary")
    lmu, Wmax = _parabolic_peak(lw, W, i)
    mu = float(np.exp(lmu))
    return RJFit(2.0 * np.sqrt(mu) * float(Wmax), mu, "peak")


def fit_rj_conservation(E0: float, N0: float, omega_hat_plus: float, sigma=None) -> RJFit:
    """T^ = E0 / w^+ and mu^ = w^+ exp(-w^+ / w0) with w0 = E0 / N0."""
    if not (E0 > 0 and N0 > 0 and omega_hat_plus > 0):
        raise ValueError("E0, N0 and the front must be positive")
    w0 = E0 / N0
    T = E0 / omega_hat_plus
    mu = omega_hat_plus * np.exp(-omega_hat_plus / w0)
    return RJFit(float(T), float(mu), "conservation", sigma)


# --- fronts ------------------------------------------------------------------

def _crossing(lw, y, j, thr):
    # linear interpolation in (ln w, y) between nodes j and j+1
    frac = (y[j] - thr) / (y[j] - y[j + 1])
    return float(np.exp(lw[j] + frac * (lw[j + 1] - lw[j])))


def front_right(s: Spectrum, sigma: float) -> float:
    """Rightmost downward crossing of E = w N through sigma * max E."""
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    w, lw, v = _finite(s)
    E = w * v
    i = int(np.argmax(E))
    thr = sigma * E[i]
    down = np.nonzero((E[i:-1] >= thr) & (E[i + 1:] < thr))[0]
    if down.size == 0:
        raise NoFront("no downward crossing right of the energy maximum")
    return _crossing(lw, E, i + int(down[-1]), thr)


def front_left(s: Spectrum, sigma_tilde: float) -> float:
    """Leftmost upward crossing of N through sigma_tilde * max N."""
    if not 0 < sigma_tilde < 1:
        raise ValueError("sigma_tilde must lie in (0, 1)")
    w, lw, v = _finite(s)
    i = int(np.argmax(v))
    thr = sigma_tilde * v[i]
    up = np.nonzero((v[:i] < thr) & (v[1:i + 1] >= thr))[0]
    if up.size == 0:
        raise NoFront("no upward crossing left of the wave action maximum")
    return _crossing(lw, v, int(up[0]), thr)


class AbsoluteFronts(NamedTuple):
    omega_minus: float
    omega_plus: float
    boundary: bool


def absolute_fronts(s: Spectrum, floor_fraction: float = 1e-15) -> AbsoluteFronts:
    """Outermost nodes with N above floor_fraction * max N."""
    v = np.nan_to_num(s.values, nan=0.0)
    idx = np.nonzero(v > floor_fraction * np.max(v))[0]
    w = s.omega
    touches = idx[0] == 0 or idx[-1] == v.size - 1
    return AbsoluteFronts(float(w[idx[0]]), float(w[idx[-1]]), bool(touches))


@dataclass(frozen=True)
class FrontEstimate:
    omega_hat_minus: float
    omega_hat_plus: float
    omega_minus: float
    omega_plus: float
    sigma: float
    sigma_tilde: float


def fronts(s: Spectrum, sigma=0.4, sigma_tilde=0.4, floor_fraction=1e-15) -> FrontEstimate:
    try:
        hm = front_left(s, sigma_tilde)
    except NoFront:
        hm = float("nan")
    hp = front_right(s, sigma)
    ab = absolute_fronts(s, floor_fraction)
    return FrontEstimate(hm, hp, ab.omega_minus, ab.omega_plus, sigma, sigma_tilde)


# --- fits --------------------------------------------------------------------

def _window_mask(t, window):
    t = np.asarray(t, dtype=float)
    if window is None:
        return np.ones(t.size, dtype=bool)
    lo, hi = window
    return (t >= lo) & (t <= hi)


class PowerLawFit(RegressorMixin, BaseEstimator):
    """Least squares of ln v on ln t: v = prefactor * t**exponent."""

    def __init__(self, window=None):
        self.window = window

    def fit(self, t, v):
        t = np.asarray(t, dtype=float).ravel()
        v = np.asarray(v, dtype=float).ravel()
        m = _window_mask(t, self.window) & np.isfinite(v)
        if np.count_nonzero(m) < 4:
            raise NoFit("power-law fit needs at least 4 points")
        if np.any(v[m] <= 0) or np.any(t[m] <= 0):
            raise NoFit("power-law fit needs positive data")
        x, y = np.log(t[m]), np.log(v[m])
        slope, icpt = np.polyfit(x, y, 1)
        self.exponent_ = float(slope)
        self.prefactor_ = float(np.exp(icpt))
        self.residual_ = float(np.sqrt(np.mean((y - slope * x - icpt) ** 2)))
        return self

    def predict(self, t):
        return self.prefactor_ * np.asarray(t, dtype=float) ** self.exponent_


class StretchedExpFit(RegressorMixin, BaseEstimator):
    """Least squares of ln v on t**(1/3): v = exp(C t**(1/3) + offset)."""

    def __init__(self, window=None):
        self.window = window

    def fit(self, t, v):
        t = np.asarray(t, dtype=float).ravel()
        v = np.asarray(v, dtype=float).ravel()
        m = _window_mask(t, self.window) & np.isfinite(v)
        if np.count_nonzero(m) < 4:
            raise NoFit("stretched-exponential fit needs at least 4 points")
        if np.any(v[m] <= 0):
            raise NoFit("stretched-exponential fit needs positive data")
        x, y = np.cbrt(t[m]), np.log(v[m])
        slope, icpt = np.polyfit(x, y, 1)
        self.C_ = float(slope)
        self.offset_ = float(icpt)
        self.residual_ = float(np.sqrt(np.mean((y - slope * x - icpt) ** 2)))
        return self

    def predict(self, t):
        return np.exp(self.C_ * np.cbrt(np.asarray(t, dtype=float)) + self.offset_)


@dataclass
class ScalingSeries:
    times: np.ndarray
    values: np.ndarray
    label: str = ""
    argmax_omega: np.ndarray | None = None
    window: tuple | None = None
    exponent: float | None = None
    prefactor: float | None = None
    residual: float | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


def _series_args(series_or_t, values):
    if isinstance(series_or_t, ScalingSeries):
        return series_or_t.times, series_or_t.values
    return series_or_t, values


def fit_powerlaw(series, values=None, window=None):
    """(exponent, prefactor, residual) of a power law in the window."""
    t, v = _series_args(series, values)
    f = PowerLawFit(window).fit(t, v)
    if isinstance(series, ScalingSeries):
        series.window, series.exponent = window, f.exponent_
        series.prefactor, series.residual = f.prefactor_, f.residual_
    return f.exponent_, f.prefactor_, f.residual_


def fit_stretched_exp(series, values=None, window=None):
    """(C, offset, residual) of ln v = C t**(1/3) + offset in the window."""
    t, v = _series_args(series, values)
    f = StretchedExpFit(window).fit(t, v)
    return f.C_, f.offset_, f.residual_


def last_decade(times, end=None):
    t = np.asarray(times, dtype=float)
    hi = float(t[-1] if end is None else end)
    return (hi / 10.0, hi)


# --- blowup norms and rescaled profiles ---------------------------------------

def _support_profile(s: Spectrum, g: float, floor_fraction: float):
    # vacuum nodes (N at the solver floor) would otherwise dominate W_g at the
    # grid edges for large |g|
    W = weighted_profile(s, g)
    if floor_fraction > 0:
        v = s.values
        W = np.where(v > floor_fraction * np.nanmax(v), W, np.where(np.isnan(v), np.nan, 0.0))
    return W


def wg_series(snapshots: Sequence[Spectrum], g: float, floor_fraction: float = 1e-15) -> ScalingSeries:
    """Per-snapshot supremum of W_g = w**(g+1/2) N and where it sits.

    Nodes with N below floor_fraction * max N count as empty.
    """
    if len(snapshots) < 3:
        raise ValueError("need at least 3 snapshots")
    sup, arg = [], []
    for s in snapshots:
        W = _support_profile(s, g, floor_fraction)
        i = int(np.nanargmax(W))
        sup.append(W[i])
        arg.append(s.omega[i])
    return ScalingSeries([s.time for s in snapshots], sup, f"W_{g:g}", np.array(arg))


@dataclass(frozen=True)
class RescaledProfile:
    kappa: np.ndarray
    tau: float
    omega_values: np.ndarray
    g: float
    time: float = 0.0


def rescale_profile(s: Spectrum, g: float, floor_fraction: float = 1e-15) -> RescaledProfile:
    """Omega = W_g / sup W_g on kappa = ln w, tagged with tau = ln sup W_g."""
    W = _support_profile(s, g, floor_fraction)
    sup = float(np.nanmax(W))
    if not sup > 0:
        raise ValueError("sup W_g must be positive")
    return RescaledProfile(s.grid.log_nodes, float(np.log(sup)), W / sup, g, s.time)


def psi_rj(sigma, g):
    """RJ traveling profile Z_g e e**(sigma (g+1/2)) / (e**sigma + 1), unit maximum for |g| < 1/2."""
    sigma = np.asarray(sigma, dtype=float)
    Z = (g + 1.5) / (0.5 - g) ** (g + 0.5)
    # the e factor makes the maximum one; written via logs to stay finite
    return Z * np.exp(1.0 + sigma * (g + 0.5) - np.logaddexp(sigma, 0.0))


def psi_rj_normalised(sigma, g):
    """Psi_RJ divided by its exact maximum, reached at sigma* = ln((g+1/2)/(1/2-g))."""
    sigma = np.asarray(sigma, dtype=float)
    a = g + 0.5
    peak = a * np.log(a) + (1.0 - a) * np.log(1.0 - a)
    return np.exp(a * sigma - np.logaddexp(sigma, 0.0) - peak)


@dataclass(frozen=True)
class TravelingFit:
    c_measured: float
    collapse_error: float
    shifts: np.ndarray
    taus: np.ndarray
    unreliable: bool


def _best_shift(k, a, b, max_shift):
    """Shift s (in kappa) maximising sum a(k) b(k + s); parabola-refined."""
    h = k[1] - k[0]
    m = int(np.ceil(max_shift / h))
    lags = np.arange(-m, m + 1)
    n = a.size
    corr = np.empty(lags.size)
    for j, L in enumerate(lags):
        if L >= 0:
            corr[j] = np.dot(a[: n - L], b[L:])
        else:
            corr[j] = np.dot(a[-L:], b[: n + L])
    j = int(np.argmax(corr))
    edge = j == 0 or j == lags.size - 1
    if edge:
        return lags[j] * h, True
    y0, y1, y2 = corr[j - 1], corr[j], corr[j + 1]
    den = y0 - 2 * y1 + y2
    d = 0.5 * (y0 - y2) / den if den != 0 else 0.0
    return (lags[j] + d) * h, False


def traveling_speed(profiles: Sequence[RescaledProfile], max_shift: float | None = None,
                    floor: float = 1e-3) -> TravelingFit:
    """Speed c = d kappa / d tau of rigidly translating profiles, with collapse error."""
    if len(profiles) < 3:
        raise ValueError("need at least 3 profiles")
    taus = np.array([p.tau for p in profiles])
    if abs(taus[-1] - taus[0]) < 1.0:
        raise ValueError("profiles must span at least one unit of tau")
    k = profiles[0].kappa
    if max_shift is None:
        max_shift = 0.5 * (k[-1] - k[0])
    shifts = [0.0]
    unreliable = False
    for p, q in zip(profiles[:-1], profiles[1:]):
        a = np.nan_to_num(p.omega_values)
        b = np.nan_to_num(q.omega_values)
        s, edge = _best_shift(k, a, b, max_shift)
        unreliable |= edge
        shifts.append(shifts[-1] + s)
    shifts = np.array(shifts)
    c = float(np.polyfit(taus, shifts, 1)[0])
    # every profile pulled back to the first one's position
    err = 0.0
    aligned = [np.interp(k, k - s, np.nan_to_num(p.omega_values), left=0.0, right=0.0)
               for p, s in zip(profiles, shifts)]
    for i in range(len(aligned)):
        for j in range(i + 1, len(aligned)):
            m = (aligned[i] > floor) | (aligned[j] > floor)
            if np.any(m):
                err = max(err, float(np.max(np.abs(aligned[i][m] - aligned[j][m]))))
    return TravelingFit(c, err, shifts, taus, unreliable)


def predicted_speed(g: float) -> float:
    """UV branch 1/(g - 3/2) for g > 3/2, IR branch 1/g for g < 0."""
    if g > 1.5:
        return 1.0 / (g - 1.5)
    if g < 0:
        return 1.0 / g
    raise ValueError("no traveling-wave prediction for 0 <= g <= 3/2")


# --- self-similar exponents ------------------------------------------------------

@dataclass
class ExponentReport:
    b: float
    temperature_exponent: float
    a: float
    consistency: float
    cooling_slope: float | None = None
    cooling_slope_predicted: float | None = None
    C_plus: float | None = None
    extras: dict = field(default_factory=dict)


def selfsimilar_exponents(times, omega_hat_plus, temperature, mu_hat=None, omega0=None,
                          window=None) -> ExponentReport:
    """Front exponent b, temperature exponent a + b and the check b = -2a - 1."""
    t = np.asarray(times, dtype=float)
    m = _window_mask(t, window)
    tw = t[m]
    if tw.size < 4 or np.log10(tw[-1] / tw[0]) < 1.5:
        raise NoFit("insufficient dynamic range: need 1.5 decades in t")
    b, C_plus, _ = fit_powerlaw(t, omega_hat_plus, window)
    te, _, _ = fit_powerlaw(t, temperature, window)
    a = te - b
    rep = ExponentReport(b, te, a, b - (-2.0 * a - 1.0), C_plus=C_plus)
    if mu_hat is not None and omega0 is not None:
        slope, _, _ = fit_stretched_exp(t, mu_hat, window)
        rep.cooling_slope = slope
        rep.cooling_slope_predicted = -C_plus / omega0
    return rep


def front_prefactor(times, omega_hat_plus, window=None) -> float:
    """C+ in w^+ = C+ t**(1/3) with the exponent held at 1/3 (geometric-mean fit)."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(omega_hat_plus, dtype=float)
    m = _window_mask(t, window) & np.isfinite(v) & (v > 0) & (t > 0)
    if not np.any(m):
        raise NoFit("no usable front samples in the window")
    return float(np.exp(np.mean(np.log(v[m]) - np.log(t[m]) / 3.0)))


def time_unit(C_plus: float, omega0: float, target: float = 5.0) -> float:
    """Factor s such that in t' = s t the front prefactor equals target * w0.

    DAM time carries an unknown overall constant (the prefactor of the
    differential closure). Pinning C+ to a reference value fixes it; a
    stretched exponential exp(C t**(1/3)) then has C' = C * target * w0 / C+.
    """
    return (C_plus / (target * omega0)) ** 3
