"""Four-wave interaction kernel, power-law convergence scans and nonlocal reductions.

The kernel is S = S1 * K(q) with

    S1 = 4 / (pi * (sqrt(w w1) + sqrt(w2 w3)))
    q  = 2 (w w1 w2 w3)**(1/4) / (sqrt(w w1) + sqrt(w2 w3))

and K the complete elliptic integral of the first kind. On resonance
(w3 = w + w1 - w2) the complementary modulus has the cancellation-free form

    q' = |(w - w2)(w1 - w2)| / (sqrt(w w1) + sqrt(w2 w3))**2

which is what the evaluation uses near the logarithmic singularity at q = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Spectrum

Q_CLAMP_EPS = 1e-14
_QP_MIN = math.sqrt(Q_CLAMP_EPS * (2.0 - Q_CLAMP_EPS))

REGIONS = ("a", "b", "c", "d", "e")


def _agm(a, b):
    a = np.asarray(a, dtype=float).copy()
    b = np.asarray(b, dtype=float).copy()
    for _ in range(64):
        a, b = 0.5 * (a + b), np.sqrt(a * b)
        if np.all(np.abs(a - b) <= 1e-16 * np.abs(a)):
            break
    return 0.5 * (a + b)


def elliptic_K_complement(qp):
    """K as a function of the complementary modulus q' = sqrt(1 - q**2)."""
    qp = np.asarray(qp, dtype=float)
    if np.any(qp <= 0) or np.any(qp > 1):
        raise ValueError("complementary modulus must lie in (0, 1]")
    out = np.pi / (2.0 * _agm(np.ones_like(qp), qp))
    return out if out.ndim else float(out)


def elliptic_K(q):
    """Complete elliptic integral of the first kind by the AGM, 0 <= q < 1."""
    q = np.asarray(q, dtype=float)
    if np.any(q < 0) or np.any(q >= 1):
        raise ValueError("elliptic modulus must satisfy 0 <= q < 1 (log singularity at q = 1)")
    return elliptic_K_complement(np.sqrt((1.0 - q) * (1.0 + q)))


@dataclass(frozen=True)
class Quartet:
    omega: float
    omega1: float
    omega2: float
    omega3: float

    @classmethod
    def resonant(cls, omega, omega1, omega2):
        omega3 = omega + omega1 - omega2
        if min(omega, omega1, omega2, omega3) < 0:
            raise ValueError("resonance would give a negative frequency")
        return cls(float(omega), float(omega1), float(omega2), float(omega3))


@dataclass(frozen=True)
class KernelValue:
    S1: float
    q: float
    K_of_q: float
    S: float


def kernel_arrays(w, w1, w2, w3, clamp=True):
    """Vectorised kernel on resonant quartets; returns (S1, q, q', K, S).

    With clamp=False only exactly degenerate quartets (q' = 0) are clamped;
    the scans use this to keep the logarithmic singularity visible.
    """
    w, w1, w2, w3 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (w, w1, w2, w3)))
    if np.any(w <= 0) or np.any(w1 <= 0) or np.any(w2 <= 0) or np.any(w3 <= 0):
        raise ValueError("kernel needs strictly positive frequencies")
    a = np.sqrt(w * w1)
    b = np.sqrt(w2 * w3)
    den = a + b
    S1 = 4.0 / (np.pi * den)
    q = 2.0 * np.sqrt(a) * np.sqrt(b) / den
    qp = np.abs((w - w2) * (w1 - w2)) / (den * den)
    # q >= 1 - eps is clamped onto the integrable log singularity
    if clamp:
        clamped = (qp < _QP_MIN) | (q >= 1.0 - Q_CLAMP_EPS)
    else:
        clamped = qp == 0.0
    qp = np.where(clamped, _QP_MIN, np.minimum(qp, 1.0))
    q = np.where(clamped, 1.0 - Q_CLAMP_EPS, q)
    K = elliptic_K_complement(qp)
    return S1, q, qp, K, S1 * K


def kernel_S(quartet: Quartet) -> KernelValue:
    S1, q, _, K, S = kernel_arrays(quartet.omega, quartet.omega1, quartet.omega2, quartet.omega3)
    return KernelValue(float(S1), float(q), float(K), float(S))


def detailed_balance(n, quartet: Quartet | None = None) -> float:
    """1/N + 1/N1 - 1/N2 - 1/N3 for the four wave action values n."""
    n0, n1, n2, n3 = (float(v) for v in n)
    if min(n0, n1, n2, n3) <= 0:
        raise ValueError("wave action values must be positive")
    return 1.0 / n0 + 1.0 / n1 - 1.0 / n2 - 1.0 / n3


# --- power-law scans -----------------------------------------------------

def _pow(u, x):
    return np.exp(x * np.log(u))


def _pm1(u, x):
    # (1 + u)**x - 1 without cancellation
    return np.expm1(x * np.log1p(u))


def _integrand(x, w1, w2, bracket, jac=1.0):
    # reduced integrand at w = 1: S (w1 w2 w3)**-x * bracket * jacobian
    w3 = 1.0 + w1 - w2
    *_, S = kernel_arrays(1.0, w1, w2, w3, clamp=False)
    return S * np.exp(-x * (np.log(w1) + np.log(w2) + np.log(w3))) * bracket * jac


def _scale(*terms):
    return sum(np.abs(t) for t in terms)


def predicted_exponent(region: str, x: float) -> float:
    """Power of r in the region's integrand, Jacobian included (log factors dropped)."""
    if region == "a":
        return 3.0
    if region == "b":
        return -x if x > 0 else 0.0
    if region == "c":
        return 0.5 - x if x < 1 else 1.5 - 2.0 * x
    if region == "d":
        return -2.0 * x if x >= 0 else -3.0 * x
    if region == "e":
        return float("nan")
    raise ValueError(f"unknown region {region!r}")


def _region_limit(region):
    return "inf" if region in ("d", "e") else "zero"


def _default_range(region, x):
    # keep the leading term dominant by >= 2 decades at the window edge
    if region == "a":
        return (1e-7, 1e-4)
    if region == "b":
        gap = abs(x)
    elif region == "c":
        gap = abs(1.0 - x)
    elif region == "d":
        gap = abs(x)
    else:
        return (1e-6, 1e-3) if _region_limit(region) == "zero" else (1e3, 1e6)
    k = 3.0 if gap == 0 else min(max(3.0, 2.0 / gap), 90.0)
    if region == "d":
        return (10.0 ** k, 10.0 ** (k + 3))
    return (10.0 ** -(k + 3), 10.0 ** -k)


def _region_samples(region, x, r):
    """Integrand magnitude per direction: list of (values, bracket, bracket_scale)."""
    out = []
    if region == "a":
        for th in (np.pi / 3, 2 * np.pi / 3, 7 * np.pi / 6):
            a, b = r * np.cos(th), r * np.sin(th)
            t = (_pm1(a, x), _pm1(b, x), _pm1(a - b, x))
            br = t[0] - t[1] - t[2]
            out.append((_integrand(x, 1.0 + a, 1.0 + b, br, r), br, _scale(*t)))
    elif region == "b":
        for w2 in (0.3, 0.6):
            w3 = 1.0 + r - w2
            t = (1.0, _pow(r, x), _pow(w2, x), _pow(w3, x))
            br = t[0] + t[1] - t[2] - t[3]
            out.append((_integrand(x, r, np.full_like(r, w2), br), br, _scale(*t)))
    elif region == "c":
        for th in (np.pi / 8, 3 * np.pi / 8):
            w1, w2 = r * np.cos(th), r * np.sin(th)
            t = (_pow(w1, x), _pow(w2, x), _pm1(w1 - w2, x))
            br = t[0] - t[1] - t[2]
            out.append((_integrand(x, w1, w2, br, r), br, _scale(*t)))
    elif region == "d":
        for th in (np.pi / 12, np.pi / 8, np.pi / 6):
            w1, w2 = r * np.cos(th), r * np.sin(th)
            w3 = 1.0 + w1 - w2
            t = (1.0, _pow(w1, x), _pow(w2, x), _pow(w3, x))
            br = t[0] + t[1] - t[2] - t[3]
            out.append((_integrand(x, w1, w2, br, r), br, _scale(*t)))
    elif region == "e":
        # w1 = w2 exactly, so w3 = w = 1
        w1 = r / np.sqrt(2.0)
        t = (1.0, _pow(w1, x), _pow(w1, x), 1.0)
        # grouped so the cancellation is exact in floating point
        br = (t[0] - t[3]) + (t[1] - t[2])
        out.append((_integrand(x, w1, w1, br, r), br, _scale(*t)))
    else:
        raise ValueError(f"unknown region {region!r}")
    return out


@dataclass(frozen=True)
class RegionScan:
    region: str
    x: float
    measured: float
    predicted: float
    convergent: bool
    identically_zero: bool = False
    r_squared: float = 1.0


class FitFailure(RuntimeError):
    pass


MARGINAL_BAND = 0.02


def _verdict(region, p):
    if _region_limit(region) == "zero":
        return p > -1.0 + MARGINAL_BAND
    return p < -1.0 - MARGINAL_BAND


def region_scan(x: float, region: str, scale_range=None, n_samples: int = 31) -> RegionScan:
    """Fit the power of r of the reduced integrand in one limiting region."""
    if region not in REGIONS:
        raise ValueError(f"unknown region {region!r}")
    lo, hi = scale_range if scale_range is not None else _default_range(region, x)
    if np.log10(hi / lo) < 3.0 - 1e-9:
        raise ValueError("scale_range must span at least 3 decades")
    r = np.geomspace(lo, hi, n_samples)
    samples = _region_samples(region, x, r)
    if all(np.all(np.abs(br) <= 1e-12 * sc) for _, br, sc in samples):
        return RegionScan(region, x, float("nan"), predicted_exponent(region, x), True, True)
    slopes, r2s = [], []
    for vals, _, _ in samples:
        y = np.abs(vals)
        if region == "a":
            y = y / np.log(1.0 / r)
        if np.any(y == 0) or not np.all(np.isfinite(y)):
            raise FitFailure(f"region {region}, x={x}: degenerate integrand samples")
        lr, ly = np.log(r), np.log(y)
        slope, icpt = np.polyfit(lr, ly, 1)
        resid = ly - (slope * lr + icpt)
        ss = np.sum((ly - ly.mean()) ** 2)
        # R^2 is undefined for a flat profile; accept it when the residual is tiny
        flat = np.sqrt(np.mean(resid ** 2)) < 1e-2 and abs(slope) < 0.05
        r2 = 1.0 if flat or ss == 0 else 1.0 - np.sum(resid ** 2) / ss
        slopes.append(slope)
        r2s.append(r2)
    r2 = float(min(r2s))
    if r2 < 0.99:
        raise FitFailure(f"region {region}, x={x}: power-law fit R^2={r2:.4f} < 0.99")
    p = float(np.mean(slopes))
    return RegionScan(region, x, p, predicted_exponent(region, x), _verdict(region, p), False, r2)


@dataclass(frozen=True)
class ConvergenceWindow:
    """Convergent set: the interval (lower, upper] plus isolated points."""

    lower: float
    upper: float
    lower_open: bool
    upper_open: bool
    isolated: tuple
    xs: tuple
    verdicts: dict

    def contains(self, x: float) -> bool:
        if any(abs(x - p) < 1e-9 for p in self.isolated):
            return True
        above = x > self.lower if self.lower_open else x >= self.lower - 1e-9
        below = x < self.upper if self.upper_open else x <= self.upper + 1e-9
        return above and below


def _sweep_xs(x_min, x_max, step):
    n = int(round((x_max - x_min) / step))
    return [round(x_min + i * step, 10) for i in range(n + 1)]


def _window_from(xs, ok):
    runs, cur = [], []
    for x, good in zip(xs, ok):
        if good:
            cur.append(x)
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    if not runs:
        return None
    main = max(runs, key=len)
    isolated = tuple(run[0] for run in runs if len(run) == 1 and run is not main)
    i0, i1 = xs.index(main[0]), xs.index(main[-1])
    # an endpoint is open when the neighbouring sample on that side is divergent
    lower_open = i0 > 0
    upper_open = i1 == len(xs) - 1
    lower = xs[i0 - 1] if lower_open else main[0]
    upper = main[-1]
    return lower, upper, lower_open, upper_open, isolated


def region_table(x_min=-0.1, x_max=1.5, step=0.05, regions=REGIONS):
    """xs and, per region, the RegionScan at every x of the sweep."""
    xs = _sweep_xs(x_min, x_max, step)
    return xs, {reg: [region_scan(x, reg) for x in xs] for reg in regions}


def region_verdicts(x_min=-0.1, x_max=1.5, step=0.05, regions=REGIONS):
    xs, table = region_table(x_min, x_max, step, regions)
    return xs, {reg: [sc.convergent for sc in scans] for reg, scans in table.items()}


def window_from_table(xs, table) -> ConvergenceWindow:
    verdicts = {reg: [sc.convergent for sc in scans] for reg, scans in table.items()}
    ok = [all(v[i] for v in verdicts.values()) for i in range(len(xs))]
    found = _window_from(list(xs), ok)
    if found is None:
        return ConvergenceWindow(float("nan"), float("nan"), True, True, (), tuple(xs), verdicts)
    lower, upper, lo_open, up_open, isolated = found
    return ConvergenceWindow(lower, upper, lo_open, up_open, isolated, tuple(xs), verdicts)


def convergence_window(x_min=-0.1, x_max=1.5, step=0.05, regions=REGIONS) -> ConvergenceWindow:
    """Intersect per-region verdicts over an x sweep."""
    return window_from_table(*region_table(x_min, x_max, step, regions))


# --- nonlocal reductions --------------------------------------------------

class NonIntegrableError(ValueError):
    pass


def _interp_factory(s: Spectrum):
    lw = s.grid.log_nodes
    v = np.nan_to_num(s.values, nan=0.0)

    def N(omega):
        omega = np.asarray(omega, dtype=float)
        out = np.interp(np.log(np.maximum(omega, s.grid.omega_min)), lw, v, right=0.0)
        return np.where(omega > s.grid.omega_max, 0.0, out)

    return N


def _log_weights(n, h):
    # trapezoid in ln(omega); node 0 also carries the sub-grid tail assuming
    # the integrand times omega decays like sqrt(omega) towards zero
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    w[0] += 2.0
    return w


def _lowfreq_pass(s: Spectrum, stride: int):
    N = _interp_factory(s)
    om = s.grid.nodes[::stride]
    h = s.grid.log_step * stride
    v = np.nan_to_num(s.values, nan=0.0)[::stride]
    w2, w3 = np.meshgrid(om, om, indexing="ij")
    n2, n3 = np.meshgrid(v, v, indexing="ij")
    n1 = N(w2 + w3)
    # measure d(w2) d(w3) = w2 w3 dlnw2 dlnw3
    base = 0.5 * np.sqrt(w2 * w3)
    wt = _log_weights(om.size, h)
    W = np.outer(wt, wt)
    A = float(np.sum(W * base * n1 * n2 * n3))
    B = float(np.sum(W * base * (n2 * n3 - n1 * n3 - n1 * n2)))
    edge = base * n1 * n2 * n3
    tail = float(np.sum(2.0 * wt * edge[0, :]) + np.sum(2.0 * wt * edge[:, 0]))
    return A, B, tail


@dataclass(frozen=True)
class LowFreqCoeffs:
    A: float
    B: float
    refinement_error: float


def nonlocal_lowfreq_coeffs(s: Spectrum) -> LowFreqCoeffs:
    """A and B of dN/dt = A + B N for the low-frequency nonlocal reduction."""
    A, B, tail = _lowfreq_pass(s, 1)
    if A == 0.0 and B == 0.0:
        return LowFreqCoeffs(0.0, 0.0, 0.0)
    if tail > 0.1 * abs(A):
        raise NonIntegrableError("low-frequency tail carries a non-negligible share: divergent input")
    A2, B2, _ = _lowfreq_pass(s, 2)
    scale = max(abs(A), abs(B))
    err = max(abs(A - A2), abs(B - B2)) / scale
    return LowFreqCoeffs(A, B, err)


def plateau_level(A_tilde: float, B_tilde: float, a: float = -2.0 / 3.0) -> float:
    """Constant self-similar low-frequency profile A~/(a - B~); needs a > B~."""
    if not a > B_tilde:
        raise ValueError("plateau requires a > B~ for a positive constant solution")
    return A_tilde / (a - B_tilde)


def nonlocal_uv_rhs(s: Spectrum, omega: float, n_quad: int = 4000) -> float:
    """Three-wave reduced collision term C(t) * int(R^w_23 - R^3_2w - R^2_3w) at omega."""
    if not (s.grid.omega_min <= omega <= s.grid.omega_max):
        raise ValueError("omega must lie on the grid range")
    N = _interp_factory(s)
    v = np.nan_to_num(s.values, nan=0.0)
    C = 0.5 * float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(s.grid.nodes)))
    if C == 0.0:
        return 0.0
    nw = float(N(omega))
    lo = np.log(s.grid.omega_min)

    # merger term: symmetric about omega/2, integrate over [0, omega/2] in ln(w2)
    if omega / 2 > s.grid.omega_min:
        u = np.linspace(lo, np.log(omega / 2), n_quad)
        w2 = np.exp(u)
        w3 = omega - w2
        n2, n3 = N(w2), N(w3)
        f = (n2 * n3 - nw * (n2 + n3)) / np.sqrt(w2 * w3) * w2
        h = u[1] - u[0]
        merge = 2.0 * (h * (np.sum(f) - 0.5 * (f[0] + f[-1])) + 2.0 * f[0])
    else:
        merge = 0.0

    # splitting terms: w3 = w2 + omega, w2 over the whole grid
    u = np.linspace(lo, np.log(s.grid.omega_max), n_quad)
    w2 = np.exp(u)
    n2, n3 = N(w2), N(w2 + omega)
    f = (n2 * nw - n3 * (nw + n2)) / np.sqrt(w2 * omega) * w2
    h = u[1] - u[0]
    split = h * (np.sum(f) - 0.5 * (f[0] + f[-1])) + 2.0 * f[0]
    return C * (merge - 2.0 * split)
