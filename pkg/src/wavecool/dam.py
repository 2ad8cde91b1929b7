"""Differential approximation model for the wave action density.

    dN/dt = d2/dw2 ( w**5 N**4 d2/dw2 (1/N) )

written as a continuity equation dN/dt + dQ/dw = 0 with K = w**5 N**4 (1/N)'',
Q = -dK/dw and P = w Q + K. Space uses three-point stencils exact for
quadratics on the log grid; time uses two-step Adams-Bashforth with adaptive
steps and a positivity floor that marks vacuum.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numba as nb
import numpy as np

from .grid import LogFrequencyGrid, Spectrum, conserved, trapezoid_weights


class DamError(RuntimeError):
    """Numerical failure: positivity or dt underflow."""


class PositivityError(DamError):
    pass


@dataclass(frozen=True)
class DamConfig:
    omega_min: float = 1e-10
    omega_max: float = 1e8
    n_points: int = 1200
    omega0: float = 1.0
    sigma0: float = 0.1
    amplitude: float = 1.0
    t_end: float = 100.0
    dt_init: float = 1e-12
    dt_min: float = 1e-300
    safety: float = 0.1
    stability: float = 0.9
    floor_fraction: float = 1e-30
    n_outputs: int = 40
    t_first_output: float = 1e-2
    front_floor: float = 1e-15
    boundary_decades: float = 1.0
    max_steps: int = 10**10

    def __post_init__(self):
        if not (0 < self.omega_min < self.omega0 < self.omega_max):
            raise ValueError("need omega_min < omega0 < omega_max")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if not (0 < self.safety and 0 < self.stability):
            raise ValueError("dt controls must be positive")

    @property
    def grid(self) -> LogFrequencyGrid:
        return LogFrequencyGrid(self.omega_min, self.omega_max, self.n_points)

    @property
    def floor(self) -> float:
        return self.floor_fraction * self.amplitude

    def output_times(self) -> np.ndarray:
        if self.n_outputs <= 1:
            return np.array([self.t_end])
        t0 = min(self.t_first_output, self.t_end)
        return np.geomspace(t0, self.t_end, self.n_outputs)


def initial_condition(cfg: DamConfig) -> Spectrum:
    grid = cfg.grid
    w = grid.nodes
    N = cfg.amplitude * np.exp(-((w - cfg.omega0) ** 2) / (2.0 * cfg.sigma0 ** 2))
    return Spectrum(grid, np.maximum(N, cfg.floor), 0.0)


@dataclass(frozen=True)
class FluxTriple:
    K: np.ndarray
    Q: np.ndarray
    P: np.ndarray


def _spacings(w):
    hm = np.zeros_like(w)
    hp = np.zeros_like(w)
    hm[1:] = np.diff(w)
    hp[:-1] = np.diff(w)
    return hm, hp


def _check_positive(N, floor=0.0):
    if np.any(~(N > floor)):
        raise PositivityError("wave action at or below the positivity floor")


def _K(w, N):
    hm, hp = _spacings(w)
    inv = 1.0 / N
    K = np.zeros_like(N)
    a, b, c = inv[:-2], inv[1:-1], inv[2:]
    h0, h1 = hm[1:-1], hp[1:-1]
    d2 = 2.0 * ((c - b) / h1 - (b - a) / h0) / (h0 + h1)
    K[1:-1] = w[1:-1] ** 5 * N[1:-1] ** 4 * d2
    return K


def dam_fluxes(s: Spectrum, floor: float = 0.0) -> FluxTriple:
    """Node values of K, Q = -dK/dw and P = w Q + K; zero at both ends."""
    w = s.omega
    N = np.asarray(s.values, dtype=float)
    _check_positive(N, floor)
    K = _K(w, N)
    hm, hp = _spacings(w)
    Q = np.zeros_like(N)
    h0, h1 = hm[1:-1], hp[1:-1]
    # centred first derivative, exact for quadratics on uneven spacing
    dK = (-h1 / (h0 * (h0 + h1)) * K[:-2] + (h1 - h0) / (h0 * h1) * K[1:-1]
          + h0 / (h1 * (h0 + h1)) * K[2:])
    Q[1:-1] = -dK
    P = w * Q + K
    return FluxTriple(K, Q, P)


def dam_rhs(s: Spectrum, floor: float = 0.0) -> np.ndarray:
    """-dQ/dw in flux form: face fluxes (K_{i+1}-K_i)/h over trapezoid cell widths."""
    w = s.omega
    N = np.asarray(s.values, dtype=float)
    _check_positive(N, floor)
    return _rhs_from_K(w, _K(w, N))


def _rhs_from_K(w, K):
    flux = np.diff(K) / np.diff(w)
    div = np.zeros_like(K)
    div[:-1] += flux
    div[1:] -= flux
    return div / trapezoid_weights(w)


@dataclass(frozen=True)
class DamState:
    spectrum: Spectrum
    dt: float
    prev_rhs: np.ndarray = field(repr=False)
    step_count: int = 0
    prev_dt: float = -1.0

    def __post_init__(self):
        if len(self.prev_rhs) != self.spectrum.grid.n_points:
            raise ValueError("prev_rhs must match the grid length")


def initial_state(cfg: DamConfig, spectrum: Spectrum | None = None) -> DamState:
    s = initial_condition(cfg) if spectrum is None else spectrum
    return DamState(s, cfg.dt_init, np.zeros(s.grid.n_points), 0, -1.0)


def _stability_rate(w, N, vac):
    # largest |eigenvalue| of the linearised operator: 16 w^5 N^4 / (h^4 N_min^2)
    hm, hp = _spacings(w)
    h = np.minimum(np.where(hm > 0, hm, np.inf), np.where(hp > 0, hp, np.inf))
    act = N > vac
    nb_min = N.copy()
    left = np.r_[np.inf, np.where(act[:-1], N[:-1], np.inf)]
    right = np.r_[np.where(act[1:], N[1:], np.inf), np.inf]
    nb_min = np.minimum(nb_min, np.minimum(left, right))
    lam = 16.0 * w ** 5 * N ** 4 / (h ** 4 * nb_min ** 2)
    return float(np.max(lam[act], initial=0.0))


def propose_dt(w, N, rhs, dt_prev, floor, safety, stability):
    vac = floor * (1.0 + 1e-9)
    use = ~((N <= vac) & (rhs <= 0)) & (rhs != 0)
    dt = dt_prev * 1.1
    if np.any(use):
        dt = min(dt, safety * float(np.min(N[use] / np.abs(rhs[use]))))
    lam = _stability_rate(w, N, vac)
    if lam > 0:
        dt = min(dt, stability / lam)
    return dt


def step_ab2(state: DamState, cfg: DamConfig, dt: float | None = None) -> DamState:
    """One variable-step AB2 step (forward Euler on the first step).

    With dt given the step size is fixed; otherwise the adaptive rule picks it.
    A step that pushes an active node to the floor is rejected and retried
    with half the step.
    """
    s = state.spectrum
    w = s.omega
    N = np.asarray(s.values)
    floor = cfg.floor
    vac = floor * (1.0 + 1e-9)
    f = _rhs_from_K(w, _K(w, N))
    if dt is None:
        dt = propose_dt(w, N, f, state.dt, floor, cfg.safety, cfg.stability)
    while True:
        if dt < cfg.dt_min:
            raise DamError("time step underflow")
        if state.prev_dt < 0:
            new = N + dt * f
        else:
            r = dt / state.prev_dt
            new = N + dt * ((1.0 + 0.5 * r) * f - 0.5 * r * state.prev_rhs)
        low = new <= floor
        if np.any(low & (N > vac)):
            dt *= 0.5
            continue
        new = np.where(low, floor, new)
        break
    out = Spectrum(s.grid, new, s.time + dt)
    return DamState(out, dt, f, state.step_count + 1, dt)


# --- compiled integrator ----------------------------------------------------

@nb.njit(cache=True)
def _rhs_window(w, N, K, f, hm, hp, wt, lo, hi):
    n = N.size
    k0 = max(lo - 1, 1)
    k1 = min(hi + 1, n - 2)
    for i in range(max(lo - 2, 0), min(hi + 3, n)):
        K[i] = 0.0
    for i in range(k0, k1 + 1):
        a = 1.0 / N[i - 1]
        b = 1.0 / N[i]
        c = 1.0 / N[i + 1]
        d2 = 2.0 * ((c - b) / hp[i] - (b - a) / hm[i]) / (hm[i] + hp[i])
        n2 = N[i] * N[i]
        w2 = w[i] * w[i]
        K[i] = w2 * w2 * w[i] * n2 * n2 * d2
    for i in range(max(lo - 2, 0), min(hi + 3, n)):
        fl = 0.0
        fr = 0.0
        if i > 0:
            fl = (K[i] - K[i - 1]) / hm[i]
        if i < n - 1:
            fr = (K[i + 1] - K[i]) / hp[i]
        f[i] = (fr - fl) / wt[i]


@nb.njit(cache=True)
def _active_range(N, vac, lo, hi):
    n = N.size
    a = max(lo - 3, 0)
    b = min(hi + 3, n - 1)
    while a < n - 1 and N[a] <= vac:
        a += 1
    while b > 0 and N[b] <= vac:
        b -= 1
    return a, b


@nb.njit(cache=True)
def _advance(w, N, f, fprev, K, Nn, hm, hp, hmin, wt, t, t_stop, dt, dtprev,
             floor, safety, stability, dt_min, max_steps):
    """Integrate in place from t to t_stop. Returns (t, dt, dtprev, steps, rejections, code)."""
    n = N.size
    vac = floor * (1.0 + 1e-9)
    lo, hi = _active_range(N, vac, 0, n - 1)
    _rhs_window(w, N, K, f, hm, hp, wt, lo, hi)
    steps = 0
    rej = 0
    while t < t_stop:
        if steps >= max_steps:
            return t, dt, dtprev, steps, rej, 2
        a = max(lo - 2, 0)
        b = min(hi + 2, n - 1)
        dtacc = 1e300
        lam = 0.0
        for i in range(a, b + 1):
            if N[i] <= vac and f[i] <= 0.0:
                continue
            if f[i] != 0.0:
                r = N[i] / abs(f[i])
                if r < dtacc:
                    dtacc = r
            if N[i] > vac:
                mn = N[i]
                if i > 0 and N[i - 1] > vac and N[i - 1] < mn:
                    mn = N[i - 1]
                if i < n - 1 and N[i + 1] > vac and N[i + 1] < mn:
                    mn = N[i + 1]
                h2 = hmin[i] * hmin[i]
                n2 = N[i] * N[i]
                wi = w[i]
                l = 16.0 * wi * wi * wi * wi * wi * n2 * n2 / (h2 * h2 * mn * mn)
                if l > lam:
                    lam = l
        dtn = min(dt * 1.1, safety * dtacc)
        if lam > 0.0:
            dtn = min(dtn, stability / lam)
        last = False
        if t + dtn >= t_stop:
            dtn = t_stop - t
            last = True
        while True:
            if dtn < dt_min:
                return t, dt, dtprev, steps, rej, 1
            if dtprev < 0.0:
                c1 = 1.0
                c2 = 0.0
            else:
                r = dtn / dtprev
                c1 = 1.0 + 0.5 * r
                c2 = -0.5 * r
            ok = True
            for i in range(a, b + 1):
                v = N[i] + dtn * (c1 * f[i] + c2 * fprev[i])
                if v <= floor:
                    if N[i] <= vac:
                        v = floor
                    else:
                        ok = False
                        break
                Nn[i] = v
            if ok:
                break
            dtn *= 0.5
            last = False
            rej += 1
        for i in range(a, b + 1):
            N[i] = Nn[i]
            fprev[i] = f[i]
        t = t_stop if last else t + dtn
        # growth restarts from a clipped step, which keeps the AB2 step ratio bounded
        dt = dtn
        dtprev = dtn
        lo, hi = _active_range(N, vac, lo, hi)
        _rhs_window(w, N, K, f, hm, hp, wt, lo, hi)
        steps += 1
    return t, dt, dtprev, steps, rej, 0


@dataclass
class DamRun:
    config: DamConfig
    snapshots: list
    conserved_t: np.ndarray
    conserved_N: np.ndarray
    conserved_E: np.ndarray
    status: str
    steps: int
    rejections: int

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])


def absolute_support(N, w, floor_fraction):
    above = np.nonzero(N > floor_fraction * np.max(N))[0]
    return w[above[0]], w[above[-1]]


def run_dam(cfg: DamConfig, spectrum: Spectrum | None = None, callback=None) -> DamRun:
    """Integrate to t_end or until a front comes within boundary_decades of the grid edge.

    Snapshots land exactly on the output schedule. callback(spectrum) is called
    for each snapshot as it is produced.
    """
    s0 = initial_condition(cfg) if spectrum is None else spectrum
    w = s0.omega.copy()
    N = np.array(s0.values, dtype=float)
    _check_positive(N, 0.0)
    n = N.size
    hm, hp = _spacings(w)
    hmin = np.minimum(np.where(hm > 0, hm, np.inf), np.where(hp > 0, hp, np.inf))
    wt = trapezoid_weights(w)
    f = np.zeros(n)
    fprev = np.zeros(n)
    K = np.zeros(n)
    Nn = np.zeros(n)
    t, dt, dtprev = s0.time, cfg.dt_init, -1.0
    c0 = conserved(s0)
    snaps = []
    ct, cN, cE = [t], [c0.waveaction], [c0.energy]
    steps = rej = 0
    status = "completed"
    lo_edge = cfg.omega_min * 10.0 ** cfg.boundary_decades
    hi_edge = cfg.omega_max / 10.0 ** cfg.boundary_decades
    for t_out in cfg.output_times():
        if t_out <= t:
            continue
        t, dt, dtprev, k, r, code = _advance(
            w, N, f, fprev, K, Nn, hm, hp, hmin, wt, t, float(t_out), dt, dtprev,
            cfg.floor, cfg.safety, cfg.stability, cfg.dt_min, cfg.max_steps - steps)
        steps += k
        rej += r
        if code == 1:
            raise DamError(f"time step underflow at t={t:.6g}")
        if not np.all(np.isfinite(N)):
            raise PositivityError(f"non-finite wave action at t={t:.6g}")
        snap = Spectrum(s0.grid, N.copy(), t)
        snaps.append(snap)
        c = conserved(snap)
        ct.append(t)
        cN.append(c.waveaction)
        cE.append(c.energy)
        if callback is not None:
            callback(snap)
        if code == 2:
            status = "max-steps"
            break
        wm, wp = absolute_support(N, w, cfg.front_floor)
        if wm <= lo_edge or wp >= hi_edge:
            status = "boundary"
            break
    return DamRun(cfg, snaps, np.array(ct), np.array(cN), np.array(cE), status, steps, rej)


def rescale_config(cfg: DamConfig, lam: float, nu: float) -> DamConfig:
    """Image of a config under w -> lam w, N -> nu N; time maps to t / (nu**2 lam)."""
    tf = 1.0 / (nu * nu * lam)
    return replace(
        cfg,
        omega_min=cfg.omega_min * lam,
        omega_max=cfg.omega_max * lam,
        omega0=cfg.omega0 * lam,
        sigma0=cfg.sigma0 * lam,
        amplitude=cfg.amplitude * nu,
        t_end=cfg.t_end * tf,
        t_first_output=cfg.t_first_output * tf,
        dt_init=cfg.dt_init * tf,
        dt_min=cfg.dt_min * tf,
    )


def characteristic_rhs_scale(cfg: DamConfig) -> float:
    """max |rhs| of the Gaussian initial condition."""
    return float(np.max(np.abs(dam_rhs(initial_condition(cfg)))))
