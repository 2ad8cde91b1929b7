"""Pseudospectral 2D defocusing NLS with hyperviscosity.

    i psi_t = -lap psi + |psi|^2 psi - i nu (-lap)^p psi

Spectral coefficients follow psi_hat_k = (1/L^2) int psi e^{-ik.x} d^2x, i.e.
psi_hat = fft2(psi) / n^2, so sum |psi_hat|^2 is the mean of |psi|^2. Time
stepping is ETDRK4 with contour-integral coefficients; the cubic term is
evaluated on a 3n/2 zero-padded grid and the evolving field is kept inside
|k_x|, |k_y| < 3n/8, the band on which the 3/2 rule is alias-free for a
cubic product.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .grid import LogFrequencyGrid, Spectrum


class BlowUpError(FloatingPointError):
    pass


@dataclass(frozen=True)
class NlsConfig:
    resolution: int = 256
    box_size: float = 2 * np.pi
    dt: float = 5e-3
    nu: float | None = None
    hyper_order: int = 8
    amplitude: float = 0.3162
    k0: float = 16.0
    sigma0: float = 0.05
    seed: int = 0
    members: int = 4
    t_end: float = 50.0
    n_outputs: int = 40
    t_first_output: float = 0.5
    dissipation_budget: float = 10.0
    n_bins: int = 64

    def __post_init__(self):
        n = self.resolution
        if n < 8 or n & (n - 1):
            raise ValueError("resolution must be a power of two")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.nu is not None and self.nu < 0:
            raise ValueError("nu must be non-negative")
        if self.members < 1:
            raise ValueError("members must be at least 1")

    @property
    def k_keep(self) -> int:
        """Largest retained |k_i| in units of 2 pi / L."""
        return (3 * self.resolution) // 8 - 1

    @property
    def viscosity(self) -> float:
        """nu; by default chosen so nu k_keep^(2p) t_end equals the dissipation budget."""
        if self.nu is not None:
            return self.nu
        kmax = self.k_keep * 2 * np.pi / self.box_size
        return self.dissipation_budget / (kmax ** (2 * self.hyper_order) * self.t_end)

    def output_times(self) -> np.ndarray:
        if self.n_outputs <= 1:
            return np.array([self.t_end])
        return np.geomspace(min(self.t_first_output, self.t_end), self.t_end, self.n_outputs)

    def analysis_grid(self) -> LogFrequencyGrid:
        dk = 2 * np.pi / self.box_size
        return LogFrequencyGrid(dk * dk, 2.0 * (self.k_keep * dk) ** 2, self.n_bins)


@dataclass(frozen=True)
class ComplexField:
    n: int
    box_size: float
    data: np.ndarray
    representation: str = "spectral"

    def __post_init__(self):
        if self.representation not in ("physical", "spectral"):
            raise ValueError("representation must be physical or spectral")
        if self.data.shape != (self.n, self.n):
            raise ValueError("data must be n x n")

    def to_spectral(self) -> "ComplexField":
        if self.representation == "spectral":
            return self
        return ComplexField(self.n, self.box_size, sfft.fft2(self.data) / self.n ** 2, "spectral")

    def to_physical(self) -> "ComplexField":
        if self.representation == "physical":
            return self
        return ComplexField(self.n, self.box_size, sfft.ifft2(self.data) * self.n ** 2, "physical")


def wavenumbers(n, box_size):
    k = sfft.fftfreq(n, d=1.0 / n) * (2 * np.pi / box_size)
    return k[:, None], k[None, :]


def _integer_modes(n):
    m = np.rint(sfft.fftfreq(n, d=1.0 / n)).astype(int)
    return m[:, None], m[None, :]


def band_mask(n, k_keep):
    mx, my = _integer_modes(n)
    return (np.abs(mx) <= k_keep) & (np.abs(my) <= k_keep)


def member_rng(seed: int, member: int) -> np.random.Generator:
    """Counter-based stream: Philox keyed by (seed, member)."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, member], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def init_random_phase(cfg: NlsConfig, seed: int | None = None, member: int = 0) -> ComplexField:
    """|psi_hat_k| = A exp(-ln^2(|k|/k0) / (2 sigma0^2)), uniform random phases, psi_hat_0 = 0."""
    seed = cfg.seed if seed is None else seed
    n = cfg.resolution
    kx, ky = wavenumbers(n, cfg.box_size)
    kk = np.hypot(kx, ky)
    mod = np.zeros((n, n))
    nz = kk > 0
    mod[nz] = cfg.amplitude * np.exp(-np.log(kk[nz] / cfg.k0) ** 2 / (2 * cfg.sigma0 ** 2))
    mod *= band_mask(n, cfg.k_keep)
    theta = member_rng(seed, member).uniform(0.0, 2 * np.pi, size=(n, n))
    return ComplexField(n, cfg.box_size, mod * np.exp(1j * theta), "spectral")


def _pad(a, m):
    # zero-pad a spectral array from n x n to m x m keeping fft ordering
    n = a.shape[-1]
    h = n // 2
    out = np.zeros(a.shape[:-2] + (m, m), dtype=complex)
    out[..., :h, :h] = a[..., :h, :h]
    out[..., :h, m - h:] = a[..., :h, h:]
    out[..., m - h:, :h] = a[..., h:, :h]
    out[..., m - h:, m - h:] = a[..., h:, h:]
    return out


def _truncate(b, n):
    m = b.shape[-1]
    h = n // 2
    out = np.empty(b.shape[:-2] + (n, n), dtype=complex)
    out[..., :h, :h] = b[..., :h, :h]
    out[..., :h, h:] = b[..., :h, m - h:]
    out[..., h:, :h] = b[..., m - h:, :h]
    out[..., h:, h:] = b[..., m - h:, m - h:]
    # the Nyquist row and column have no partner on the n grid
    out[..., h, :] = 0.0
    out[..., :, h] = 0.0
    return out


def cubic_padded(a, m):
    """Spectral |psi|^2 psi of spectral array(s) a via an m x m zero-padded grid."""
    n = a.shape[-1]
    p = sfft.ifft2(_pad(a, m), axes=(-2, -1)) * (m * m)
    return _truncate(sfft.fft2(p * (p.real ** 2 + p.imag ** 2), axes=(-2, -1)) / (m * m), n)


def dealiased_cubic(field: ComplexField) -> ComplexField:
    """|psi|^2 psi with the 3/2 rule: pad to 3n/2, multiply, transform back, truncate."""
    f = field.to_spectral()
    return ComplexField(f.n, f.box_size, cubic_padded(f.data, 3 * f.n // 2), "spectral")


def linear_symbol(cfg: NlsConfig, nu: float | None = None):
    kx, ky = wavenumbers(cfg.resolution, cfg.box_size)
    k2 = kx * kx + ky * ky
    nu = cfg.viscosity if nu is None else nu
    return -1j * k2 - nu * k2 ** cfg.hyper_order


@dataclass(frozen=True)
class ETDCoefficients:
    E: np.ndarray
    E2: np.ndarray
    Q: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray


def etd_coefficients(L, h, n_contour=64) -> ETDCoefficients:
    """ETDRK4 weights by contour averaging around each h L (stable as h L -> 0).

    L is complex here, so the full circle is needed (the half-circle shortcut
    only holds for real L).
    """
    L = np.asarray(L, dtype=complex)
    r = np.exp(2j * np.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
    flat = (h * L).ravel()
    out = {k: np.empty(flat.size, dtype=complex) for k in ("Q", "f1", "f2", "f3")}
    chunk = 8192
    for s in range(0, flat.size, chunk):
        LR = flat[s:s + chunk, None] + r[None, :]
        eLR = np.exp(LR)
        LR3 = LR ** 3
        out["Q"][s:s + chunk] = h * np.mean((np.exp(LR / 2) - 1) / LR, axis=1)
        out["f1"][s:s + chunk] = h * np.mean((-4 - LR + eLR * (4 - 3 * LR + LR ** 2)) / LR3, axis=1)
        out["f2"][s:s + chunk] = h * np.mean((2 + LR + eLR * (-2 + LR)) / LR3, axis=1)
        out["f3"][s:s + chunk] = h * np.mean((-4 - 3 * LR - LR ** 2 + eLR * (4 - LR)) / LR3, axis=1)
    shape = L.shape
    return ETDCoefficients(np.exp(h * L), np.exp(h * L / 2),
                           *(out[k].reshape(shape) for k in ("Q", "f1", "f2", "f3")))


class NlsStepper:
    """ETDRK4 for psi_hat_t = L psi_hat + N(psi_hat), N = -i FFT(|psi|^2 psi)."""

    def __init__(self, cfg: NlsConfig, nonlinear: bool = True, dt: float | None = None,
                 nu: float | None = None):
        self.cfg = cfg
        self.dt = cfg.dt if dt is None else dt
        self.nonlinear = nonlinear
        self.L = linear_symbol(cfg, nu)
        self.c = etd_coefficients(self.L, self.dt)
        self.mask = band_mask(cfg.resolution, cfg.k_keep)
        self.m = 3 * cfg.resolution // 2

    def N(self, v):
        if not self.nonlinear:
            return np.zeros_like(v)
        return -1j * cubic_padded(v, self.m) * self.mask

    def step(self, v):
        c = self.c
        Nv = self.N(v)
        a = c.E2 * v + c.Q * Nv
        Na = self.N(a)
        b = c.E2 * v + c.Q * Na
        Nb = self.N(b)
        cc = c.E2 * a + c.Q * (2 * Nb - Nv)
        Nc = self.N(cc)
        out = c.E * v + Nv * c.f1 + 2 * (Na + Nb) * c.f2 + Nc * c.f3
        if not np.all(np.isfinite(out)):
            raise BlowUpError("non-finite field after ETDRK4 step")
        return out


def etdrk4_step(field: ComplexField, cfg: NlsConfig, stepper: NlsStepper | None = None) -> ComplexField:
    st = NlsStepper(cfg) if stepper is None else stepper
    f = field.to_spectral()
    return ComplexField(f.n, f.box_size, st.step(f.data), "spectral")


# --- diagnostics -----------------------------------------------------------------

def waveaction(v):
    return float(np.sum(np.abs(v) ** 2))


def quad_energy(v, cfg: NlsConfig):
    kx, ky = wavenumbers(cfg.resolution, cfg.box_size)
    return float(np.sum((kx * kx + ky * ky) * np.abs(v) ** 2))


def hamiltonian(v, cfg: NlsConfig):
    """sum |k|^2 |psi_hat|^2 + (1/2) <|psi|^4>, the box-averaged NLS energy."""
    n = cfg.resolution
    m = 3 * n // 2
    p = sfft.ifft2(_pad(v, m)) * (m * m)
    return quad_energy(v, cfg) + 0.5 * float(np.mean(np.abs(p) ** 4))


@dataclass(frozen=True)
class EnsembleSpectrum:
    spectrum: Spectrum
    members: int
    bin_edges: np.ndarray
    counts: np.ndarray


def _bin_edges(grid: LogFrequencyGrid):
    lw = grid.log_nodes
    mid = 0.5 * (lw[1:] + lw[:-1])
    h = grid.log_step
    return np.exp(np.concatenate([[lw[0] - 0.5 * h], mid, [lw[-1] + 0.5 * h]]))


def extract_spectrum(fields, grid: LogFrequencyGrid, time: float = 0.0) -> EnsembleSpectrum:
    """Angle- and ensemble-averaged N_w on log bins; bins with no modes are NaN.

    The bin value is (1/2) sum_{k in bin} <|psi_hat_k|^2> / bin width, so that
    the integral of N_w over a bin is half the wave action it contains.
    """
    fields = list(fields)
    if not fields:
        raise ValueError("need at least one field")
    n, L = fields[0].n, fields[0].box_size
    if any(f.n != n or f.box_size != L for f in fields):
        raise ValueError("resolution mismatch between ensemble members")
    power = np.mean([np.abs(f.to_spectral().data) ** 2 for f in fields], axis=0)
    kx, ky = wavenumbers(n, L)
    om = (kx * kx + ky * ky).ravel()
    edges = _bin_edges(grid)
    idx = np.searchsorted(edges, om, side="right") - 1
    ok = (idx >= 0) & (idx < grid.n_points) & (om > 0)
    sums = np.bincount(idx[ok], weights=power.ravel()[ok], minlength=grid.n_points)
    counts = np.bincount(idx[ok], minlength=grid.n_points)
    vals = np.where(counts > 0, 0.5 * sums / np.diff(edges), np.nan)
    return EnsembleSpectrum(Spectrum(grid, vals, time), len(fields), edges, counts)


def binned_waveaction(es: EnsembleSpectrum) -> float:
    """Bin-sum estimate of the wave action integral, exact by construction."""
    v = np.nan_to_num(es.spectrum.values)
    return float(np.sum(v * np.diff(es.bin_edges)))


# --- checkpoints ----------------------------------------------------------------
# layout (little endian): magic b"WCK1", int32 n, float64 L, float64 t, uint64 seed,
# int32 member, int64 step, then n*n complex128 values in C order

_HEADER = struct.Struct("<4sidd Q i q".replace(" ", ""))


def write_checkpoint(path, v, cfg: NlsConfig, t: float, member: int, step: int):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(b"WCK1", cfg.resolution, cfg.box_size, t, cfg.seed, member, step))
        fh.write(np.ascontiguousarray(v, dtype="<c16").tobytes())


def read_checkpoint(path):
    raw = Path(path).read_bytes()
    magic, n, L, t, seed, member, step = _HEADER.unpack_from(raw)
    if magic != b"WCK1":
        raise ValueError(f"{path}: not a checkpoint file")
    v = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).reshape(n, n).copy()
    return {"n": n, "L": L, "t": t, "seed": seed, "member": member, "step": step, "data": v}


# --- run ------------------------------------------------------------------------

@dataclass
class NlsRun:
    config: NlsConfig
    spectra: list
    times: np.ndarray
    waveaction: np.ndarray
    quad_energy: np.ndarray
    hamiltonian: np.ndarray
    dissipated: np.ndarray
    fields: np.ndarray
    steps: int


def run_nls(cfg: NlsConfig, resume=None, checkpoint_dir=None, callback=None,
            diagnostics_every: int | None = None) -> NlsRun:
    """Evolve all members together and emit ensemble spectra on the output schedule.

    resume is a list of checkpoint dicts (one per member) from read_checkpoint.
    """
    stepper = NlsStepper(cfg)
    M = cfg.members
    if resume:
        v = np.stack([r["data"] for r in resume])
        t = float(resume[0]["t"])
        step = int(resume[0]["step"])
    else:
        v = np.stack([init_random_phase(cfg, member=m).data for m in range(M)])
        t, step = 0.0, 0
    grid = cfg.analysis_grid()
    wa0 = float(np.mean([waveaction(x) for x in v]))
    outs = [x for x in cfg.output_times() if x > t + 1e-12]
    spectra, ts, wa, qe, ham, dis = [], [], [], [], [], []

    def record():
        ts.append(t)
        w = float(np.mean([waveaction(x) for x in v]))
        wa.append(w)
        qe.append(float(np.mean([quad_energy(x, cfg) for x in v])))
        ham.append(float(np.mean([hamiltonian(x, cfg) for x in v])))
        dis.append(1.0 - w / wa0)

    record()
    for t_out in outs:
        nsteps = int(round((t_out - t) / stepper.dt))
        for _ in range(nsteps):
            v = stepper.step(v)
            step += 1
            t = step * stepper.dt
            if diagnostics_every and step % diagnostics_every == 0:
                record()
        fields = [ComplexField(cfg.resolution, cfg.box_size, x) for x in v]
        es = extract_spectrum(fields, grid, t)
        spectra.append(es)
        if not diagnostics_every or ts[-1] != t:
            record()
        if checkpoint_dir is not None:
            for m in range(M):
                write_checkpoint(Path(checkpoint_dir) / f"member{m}.ckpt", v[m], cfg, t, m, step)
        if callback is not None:
            callback(es)
    return NlsRun(cfg, spectra, np.array(ts), np.array(wa), np.array(qe), np.array(ham),
                  np.array(dis), v, step)


def with_dt(cfg: NlsConfig, dt: float) -> NlsConfig:
    return replace(cfg, dt=dt)
