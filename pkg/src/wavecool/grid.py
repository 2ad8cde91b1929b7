"""Frequency grids, spectra, conserved integrals and the Rayleigh-Jeans family."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class LogFrequencyGrid:
    """Nodes uniformly spaced in ln(omega) between omega_min and omega_max."""

    omega_min: float
    omega_max: float
    n_points: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    log_nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.omega_min > 0 and self.omega_max > self.omega_min):
            raise ValueError("need 0 < omega_min < omega_max")
        if self.n_points < 8:
            raise ValueError("n_points must be at least 8")
        logs = np.linspace(np.log(self.omega_min), np.log(self.omega_max), self.n_points)
        nodes = np.exp(logs)
        # pin the ends so they equal the requested bounds exactly
        nodes[0] = self.omega_min
        nodes[-1] = self.omega_max
        logs.flags.writeable = False
        nodes.flags.writeable = False
        object.__setattr__(self, "log_nodes", logs)
        object.__setattr__(self, "nodes", nodes)

    @property
    def log_step(self) -> float:
        return float(self.log_nodes[1] - self.log_nodes[0])

    def __len__(self):
        return self.n_points


@dataclass(frozen=True)
class Spectrum:
    """Wave action density on a grid at one time. NaN marks a missing sample."""

    grid: LogFrequencyGrid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise ValueError("values must match the grid length")
        if np.any(v[~np.isnan(v)] < 0):
            raise ValueError("wave action density must be non-negative")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def omega(self) -> np.ndarray:
        return self.grid.nodes


@dataclass(frozen=True)
class RJParams:
    temperature: float
    chemical_potential: float

    def __post_init__(self):
        if not (self.temperature > 0 and self.chemical_potential > 0):
            raise ValueError("T and mu must be positive")


@dataclass(frozen=True)
class ConservedPair:
    waveaction: float
    energy: float

    @property
    def omega0(self) -> float:
        return self.energy / self.waveaction


def rj_eval(params: RJParams, omega):
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("omega must be non-negative")
    return params.temperature / (params.chemical_potential + omega)


def _trapezoid(y, x):
    # missing samples (NaN) drop the adjacent segments
    seg = 0.5 * (y[1:] + y[:-1]) * np.diff(x)
    return float(np.sum(seg[~np.isnan(seg)]))


def total_waveaction(s: Spectrum) -> float:
    return _trapezoid(s.values, s.omega)


def total_energy(s: Spectrum) -> float:
    return _trapezoid(s.omega * s.values, s.omega)


def conserved(s: Spectrum) -> ConservedPair:
    return ConservedPair(total_waveaction(s), total_energy(s))


def energy_spectrum(s: Spectrum) -> np.ndarray:
    return s.omega * s.values


def weighted_profile(s: Spectrum, g: float) -> np.ndarray:
    """W_g = omega**(g + 1/2) * N; g = 0 gives the symmetric profile W."""
    return s.omega ** (g + 0.5) * s.values


def trapezoid_weights(omega: np.ndarray) -> np.ndarray:
    """Weights w with sum(w * f) equal to the trapezoid rule on omega."""
    h = np.diff(omega)
    w = np.zeros_like(omega)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def write_spectrum(s: Spectrum, path) -> None:
    """CSV `omega,N` plus a JSON sidecar; 17 significant digits round-trip exactly."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("omega,N\n")
        for w, n in zip(s.omega, s.values):
            fh.write(f"{w:.17g},{n:.17g}\n")
    meta = {
        "time": s.time,
        "omega_min": s.grid.omega_min,
        "omega_max": s.grid.omega_max,
        "n_points": s.grid.n_points,
    }
    path.with_suffix(".json").write_text(json.dumps(meta))


def read_spectrum(path) -> Spectrum:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    grid = LogFrequencyGrid(meta["omega_min"], meta["omega_max"], int(meta["n_points"]))
    if not np.array_equal(data[:, 0], grid.nodes):
        raise ValueError(f"{path}: omega column does not match the grid metadata")
    return Spectrum(grid, data[:, 1], float(meta["time"]))
