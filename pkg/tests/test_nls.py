import itertools
import math

import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st

from wavecool import nls
from wavecool.grid import LogFrequencyGrid

SMALL = nls.NlsConfig(resolution=32, dt=1e-3, nu=0.0, amplitude=0.3, k0=4.0, sigma0=0.1,
                      members=2, t_end=0.02, n_outputs=2, t_first_output=0.01, n_bins=16)


def random_band(n, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    a = scale * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return a * nls.band_mask(n, (3 * n) // 8 - 1)


# --- fields and transforms ------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.sampled_from([8, 16, 32, 64]), st.integers(0, 2**32 - 1))
def test_roundtrip_and_parseval(n, seed):
    rng = np.random.default_rng(seed)
    phys = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    f = nls.ComplexField(n, 2 * np.pi, phys, "physical")
    spec = f.to_spectral()
    back = spec.to_physical()
    assert np.allclose(back.data, phys, rtol=0, atol=1e-13 * np.max(np.abs(phys)))
    assert np.sum(np.abs(spec.data) ** 2) == pytest.approx(np.mean(np.abs(phys) ** 2), rel=1e-12)


def test_field_validation():
    with pytest.raises(ValueError):
        nls.ComplexField(8, 1.0, np.zeros((8, 4)))
    with pytest.raises(ValueError):
        nls.ComplexField(8, 1.0, np.zeros((8, 8)), "wavelet")


@pytest.mark.parametrize("n", [6, 300, 4])
def test_config_rejects_resolution(n):
    with pytest.raises(ValueError):
        nls.NlsConfig(resolution=n)


def test_band_is_alias_free_width():
    cfg = nls.NlsConfig(resolution=256)
    assert cfg.k_keep == 95
    # triple products of |k| <= K alias onto |q| <= K only if 3K >= 3n/2 - K
    assert 4 * cfg.k_keep < 3 * 256 // 2


def test_viscosity_budget():
    cfg = nls.NlsConfig(resolution=64, t_end=5.0, dissipation_budget=10.0)
    assert cfg.viscosity * (cfg.k_keep ** 16) * cfg.t_end == pytest.approx(10.0)
    assert replace(cfg, nu=1e-3).viscosity == 1e-3


# --- dealiased product ----------------------------------------------------------------

def direct_cubic(a):
    """Brute-force sum over k1 - k2 + k3 = q of a_k1 conj(a_k2) a_k3 on retained modes."""
    n = a.shape[0]
    modes = [(i, j) for i in range(n) for j in range(n) if a[i, j] != 0]
    m = np.rint(np.fft.fftfreq(n, 1.0 / n)).astype(int)
    out = {}
    for (i1, j1), (i2, j2), (i3, j3) in itertools.product(modes, repeat=3):
        q = (m[i1] - m[i2] + m[i3], m[j1] - m[j2] + m[j3])
        out[q] = out.get(q, 0) + a[i1, j1] * np.conj(a[i2, j2]) * a[i3, j3]
    return out


def test_dealiased_matches_direct_convolution():
    n = 8
    a = random_band(n, seed=3)
    got = nls.dealiased_cubic(nls.ComplexField(n, 2 * np.pi, a)).data
    ref = direct_cubic(a)
    K = (3 * n) // 8 - 1
    m = np.rint(np.fft.fftfreq(n, 1.0 / n)).astype(int)
    for i in range(n):
        for j in range(n):
            if abs(m[i]) <= K and abs(m[j]) <= K:
                assert got[i, j] == pytest.approx(ref.get((m[i], m[j]), 0), abs=1e-12)


@pytest.mark.parametrize("n", [16, 64])
def test_dealiased_matches_oversampled(n):
    a = random_band(n, seed=n)
    mask = nls.band_mask(n, (3 * n) // 8 - 1)
    three_halves = nls.cubic_padded(a, 3 * n // 2) * mask
    double = nls.cubic_padded(a, 2 * n) * mask
    assert np.max(np.abs(three_halves - double)) <= 1e-13 * np.max(np.abs(double))


def test_unpadded_product_aliases():
    # the oversampled check is not vacuous: without padding the band is polluted
    n = 16
    a = random_band(n, seed=1)
    mask = nls.band_mask(n, (3 * n) // 8 - 1)
    diff = nls.cubic_padded(a, n) * mask - nls.cubic_padded(a, 2 * n) * mask
    assert np.max(np.abs(diff)) > 1e-3


# --- time stepping ------------------------------------------------------------------

def test_linear_step_is_exact_rotation():
    cfg = replace(SMALL, nu=0.0)
    st = nls.NlsStepper(cfg, nonlinear=False)
    a = random_band(32, seed=5)
    kx, ky = nls.wavenumbers(32, cfg.box_size)
    out = st.step(a)
    assert np.allclose(out, a * np.exp(-1j * (kx ** 2 + ky ** 2) * cfg.dt), rtol=0, atol=1e-14)


def test_linear_hyperviscous_decay():
    cfg = replace(SMALL, nu=1e-12)
    st = nls.NlsStepper(cfg, nonlinear=False)
    a = random_band(32, seed=6)
    kx, ky = nls.wavenumbers(32, cfg.box_size)
    k2 = kx ** 2 + ky ** 2
    out = st.step(a)
    assert np.allclose(np.abs(out), np.abs(a) * np.exp(-1e-12 * k2 ** 8 * cfg.dt), rtol=1e-13)


@pytest.mark.parametrize("k", [(1, 0), (3, -2)])
def test_plane_wave_exact(k):
    # psi = A e^{ik.x} solves the NLS with frequency |k|^2 + A^2
    cfg = replace(SMALL, nu=0.0, dt=1e-3)
    n, A = 32, 0.7
    a = np.zeros((n, n), dtype=complex)
    a[k[0] % n, k[1] % n] = A
    st = nls.NlsStepper(cfg)
    v = a
    for _ in range(200):
        v = st.step(v)
    om = k[0] ** 2 + k[1] ** 2 + A ** 2
    assert np.allclose(v, a * np.exp(-1j * om * 0.2), rtol=0, atol=1e-11)


def test_fourth_order_convergence():
    cfg = nls.NlsConfig(resolution=32, nu=0.0, amplitude=0.3, k0=4.0, sigma0=0.1)
    v0 = nls.init_random_phase(cfg).data * 3.0
    T = 0.2

    def evolve(dt):
        st = nls.NlsStepper(cfg, dt=dt)
        v = v0
        for _ in range(int(round(T / dt))):
            v = st.step(v)
        return v

    ref = evolve(T / 400)
    e1 = np.max(np.abs(evolve(T / 25) - ref))
    e2 = np.max(np.abs(evolve(T / 50) - ref))
    assert e1 / e2 == pytest.approx(16, rel=0.35)


def test_etd_coefficients_closed_form():
    # for moderate |hL| the contour average agrees with the direct formulas
    L = np.array([-1.0 + 2.0j, -0.5j, 3j])
    h = 0.5
    c = nls.etd_coefficients(L, h)
    z = h * L
    ez = np.exp(z)
    assert np.allclose(c.Q, h * (np.exp(z / 2) - 1) / z, rtol=1e-13)
    assert np.allclose(c.f1, h * (-4 - z + ez * (4 - 3 * z + z ** 2)) / z ** 3, rtol=1e-12)
    assert np.allclose(c.f2, h * (2 + z + ez * (-2 + z)) / z ** 3, rtol=1e-12)
    assert np.allclose(c.f3, h * (-4 - 3 * z - z ** 2 + ez * (4 - z)) / z ** 3, rtol=1e-12)
    # and the z -> 0 limits are finite
    c0 = nls.etd_coefficients(np.zeros(1), h)
    assert np.allclose([c0.Q[0], c0.f1[0], c0.f2[0], c0.f3[0]], [h / 2, h / 6, h / 6, h / 6])


def test_dissipation_decreases_waveaction():
    cfg = replace(SMALL, nu=1e-8)
    st = nls.NlsStepper(cfg)
    v = nls.init_random_phase(cfg).data * 3.0
    wa = [nls.waveaction(v)]
    for _ in range(50):
        v = st.step(v)
        wa.append(nls.waveaction(v))
    assert np.all(np.diff(wa) < 0)


def test_blowup_detected():
    st = nls.NlsStepper(replace(SMALL, dt=1.0))
    v = np.zeros((32, 32), dtype=complex)
    v[1, 1] = np.inf
    with np.errstate(all="ignore"), pytest.raises(nls.BlowUpError):
        st.step(v)


# --- initial condition and diagnostics ----------------------------------------------------

def test_initial_condition_shape_and_determinism():
    cfg = SMALL
    a = nls.init_random_phase(cfg, member=0).data
    b = nls.init_random_phase(cfg, member=0).data
    c = nls.init_random_phase(cfg, member=1).data
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert a[0, 0] == 0
    assert np.allclose(np.abs(a), np.abs(c))
    kx, ky = nls.wavenumbers(32, cfg.box_size)
    kk = np.hypot(kx, ky)
    i = np.unravel_index(np.argmax(np.abs(a)), a.shape)
    assert kk[i] == pytest.approx(cfg.k0, rel=0.1)
    assert np.max(np.abs(a)) <= cfg.amplitude


def test_plane_wave_invariants():
    cfg = replace(SMALL, nu=0.0)
    a = np.zeros((32, 32), dtype=complex)
    a[2, 1] = 0.5
    assert nls.waveaction(a) == pytest.approx(0.25)
    assert nls.quad_energy(a, cfg) == pytest.approx(5 * 0.25)
    assert nls.hamiltonian(a, cfg) == pytest.approx(5 * 0.25 + 0.5 * 0.5 ** 4)


def test_annulus_density():
    # |psi_hat|^2 = c on every mode: 2D mode density is pi per unit w, so N = (pi/2) c
    n, c = 256, 0.3
    f = nls.ComplexField(n, 2 * np.pi, np.full((n, n), math.sqrt(c), dtype=complex))
    grid = LogFrequencyGrid(100.0, 10000.0, 12)
    es = nls.extract_spectrum([f], grid)
    assert np.allclose(es.spectrum.values, 0.5 * math.pi * c, rtol=0.05)
    assert es.members == 1 and np.all(es.counts > 0)


def test_empty_bins_are_nan_and_binned_sum():
    cfg = SMALL
    fields = [nls.init_random_phase(cfg, member=m) for m in range(2)]
    es = nls.extract_spectrum(fields, cfg.analysis_grid())
    assert np.all(np.isnan(es.spectrum.values[es.counts == 0]))
    total = np.mean([np.sum(np.abs(f.data) ** 2) for f in fields])
    assert nls.binned_waveaction(es) == pytest.approx(0.5 * total, rel=1e-12)


def test_extract_rejects_mixed_members():
    grid = LogFrequencyGrid(1, 100, 8)
    a = nls.ComplexField(8, 2 * np.pi, np.zeros((8, 8), complex))
    b = nls.ComplexField(16, 2 * np.pi, np.zeros((16, 16), complex))
    with pytest.raises(ValueError):
        nls.extract_spectrum([a, b], grid)


# --- runs and checkpoints --------------------------------------------------------------

def test_run_deterministic_and_conservative():
    a = nls.run_nls(SMALL)
    b = nls.run_nls(SMALL)
    assert np.array_equal(a.fields, b.fields)
    assert a.steps == 20 and len(a.spectra) == 2
    assert np.max(np.abs(a.waveaction / a.waveaction[0] - 1)) < 1e-10
    assert np.all(a.dissipated < 1e-10)


def test_checkpoint_roundtrip(tmp_path):
    v = random_band(16, seed=9)
    cfg = replace(SMALL, resolution=16, seed=12345)
    p = tmp_path / "m.ckpt"
    nls.write_checkpoint(p, v, cfg, 0.125, 3, 77)
    r = nls.read_checkpoint(p)
    assert np.array_equal(r["data"], v)
    assert (r["n"], r["t"], r["seed"], r["member"], r["step"]) == (16, 0.125, 12345, 3, 77)
    p.write_bytes(b"JUNK" + p.read_bytes()[4:])
    with pytest.raises(ValueError):
        nls.read_checkpoint(p)


def test_resume_is_bit_identical(tmp_path):
    full = nls.run_nls(SMALL)
    first = nls.run_nls(replace(SMALL, t_end=0.01, n_outputs=1), checkpoint_dir=tmp_path)
    assert first.steps == 10
    ck = [nls.read_checkpoint(tmp_path / f"member{m}.ckpt") for m in range(SMALL.members)]
    rest = nls.run_nls(SMALL, resume=ck)
    assert rest.steps == full.steps
    assert np.array_equal(rest.fields, full.fields)
