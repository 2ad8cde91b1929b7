"""``wavecool`` command line.

Run directory layout
--------------------
dam run:   config.cfg, manifest.json, conserved.csv (t,N,E),
           spectrum_NNNN.csv/.json per snapshot, fluxes_NNNN.csv (omega,K,Q,P)
nls run:   config.cfg, manifest.json, invariants.csv
           (t,waveaction,quad_energy,hamiltonian,dissipated),
           spectrum_NNNN.csv/.json per output time, checkpoints/memberM.ckpt

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 a DAM front
reached the grid boundary before t_end.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import analysis as an
from . import kernel as kn
from .config import ConfigError, config_hash, parse_text, preset_text
from .dam import DamConfig, DamError, dam_fluxes, run_dam
from .grid import ConservedPair, conserved, read_spectrum, write_spectrum
from .nls import BlowUpError, NlsConfig, read_checkpoint, run_nls
from .recipes import FIGURES, reproduce_figure

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_BOUNDARY = 0, 2, 3, 4


def tool_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunManifest:
    tool_version: str
    config_hash: str
    seeds: list
    start: float
    end: float = 0.0
    status: str = "running"
    outputs: list = field(default_factory=list)

    def write(self, out: Path):
        (out / "manifest.json").write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def read(cls, out):
        return cls(**json.loads((Path(out) / "manifest.json").read_text()))


def verify_manifest(out) -> bool:
    out = Path(out)
    m = RunManifest.read(out)
    return m.config_hash == config_hash((out / "config.cfg").read_bytes())


def _config_source(args):
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset")
    if args.preset:
        return preset_text(args.preset)
    if not args.config:
        raise ConfigError("--config or --preset is required")
    return Path(args.config).read_text()


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{x:.17g}" if isinstance(x, (float, np.floating)) else x for x in r])


def _start(args, kind):
    text = _config_source(args)
    cfg = parse_text(text)
    if not isinstance(cfg, kind):
        raise ConfigError(f"config describes a {type(cfg).__name__}, expected {kind.__name__}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(text)
    seeds = [cfg.seed] if isinstance(cfg, NlsConfig) else []
    man = RunManifest(tool_version(), config_hash(text.encode()), seeds, time.time())
    man.write(out)
    return cfg, out, man


def cmd_dam_run(args):
    cfg, out, man = _start(args, DamConfig)

    def emit(s):
        i = len(man.outputs) // 2
        write_spectrum(s, out / f"spectrum_{i:04d}.csv")
        fl = dam_fluxes(s)
        _write_csv(out / f"fluxes_{i:04d}.csv", ["omega", "K", "Q", "P"],
                   zip(s.omega, fl.K, fl.Q, fl.P))
        man.outputs += [f"spectrum_{i:04d}.csv", f"fluxes_{i:04d}.csv"]

    try:
        run = run_dam(cfg, callback=emit)
    except DamError as exc:
        man.status, man.end = f"failed: {exc}", time.time()
        man.write(out)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _write_csv(out / "conserved.csv", ["t", "N", "E"],
               zip(run.conserved_t, run.conserved_N, run.conserved_E))
    man.outputs.append("conserved.csv")
    man.status, man.end = run.status, time.time()
    man.write(out)
    print(f"dam run {run.status}: {len(run.snapshots)} snapshots, {run.steps} steps")
    return EXIT_BOUNDARY if run.status == "boundary" else EXIT_OK


def cmd_nls_run(args):
    cfg, out, man = _start(args, NlsConfig)
    resume = None
    if args.resume:
        src = Path(args.resume)
        files = sorted(src.glob("member*.ckpt")) if src.is_dir() else [src]
        resume = [read_checkpoint(f) for f in files]
        if len(resume) != cfg.members or any(r["n"] != cfg.resolution for r in resume):
            raise ConfigError("checkpoints do not match the configuration")
    ck = out / "checkpoints"
    ck.mkdir(exist_ok=True)
    # resuming continues the spectrum numbering after existing files
    base = len(list(out.glob("spectrum_*.csv"))) if resume else 0

    def emit(es):
        i = base + len(man.outputs)
        write_spectrum(es.spectrum, out / f"spectrum_{i:04d}.csv")
        man.outputs.append(f"spectrum_{i:04d}.csv")

    try:
        run = run_nls(cfg, resume=resume, checkpoint_dir=ck, callback=emit)
    except BlowUpError as exc:
        man.status, man.end = f"failed: {exc}", time.time()
        man.write(out)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _write_csv(out / "invariants.csv", ["t", "waveaction", "quad_energy", "hamiltonian", "dissipated"],
               zip(run.times, run.waveaction, run.quad_energy, run.hamiltonian, run.dissipated))
    man.outputs.append("invariants.csv")
    man.status, man.end = "completed", time.time()
    man.write(out)
    print(f"nls run completed: {len(run.spectra)} spectra, {run.steps} steps")
    return EXIT_OK


def cmd_kernel_scan(args):
    xs, table = kn.region_table(args.x_min, args.x_max, args.step)
    win = kn.window_from_table(xs, table)
    rows = []
    for i, x in enumerate(xs):
        for reg, scans in table.items():
            sc = scans[i]
            rows.append([x, reg, sc.measured, sc.predicted, int(sc.convergent),
                         int(sc.identically_zero), sc.r_squared, int(win.contains(x))])
    _write_csv(args.out, ["x", "region", "measured", "predicted", "convergent",
                          "identically_zero", "r_squared", "in_window"], rows)
    lo = "(" if win.lower_open else "["
    hi = ")" if win.upper_open else "]"
    iso = ", ".join(f"{v:g}" for v in win.isolated)
    print(f"convergence window {lo}{win.lower:g}, {win.upper:g}{hi}"
          + (f"; isolated points {iso}" if iso else ""))
    return EXIT_OK


def cmd_kernel_eval(args):
    try:
        w, w1, w2 = (float(v) for v in args.quartet.split(","))
    except ValueError:
        raise ConfigError("--quartet expects three comma-separated frequencies") from None
    kv = kn.kernel_S(kn.Quartet.resonant(w, w1, w2))
    print(f"S1={kv.S1:.17g} q={kv.q:.17g} K={kv.K_of_q:.17g} S={kv.S:.17g}")
    return EXIT_OK


# --- analyze ---------------------------------------------------------------------

def load_run(path):
    path = Path(path)
    files = sorted(path.glob("spectrum_*.csv"))
    if not files:
        raise ConfigError(f"{path}: no spectrum_*.csv files")
    snaps = [read_spectrum(f) for f in files]
    return snaps, _initial_invariants(path, snaps)


def _initial_invariants(path, snaps):
    if (path / "conserved.csv").exists():
        d = np.loadtxt(path / "conserved.csv", delimiter=",", skiprows=1, ndmin=2)
        return ConservedPair(float(d[0, 1]), float(d[0, 2]))
    if (path / "invariants.csv").exists():
        d = np.loadtxt(path / "invariants.csv", delimiter=",", skiprows=1, ndmin=2)
        # the spectrum integral carries half the box wave action
        return ConservedPair(0.5 * float(d[0, 1]), 0.5 * float(d[0, 2]))
    return conserved(snaps[0])


def _window(text):
    if not text:
        return None
    lo, hi = (float(v) for v in text.split(","))
    return (lo, hi)


def _gs(text):
    return [float(v) for v in text.split(",")] if text else []


def _safe(fn, *a):
    try:
        return fn(*a)
    except (an.NoFront, an.NoFit):
        return float("nan")


def _front_series(snaps, sigma):
    return np.array([_safe(an.front_right, s, sigma) for s in snaps])


def analyze_fronts(snaps, inv, args):
    rows = []
    for s in snaps:
        hm = _safe(an.front_left, s, args.sigma_tilde)
        hp = _safe(an.front_right, s, args.sigma)
        ab = an.absolute_fronts(s, args.floor)
        rows.append([s.time, hm, hp, ab.omega_minus, ab.omega_plus])
    return ["t", "omega_hat_minus", "omega_hat_plus", "omega_minus", "omega_plus"], rows


def analyze_rj(snaps, inv, args):
    rows = []
    for s in snaps:
        try:
            pk = an.fit_rj_peak(s)
            T, mu = pk.T, pk.mu
        except an.NoFit:
            T = mu = float("nan")
        hp = _safe(an.front_right, s, args.sigma)
        if np.isfinite(hp):
            c = an.fit_rj_conservation(inv.energy, inv.waveaction, hp, args.sigma)
            Th, muh = c.T, c.mu
        else:
            Th = muh = float("nan")
        rows.append([s.time, T, mu, Th, muh, hp])
    return ["t", "T", "mu", "T_hat", "mu_hat", "omega_hat_plus"], rows


def _late(times, window):
    return window if window is not None else an.last_decade(times)


def analyze_wg(snaps, inv, args):
    t = np.array([s.time for s in snaps])
    win = _late(t, _window(args.window))
    hp = _front_series(snaps, args.sigma)
    C_plus = _safe(an.front_prefactor, t, hp, win)
    w0 = inv.omega0
    rows = []
    for g in _gs(args.g):
        ser = an.wg_series(snaps, g)
        expo, pref, res = an.fit_powerlaw(ser.times, ser.values, win)
        C, _, cres = an.fit_stretched_exp(ser.times, ser.values, win)
        C_cal = C * 5.0 * w0 / C_plus if np.isfinite(C_plus) else float("nan")
        late = ser.values[an._window_mask(t, win)]
        var = float(np.max(late) / np.min(late))
        pred_alg = g / 3.0 - 0.5 if g > 1.5 else float("nan")
        pred_C = 9.0 * abs(g) if g <= -0.5 else float("nan")
        rows.append([g, expo, pred_alg, res, C, C_cal, pred_C, cres, var])
    hdr = ["g", "exponent", "exponent_predicted", "powerlaw_residual", "C", "C_calibrated",
           "C_predicted", "stretched_residual", "variation"]
    return hdr, rows


def analyze_collapse(snaps, inv, args):
    t = np.array([s.time for s in snaps])
    win = _late(t, _window(args.window))
    m = an._window_mask(t, win)
    rows = []
    for g in _gs(args.g):
        profs = [an.rescale_profile(s, g) for s, keep in zip(snaps, m) if keep]
        try:
            fit = an.traveling_speed(profs)
            c, err, unrel = fit.c_measured, fit.collapse_error, int(fit.unreliable)
        except ValueError:
            c = err = float("nan")
            unrel = 1
        try:
            pred = an.predicted_speed(g)
        except ValueError:
            pred = float("nan")
        rows.append([g, c, pred, err, unrel])
    return ["g", "c_measured", "c_predicted", "collapse_error", "unreliable"], rows


def analyze_exponents(snaps, inv, args):
    t = np.array([s.time for s in snaps])
    win = _window(args.window)
    hp = _front_series(snaps, args.sigma)
    T = np.array([_safe(lambda s: an.fit_rj_peak(s).T, s) for s in snaps])
    mu_hat = np.array([an.fit_rj_conservation(inv.energy, inv.waveaction, h).mu
                       if np.isfinite(h) else np.nan for h in hp])
    rep = an.selfsimilar_exponents(t, hp, T, mu_hat, inv.omega0, win)
    hdr = ["b", "temperature_exponent", "a", "consistency", "C_plus", "cooling_slope",
           "cooling_slope_predicted"]
    return hdr, [[rep.b, rep.temperature_exponent, rep.a, rep.consistency, rep.C_plus,
                  rep.cooling_slope, rep.cooling_slope_predicted]]


ANALYSES = {"fronts": analyze_fronts, "rj": analyze_rj, "wg": analyze_wg,
            "collapse": analyze_collapse, "exponents": analyze_exponents}


def cmd_analyze(args):
    snaps, inv = load_run(args.input)
    try:
        hdr, rows = ANALYSES[args.what](snaps, inv, args)
    except (an.NoFit, an.NoFront) as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _write_csv(args.out, hdr, rows)
    return EXIT_OK


def cmd_reproduce(args):
    plan = reproduce_figure(args.figure, args.out)
    for argv in plan:
        print("wavecool " + " ".join(argv))
    if not args.run:
        return EXIT_OK
    for argv in plan:
        code = main(argv)
        if code not in (EXIT_OK, EXIT_BOUNDARY):
            return code
    return EXIT_OK


ANALYZE_HELP = """reports (one CSV row per snapshot time or per g):
  fronts     t, omega_hat_minus, omega_hat_plus, omega_minus, omega_plus
  rj         t, T, mu (peak estimator), T_hat, mu_hat (conservation estimator), omega_hat_plus
  wg         g, exponent (power-law fit), exponent_predicted, powerlaw_residual, C (stretched
             exponential), C_calibrated (time unit fixed by C+ = 5 w0), C_predicted,
             stretched_residual, variation (max/min of |W_g| in the window)
  collapse   g, c_measured, c_predicted, collapse_error, unreliable
  exponents  b, temperature_exponent, a, consistency (b + 2a + 1), C_plus, cooling_slope,
             cooling_slope_predicted
Missing values are written as nan. --window defaults to the last decade for wg and collapse."""


def build_parser():
    p = argparse.ArgumentParser(prog="wavecool", description="Dynamical cooling of classical waves: "
                                "DAM and 2D NLS solvers, WKE kernel checks and scaling analysis.")
    sub = p.add_subparsers(dest="group", required=True)

    for name, fn, help_ in (("dam", cmd_dam_run, "differential approximation model"),
                            ("nls", cmd_nls_run, "2D NLS ensemble")):
        g = sub.add_parser(name, help=help_).add_subparsers(dest="action", required=True)
        r = g.add_parser("run")
        r.add_argument("--config")
        r.add_argument("--preset", help="built-in preset name, e.g. dam-accept or nls-desk")
        r.add_argument("--out", required=True)
        if name == "nls":
            r.add_argument("--resume", help="checkpoint file or directory of memberM.ckpt files")
        r.set_defaults(func=fn)

    k = sub.add_parser("kernel", help="WKE kernel").add_subparsers(dest="action", required=True)
    s = k.add_parser("scan", help="region exponents and the overall convergence window")
    s.add_argument("--x-min", type=float, default=-0.1)
    s.add_argument("--x-max", type=float, default=1.5)
    s.add_argument("--step", type=float, default=0.05)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_kernel_scan)
    e = k.add_parser("eval", help="S1, q, K(q), S on a resonant quartet")
    e.add_argument("--quartet", required=True, help="w,w1,w2 with w3 = w + w1 - w2")
    e.set_defaults(func=cmd_kernel_eval)

    a = sub.add_parser("analyze", help="scaling analysis of a run directory", epilog=ANALYZE_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    a.add_argument("what", choices=sorted(ANALYSES))
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--sigma", type=float, default=0.4)
    a.add_argument("--sigma-tilde", type=float, default=0.4)
    a.add_argument("--floor", type=float, default=1e-15, help="absolute-front floor fraction")
    a.add_argument("--g", default="", help="comma-separated weights")
    a.add_argument("--window", default="", help="t_lo,t_hi")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("reproduce", help="print (and with --run execute) a figure's commands")
    r.add_argument("figure", choices=FIGURES)
    r.add_argument("--out", default="figures")
    r.add_argument("--run", action="store_true")
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FileNotFoundError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FloatingPointError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
