"""Command-line interface.

Verbs: ``phase-diagram``, ``gap-scan``, ``dynamics``, ``spectrum``,
``threshold`` and ``validate``. Each writes CSV files with a commented
header and a PNG rendering of the same data into ``--out``.

Settings are merged in this order, later entries winning: verb defaults,
``--preset``, ``--config`` (TOML with ``[model]``, ``[options]`` and ``[run]``
tables, or a CSV previously written by this tool, whose header is replayed),
then ``--set KEY=VALUE`` flags.

Exit codes: 0 success, 1 validation or numerical failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, floquet, hilbert, meanfield, plotting, semiclassical
from .errors import AmbiguityError, ConfigurationError, ConvergenceError, DomainError, IntegrationError
from .io import RunConfig, read_csv, write_csv
from .liouville import build_atom_only_harmonics, evolve_density, initial_ground_state
from .model import _ABSOLUTE_KEYS, _RELATIVE_KEYS, ModelParams, detuned_threshold, params_from_mapping

log = logging.getLogger("dicke_dtc")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

MODEL_KEYS = set(_ABSOLUTE_KEYS) | set(_RELATIVE_KEYS)

DEFAULT_MODEL = {"delta_c": 1.0, "kappa": 1.0, "delta": 0.1, "g0_over_gc": 0.5, "g1_over_g0": 0.2,
                 "omega_over_2wres": 1.0, "n_atoms": 10}

OPTION_DEFAULTS = {
    "phase-diagram": {
        "g1_min": 0.0, "g1_max": 0.9, "n_g1": 61,
        "omega_min": 0.25, "omega_max": 1.25, "n_omega": 61,
        "t_eval": 1e4, "x2_floor": 1e-2, "m_cut": 12,
    },
    "gap-scan": {
        "n_list": [10, 20, 30, 40], "m_cuts": [3, 4], "k": 20, "parity": True, "track": True,
    },
    "dynamics": {
        "methods": ["quantum", "meanfield", "semiclassical"], "t_end": 3000.0, "record_dt": 1.0,
        "dt_quantum": 0.02, "dt_semiclassical": 0.01, "n_traj": 1000, "scheme": "heun",
    },
    "spectrum": {
        "omega_min": 0.25, "omega_max": 1.25, "n_omega": 31, "t0": 5000.0, "t_max": 5000.0,
        "n_traj": 1000, "dt": 0.02, "scheme": "heun", "record_dt": 0.5,
        "nu_max_over_omega": 1.5, "n_nu": 301, "m_cut": 12, "meanfield": True,
    },
    "threshold": {"omega_min": 0.25, "omega_max": 1.25, "n_omega": 101, "m_cut": 12},
    "validate": {"n_full": 10, "n_phot": 5, "m_cut": 4, "n_traj": 300, "fast": False},
}

PRESETS = {
    "fig1": ("phase-diagram", {"n_atoms": 10000, "g1_over_g0": 0.0}, {}),
    "fig1_reduced": ("phase-diagram", {"n_atoms": 10000, "g1_over_g0": 0.0}, {"n_g1": 31, "n_omega": 31}),
    "fig1_threshold": ("threshold", {"n_atoms": 10000, "g1_over_g0": 0.0}, {}),
    "fig2a": ("gap-scan", {"g1_over_g0": 0.05, "omega_over_2wres": 1.0},
              {"n_list": [10, 20, 30, 40, 50, 60], "m_cuts": [2, 3, 4]}),
    "fig2b": ("gap-scan", {"g1_over_g0": 0.2, "omega_over_2wres": 1.0},
              {"n_list": [10, 20, 30, 40, 50, 60], "m_cuts": [2, 3, 4]}),
    "fig_s1c": ("dynamics", {"n_atoms": 100, "g1_over_g0": 0.2, "omega_over_2wres": 1.0},
                {"t_end": 4000.0}),
    "fig_s2": ("dynamics", {"n_atoms": 10000, "g1_over_g0": 0.2, "omega_over_2wres": 1.0},
               {"methods": ["meanfield", "semiclassical"], "t_end": 6000.0}),
    "fig3c": ("spectrum", {"n_atoms": 10000, "g1_over_g0": 0.75}, {"t0": 5000.0, "t_max": 5000.0}),
}


# configuration -------------------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_toml(path):
    """Read a TOML file, or the ``# config`` header of a CSV written by this tool."""
    import tomli

    if str(path).endswith(".csv"):
        return _load_header(path)
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc


def _load_header(path):
    try:
        cfg, _, _ = read_csv(path)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(f"cannot parse the header of {path}: {exc}") from exc
    if cfg is None:
        raise ConfigurationError(f"{path} has no '# config' header line")
    return {"command": cfg.command, "model": cfg.model, "options": cfg.options,
            "run": {"seed": cfg.seed, "threads": cfg.threads}}


def _merge_model(base: dict, extra: dict):
    """Overlay ``extra`` on ``base``; an absolute key replaces its ratio twin and vice versa."""
    twins = {"g0": "g0_over_gc", "g1": "g1_over_g0", "omega": "omega_over_2wres"}
    twins.update({v: k for k, v in twins.items()})
    out = dict(base)
    for k, v in extra.items():
        if k not in MODEL_KEYS:
            raise ConfigurationError(f"unknown model key {k!r}")
        out.pop(twins.get(k, ""), None)
        out[k] = v
    return out


def build_run_config(args) -> RunConfig:
    verb = args.command
    model = dict(DEFAULT_MODEL)
    options = dict(OPTION_DEFAULTS[verb])
    seed, threads = 0, None
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        pverb, pmodel, popts = PRESETS[args.preset]
        if pverb != verb:
            raise ConfigurationError(f"preset {args.preset!r} belongs to {pverb!r}, not {verb!r}")
        model = _merge_model(model, pmodel)
        options.update(popts)
    if args.config:
        data = _load_toml(args.config)
        if data.get("command", verb) != verb:
            raise ConfigurationError(f"{args.config} was written by {data['command']!r}, not {verb!r}")
        if "command" in data:
            model = {}
        model = _merge_model(model, data.get("model", {}))
        unknown = set(data.get("options", {})) - set(options)
        if unknown:
            raise ConfigurationError(f"unknown options for {verb}: {sorted(unknown)}")
        options.update(data.get("options", {}))
        run = data.get("run", {})
        seed = run.get("seed", seed)
        threads = run.get("threads", threads)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        v = _parse_value(v)
        if k in MODEL_KEYS:
            model = _merge_model(model, {k: v})
        elif k in options:
            options[k] = v
        else:
            raise ConfigurationError(f"unknown setting {k!r} for {verb}")
    if getattr(args, "fast", False):
        options["fast"] = True
    if args.seed is not None:
        seed = args.seed
    if args.threads is not None:
        threads = args.threads
    if threads is None:
        threads = os.cpu_count() or 1
    if int(threads) < 1:
        raise ConfigurationError("--threads must be at least 1")
    if not 0 <= int(seed) < 2**64:
        raise ConfigurationError("--seed must fit in an unsigned 64-bit integer")
    params_from_mapping(model)  # validate early
    return RunConfig(verb, model, options, str(args.out), int(seed), int(threads), args.preset)


def _params(cfg: RunConfig) -> ModelParams:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return params_from_mapping(cfg.model)


def _grid(lo, hi, n, what):
    n = int(n)
    if n < 1:
        raise ConfigurationError(f"{what} grid is empty")
    if n == 1:
        return np.array([float(lo)])
    if hi < lo:
        raise ConfigurationError(f"{what} grid must be ascending")
    return np.linspace(float(lo), float(hi), n)


def _pool_map(fn, items, threads):
    """Map preserving input order; ``threads == 1`` runs inline."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# verbs ------------------------------------------------------------------------------

def cmd_phase_diagram(cfg: RunConfig) -> int:
    o = cfg.options
    p = _params(cfg)
    g1 = _grid(o["g1_min"], o["g1_max"], o["n_g1"], "g1")
    om = _grid(o["omega_min"], o["omega_max"], o["n_omega"], "omega")
    chunks = np.array_split(np.arange(len(g1)), min(cfg.threads, len(g1)))
    parts = _pool_map(lambda idx: meanfield.phase_diagram(p, g1[idx], om, t_eval=o["t_eval"],
                                                          x2_floor=o["x2_floor"]), chunks, cfg.threads)
    x2 = np.vstack([pt.x2_tav_norm for pt in parts])
    growth = np.vstack([pt.growth for pt in parts])
    sr = np.vstack([pt.superradiant for pt in parts])
    gmax = stability_grid(p, g1, om, o["m_cut"])
    out = Path(cfg.out)
    rows = []
    for i, a in enumerate(g1):
        for j, b in enumerate(om):
            rows.append((a, b, x2[i, j], growth[i, j], "superradiant" if sr[i, j] else "normal"))
    write_csv(out / "phase_diagram.csv", ["g1_over_g0", "omega_over_2wres", "x2_tav_norm", "growth",
                                          "classification"], rows, cfg)
    write_csv(out / "stability.csv", ["g1_over_g0", "omega_over_2wres", "gamma_max"],
              [(a, b, gmax[i, j]) for i, a in enumerate(g1) for j, b in enumerate(om)], cfg)
    plotting.phase_diagram(out / "phase_diagram.png", g1, om, x2, gmax, p.g1_c / p.g0)
    print(f"phase-diagram: {len(g1)}x{len(om)} cells, {int(sr.sum())} superradiant -> {out}")
    return EXIT_OK


def stability_grid(p: ModelParams, g1_ratios, omega_ratios, m_cut=12):
    """``gamma_max`` of the linearised normal state on a ``(g1/g0, omega/2 omega_res)`` grid."""
    out = np.empty((len(g1_ratios), len(omega_ratios)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for i, a in enumerate(g1_ratios):
            for j, b in enumerate(omega_ratios):
                q = p.with_(g1=a * p.g0, omega=b * 2 * p.omega_res)
                out[i, j] = meanfield.stability_exponents(meanfield.stability_harmonics(q), q.omega, m_cut).gamma_max
    return out


def cmd_gap_scan(cfg: RunConfig) -> int:
    o = cfg.options
    p = _params(cfg)
    n_list = [int(n) for n in o["n_list"]]
    if not n_list:
        raise ConfigurationError("n_list is empty")
    if min(n_list) < 1:
        raise ConfigurationError(f"system sizes must be positive, got {n_list}")
    m_cuts = [int(m) for m in o["m_cuts"]]

    def run(m_cut):
        return floquet.gap_scan(p, n_list, (m_cut,), track=o["track"], k=o["k"], use_parity=o["parity"])

    results = [r for part in _pool_map(run, m_cuts, cfg.threads) for r in part]
    results.sort(key=lambda r: (n_list.index(r.n_atoms), m_cuts.index(r.m_cut)))
    q = p.with_(omega=2 * p.omega_res)
    gamma_fl = -meanfield.stability_exponents(meanfield.stability_harmonics(q), q.omega).gamma_max
    top = max(m_cuts)
    sel = [r for r in results if r.m_cut == top]
    fit = None
    if len(sel) >= 2:
        ns = np.array([r.n_atoms for r in sel], dtype=float)
        gs = np.array([r.gamma for r in sel])
        fit = tuple(np.polyfit(ns, np.log(gs), 1))
    out = Path(cfg.out)
    comments = [f"gamma_fl {gamma_fl:.9g}"]
    if fit is not None:
        comments.append(f"log_fit_slope {fit[0]:.9g} (m_cut {top})")
    write_csv(out / "gap_scan.csv", ["n_atoms", "omega_used", "m_cut", "gamma", "im_lambda", "residual", "flagged"],
              [(r.n_atoms, r.omega, r.m_cut, r.gamma, r.lam.imag, r.residual, r.ambiguous) for r in results],
              cfg, comments)
    plotting.gap_scan(out / "gap_scan.png", [r.n_atoms for r in results], [r.gamma for r in results],
                      [r.m_cut for r in results], gamma_fl if gamma_fl > 0 else None, fit)
    for r in results:
        print(f"N={r.n_atoms:4d} m_cut={r.m_cut} gamma={r.gamma:.6g} omega={r.omega:.6g}")
    return EXIT_OK


def run_dynamics(p: ModelParams, o: dict, seed: int):
    """Return ``(t, {method: X^2_tav/N^2})`` on a common grid."""
    methods = list(o["methods"])
    unknown = set(methods) - {"quantum", "meanfield", "semiclassical"}
    if unknown or not methods:
        raise ConfigurationError(f"methods must be drawn from quantum, meanfield, semiclassical; got {methods}")
    t_end = float(o["t_end"])
    period = p.period if p.omega > 0 else 2 * np.pi / p.delta
    # recording spacing and both steps divide the period so one-period averages are exact
    per_rec = int(np.ceil(period / float(o["record_dt"]) - 1e-9))
    rdt = period / per_rec
    t = np.arange(int(np.floor(t_end / rdt + 1e-9)) + 1) * rdt
    n2 = float(p.n_atoms) ** 2
    series = {}
    if "quantum" in methods:
        sector = hilbert.AtomSector(p.n_atoms)
        h = build_atom_only_harmonics(p, sector)
        dq = rdt / np.ceil(rdt / float(o["dt_quantum"]) - 1e-9)
        ev = evolve_density(h, initial_ground_state(sector.dim), t, dq, params=p)
        series["quantum"] = ev.x2_tav / n2
    if "meanfield" in methods:
        traj = meanfield.integrate_meanfield(meanfield.seed_state(p.n_atoms), p, t_end + period)
        series["meanfield"] = np.interp(t, traj.t, traj.x2_tav.real) / n2
    if "semiclassical" in methods:
        stride = int(np.ceil(rdt / float(o["dt_semiclassical"]) - 1e-9))
        ec = semiclassical.EnsembleConfig(n_traj=int(o["n_traj"]), dt=rdt / stride, seed=seed, t_end=t[-1],
                                          record_stride=stride, scheme=o["scheme"])
        res = semiclassical.run_ensemble(p, ec)
        series["semiclassical"] = np.interp(t, res.t, res.x2_tav[0]) / n2
    return t, series


def plateau(t, y, period, window_periods=10):
    """Mean of a period-averaged series over its last finite ``window_periods`` periods."""
    ok = np.isfinite(y)
    t, y = t[ok], y[ok]
    if len(t) == 0:
        return float("nan")
    sel = t >= t[-1] - window_periods * period
    return float(np.mean(y[sel]))


def cmd_dynamics(cfg: RunConfig) -> int:
    p = _params(cfg)
    t, series = run_dynamics(p, cfg.options, cfg.seed)
    out = Path(cfg.out)
    names = list(series)
    comments = [f"plateau_{k} {plateau(t, v, p.period):.9g}" for k, v in series.items()]
    write_csv(out / "dynamics.csv", ["t"] + [f"x2_tav_norm_{k}" for k in names],
              zip(t, *[series[k] for k in names]), cfg, comments)
    plotting.dynamics(out / "dynamics.png", t, series)
    for c in comments:
        print(c)
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig) -> int:
    o = cfg.options
    p = _params(cfg)
    ratios = _grid(o["omega_min"], o["omega_max"], o["n_omega"], "omega")
    omegas = ratios * 2 * p.omega_res
    stride = max(1, int(round(o["record_dt"] / o["dt"])))
    ec = semiclassical.EnsembleConfig(n_traj=int(o["n_traj"]), dt=float(o["dt"]), seed=cfg.seed,
                                      t_end=float(o["t0"]) + float(o["t_max"]), record_stride=stride,
                                      scheme=o["scheme"])
    res = semiclassical.run_omega_scan(p, omegas, ec, t0=float(o["t0"]), t_max=float(o["t_max"]))
    nu_ratio = np.linspace(0.0, float(o["nu_max_over_omega"]), int(o["n_nu"]))
    n2 = float(p.n_atoms) ** 2
    spec_rows, abs_map, peaks = [], [], []
    for g, w in enumerate(omegas):
        sp_ = semiclassical.spectrum_s1(res.c1_t, res.c1[g], nu_ratio * w, t0=float(o["t0"]))
        abs_map.append(np.abs(sp_.s1))
        peaks.append(semiclassical.dominant_frequency(sp_, nu_min=0.05 * w) / w)
        for nr, s in zip(nu_ratio, sp_.s1):
            spec_rows.append((ratios[g], nr, abs(s), s.real))
    stab = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for w in omegas:
            r = meanfield.stability_exponents(meanfield.stability_harmonics(p.with_(omega=w)), w, o["m_cut"])
            stab.append((r.nu_fl / w, r.gamma_max))
    mf = np.full(len(omegas), np.nan)
    if o["meanfield"]:
        pd = meanfield.phase_diagram(p, [p.g1 / p.g0], ratios, t_eval=float(o["t0"]) + float(o["t_max"]))
        mf = pd.x2_tav_norm[0]
    sc_final = res.final_x2_tav() / n2
    out = Path(cfg.out)
    write_csv(out / "spectrum.csv", ["omega_over_2wres", "nu_over_omega", "abs_S1", "re_S1"], spec_rows, cfg)
    write_csv(out / "nu_fl.csv", ["omega_over_2wres", "nu_fl_over_omega", "gamma_max", "peak_nu_over_omega"],
              [(r, a, b, pk) for r, (a, b), pk in zip(ratios, stab, peaks)], cfg)
    write_csv(out / "moments.csv", ["omega_over_2wres", "x2_tav_norm_semiclassical", "x2_tav_norm_meanfield",
                                    "n_excluded"],
              zip(ratios, sc_final, mf, res.n_excluded[:, -1]), cfg)
    step_t = max(1, len(res.t) // 2000)
    long_rows = [(ratios[g], res.t[i], res.x2[g, i] / n2, res.x2_tav[g, i] / n2, res.photon_proxy[g, i],
                  res.n_excluded[g, i]) for g in range(len(omegas)) for i in range(0, len(res.t), step_t)]
    write_csv(out / "moments_t.csv", ["omega_over_2wres", "t", "x2_norm", "x2_tav_norm", "photon_proxy",
                                      "n_excluded"], long_rows, cfg)
    write_csv(out / "correlation.csv", ["omega_over_2wres", "t", "C1"],
              [(ratios[g], tt, c) for g in range(len(omegas)) for tt, c in zip(res.c1_t, res.c1[g])], cfg)
    if len(omegas) > 1:
        plotting.spectrum(out / "spectrum.png", ratios, nu_ratio, np.array(abs_map),
                          [s[0] for s in stab], {"semiclassical": sc_final, "meanfield": mf})
    for r, pk, x in zip(ratios, peaks, sc_final):
        print(f"omega/2w_res={r:.4f} peak nu/omega={pk:.4f} X2_tav/N^2={x:.4g}")
    return EXIT_OK


def cmd_threshold(cfg: RunConfig) -> int:
    o = cfg.options
    p = _params(cfg)
    ratios = _grid(o["omega_min"], o["omega_max"], o["n_omega"], "omega")

    def one(r):
        w = r * 2 * p.omega_res
        fl = meanfield.threshold_g1_floquet(p, omega=w, m_cut=o["m_cut"])
        return fl, detuned_threshold(p, omega=w)

    vals = _pool_map(one, ratios, cfg.threads)
    out = Path(cfg.out)
    write_csv(out / "threshold.csv", ["omega_over_2wres", "g1c_floquet", "g1c_mathieu"],
              [(r, a, b) for r, (a, b) in zip(ratios, vals)], cfg)
    plotting.threshold(out / "threshold.png", ratios, [v[0] for v in vals], [v[1] for v in vals], p.g0)
    print(f"threshold: {len(ratios)} frequencies -> {out}")
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    from .validation import run_suite

    checks = run_suite(_params(cfg), cfg.options, seed=cfg.seed)
    out = Path(cfg.out)
    write_csv(out / "validate.csv", ["check", "passed", "measured", "tolerance"],
              [(c.name, c.passed, c.measured, c.tolerance) for c in checks], cfg)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: measured={c.measured:.6g} tolerance={c.tolerance:.6g}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


COMMANDS = {
    "phase-diagram": cmd_phase_diagram,
    "gap-scan": cmd_gap_scan,
    "dynamics": cmd_dynamics,
    "spectrum": cmd_spectrum,
    "threshold": cmd_threshold,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="TOML file with [model], [options] and [run] tables")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed for stochastic runs")
    common.add_argument("--threads", type=int, metavar="N", help="worker threads (default: all cores)")
    common.add_argument("--preset", metavar="NAME", help=f"one of {', '.join(sorted(PRESETS))}")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a model parameter or option (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dicke-dtc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "phase-diagram": "mean-field order parameter over (omega, g1) with the stability contour",
        "gap-scan": "dissipative gap at omega/2 against system size",
        "dynamics": "order parameter against time from quantum, mean-field and stochastic runs",
        "spectrum": "stochastic omega-scan with two-time correlation spectra",
        "threshold": "modulation threshold against drive frequency, Floquet and perturbative",
        "validate": "cross-model consistency checks",
    }
    for name, text in helps.items():
        sp_ = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "validate":
            sp_.add_argument("--fast", action="store_true", help="skip the expensive checks")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_run_config(args)
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        t0 = time.time()
        code = COMMANDS[cfg.command](cfg)
        log.info("%s finished in %.1f s", cfg.command, time.time() - t0)
        return code
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, ConvergenceError, AmbiguityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
