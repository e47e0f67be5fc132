"""Cross-model consistency checks behind the ``validate`` verb.

Each check compares two independent routes to the same quantity and
returns a :class:`Check`. The ``fast`` option drops the checks that take
longer than a few seconds and shrinks the cavity comparison.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import floquet, hilbert, meanfield, semiclassical
from .liouville import (build_atom_only_harmonics, c_pm_exact, c_pm_expanded, evolve_density,
                        initial_ground_state)
from .model import ModelParams, threshold_g1c

log = logging.getLogger(__name__)

__all__ = ["Check", "run_suite"]


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    tolerance: float


def _check(name, measured, tolerance):
    measured = float(measured)
    ok = bool(np.isfinite(measured) and measured <= tolerance)
    log.info("%s: %.3g (tolerance %.3g)", name, measured, tolerance)
    return Check(name, ok, measured, float(tolerance))


def check_stability_routes(p: ModelParams) -> Check:
    """Largest exponent from the extended Floquet matrix against the one-period propagator."""
    q = p.with_(omega=2 * p.omega_res)
    a = meanfield.stability_exponents(meanfield.stability_harmonics(q), q.omega).gamma_max
    b = float(np.max(meanfield.monodromy_exponents(q).real))
    return _check("stability_floquet_vs_monodromy", abs(a - b), 1e-8)


def check_threshold(p: ModelParams) -> Check:
    """Resonant modulation threshold: Floquet bisection against the closed form."""
    w = 2 * p.omega_res
    fl = meanfield.threshold_g1_floquet(p, omega=w)
    ref = threshold_g1c(p)
    return _check("threshold_floquet_vs_closed_form", abs(fl / ref - 1.0), 0.01)


def check_elimination_expansion(p: ModelParams) -> Check:
    """Integrated cavity amplitudes against the slow-drive expansion over the third period."""
    q = p.with_(omega=2 * p.omega_res, g1=max(p.g1, 0.2 * p.g0))
    ex = c_pm_exact(q, 3 * q.period, 0.01, record=True)
    sel = ex.t > 2 * q.period
    ap = c_pm_expanded(q, ex.t[sel])
    err = max(np.abs(ex.c_plus[sel] - ap.c_plus).max() / np.abs(ex.c_plus[sel]).max(),
              np.abs(ex.c_minus[sel] - ap.c_minus).max() / np.abs(ex.c_minus[sel]).max())
    return _check("elimination_exact_vs_expanded", err, 0.02)


def check_mathieu(p: ModelParams) -> Check:
    """Largest stability exponent at resonance against the Mathieu estimate, weak modulation."""
    q = p.with_(omega=2 * p.omega_res, g1=0.1 * p.g0)
    fl = meanfield.stability_exponents(meanfield.stability_harmonics(q), q.omega).gamma_max
    ma = meanfield.mathieu_exponents(meanfield.mathieu_params(q))[0].real
    return _check("mathieu_vs_floquet_exponent", abs(fl / ma - 1.0), 0.10)


def check_cavity_elimination(p: ModelParams, n_atoms: int, n_phot: int, m_cut: int) -> Check:
    """Largest distance between matched Floquet eigenvalues of the atom-only and full models,
    in units of the allowed error ``max(5% |lambda|, 1e-3 kappa)``."""
    q = p.with_(n_atoms=n_atoms, omega=2 * p.omega_res)
    la, lf = floquet.compare_models(q, n_phot, m_cut, sector=1, k=10)
    i, j, d = floquet.match_spectra(la, lf, q.omega)
    allowed = np.maximum(0.05 * np.abs(la[i]), 1e-3 * q.kappa)
    return _check(f"cavity_elimination_N{n_atoms}", float(np.max(d / allowed)), 1.0)


def check_trace(p: ModelParams, n_atoms: int = 10, t_end: float = 50.0) -> Check:
    """Trace drift of the atom-only density matrix under the driven generator."""
    q = p.with_(n_atoms=n_atoms, omega=2 * p.omega_res)
    s = hilbert.AtomSector(n_atoms)
    h = build_atom_only_harmonics(q, s)
    t = np.linspace(0.0, t_end, 51)
    ev = evolve_density(h, initial_ground_state(s.dim), t, t[1] / 50, params=q)
    return _check("quantum_trace_drift", float(ev.trace_err.max()), 1e-8)


def check_semiclassical_plateau(p: ModelParams, n_traj: int, seed: int) -> Check:
    """Relative gap between stochastic and mean-field late-time ``X^2_tav/N^2`` in the crystal phase."""
    q = p.with_(n_atoms=10000, omega=2 * p.omega_res)
    if q.g1 <= q.g1_c:
        q = q.with_(g1=0.2 * q.g0)
    t_end = 6000.0
    period = q.period
    per = int(np.ceil(period / 0.5))
    stride = int(np.ceil(period / per / 0.02))
    cfg = semiclassical.EnsembleConfig(n_traj=n_traj, dt=period / per / stride, seed=seed, t_end=t_end,
                                       record_stride=stride)
    res = semiclassical.run_ensemble(q, cfg)
    traj = meanfield.integrate_meanfield(meanfield.seed_state(q.n_atoms), q, t_end)
    sc = res.final_x2_tav()[0] / q.n_atoms**2
    mf = traj.final_x2_tav_norm()
    return _check("semiclassical_vs_meanfield_plateau", abs(sc / mf - 1.0), 0.10)


def run_suite(p: ModelParams, options: dict, seed: int = 0) -> list[Check]:
    fast = bool(options.get("fast", False))
    checks = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        checks.append(check_stability_routes(p))
        checks.append(check_threshold(p))
        checks.append(check_mathieu(p))
        checks.append(check_elimination_expansion(p))
        checks.append(check_trace(p))
        if fast:
            checks.append(check_cavity_elimination(p, 4, 4, int(options.get("m_cut", 4))))
        else:
            checks.append(check_cavity_elimination(p, int(options.get("n_full", 10)),
                                                   int(options.get("n_phot", 5)), int(options.get("m_cut", 4))))
            checks.append(check_semiclassical_plateau(p, int(options.get("n_traj", 300)), seed))
    return checks
