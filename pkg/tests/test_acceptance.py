"""Acceptance criteria 1-7 at their stated tolerances.

Each test prints one ``PASS``/``FAIL`` line (repeated in the terminal
summary) before asserting. Criteria 2-6 are expensive and carry the
``slow`` marker; deselect them with ``-m "not slow"``.
"""
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.ndimage import binary_dilation, label

from dicke_dtc import cli, floquet, hilbert, meanfield, numerics
from dicke_dtc import semiclassical as sc
from dicke_dtc.liouville import build_atom_only_harmonics, evolve_density, initial_ground_state
from dicke_dtc.model import (ModelParams, critical_coupling, damping_gamma0, resonance_frequency,
                             threshold_g1c)
from dicke_dtc.validation import check_mathieu

slow = pytest.mark.slow


# 1 --------------------------------------------------------------------------------

def test_criterion_1_closed_forms(report):
    p = ModelParams.from_ratios(n_atoms=10)
    got = {
        "g_c": critical_coupling(p),
        "omega_res": resonance_frequency(p),
        "gamma0": damping_gamma0(p),
        "g1_c/g0": threshold_g1c(p) / p.g0,
    }
    want = {"g_c": 0.2236068, "omega_res": 0.08660254, "gamma0": 0.00125, "g1_c/g0": 0.0866025}
    err = {k: abs(got[k] - want[k]) for k in want}
    ok = max(err.values()) <= 1e-7
    report("criterion 1 closed forms", ok, ", ".join(f"{k}={got[k]:.9g}" for k in want)
           + f" (max error {max(err.values()):.2g}, tolerance 1e-7)")
    assert ok


# 2 --------------------------------------------------------------------------------

def _nearest(values, target, omega, k):
    d = values - target
    d = np.hypot(d.real, np.mod(d.imag + 0.5 * omega, omega) - 0.5 * omega)
    return values[np.argsort(d)[:k]]


@slow
def test_criterion_2_cavity_elimination(report):
    p = ModelParams.from_ratios(n_atoms=10, g1_over_g0=0.2)
    w = p.omega
    # both coherence-parity sectors, then the 20 modes nearest i omega/2 overall
    parts = [floquet.compare_models(p, n_phot=5, m_cut=4, sector=s, k=20) for s in (0, 1)]
    la = _nearest(np.concatenate([a for a, _ in parts]), 0.5j * w, w, 20)
    lf = _nearest(np.concatenate([b for _, b in parts]), 0.5j * w, w, 20)
    i, j, d = floquet.match_spectra(la, lf, w)
    allowed = np.maximum(0.05 * np.abs(la[i]), 1e-3 * p.kappa)
    ok = len(d) == 20 and bool(np.all(d <= allowed))
    report("criterion 2 cavity elimination", ok,
           f"20 modes, max distance {d.max():.3g}, worst ratio to allowance {np.max(d / allowed):.3g}")
    assert ok


# 3 --------------------------------------------------------------------------------

@slow
def test_criterion_3a_gap_approaches_meanfield(report):
    p = ModelParams.from_ratios(g1_over_g0=0.05)
    n_list = [10, 20, 30, 40, 50, 60]
    res = floquet.gap_scan(p, n_list, m_cuts=(4,))
    gam = np.array([r.gamma for r in res])
    q = p.with_(n_atoms=10000)
    gamma_fl = -meanfield.stability_exponents(meanfield.stability_harmonics(q), q.omega).gamma_max
    dev = np.abs(gam / gamma_fl - 1)
    monotone = bool(np.all(np.diff(dev) < 0))
    ok = monotone and dev[-1] < 0.10
    report("criterion 3a gap approach", ok,
           f"gamma_Fl={gamma_fl:.4g}; gamma(N)={np.array2string(gam, precision=4)}; "
           f"deviation monotone={monotone}, final {dev[-1]:.1%} (tolerance 10%)")
    assert ok


@slow
def test_criterion_3b_gap_closes_exponentially(report):
    p = ModelParams.from_ratios(g1_over_g0=0.2)
    n_list = [10, 20, 30, 40]
    res = floquet.gap_scan(p, n_list, m_cuts=(3, 4))
    g3 = np.array([r.gamma for r in res if r.m_cut == 3])
    g4 = np.array([r.gamma for r in res if r.m_cut == 4])
    slope = floquet.log_slope(n_list, g4)
    cut = float(np.max(np.abs(g3 / g4 - 1)))
    slope_ok = -0.015 <= slope <= -0.005 / 3
    ok = slope_ok and cut < 0.01
    report("criterion 3b gap closing", ok,
           f"gamma(N)={np.array2string(g4, precision=4)}; log-slope {slope:.4g} "
           f"(band [-0.015, -0.00167]); M_cut 3 vs 4 max {cut:.2%} (tolerance 1%)")
    assert ok


# 4 --------------------------------------------------------------------------------

@slow
def test_criterion_4_three_way_dynamics(report):
    args = cli.build_parser().parse_args(["dynamics", "--preset", "fig_s1c", "--set", "t_end=3000", "--threads", "1"])
    cfg = cli.build_run_config(args)
    p = cli._params(cfg)
    t, series = cli.run_dynamics(p, cfg.options, cfg.seed)
    late = t >= 1000.0
    plateau = {k: float(np.nanmean(v[late])) for k, v in series.items()}
    names = sorted(plateau)
    worst = max(abs(plateau[a] / plateau[b] - 1) for a in names for b in names)
    ok = len(names) == 3 and worst < 0.10
    report("criterion 4 three-way dynamics", ok,
           ", ".join(f"{k}={plateau[k]:.4g}" for k in names) + f" over t>=1000; max relative gap {worst:.1%}")
    assert ok


# 5 --------------------------------------------------------------------------------

def _gamma_grid(p, g1_ratios, omega_ratios):
    return cli.stability_grid(p, g1_ratios, omega_ratios, m_cut=12)


@slow
def test_criterion_5_phase_diagram(report):
    p = ModelParams.from_ratios(n_atoms=10000, g1_over_g0=0.0)
    g1 = np.linspace(0.0, 0.9, 31)
    om = np.linspace(0.25, 1.25, 31)
    h = om[1] - om[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        pd = meanfield.phase_diagram(p, g1, om, t_eval=1e4)
        pred = _gamma_grid(p, g1, om) > 0
        # lower edge at exact resonance, from a fine mean-field column and from the Floquet bisection
        g1c = threshold_g1c(p)
        col = np.linspace(0.8, 1.2, 41) * g1c / p.g0
        edge_mf = col[meanfield.phase_diagram(p, col, [1.0], t_eval=1e4).superradiant[:, 0]].min() * p.g0 / g1c
        edge_fl = meanfield.threshold_g1_floquet(p, omega=2 * p.omega_res) / g1c
    sr = pd.superradiant
    k = np.ones((3, 3), bool)
    outside = int((sr & ~binary_dilation(pred, k)).sum())
    uncovered = int((pred & ~binary_dilation(sr, k)).sum())
    lab, n = label(sr)
    orders = []
    for c in range(1, n + 1):
        rows, cols = np.nonzero(lab == c)
        tip = cols[rows == rows.min()]
        w_tip = om[tip]
        order = int(np.argmin([np.min(np.abs(w_tip - 1.0 / m)) for m in (1, 2, 3)])) + 1
        if np.min(np.abs(w_tip - 1.0 / order)) <= 2 * h + 1e-12:
            orders.append(order)
    lobes_ok = sorted(orders) == [1, 2, 3]
    edge_ok = abs(edge_mf - 1) < 0.05 and abs(edge_fl - 1) < 0.05
    ok = lobes_ok and outside == 0 and uncovered == 0 and edge_ok
    report("criterion 5 phase diagram", ok,
           f"lobes found for n={sorted(orders)}; cells beyond one cell of gamma_max>0: {outside}, "
           f"unstable cells without superradiance nearby: {uncovered}; resonant lower edge "
           f"{edge_mf:.3f} g1_c (mean field), {edge_fl:.4f} g1_c (Floquet), tolerance 5%")
    assert ok


# 6 --------------------------------------------------------------------------------

def _intervals(x, mask):
    """Closed intervals of ``x`` where ``mask`` holds."""
    out, start = [], None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        if start is not None and (not m or i == len(mask) - 1):
            stop = i if m else i - 1
            out.append((x[start], x[stop]))
            start = None
    return out


def _dist(x, iv):
    lo, hi = iv
    return max(lo - x, 0.0, x - hi)


@slow
def test_criterion_6_dynamical_response(report):
    p = ModelParams.from_ratios(n_atoms=10000, g1_over_g0=0.75)
    ratios = np.linspace(0.25, 1.25, 31)
    h = ratios[1] - ratios[0]
    om = ratios * 2 * p.omega_res
    cfg = sc.EnsembleConfig(n_traj=1000, dt=0.02, seed=7, t_end=5000.0, record_stride=25)
    res = sc.run_omega_scan(p, om, cfg, t0=3000.0, t_max=2000.0)
    x2 = res.final_x2_tav() / p.n_atoms**2
    sr = x2 > 1e-2

    fine = np.linspace(0.25, 1.25, 1001)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        gfine = _gamma_grid(p, [0.75], fine)[0]
    windows = _intervals(fine, gfine > 0)
    tol = h * (1 + 1e-9)
    stray = [r for r, s in zip(ratios, sr) if s and min(_dist(r, w) for w in windows) > tol]
    missed = [r for r, s in zip(ratios, sr) if not s and any(w[0] + tol < r < w[1] - tol for w in windows)]
    windows_ok = not stray and not missed

    def lobe(n):
        iv = min(windows, key=lambda w: _dist(1.0 / n, w))
        return iv, [g for g, r in enumerate(ratios) if iv[0] <= r <= iv[1]]

    nu = np.linspace(0.01, 1.5, 1491)
    peaks = {}
    for n, target in ((1, 0.5), (2, 1.0)):
        _, cells = lobe(n)
        pk = []
        for g in cells:
            spec = sc.spectrum_s1(res.c1_t, res.c1[g], nu * om[g], t0=3000.0)
            pk.append(sc.dominant_frequency(spec, nu_min=0.05 * om[g]) / om[g])
        peaks[n] = (target, np.array(pk))
    peaks_ok = all(len(v) > 0 and np.all(np.abs(v - t) < 0.02) for t, v in peaks.values())

    # edge shape of the main lobe: steps in X^2_tav between neighbouring cells, relative to the lobe maximum
    iv, cells = lobe(1)
    run = [g for g in range(len(ratios)) if sr[g] and _dist(ratios[g], iv) <= tol]
    top = run[int(np.argmax(x2[run]))]
    m = x2[top]
    lower_steps = np.abs(np.diff(x2[run[0] - 1:top + 1])) / m
    upper_steps = np.abs(np.diff(x2[top:run[-1] + 2])) / m
    asym_ok = upper_steps.max() > 0.5 and lower_steps.max() < 0.3
    ok = windows_ok and peaks_ok and asym_ok
    report("criterion 6 dynamical response", ok,
           f"stability windows {[(round(float(a), 3), round(float(b), 3)) for a, b in windows]}; superradiant cells "
           f"{np.round(ratios[sr], 3).tolist()}; stray {np.round(stray, 3).tolist()}, missed "
           f"{np.round(missed, 3).tolist()}; S1 peaks/omega n=1 {np.round(peaks[1][1], 3).tolist()}, "
           f"n=2 {np.round(peaks[2][1], 3).tolist()}; main lobe largest step upper {upper_steps.max():.2f}, "
           f"lower {lower_steps.max():.2f} of max")
    assert ok


# 7 --------------------------------------------------------------------------------

def _random_density(d, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_criterion_7_property_suites(report):
    results = {}
    # trace and Hermiticity under the driven generator
    p = ModelParams.from_ratios(n_atoms=10, g1_over_g0=0.2)
    h = build_atom_only_harmonics(p, hilbert.AtomSector(10))
    ev = evolve_density(h, _random_density(11, 1), np.linspace(0, 100.0, 6), 0.02, keep_states=True, params=p)
    herm = max(np.abs(r - r.conj().T).max() for r in ev.states)
    results["trace/Hermiticity"] = (max(ev.trace_err.max(), herm) <= 1e-8, f"{max(ev.trace_err.max(), herm):.2g}")
    # no Floquet mode grows
    q = ModelParams.from_ratios(n_atoms=6, g1_over_g0=0.2)
    hq = build_atom_only_harmonics(q, hilbert.AtomSector(6))
    worst = -np.inf
    for s in (0, 1):
        fm = floquet.assemble(hq, 3, parity=floquet.atom_parity(hilbert.AtomSector(6)), sector=s)
        central = [m.lam for m in floquet.eigs_near(fm, 0.5j * q.omega, k=40) if m.edge_weight < 1e-3]
        worst = max(worst, max(np.real(central)))
    results["Re(lambda)<=1e-8"] = (worst <= 1e-8, f"{worst:.2g}")
    # mean-field sphere
    d = ModelParams.from_ratios(n_atoms=10000, g1_over_g0=0.2)
    traj = meanfield.integrate_meanfield(meanfield.seed_state(d.n_atoms), d, 3000.0)
    results["sphere"] = (traj.sphere_drift <= 1e-6, f"{traj.sphere_drift:.2g} N^2")
    # Mathieu against Floquet in the perturbative window
    c = check_mathieu(ModelParams.from_ratios(n_atoms=10000))
    results["Mathieu"] = (c.passed, f"{c.measured:.2%}")
    # vacuum calibration of the noise
    v = ModelParams(g0=0.0, g1=0.0, omega=0.0, n_atoms=10)
    er = sc.run_ensemble(v, sc.EnsembleConfig(n_traj=4000, dt=0.01, seed=5, t_end=20.0, record_stride=100))
    vac = float(er.photon_proxy[0, er.t >= 10.0].mean()) / 2
    results["vacuum"] = (abs(vac - 1) < 3 / np.sqrt(4000), f"<a_x^2>={vac:.4f}")
    # RK4 order
    dts = [0.2, 0.1, 0.05, 0.025]
    errs = [abs(numerics.rk4_integrate(lambda t, y: -y, np.array([1.0]), 0.0, 2.0, dt)[1][-1, 0] - np.exp(-2))
            for dt in dts]
    order = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    results["RK4 order"] = (abs(order - 4) < 0.15, f"{order:.3f}")
    # dense against sparse eigensolver
    rng = np.random.default_rng(3)
    a = (sp.random(200, 200, density=0.05, random_state=rng) + sp.diags(rng.normal(size=200))).astype(complex)
    a = a.tocsc()
    sparse = numerics.shift_invert_eigs(a, 0.3 + 0.1j, 10).values
    dense = numerics.dense_eig(a.toarray()).nearest(0.3 + 0.1j, 10).values
    # nearest-neighbour distance both ways; conjugate pairs make sorted order unstable
    dist = np.abs(sparse[:, None] - dense[None, :])
    diff = float(max(dist.min(axis=1).max(), dist.min(axis=0).max()))
    results["dense vs sparse"] = (diff <= 1e-9, f"{diff:.2g}")
    ok = all(v[0] for v in results.values())
    report("criterion 7 property suites", ok, "; ".join(f"{k} {'ok' if v[0] else 'FAIL'} ({v[1]})"
                                                        for k, v in results.items()))
    assert ok
