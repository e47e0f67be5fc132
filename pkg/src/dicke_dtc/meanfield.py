"""Mean-field dynamics of the atom-only model and its linear stability.

The condensate amplitudes ``phi_down, phi_up`` evolve under the coherent
interaction ``V0(t)`` and the cooling rate ``V1(t)`` produced by the
eliminated cavity. Linearising around the normal state gives a 2x2 periodic
system whose Floquet exponents decide the onset of superradiance; in the
weak-modulation limit it reduces to a damped Mathieu equation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, IntegrationError
from .liouville import period_average
from .model import ModelParams
from .numerics import adaptive_step

log = logging.getLogger(__name__)

__all__ = [
    "MeanFieldState",
    "MeanFieldTrajectory",
    "drive_coefficients",
    "meanfield_rhs",
    "seed_state",
    "integrate_meanfield",
    "classify_limit_cycle",
    "poincare_return_distances",
    "phase_diagram",
    "PhaseDiagram",
    "StabilityHarmonics",
    "stability_harmonics",
    "stability_exponents",
    "StabilityResult",
    "monodromy_exponents",
    "threshold_g1_floquet",
    "integrate_x_up",
    "growth_rate",
    "MathieuParams",
    "mathieu_params",
    "mathieu_exponents",
]


@dataclass
class MeanFieldState:
    phi_down: complex
    phi_up: complex

    @property
    def X(self):
        return bloch(self.phi_down, self.phi_up)[0]

    @property
    def Y(self):
        return bloch(self.phi_down, self.phi_up)[1]

    @property
    def Z(self):
        return bloch(self.phi_down, self.phi_up)[2]

    def as_array(self):
        return np.array([self.phi_down, self.phi_up], dtype=complex)


def bloch(phi_d, phi_u):
    """``X, Y, Z`` from the two amplitudes (works elementwise on arrays)."""
    cross = np.conj(phi_u) * phi_d
    x = 2.0 * cross.real
    # Y = i(phi_d^* phi_u - phi_u^* phi_d) = 2 Im(phi_u^* phi_d)
    y = 2.0 * cross.imag
    z = np.abs(phi_u) ** 2 - np.abs(phi_d) ** 2
    return x, y, z


def drive_coefficients(p: ModelParams, t, g0=None, g1=None, omega=None):
    """Interaction ``V0(t)`` and cooling ``V1(t)`` of the eliminated cavity.

    ``g0``, ``g1``, ``omega`` override the parameter set and may be arrays.
    """
    g0 = p.g0 if g0 is None else g0
    g1 = p.g1 if g1 is None else g1
    omega = p.omega if omega is None else omega
    den = p.cavity_denominator
    g = g0 + g1 * np.cos(omega * t)
    gd = -g1 * omega * np.sin(omega * t)
    v0 = 2.0 * p.delta_c * g**2 / den - 4.0 * p.delta_c * p.kappa * g * gd / den**2
    v1 = 4.0 * p.delta_c * p.delta * p.kappa * g**2 / den**2
    return v0, v1


def _rhs(phi_d, phi_u, v0, v1, delta, n):
    a = (v0 - 1j * v1) / n
    b = (v0 + 1j * v1) / n
    up2 = np.abs(phi_u) ** 2
    dn2 = np.abs(phi_d) ** 2
    d_down = 1j * a * up2 * phi_d + 1j * b * phi_u**2 * np.conj(phi_d)
    d_up = -1j * (delta - b * dn2) * phi_u + 1j * a * phi_d**2 * np.conj(phi_u)
    return d_down, d_up


def meanfield_rhs(s, t, p: ModelParams, cooling=True):
    """Time derivative of ``(phi_down, phi_up)``; ``s`` has leading axis of length 2."""
    s = np.asarray(s, dtype=complex)
    v0, v1 = drive_coefficients(p, t)
    if not cooling:
        v1 = 0.0 * v1
    dd, du = _rhs(s[0], s[1], v0, v1, p.delta, p.n_atoms)
    return np.stack([dd, du])


def seed_state(n_atoms: int) -> np.ndarray:
    """One excitation on top of the ground state, zero phases."""
    return np.array([math.sqrt(n_atoms - 1.0), 1.0], dtype=complex)


@dataclass
class MeanFieldTrajectory:
    t: np.ndarray
    phi: np.ndarray  # shape (n_rec, 2)
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    x2_tav: np.ndarray
    n_atoms: int
    period: float
    sphere_drift: float

    @property
    def x2_tav_norm(self):
        return self.x2_tav / self.n_atoms**2

    def final_x2_tav_norm(self):
        """One-period average of ``X^2/N^2`` over the last full period."""
        vals = self.x2_tav_norm[np.isfinite(self.x2_tav_norm)]
        return float(vals[-1]) if len(vals) else float("nan")

    def stroboscopic(self):
        """Samples at ``t = k T``; the recording grid is aligned to the period."""
        h = self.t[1] - self.t[0]
        per = int(round(self.period / h))
        idx = np.arange(0, len(self.t), per)
        return self.t[idx], np.stack([self.x[idx], self.y[idx], self.z[idx]], axis=1)


def _aligned_dt(dt, period, limit):
    """Largest step not above ``dt`` that divides the period, and samples per period."""
    dt = min(dt, limit)
    if not np.isfinite(period):
        return dt, None
    steps = int(math.ceil(period / dt - 1e-9))
    return period / steps, steps


def _dt_limit(p: ModelParams):
    scales = [1.0 / p.delta]
    if p.omega > 0:
        scales.append(2 * np.pi / p.omega)
    return 0.02 * min(scales)


def integrate_meanfield(s0, p: ModelParams, t_end, dt=None, cooling=True, record_per_period=20,
                        drift_tol=1e-4):
    """Fixed-step RK4 integration with the step aligned to the drive period.

    Records ``X, Y, Z`` ``record_per_period`` times per period and the
    forward one-period average of ``X^2``. Raises :class:`IntegrationError`
    when ``|X^2+Y^2+Z^2 - N^2|`` exceeds ``drift_tol N^2``.
    """
    limit = _dt_limit(p)
    if dt is not None and dt > limit * (1 + 1e-12):
        raise ConfigurationError(f"dt = {dt} exceeds 0.02 min(1/Delta, 2pi/omega) = {limit}")
    period = p.period if p.omega > 0 else 2 * np.pi / p.delta
    dt, steps = _aligned_dt(dt or limit, period, limit)
    stride = max(1, steps // record_per_period)
    while steps % stride:
        stride -= 1
    n_steps = int(round(t_end / dt))
    n_rec = n_steps // stride + 1

    s = np.array(s0, dtype=complex)
    n2 = float(p.n_atoms) ** 2
    rec = np.empty((n_rec, 2), dtype=complex)
    rec[0] = s
    f = lambda t, y: meanfield_rhs(y, t, p, cooling)
    t = 0.0
    for i in range(1, n_steps + 1):
        k1 = f(t, s)
        k2 = f(t + 0.5 * dt, s + 0.5 * dt * k1)
        k3 = f(t + 0.5 * dt, s + 0.5 * dt * k2)
        k4 = f(t + dt, s + dt * k3)
        s = s + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = i * dt
        if i % stride == 0:
            rec[i // stride] = s
    ts = np.arange(n_rec) * stride * dt
    x, y, z = bloch(rec[:, 0], rec[:, 1])
    drift = float(np.max(np.abs(x**2 + y**2 + z**2 - (np.abs(rec) ** 2).sum(axis=1)[0] ** 2)) / n2)
    if drift > drift_tol:
        raise IntegrationError(f"sphere drift {drift:.3e} N^2 exceeds {drift_tol:g} N^2")
    tav = period_average(ts, x**2, period)
    return MeanFieldTrajectory(ts, rec, x, y, z, tav, p.n_atoms, period, drift)


def poincare_return_distances(traj: MeanFieldTrajectory, lag=1):
    """Distances between stroboscopic samples ``lag`` periods apart."""
    _, pts = traj.stroboscopic()
    return np.linalg.norm(pts[lag:] - pts[:-lag], axis=1)


def classify_limit_cycle(traj: MeanFieldTrajectory, p: ModelParams | None = None, tol=1e-4,
                         min_periods=100, window=20):
    """Label the late-time attractor from stroboscopic samples at ``t = kT``.

    Returns one of ``fixed_point``, ``cycle_T``, ``cycle_2T``, ``irregular``.
    Distances are compared against ``tol * N``.
    """
    _, pts = traj.stroboscopic()
    if len(pts) - 1 < min_periods:
        raise ConfigurationError(f"trajectory covers {len(pts) - 1} periods, need {min_periods}")
    thr = tol * traj.n_atoms
    tail = pts[-(window + 2):]
    d1 = np.linalg.norm(tail[1:] - tail[:-1], axis=1)
    d2 = np.linalg.norm(tail[2:] - tail[:-2], axis=1)
    if np.all(d1 < thr):
        # a single stroboscopic point: static or moving with the drive period
        h = traj.t[1] - traj.t[0]
        per = int(round(traj.period / h))
        last = np.stack([traj.x[-per:], traj.y[-per:], traj.z[-per:]], axis=1)
        spread = np.linalg.norm(last - last.mean(axis=0), axis=1).max()
        return "fixed_point" if spread < thr else "cycle_T"
    # a decaying mode that flips sign every period also has small d2; demand that
    # the period-to-period jump is not shrinking before calling it a 2T cycle
    if np.all(d2 < thr) and d1[-1] > 0.9 * d1[0]:
        return "cycle_2T"
    return "irregular"


# phase diagram -----------------------------------------------------------------

@dataclass
class PhaseDiagram:
    g1_over_g0: np.ndarray
    omega_over_2wres: np.ndarray
    x2_tav_norm: np.ndarray  # shape (n_g1, n_omega)
    growth: np.ndarray  # late-time log-slope of X^2_tav
    superradiant: np.ndarray
    failures: list = field(default_factory=list)


def _batched_meanfield(p: ModelParams, g1, omega, t_end, dt_max, n_windows=2, x2_floor=1e-2):
    """Integrate many parameter cells at once; ``g1`` and ``omega`` are flat arrays.

    Each cell keeps its own period-aligned step so the one-period averages are
    exact. Returns the final one-period average of ``X^2/N^2`` and the average
    logarithmic growth rate of it over the last ``n_windows`` tenths of the run.
    """
    n = p.n_atoms
    g1 = np.asarray(g1, dtype=float)
    omega = np.asarray(omega, dtype=float)
    period = 2 * np.pi / omega
    steps_per = np.ceil(period / dt_max - 1e-9).astype(int)
    dt = period / steps_per
    # integrate each cell for a whole number of periods reaching at least t_end
    n_per = np.ceil(t_end / period - 1e-9).astype(int)
    total = steps_per * n_per
    n_max = int(total.max())
    # markers: period averages at three times -- end, end - t_end/10, end - 2 t_end/10
    marks = [total]
    for w in range(1, n_windows + 1):
        back = np.round(w * 0.1 * t_end / period).astype(int) * steps_per
        marks.append(total - back)
    s0 = seed_state(n)
    pd = np.full(g1.shape, s0[0])
    pu = np.full(g1.shape, s0[1])
    acc = [np.zeros(g1.shape) for _ in marks]
    t = np.zeros(g1.shape)
    g0 = p.g0

    def rhs(tt, a, b):
        v0, v1 = drive_coefficients(p, tt, g0=g0, g1=g1, omega=omega)
        return _rhs(a, b, v0, v1, p.delta, n)

    def x2(a, b):
        return (2.0 * (np.conj(b) * a).real) ** 2

    prev = x2(pd, pu)
    for i in range(1, n_max + 1):
        active = i <= total
        k1 = rhs(t, pd, pu)
        k2 = rhs(t + 0.5 * dt, pd + 0.5 * dt * k1[0], pu + 0.5 * dt * k1[1])
        k3 = rhs(t + 0.5 * dt, pd + 0.5 * dt * k2[0], pu + 0.5 * dt * k2[1])
        k4 = rhs(t + dt, pd + dt * k3[0], pu + dt * k3[1])
        npd = pd + (dt / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        npu = pu + (dt / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        pd = np.where(active, npd, pd)
        pu = np.where(active, npu, pu)
        t = np.where(active, i * dt, t)
        cur = x2(pd, pu)
        # trapezoid contributions to the last period before each marker
        for acc_k, mark in zip(acc, marks):
            inside = (i > mark - steps_per) & (i <= mark)
            acc_k += np.where(inside, 0.5 * (prev + cur) * dt, 0.0)
        prev = cur
    avgs = [a / period / n**2 for a in acc]
    final = avgs[0]
    early = avgs[-1]
    span = n_windows * 0.1 * t_end
    with np.errstate(divide="ignore", invalid="ignore"):
        growth = np.log(final / early) / span
    norm = (np.abs(pd) ** 2 + np.abs(pu) ** 2) / n
    return final, growth, norm


def phase_diagram(p_base: ModelParams, g1_grid, omega_grid, t_eval=1e4, dt=None, x2_floor=1e-2,
                  block=4096):
    """Mean-field ``X^2_tav/N^2`` over a grid of ``g1/g0`` (rows) and ``omega/(2 omega_res)`` (cols).

    All cells start from :func:`seed_state`. A cell counts as superradiant
    when the order parameter has saturated above ``x2_floor`` or is still
    growing at the end of the run.
    """
    g1_grid = np.asarray(g1_grid, dtype=float)
    omega_grid = np.asarray(omega_grid, dtype=float)
    if g1_grid.size == 0 or omega_grid.size == 0:
        raise ConfigurationError("empty grid")
    if np.any(np.diff(g1_grid) < 0) or np.any(np.diff(omega_grid) < 0):
        raise ConfigurationError("grids must be sorted ascending")
    G1, W = np.meshgrid(g1_grid * p_base.g0, omega_grid * 2 * p_base.omega_res, indexing="ij")
    dt_max = dt or 0.02 * min(1.0 / p_base.delta, 2 * np.pi / W.max())
    flat_g1, flat_w = G1.ravel(), W.ravel()
    final = np.full(flat_g1.shape, np.nan)
    growth = np.full(flat_g1.shape, np.nan)
    failures = []
    for start in range(0, flat_g1.size, block):
        sl = slice(start, start + block)
        with np.errstate(over="ignore", invalid="ignore"):
            f, gr, norm = _batched_meanfield(p_base, flat_g1[sl], flat_w[sl], t_eval, dt_max)
        bad = ~np.isfinite(f) | (np.abs(norm - 1.0) > 1e-4)
        for k in np.nonzero(bad)[0]:
            failures.append((start + k, "non-finite or sphere drift"))
        f[bad] = np.nan
        final[sl] = f
        growth[sl] = gr
    final = final.reshape(G1.shape)
    growth = growth.reshape(G1.shape)
    sr = (final > x2_floor) | (growth > 0)
    return PhaseDiagram(g1_grid, omega_grid, final, growth, sr, failures)


# linear stability ----------------------------------------------------------------

@dataclass
class StabilityHarmonics:
    """Fourier blocks ``A^(m)``, ``m = -2..2``, of ``A(t) = -i Upsilon H_nh(t)``."""

    blocks: dict
    v0: dict
    v1: dict
    delta: float


def _a_block(v0, v1, delta=0.0):
    return np.array(
        [[-1j * (delta - v0) - v1, 1j * v0 + v1], [-1j * v0 + v1, 1j * (delta - v0) - v1]],
        dtype=complex,
    )


def stability_harmonics(p: ModelParams, omega=None) -> StabilityHarmonics:
    """Fourier components of ``V0``, ``V1`` and of the linear operator around the normal state."""
    omega = p.omega if omega is None else omega
    den = p.cavity_denominator
    dc, k, g0, g1 = p.delta_c, p.kappa, p.g0, p.g1
    s0 = g0**2 + 0.5 * g1**2
    v0 = {0: 2 * dc * s0 / den + 0j}
    v1 = {0: 4 * k * dc * p.delta * s0 / den**2 + 0j}
    for sgn in (1, -1):
        v0[sgn] = 2 * dc * g0 * g1 / den - sgn * 2j * dc * k * omega * g0 * g1 / den**2
        v1[sgn] = 4 * k * dc * p.delta * g0 * g1 / den**2 + 0j
        q = 0.25 * g1**2
        v0[2 * sgn] = 2 * dc * q / den - sgn * 4j * dc * k * omega * q / den**2
        v1[2 * sgn] = 4 * k * dc * p.delta * q / den**2 + 0j
    blocks = {m: _a_block(v0[m], v1[m], p.delta if m == 0 else 0.0) for m in v0}
    return StabilityHarmonics(blocks, v0, v1, p.delta)


@dataclass
class StabilityResult:
    eigenvalues: np.ndarray
    gamma_max: float
    nu_fl: float
    nu_fl_folded: float
    dominant: complex


def _extended_matrix(sh: StabilityHarmonics, omega, m_cut):
    size = 2 * m_cut + 1
    big = np.zeros((2 * size, 2 * size), dtype=complex)
    for i, n in enumerate(range(-m_cut, m_cut + 1)):
        for m, blk in sh.blocks.items():
            j = i - m
            if 0 <= j < size:
                big[2 * i:2 * i + 2, 2 * j:2 * j + 2] += blk
        big[2 * i:2 * i + 2, 2 * i:2 * i + 2] -= 1j * n * omega * np.eye(2)
    return big


def stability_exponents(sh: StabilityHarmonics, omega, m_cut=12) -> StabilityResult:
    """Floquet exponents of the linearised fluctuations.

    Each exponent appears once per Fourier copy ``lambda + i n omega``; the
    representative kept is the copy whose ``phi_up`` component is dominated by
    the zeroth harmonic, which makes ``-Im(lambda)`` the physical oscillation
    frequency ``nu_Fl``. ``gamma_max`` is the largest real part.
    """
    if m_cut < 2:
        raise ConfigurationError("m_cut must be at least 2")
    big = _extended_matrix(sh, omega, m_cut)
    w, v = np.linalg.eig(big)
    size = 2 * m_cut + 1
    comp_up = np.abs(v[0::2, :]) ** 2  # (size, n_eig)
    keep = np.argmax(comp_up, axis=0) == m_cut
    # guard against edge artefacts of the truncation: demand little weight at the borders
    edge = (np.abs(v[:4, :]) ** 2).sum(axis=0) + (np.abs(v[-4:, :]) ** 2).sum(axis=0)
    keep &= edge < 1e-3
    phys = w[keep]
    if phys.size == 0:
        phys = w
    i_dom = int(np.argmax(phys.real))
    dom = phys[i_dom]
    nu = abs(dom.imag)
    folded = abs((dom.imag + 0.5 * omega) % omega - 0.5 * omega) if omega > 0 else nu
    return StabilityResult(np.sort_complex(phys), float(dom.real), float(nu), float(folded), complex(dom))


def monodromy_exponents(p: ModelParams, n_steps=4000):
    """Floquet exponents from the one-period propagator of the 2x2 system (independent check)."""
    from .numerics import rk4_step

    period = p.period
    dt = period / n_steps

    def a_of_t(t):
        v0, v1 = drive_coefficients(p, t)
        return _a_block(v0, v1, p.delta)

    f = lambda t, y: a_of_t(t) @ y
    y = np.eye(2, dtype=complex)
    t = 0.0
    for i in range(n_steps):
        y = rk4_step(f, t, y, dt)
        t = (i + 1) * dt
    mult = np.linalg.eigvals(y)
    return np.log(mult.astype(complex)) / period


def threshold_g1_floquet(p: ModelParams, omega=None, g1_max=None, m_cut=12, tol=1e-10):
    """Smallest ``g1`` with ``gamma_max = 0`` at fixed ``omega``, by bisection.

    Returns ``nan`` if the normal state stays stable up to ``g1_max``.
    """
    omega = p.omega if omega is None else omega
    g1_max = g1_max if g1_max is not None else 0.999 * (p.g_c - p.g0)

    def gmax(g1):
        return stability_exponents(stability_harmonics(p.with_(g1=g1, omega=omega)), omega, m_cut).gamma_max

    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        grid = np.linspace(0.0, g1_max, 64)
        vals = np.array([gmax(g) for g in grid])
        idx = np.nonzero(vals > 0)[0]
        if idx.size == 0:
            return float("nan")
        hi = grid[idx[0]]
        lo = grid[idx[0] - 1] if idx[0] > 0 else 0.0
        while hi - lo > tol * max(hi, 1e-300):
            mid = 0.5 * (lo + hi)
            if gmax(mid) > 0:
                hi = mid
            else:
                lo = mid
    return 0.5 * (lo + hi)


def integrate_x_up(p: ModelParams, x0, v0, t_end, t_eval=None, rtol=1e-10, atol=1e-12):
    """Solve ``x'' + 2 V1(t) x' + Delta (Delta - 2 V0(t)) x = 0`` with embedded RK 5(4) steps."""

    def f(t, y):
        w0, w1 = drive_coefficients(p, t)
        return np.array([y[1], -2.0 * w1 * y[1] - p.delta * (p.delta - 2.0 * w0) * y[0]])

    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, 2001)
    t_eval = np.asarray(t_eval, dtype=float)
    out = np.empty((len(t_eval), 2))
    y = np.array([x0, v0], dtype=float)
    t = 0.0
    h = 0.02 / max(p.delta, 1e-12)
    out[0] = y
    for i, te in enumerate(t_eval[1:], start=1):
        while t < te - 1e-14:
            step = min(h, te - t)
            ok, y_new, h_new = adaptive_step(f, t, y, step, rtol, atol)
            if ok:
                t += step
                y = y_new
                if step == h or h_new > h:
                    h = h_new
            else:
                h = h_new
        out[i] = y
    return t_eval, out


def growth_rate(t, x, period):
    """Exponential rate of the envelope of an oscillating signal.

    Fits ``log`` of the per-period RMS of ``x`` against time; the rate of
    ``x`` itself (not of ``x^2``) is returned.
    """
    t = np.asarray(t)
    x = np.asarray(x)
    h = t[1] - t[0]
    w = max(1, int(round(period / h)))
    n = (len(x) // w) * w
    rms = np.sqrt(np.mean(x[:n].reshape(-1, w) ** 2, axis=1))
    tc = t[:n].reshape(-1, w).mean(axis=1)
    slope = np.polyfit(tc, np.log(rms), 1)[0]
    return float(slope)


# Mathieu limit ----------------------------------------------------------------------

@dataclass
class MathieuParams:
    b: float
    epsilon: float
    gamma0: float
    omega_res: float
    delta: float
    validity: float  # max(gamma0, sqrt(Delta b)) / omega_res, should be << 1


def mathieu_params(p: ModelParams, omega=None) -> MathieuParams:
    omega = p.omega if omega is None else omega
    b = 2.0 * p.delta_c * p.g0 * p.g1 / p.cavity_denominator
    w = p.omega_res
    validity = max(p.gamma0, math.sqrt(p.delta * b)) / w if w > 0 else float("inf")
    return MathieuParams(b, omega - 2.0 * w, p.gamma0, w, p.delta, validity)


def mathieu_exponents(mp: MathieuParams):
    """``-gamma0 +- sqrt(Delta^2 b^2 / omega_res^2 - epsilon^2 / 4)`` on the principal branch."""
    arg = (mp.delta * mp.b / mp.omega_res) ** 2 - 0.25 * mp.epsilon**2
    root = np.sqrt(complex(arg))
    return -mp.gamma0 + root, -mp.gamma0 - root
