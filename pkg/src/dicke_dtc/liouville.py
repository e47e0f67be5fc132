"""Time-periodic Liouvillians as Fourier harmonics, and density-matrix evolution.

Two generators are provided:

* the full atom-cavity model, ``H = delta_c a^dag a + Delta n_up +
  g(t)/sqrt(N) (a + a^dag) X`` with cavity loss ``kappa``;
* the atom-only model obtained by eliminating the cavity, where the jump
  operator ``beta(t) = c_+ b_up^dag b_down + c_- b_down^dag b_up`` carries both
  the cavity-mediated interaction and the cooling.

Density matrices are vectorised by stacking columns, so ``A rho B^dag`` maps
to ``conj(B) kron A``. Dissipators follow the convention
``-kappa (J^dag J rho + rho J^dag J - 2 J rho J^dag)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import hilbert
from .errors import ConfigurationError, IntegrationError
from .model import ModelParams, coupling_g, coupling_g_dot

log = logging.getLogger(__name__)

__all__ = [
    "ElimCoefficients",
    "SuperOperatorHarmonics",
    "c_pm_expanded",
    "c_pm_exact",
    "c_pm_harmonics",
    "build_full_harmonics",
    "build_atom_only_harmonics",
    "evolve_density",
    "initial_ground_state",
    "atom_only_operators",
    "DensityEvolution",
    "period_average",
    "spre",
    "spost",
    "sandwich",
    "trace_row",
    "vec",
    "unvec",
]


# vectorisation helpers ------------------------------------------------------

def vec(rho):
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v, d=None):
    v = np.asarray(v)
    d = int(round(np.sqrt(v.size))) if d is None else d
    return v.reshape((d, d), order="F")


def spre(a):
    """Superoperator of ``rho -> a rho``."""
    d = a.shape[0]
    return sp.kron(sp.identity(d, dtype=complex), a, format="csr")


def spost(b):
    """Superoperator of ``rho -> rho b``."""
    d = b.shape[0]
    return sp.kron(sp.csr_matrix(b).T, sp.identity(d, dtype=complex), format="csr")


def sandwich(a, b):
    """Superoperator of ``rho -> a rho b^dag``."""
    return sp.kron(sp.csr_matrix(b).conj(), a, format="csr")


def trace_row(d):
    """Row vector ``t`` with ``t @ vec(rho) == trace(rho)``."""
    return vec(np.eye(d, dtype=complex))


# elimination coefficients ----------------------------------------------------

@dataclass
class ElimCoefficients:
    t: np.ndarray
    c_plus: np.ndarray
    c_minus: np.ndarray
    mode: str


def c_pm_expanded(p: ModelParams, t) -> ElimCoefficients:
    """Slow-drive expansion of the elimination amplitudes.

    ``c_pm = -(1/sqrt N) [g/z + i g'/z^2 -+ Delta g/z^2]`` with
    ``z = delta_c - i kappa``. The cross term ``Delta g'`` is not included.
    """
    t = np.asarray(t, dtype=float)
    z = complex(p.delta_c, -p.kappa)
    g = coupling_g(p, t)
    gd = coupling_g_dot(p, t)
    common = g / z + 1j * gd / z**2
    split = p.delta * g / z**2
    pref = -1.0 / np.sqrt(p.n_atoms)
    return ElimCoefficients(t, pref * (common - split), pref * (common + split), "expanded")


def c_pm_harmonics(p: ModelParams) -> dict:
    """Fourier coefficients ``{m: (c_plus^(m), c_minus^(m))}`` of the expanded amplitudes."""
    z = complex(p.delta_c, -p.kappa)
    g_h = {0: p.g0, 1: 0.5 * p.g1, -1: 0.5 * p.g1}
    gd_h = {0: 0.0, 1: 0.5j * p.g1 * p.omega, -1: -0.5j * p.g1 * p.omega}
    pref = -1.0 / np.sqrt(p.n_atoms)
    out = {}
    for m in (-1, 0, 1):
        common = g_h[m] / z + 1j * gd_h[m] / z**2
        split = p.delta * g_h[m] / z**2
        out[m] = (pref * (common - split), pref * (common + split))
    return out


def c_pm_exact(p: ModelParams, t_end, dt, record=False) -> ElimCoefficients:
    """Integrate ``i dc/dt = (delta_c +- Delta - i kappa) c + g(t)/sqrt N`` from ``c(0) = 0``."""
    limit = 0.05 * min(1.0 / p.kappa, 1.0 / p.omega if p.omega > 0 else np.inf)
    if dt > limit * (1 + 1e-12):
        raise ConfigurationError(f"dt = {dt} exceeds 0.05 min(1/kappa, 1/omega) = {limit}")
    rates = np.array([p.delta_c + p.delta - 1j * p.kappa, p.delta_c - p.delta - 1j * p.kappa])
    inv_sqrt_n = 1.0 / np.sqrt(p.n_atoms)

    def rhs(t, c):
        return -1j * (rates * c + coupling_g(p, t) * inv_sqrt_n)

    from .numerics import rk4_integrate

    ts, cs = rk4_integrate(rhs, np.zeros(2, dtype=complex), 0.0, float(t_end), dt)
    if record:
        return ElimCoefficients(ts, cs[:, 0], cs[:, 1], "exact")
    return ElimCoefficients(ts[-1:], cs[-1:, 0], cs[-1:, 1], "exact")


# harmonics -------------------------------------------------------------------

def _merge(target: dict, m: int, mat):
    if m in target:
        target[m] = target[m] + mat
    else:
        target[m] = mat


@dataclass
class SuperOperatorHarmonics:
    """Fourier components of a periodic Lindblad generator.

    ``harmonics[m]`` acts on column-stacked density matrices. The same
    generator is also kept in operator form (Hamiltonian and jump-operator
    harmonics) so time stepping can work with ``d x d`` matrices directly.
    """

    harmonics: dict
    dim: int
    model: str
    omega: float
    hamiltonian: dict = field(repr=False)
    jumps: dict = field(repr=False)
    rate: float = 1.0
    observables: dict = field(default_factory=dict, repr=False)

    @property
    def max_harmonic(self) -> int:
        nz = [abs(m) for m, mat in self.harmonics.items() if mat.nnz and abs(mat).max() > 0]
        return max(nz) if nz else 0

    def at(self, t) -> sp.csr_matrix:
        """Reconstructed ``L(t) = sum_m L_m exp(i m omega t)``."""
        out = None
        for m, mat in self.harmonics.items():
            term = mat * np.exp(1j * m * self.omega * t)
            out = term if out is None else out + term
        return out.tocsr()

    def _op_at(self, ops: dict, t):
        out = None
        for m, mat in ops.items():
            term = mat * np.exp(1j * m * self.omega * t)
            out = term if out is None else out + term
        return out

    def _patterns(self):
        if "_periodic" not in self.__dict__:
            self.__dict__["_periodic"] = (_BandedPeriodic(self.hamiltonian, self.omega),
                                          _BandedPeriodic(self.jumps, self.omega) if self.jumps else None)
        return self.__dict__["_periodic"]

    def apply(self, t, rho):
        """``L(t) rho`` evaluated in operator form for a ``d x d`` matrix ``rho``."""
        hp, jp = self._patterns()
        h = hp.at(t)
        out = -1j * (_band_left(h, rho) - _band_right(rho, h))
        if jp is None:  # no coupling, no dissipation channel
            return out
        j = jp.at(t)
        jd = _band_adjoint(j)
        k = _band_product(jd, j)
        out -= self.rate * (_band_left(k, rho) + _band_right(rho, k) - 2.0 * _band_right(_band_left(j, rho), jd))
        return out


# banded operators: {k: a_k} with a_k[i] = A[i, i + k], zero where i + k falls outside

class _BandedPeriodic:
    """``sum_m A_m exp(i m omega t)`` stored by diagonals.

    Time stepping only needs products of these operators with dense ``d x d``
    matrices; by diagonals each product is a handful of vectorised slices.
    """

    def __init__(self, ops: dict, omega: float):
        mats = {m: sp.coo_matrix(a) for m, a in ops.items()}
        self.d = next(iter(mats.values())).shape[0]
        offsets = np.unique(np.concatenate([a.col.astype(np.int64) - a.row for a in mats.values()]))
        self.offsets = [int(k) for k in offsets]
        self.ms = np.array(sorted(mats))
        self.data = np.zeros((len(self.ms), len(offsets), self.d), dtype=complex)
        for i, m in enumerate(self.ms):
            a = mats[m]
            pos = np.searchsorted(offsets, a.col.astype(np.int64) - a.row)
            np.add.at(self.data[i], (pos, a.row), a.data)
        self.omega = omega

    def at(self, t) -> dict:
        vals = np.tensordot(np.exp(1j * self.ms * self.omega * t), self.data, axes=1)
        return dict(zip(self.offsets, vals))


def _band_left(a: dict, x):
    """``A @ x``."""
    d = x.shape[0]
    out = np.zeros_like(x, dtype=complex)
    for k, v in a.items():
        if k >= 0:
            out[: d - k] += v[: d - k, None] * x[k:]
        else:
            out[-k:] += v[-k:, None] * x[: d + k]
    return out


def _band_right(x, a: dict):
    """``x @ A``."""
    d = x.shape[1]
    out = np.zeros_like(x, dtype=complex)
    for k, v in a.items():
        if k >= 0:
            out[:, k:] += x[:, : d - k] * v[None, : d - k]
        else:
            out[:, : d + k] += x[:, -k:] * v[None, -k:]
    return out


def _band_adjoint(a: dict) -> dict:
    out = {}
    for k, v in a.items():
        w = np.zeros_like(v)
        # (A^dag)[i, i - k] = conj(A[i - k, i]) = conj(v[i - k])
        if k >= 0:
            w[k:] = np.conj(v[: len(v) - k])
        else:
            w[: len(v) + k] = np.conj(v[-k:])
        out[-k] = w
    return out


def _band_product(a: dict, b: dict) -> dict:
    """Diagonals of ``A @ B``."""
    out = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            d = len(va)
            w = np.zeros(d, dtype=complex)
            # c[i] = va[i] * vb[i + ka] for 0 <= i + ka < d
            lo, hi = max(0, -ka), min(d, d - ka)
            w[lo:hi] = va[lo:hi] * vb[lo + ka:hi + ka]
            out[ka + kb] = out[ka + kb] + w if ka + kb in out else w
    return out


def _right(rho, a):
    """``rho @ a`` for dense ``rho`` and sparse or dense ``a``."""
    return (a.T @ rho.T).T


def _superop_from_operators(hamiltonian: dict, jumps: dict, rate: float) -> dict:
    """Assemble superoperator harmonics from operator harmonics."""
    out = {}
    for m, h in hamiltonian.items():
        _merge(out, m, -1j * (spre(h) - spost(h)))
    ms = sorted(jumps)
    for m1 in ms:
        jd = jumps[m1].conj().T.tocsr()  # harmonic -m1 of J^dag
        for m2 in ms:
            j = jumps[m2]
            m = m2 - m1
            k = (jd @ j).tocsr()
            term = spre(k) + spost(k) - 2.0 * sandwich(j, jumps[m1])
            _merge(out, m, -rate * term)
    return {m: sp.csr_matrix(v) for m, v in sorted(out.items())}


def build_full_harmonics(p: ModelParams, sector: hilbert.AtomSector, cavity: hilbert.CavitySpace):
    """Atom-cavity generator; harmonics ``m = -1, 0, 1``."""
    at = hilbert.atom_observables(sector)
    cv = hilbert.cavity_ops(cavity)
    x_c = hilbert.kron(cv["a"] + cv["a_dag"], at["X"])
    h0 = (
        p.delta_c * hilbert.kron(cv["number"], sector.identity())
        + p.delta * hilbert.kron(cavity.identity(), at["n_up"])
        + (p.g0 / np.sqrt(p.n_atoms)) * x_c
    )
    ham = {0: h0.tocsr()}
    if p.g1 != 0:
        h1 = ((0.5 * p.g1 / np.sqrt(p.n_atoms)) * x_c).tocsr()
        ham[1] = h1
        ham[-1] = h1
    jumps = {0: hilbert.kron(cv["a"], sector.identity())}
    obs = {
        "X": hilbert.kron(cavity.identity(), at["X"]),
        "photons": hilbert.kron(cv["number"], sector.identity()),
    }
    return SuperOperatorHarmonics(
        _superop_from_operators(ham, jumps, p.kappa),
        sector.dim * cavity.dim,
        "full",
        p.omega,
        ham,
        jumps,
        p.kappa,
        obs,
    )


def atom_only_operators(p: ModelParams, sector: hilbert.AtomSector, retardation=True):
    """Operator harmonics ``(H_at^(m), beta^(m))`` of the eliminated model.

    With ``retardation=False`` the ``Delta`` split between ``c_+`` and ``c_-``
    is dropped, which removes the cooling.
    """
    lad = hilbert.atom_ladder(sector)
    lad_h = lad.conj().T.tocsr()
    obs = hilbert.atom_observables(sector)
    x = obs["X"]
    cpm = c_pm_harmonics(p)
    if not retardation:
        cpm = {m: (0.5 * (cp + cm), 0.5 * (cp + cm)) for m, (cp, cm) in cpm.items()}
    beta = {}
    for m, (cp, cm) in cpm.items():
        if cp == 0 and cm == 0:
            continue
        beta[m] = (cp * lad + cm * lad_h).tocsr()
    g_h = {0: p.g0}
    if p.g1 != 0:
        g_h[1] = g_h[-1] = 0.5 * p.g1
    inv = 1.0 / (2.0 * np.sqrt(p.n_atoms))
    ham = {0: (p.delta * obs["n_up"]).tocsr()}
    for m1, gm in g_h.items():
        for m2 in beta:
            # (beta^dag)^(m2) = (beta^(-m2))^dag
            bd = beta[-m2].conj().T if -m2 in beta else None
            term = x @ beta[m2]
            if bd is not None:
                term = term + bd @ x
            _merge(ham, m1 + m2, (gm * inv) * term)
    ham = {m: sp.csr_matrix(h) for m, h in ham.items()}
    return ham, beta, obs


def build_atom_only_harmonics(p: ModelParams, sector: hilbert.AtomSector, mode="expanded", retardation=True):
    """Atom-only generator; harmonics ``m = -2..2`` assembled analytically."""
    if mode != "expanded":
        raise ConfigurationError("the atom-only generator is defined with the expanded amplitudes only")
    ham, beta, obs = atom_only_operators(p, sector, retardation=retardation)
    return SuperOperatorHarmonics(
        _superop_from_operators(ham, beta, p.kappa),
        sector.dim,
        "atom_only",
        p.omega,
        ham,
        beta,
        p.kappa,
        {"X": obs["X"]},
    )


# time evolution --------------------------------------------------------------

def period_average(t, y, period):
    """Forward one-period average ``(1/T) int_t^{t+T} y``; NaN where the window runs past the data.

    ``t`` must be uniformly spaced and ``period`` a multiple of the spacing
    up to rounding; the window is taken as the nearest whole number of samples.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.full(y.shape, np.nan)
    if len(t) < 2:
        return out
    h = t[1] - t[0]
    w = int(round(period / h))
    if w < 1 or w >= len(t):
        return out
    # trapezoid over w intervals via cumulative sums
    c = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * h)])
    out[: len(t) - w] = (c[w:] - c[:-w]) / (w * h)
    return out


@dataclass
class DensityEvolution:
    t: np.ndarray
    x2: np.ndarray
    x2_tav: np.ndarray
    trace_err: np.ndarray
    states: list | None = None
    extra: dict = field(default_factory=dict)


def evolve_density(h: SuperOperatorHarmonics, rho0, t_grid, dt, keep_states=False,
                   observables=None, trace_tol=1e-6, check_dt=True, params=None):
    """Fixed-step RK4 for ``d rho/dt = L(t) rho``.

    ``t_grid`` gives the recording times; it must be uniform with spacing a
    whole multiple of ``dt``. Records ``<X^2>``, the forward one-period
    average of it and the trace error at every grid point.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    rho = np.array(rho0, dtype=complex, copy=True)
    if rho.shape != (h.dim, h.dim):
        raise ConfigurationError(f"rho0 has shape {rho.shape}, generator expects {(h.dim, h.dim)}")
    if abs(np.trace(rho) - 1) > 1e-8 or np.abs(rho - rho.conj().T).max() > 1e-10:
        raise ConfigurationError("rho0 must be Hermitian with unit trace")
    if check_dt and params is not None:
        scales = [1.0 / params.kappa, 1.0 / params.delta]
        if params.omega > 0:
            scales.append(2 * np.pi / params.omega)
        limit = 0.02 * min(scales)
        if dt > limit * (1 + 1e-12):
            raise ConfigurationError(f"dt = {dt} exceeds 0.02 min(1/kappa, 2pi/omega, 1/Delta) = {limit}")
    spacing = np.diff(t_grid)
    if len(t_grid) > 1:
        if np.ptp(spacing) > 1e-9 * max(spacing[0], 1.0):
            raise ConfigurationError("t_grid must be uniformly spaced")
        stride = spacing[0] / dt
        if abs(stride - round(stride)) > 1e-6:
            raise ConfigurationError("grid spacing must be a multiple of dt")
        stride = int(round(stride))
    else:
        stride = 1

    x = h.observables.get("X")
    x2 = (x @ x).toarray() if x is not None else None
    obs = {name: sp.csr_matrix(o) for name, o in (observables or {}).items()}

    f = h.apply
    n_rec = len(t_grid)
    rec_x2 = np.empty(n_rec)
    rec_tr = np.empty(n_rec)
    rec_obs = {name: np.empty(n_rec, dtype=complex) for name in obs}
    states = [] if keep_states else None

    def record(i, t, rho):
        tr = np.trace(rho)
        rec_tr[i] = abs(tr - 1.0)
        if rec_tr[i] > trace_tol:
            raise IntegrationError(f"trace drift {rec_tr[i]:.3e} at t = {t:.6g} exceeds {trace_tol:g}")
        rec_x2[i] = np.real(np.sum(x2.T * rho)) if x2 is not None else np.nan
        for name, o in obs.items():
            rec_obs[name][i] = (o.multiply(rho.T)).sum()
        if keep_states:
            states.append(rho.copy())

    t = t_grid[0]
    record(0, t, rho)
    for i in range(1, n_rec):
        for _ in range(stride):
            k1 = f(t, rho)
            k2 = f(t + 0.5 * dt, rho + 0.5 * dt * k1)
            k3 = f(t + 0.5 * dt, rho + 0.5 * dt * k2)
            k4 = f(t + dt, rho + dt * k3)
            rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += dt
        t = t_grid[i]
        record(i, t, rho)

    tav = period_average(t_grid, rec_x2, 2 * np.pi / h.omega) if h.omega > 0 else rec_x2.copy()
    return DensityEvolution(t_grid, rec_x2, tav, rec_tr, states, rec_obs)


def initial_ground_state(dim: int):
    """All atoms in the lower level (and the cavity, if any, in vacuum)."""
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    return rho
