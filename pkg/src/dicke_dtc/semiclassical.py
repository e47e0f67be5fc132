"""Stochastic semiclassical trajectories of the cavity quadratures and the collective spin.

Each trajectory carries ``(a_x, a_p, X, Y, Z)``. The cavity quadratures feel
loss ``kappa`` and vacuum noise of strength ``sqrt(2 kappa)``; the spin obeys
the noiseless precession driven by ``2 g(t)/sqrt(N) a_x``. Initial values
are Gaussian with the vacuum and coherent-spin second moments.

Trajectories are stored column-wise in a ``(5, n_traj)`` array and advanced
together. Every trajectory owns a Philox stream keyed by
``(seed, group, index)``, so its path does not depend on how many other
trajectories are simulated alongside it.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, IntegrationError
from .liouville import period_average
from .model import ModelParams
from .numerics import NoiseBuffer, euler_maruyama_step, rng_stream

log = logging.getLogger(__name__)

__all__ = [
    "EnsembleConfig",
    "EnsembleResult",
    "SpectrumResult",
    "sample_initial",
    "drift",
    "step",
    "run_ensemble",
    "run_omega_scan",
    "two_time_correlation",
    "spectrum_s1",
    "dominant_frequency",
]

AX, AP, SX, SY, SZ = range(5)


@dataclass
class EnsembleConfig:
    """Settings for a trajectory ensemble.

    ``scheme`` is ``"heun"`` (predictor-corrector, weak order two for
    additive noise) or ``"euler"`` (Euler-Maruyama).
    """

    n_traj: int = 1000
    dt: float = 1e-3
    seed: int = 0
    t_end: float = 1000.0
    record_stride: int = 100
    scheme: str = "heun"
    max_excluded: float = 0.01

    def validate(self, p: ModelParams):
        if self.n_traj < 1:
            raise ConfigurationError("n_traj must be at least 1")
        if self.record_stride < 1:
            raise ConfigurationError("record_stride must be at least 1")
        if self.scheme not in ("heun", "euler"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        scales = [1.0 / p.kappa, 1.0 / p.delta]
        if p.omega > 0:
            scales.append(2 * np.pi / p.omega)
        limit = 0.02 * min(scales)
        if not 0 < self.dt <= limit * (1 + 1e-12):
            raise ConfigurationError(f"dt = {self.dt} outside (0, {limit:.3g}]")
        if self.t_end <= 0:
            raise ConfigurationError("t_end must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


def sample_initial(p: ModelParams, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Vacuum cavity plus all atoms down, with symmetric-ordered fluctuations.

    Returns shape ``(5,)`` or ``(5, size)``.
    """
    shape = () if size is None else (size,)
    z = rng.standard_normal((4,) + shape)
    sq = np.sqrt(p.n_atoms)
    out = np.empty((5,) + shape)
    out[AX] = z[0]
    out[AP] = z[1]
    out[SX] = sq * z[2]
    out[SY] = sq * z[3]
    out[SZ] = -float(p.n_atoms)
    return out


def drift(y, g, p: ModelParams):
    """Deterministic part of the equations of motion; ``g`` broadcasts against ``y[0]``."""
    c = (2.0 / np.sqrt(p.n_atoms)) * g
    ax, ap, x, yy, z = y
    cax = c * ax
    out = np.empty(np.broadcast_shapes(y.shape, (5,) + np.shape(cax)))
    out[AX] = p.delta_c * ap - p.kappa * ax
    out[AP] = -p.kappa * ap - p.delta_c * ax - c * x
    out[SX] = -p.delta * yy
    out[SY] = p.delta * x - cax * z
    out[SZ] = cax * yy
    return out


def _g(p: ModelParams, t, g1=None, omega=None):
    g1 = p.g1 if g1 is None else g1
    omega = p.omega if omega is None else omega
    return p.g0 + g1 * np.cos(omega * t)


def step(y, p: ModelParams, t, dt, noise, scheme="heun", g1=None, omega=None):
    """Advance by ``dt``; ``noise`` holds standard normals of shape ``(2,) + y.shape[1:]``.

    The increments ``sqrt(2 kappa dt) * noise`` enter ``a_x`` and ``a_p`` only.
    ``g1`` and ``omega`` may be arrays broadcasting against ``y[0]``.
    """
    amp = np.sqrt(2.0 * p.kappa * dt)
    if scheme == "euler":
        dw = np.zeros_like(y)
        dw[AX] = noise[0]
        dw[AP] = noise[1]
        return euler_maruyama_step(lambda tt, yy: drift(yy, _g(p, tt, g1, omega), p), t, y, dt, amp, dw)
    f0 = drift(y, _g(p, t, g1, omega), p)
    pred = y + dt * f0
    pred[AX] += amp * noise[0]
    pred[AP] += amp * noise[1]
    f1 = drift(pred, _g(p, t + dt, g1, omega), p)
    f0 += f1
    f0 *= 0.5 * dt
    f0 += y
    f0[AX] += amp * noise[0]
    f0[AP] += amp * noise[1]
    return f0


@dataclass
class EnsembleResult:
    """Ensemble moments on the record grid.

    Moment arrays have shape ``(n_groups, n_records)``; a plain run has one group.
    ``c1`` is filled only when a correlation window was requested.
    """

    t: np.ndarray
    x2: np.ndarray
    x2_tav: np.ndarray
    photon_proxy: np.ndarray
    n_excluded: np.ndarray
    n_traj: int
    omega: np.ndarray
    config: dict
    c1_t: np.ndarray | None = None
    c1: np.ndarray | None = None
    x_final: np.ndarray | None = field(default=None, repr=False)

    def final_x2_tav(self) -> np.ndarray:
        """Last available one-period average of ``<X^2>`` per group."""
        ok = np.nonzero(~np.isnan(self.x2_tav[0]))[0]
        if len(ok) == 0:
            return np.full(self.x2_tav.shape[0], np.nan)
        return self.x2_tav[:, ok[-1]]


def _simulate(p: ModelParams, cfg: EnsembleConfig, omegas, g1s, t0=None, t_max=None):
    """Core loop shared by single runs and scans; one group per ``(omega, g1)`` pair."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    g1s = np.atleast_1d(np.asarray(g1s, dtype=float))
    n_groups = len(omegas)
    nt = cfg.n_traj
    gens = [rng_stream(cfg.seed, gi, k) for gi in range(n_groups) for k in range(nt)]
    y = np.empty((5, n_groups * nt))
    for j, gen in enumerate(gens):
        y[:, j] = sample_initial(p, gen)
    y = y.reshape(5, n_groups, nt)
    noise = NoiseBuffer(gens, 2, block=max(16, min(256, 4_000_000 // max(1, len(gens)))))
    om = omegas[:, None]
    g1 = g1s[:, None]
    n_steps = int(round(cfg.t_end / cfg.dt))
    stride = cfg.record_stride
    n_rec = n_steps // stride + 1
    x2 = np.empty((n_groups, n_rec))
    ph = np.empty((n_groups, n_rec))
    excluded = np.zeros((n_groups, nt), dtype=bool)
    n_exc = np.zeros((n_groups, n_rec), dtype=int)
    want_c1 = t0 is not None
    if want_c1:
        i0 = int(round(t0 / (cfg.dt * stride)))
        i1 = i0 + int(round(t_max / (cfg.dt * stride)))
        if i1 >= n_rec:
            raise ConfigurationError("correlation window runs past t_end")
        c1 = np.empty((n_groups, i1 - i0 + 1))
        x_ref = None

    def record(r):
        bad = ~np.all(np.isfinite(y), axis=0)
        if np.any(bad & ~excluded):
            excluded[bad] = True
            y[:, bad] = 0.0
        keep = ~excluded
        cnt = np.maximum(keep.sum(axis=1), 1)
        xx = y[SX] ** 2
        pp = y[AX] ** 2 + y[AP] ** 2
        x2[:, r] = np.where(keep, xx, 0.0).sum(axis=1) / cnt
        ph[:, r] = np.where(keep, pp, 0.0).sum(axis=1) / cnt
        n_exc[:, r] = nt - keep.sum(axis=1)
        return keep, cnt

    record(0)
    if want_c1 and i0 == 0:
        x_ref = y[SX].copy()
        c1[:, 0] = x2[:, 0]
    t = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(1, n_steps + 1):
            y = step(y, p, t, cfg.dt, noise.next().T.reshape(2, n_groups, nt), cfg.scheme, g1, om)
            t = s * cfg.dt
            if s % stride == 0:
                r = s // stride
                keep, cnt = record(r)
                if want_c1:
                    if r == i0:
                        x_ref = y[SX].copy()
                    if i0 <= r <= i1:
                        prod = np.where(keep, y[SX] * x_ref, 0.0)
                        c1[:, r - i0] = prod.sum(axis=1) / cnt
    frac = n_exc[:, -1] / nt
    if np.any(frac > cfg.max_excluded):
        raise IntegrationError(f"{frac.max():.1%} of trajectories diverged (limit {cfg.max_excluded:.0%})")
    t_rec = np.arange(n_rec) * cfg.dt * stride
    x2_tav = np.vstack([period_average(t_rec, x2[g], 2 * np.pi / omegas[g]) if omegas[g] > 0 else x2[g]
                        for g in range(n_groups)])
    res = EnsembleResult(t_rec, x2, x2_tav, ph, n_exc, nt, omegas, cfg.as_dict())
    if want_c1:
        res.c1_t = np.arange(c1.shape[1]) * cfg.dt * stride
        res.c1 = c1
    res.x_final = y[SX].copy()
    return res


def run_ensemble(p: ModelParams, cfg: EnsembleConfig) -> EnsembleResult:
    """Moments ``<X^2>``, its one-period average and ``<a_x^2 + a_p^2>`` for one parameter set."""
    cfg.validate(p)
    return _simulate(p, cfg, [p.omega], [p.g1])


def run_omega_scan(p: ModelParams, omegas, cfg: EnsembleConfig, t0=None, t_max=None) -> EnsembleResult:
    """Independent ensembles for several drive frequencies advanced in lockstep.

    The step must satisfy the configuration bound for the largest frequency.
    """
    omegas = np.asarray(omegas, dtype=float)
    cfg.validate(p.with_(omega=float(omegas.max())))
    return _simulate(p, cfg, omegas, np.full(len(omegas), p.g1), t0, t_max)


def two_time_correlation(p: ModelParams, cfg: EnsembleConfig, t0: float, t_max: float) -> EnsembleResult:
    """``C1(t) = <X(t + t0) X(t0)>`` for ``0 <= t <= t_max`` from one ensemble.

    ``t0`` is snapped to the nearest record point; ``cfg.t_end`` is extended
    to ``t0 + t_max`` if it is shorter.
    """
    if t0 < 0 or t_max <= 0:
        raise ConfigurationError("need t0 >= 0 and t_max > 0")
    if cfg.t_end < t0 + t_max:
        cfg = EnsembleConfig(**{**cfg.as_dict(), "t_end": t0 + t_max})
    cfg.validate(p)
    return _simulate(p, cfg, [p.omega], [p.g1], t0, t_max)


@dataclass
class SpectrumResult:
    t0: float
    t_max: float
    nu: np.ndarray
    s1: np.ndarray
    c1_t: np.ndarray = field(repr=False)
    c1: np.ndarray = field(repr=False)

    @property
    def abs_s1(self):
        return np.abs(self.s1)

    @property
    def peak(self) -> float:
        return float(self.nu[np.argmax(np.abs(self.s1))])


def spectrum_s1(t, c1, nu, t0=0.0) -> SpectrumResult:
    """``S1(nu) = int_0^t_max exp(i nu t) C1(t) dt`` by the trapezoidal rule, no window."""
    t = np.asarray(t, dtype=float)
    c1 = np.asarray(c1)
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    if t.ndim != 1 or len(t) < 2:
        raise ConfigurationError("need at least two samples")
    h = np.diff(t)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise ConfigurationError("C1 must be sampled uniformly")
    w = np.full(len(t), h[0])
    w[0] = w[-1] = 0.5 * h[0]
    s1 = np.exp(1j * np.outer(nu, t)) @ (w * c1)
    return SpectrumResult(t0, float(t[-1] - t[0]), nu, s1, t, c1)


def dominant_frequency(spec: SpectrumResult, nu_min=0.0) -> float:
    """Location of the largest ``|S1|`` above ``nu_min`` (the zero-frequency peak is skipped)."""
    mask = spec.nu > nu_min
    a = np.abs(spec.s1[mask])
    return float(spec.nu[mask][np.argmax(a)])
