"""Numerical kernels: eigensolvers, ODE/SDE steppers and seeded RNG streams.

Dense spectra go through LAPACK (``geev``: Hessenberg reduction followed by
shifted QR). Targeted spectra use ARPACK in shift-invert mode on top of a
SuperLU factorisation of ``A - sigma I``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError

__all__ = [
    "EigResult",
    "dense_eig",
    "shift_invert_eigs",
    "rk4_step",
    "rk4_integrate",
    "adaptive_step",
    "euler_maruyama_step",
    "rng_stream",
    "NoiseBuffer",
    "DENSE_EIG_LIMIT",
]

DENSE_EIG_LIMIT = 4096


@dataclass
class EigResult:
    values: np.ndarray
    vectors: np.ndarray | None
    residuals: np.ndarray

    def nearest(self, target, k):
        order = np.argsort(np.abs(self.values - target), kind="stable")[:k]
        vecs = None if self.vectors is None else self.vectors[:, order]
        return EigResult(self.values[order], vecs, self.residuals[order])


def _residuals(A, values, vectors):
    res = np.empty(len(values))
    for i, (lam, v) in enumerate(zip(values, vectors.T)):
        res[i] = np.linalg.norm(A @ v - lam * v) / max(np.linalg.norm(v), 1e-300)
    return res


def dense_eig(A, vectors=True, check=True) -> EigResult:
    """Full spectrum of a square matrix.

    Residuals ``||A v - lambda v||`` are computed for every pair; with
    ``check`` a pair worse than ``1e-9 ||A||`` raises :class:`ConvergenceError`.
    """
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"square matrix expected, got shape {A.shape}")
    try:
        if vectors:
            w, v = la.eig(A, check_finite=True)
        else:
            w = la.eigvals(A, check_finite=True)
            v = None
    except la.LinAlgError as exc:
        raise ConvergenceError(f"QR iteration failed: {exc}") from exc
    if v is None:
        return EigResult(w, None, np.full(len(w), np.nan))
    res = _residuals(A, w, v)
    if check:
        scale = max(np.linalg.norm(A, 2) if A.shape[0] <= 512 else np.linalg.norm(A, 1), 1.0)
        if np.any(res > 1e-9 * scale):
            raise ConvergenceError("dense eigenpair residual above 1e-9 ||A||", res.max())
    return EigResult(w, v, res)


def shift_invert_eigs(A, sigma, k, tol=1e-12, maxiter=None, ncv=None, max_retries=2) -> EigResult:
    """``k`` eigenpairs of sparse ``A`` closest to the complex shift ``sigma``.

    If ``A - sigma I`` is exactly singular the shift is nudged and the
    factorisation retried before giving up.
    """
    A = sp.csc_matrix(A, dtype=complex)
    n = A.shape[0]
    if k >= n - 1:
        return dense_eig(A).nearest(sigma, k)
    eye = sp.identity(n, dtype=complex, format="csc")
    # fixed start vector so repeated calls return identical results
    v0 = np.random.default_rng(0).standard_normal(n).astype(complex)
    scale = max(abs(sigma), spla.norm(A, 1) * 1e-12, 1e-12)
    shift = complex(sigma)
    last_exc = None
    for attempt in range(max_retries + 1):
        try:
            lu = spla.splu(A - shift * eye, permc_spec="COLAMD")
        except RuntimeError as exc:  # "Factor is exactly singular"
            last_exc = exc
            shift = shift + scale * 1e-7 * (1 + 1j) * (attempt + 1)
            continue
        op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=complex)
        try:
            mu, vecs = spla.eigs(op, k=k, which="LM", tol=tol, maxiter=maxiter, ncv=ncv, v0=v0)
        except spla.ArpackNoConvergence as exc:
            best = None
            if len(exc.eigenvalues):
                lam = shift + 1.0 / exc.eigenvalues
                best = _residuals(A, lam, exc.eigenvectors).min()
            raise ConvergenceError("Arnoldi did not converge", best) from exc
        values = shift + 1.0 / mu
        res = _residuals(A, values, vecs)
        order = np.argsort(np.abs(values - sigma), kind="stable")
        return EigResult(values[order], vecs[:, order], res[order])
    raise ConvergenceError(f"A - sigma I singular for sigma near {sigma}: {last_exc}")


def rk4_step(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(f, y0, t0, t_end, dt, record_every=1, callback=None):
    """Fixed-step RK4 from ``t0`` to ``t_end``; returns recorded times and states.

    The last step is shortened so that ``t_end`` is hit exactly.
    """
    n_steps = int(np.ceil((t_end - t0) / dt - 1e-9))
    ts, ys = [t0], [np.array(y0, copy=True)]
    y = np.array(y0, copy=True)
    t = t0
    for i in range(1, n_steps + 1):
        h = min(dt, t_end - t)
        y = rk4_step(f, t, y, h)
        t = t0 + i * dt if i < n_steps else t_end
        if i % record_every == 0 or i == n_steps:
            ts.append(t)
            ys.append(y.copy())
            if callback is not None:
                callback(t, y)
    return np.asarray(ts), np.asarray(ys)


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_DP_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def adaptive_step(f, t, y, dt, rtol=1e-8, atol=1e-10):
    """One embedded Dormand-Prince 5(4) attempt.

    Returns ``(accepted, y_new, dt_next)``; a rejected step leaves ``y``
    unchanged and proposes a smaller ``dt``.
    """
    ks = []
    for i in range(7):
        yi = y + dt * sum(a * kk for a, kk in zip(_DP_A[i], ks)) if i else y
        ks.append(f(t + _DP_C[i] * dt, yi))
    y5 = y + dt * sum(b * kk for b, kk in zip(_DP_B5, ks))
    y4 = y + dt * sum(b * kk for b, kk in zip(_DP_B4, ks))
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
    err = np.sqrt(np.mean(np.abs((y5 - y4) / scale) ** 2))
    factor = 0.9 * err ** (-0.2) if err > 0 else 5.0
    dt_next = dt * min(5.0, max(0.2, factor))
    if err <= 1.0:
        return True, y5, dt_next
    return False, y, dt_next


def euler_maruyama_step(drift, t, y, dt, noise_amp, dw):
    """``y + drift(t, y) dt + noise_amp * dw`` with ``dw ~ N(0, dt)`` supplied by the caller."""
    return y + drift(t, y) * dt + noise_amp * dw


def rng_stream(master_seed: int, *stream_id: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``(master_seed, stream_id...)``.

    Distinct ids give independent, reproducible streams regardless of the
    order in which they are created.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(s) for s in stream_id))
    return np.random.Generator(np.random.Philox(ss))


class NoiseBuffer:
    """Per-stream standard normals drawn in blocks to amortise generator calls.

    ``next()`` returns an array of shape ``(n_streams, width)`` whose row ``i``
    comes only from stream ``i``, so a trajectory's noise does not depend on
    how many other trajectories share the buffer.
    """

    def __init__(self, generators, width, block=512):
        self.generators = list(generators)
        self.width = width
        self.block = block
        self._raw = np.empty((len(self.generators), block, width))
        self._buf = None
        self._pos = block

    def next(self) -> np.ndarray:
        if self._pos >= self.block:
            for i, g in enumerate(self.generators):
                g.standard_normal(out=self._raw[i])
            # step-major copy so each returned slice is contiguous; always a copy, never a view of _raw
            self._buf = self._raw.transpose(1, 2, 0).copy()
            self._pos = 0
        out = self._buf[self._pos].T
        self._pos += 1
        return out
