"""Extended Floquet-Lindblad matrices, targeted eigenmodes and the dissipative gap.

A periodic generator ``L(t) = sum_m L_m exp(i m omega t)`` with Floquet
ansatz ``rho(t) = exp(lambda t) sum_n rho_n exp(i n omega t)`` turns into the
eigenproblem of a block-banded matrix whose block ``(n, n - m)`` is
``L_m - i n omega delta_{m0}``. Truncating ``|n| <= m_cut`` gives a finite
sparse matrix.

Coherence parity
    Every generator built here conserves the parity of the excitation
    number difference between the ket and the bra index. Restricting to one
    parity sector halves the problem; the period-doubled modes of the order
    parameter ``X`` live in the odd sector.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import hilbert
from .errors import AmbiguityError, ConfigurationError, ConvergenceError
from .liouville import SuperOperatorHarmonics, build_atom_only_harmonics, build_full_harmonics
from .model import ModelParams
from .numerics import EigResult, dense_eig, shift_invert_eigs

log = logging.getLogger(__name__)

__all__ = [
    "FloquetMatrix",
    "FloquetMode",
    "GapResult",
    "assemble",
    "eigs_near",
    "fold",
    "atom_parity",
    "full_parity",
    "finite_size_resonance",
    "dissipative_gap",
    "gap_scan",
    "match_spectra",
    "compare_models",
    "FOLD_TOL",
    "IM_WINDOW",
    "FLOQUET_DENSE_LIMIT",
]

FOLD_TOL = 1e-6  # relative to omega
IM_WINDOW = 0.05  # relative to omega
FLOQUET_DENSE_LIMIT = 1024


def atom_parity(sector: hilbert.AtomSector) -> np.ndarray:
    """Parity of ``n_up`` for each atomic basis state."""
    return np.arange(sector.dim) % 2


def full_parity(sector: hilbert.AtomSector, cavity: hilbert.CavitySpace) -> np.ndarray:
    """Parity of ``n_photon + n_up`` in cavity-major order."""
    n = np.arange(cavity.dim)[:, None]
    k = np.arange(sector.dim)[None, :]
    return ((n + k) % 2).ravel()


def _sector_indices(parity, which):
    """Column-stacked indices ``i + d j`` with ``parity[i] + parity[j] == which (mod 2)``."""
    parity = np.asarray(parity)
    d = len(parity)
    i, j = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    mask = (parity[i] + parity[j]) % 2 == which
    idx = (i + d * j)[mask]
    return np.sort(idx)


@dataclass
class FloquetMatrix:
    """Truncated extended matrix, optionally restricted to one coherence-parity sector.

    ``index`` lists the retained column-stacked density-matrix entries; it is
    ``None`` when the full space is kept.
    """

    matrix: sp.csr_matrix
    m_cut: int
    omega: float
    d: int
    index: np.ndarray | None = None

    @property
    def block_dim(self) -> int:
        return self.d * self.d if self.index is None else len(self.index)

    @property
    def shape(self):
        return self.matrix.shape


def assemble(h: SuperOperatorHarmonics, m_cut: int, omega: float | None = None, parity=None,
             sector: int | None = None) -> FloquetMatrix:
    """Build the extended matrix for ``|n| <= m_cut``.

    Parameters
    ----------
    h
        Liouvillian harmonics.
    m_cut
        Block cut-off; must be at least the highest harmonic present.
    omega
        Drive frequency, defaults to ``h.omega``.
    parity, sector
        Per-basis-state parity and the coherence-parity sector (0 or 1) to
        keep. Both or neither must be given.
    """
    omega = h.omega if omega is None else omega
    if m_cut < 0:
        raise ConfigurationError("m_cut must be non-negative")
    top = h.max_harmonic
    if m_cut < top:
        raise ConfigurationError(f"m_cut = {m_cut} below the highest harmonic {top}")
    if (parity is None) != (sector is None):
        raise ConfigurationError("parity and sector go together")
    index = None
    blocks = {m: sp.csr_matrix(mat) for m, mat in h.harmonics.items()}
    if parity is not None:
        index = _sector_indices(parity, sector)
        blocks = {m: mat[index][:, index] for m, mat in blocks.items()}
    bd = len(index) if index is not None else h.dim * h.dim
    nb = 2 * m_cut + 1
    eye = sp.identity(bd, dtype=complex, format="csr")
    rows = []
    for a in range(nb):
        n = a - m_cut
        row = []
        for b in range(nb):
            m = n - (b - m_cut)
            blk = blocks.get(m)
            if m == 0:
                blk = (blocks[0] if 0 in blocks else sp.csr_matrix((bd, bd), dtype=complex)) - 1j * n * omega * eye
            row.append(blk)
        rows.append(row)
    mat = sp.bmat(rows, format="csr", dtype=complex)
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    return FloquetMatrix(mat, m_cut, omega, h.dim, index)


def fold(lam, omega):
    """Shift ``Im(lam)`` by multiples of ``omega`` into ``[-omega/2, omega/2)``."""
    lam = np.asarray(lam, dtype=complex)
    im = np.mod(lam.imag + 0.5 * omega, omega) - 0.5 * omega
    out = lam.real + 1j * im
    return out if out.ndim else complex(out)


@dataclass
class FloquetMode:
    """Eigenpair of a truncated Floquet matrix.

    ``edge_weight`` is the fraction of the norm carried by the outermost
    blocks; a large value means the eigenvalue is a truncation artefact or a
    copy centred away from ``n = 0``.
    """

    lam: complex
    vector: np.ndarray = field(repr=False)
    residual: float
    m_cut: int
    omega: float
    d: int
    index: np.ndarray | None = field(default=None, repr=False)

    @property
    def folded(self) -> complex:
        return fold(self.lam, self.omega)

    @property
    def block_weights(self) -> np.ndarray:
        v = self.vector.reshape(2 * self.m_cut + 1, -1)
        w = np.sum(np.abs(v) ** 2, axis=1)
        return w / w.sum()

    @property
    def edge_weight(self) -> float:
        w = self.block_weights
        return float(w[0] + w[-1]) if len(w) > 1 else 0.0

    @property
    def centroid(self) -> float:
        """Weighted mean block index; a copy shifted by ``i omega`` moves it by one."""
        w = self.block_weights
        return float(np.dot(w, np.arange(-self.m_cut, self.m_cut + 1)))

    def components(self) -> np.ndarray:
        """``rho_n`` as an array of shape ``(2 m_cut + 1, d, d)``."""
        nb = 2 * self.m_cut + 1
        v = self.vector.reshape(nb, -1)
        if self.index is not None:
            full = np.zeros((nb, self.d * self.d), dtype=complex)
            full[:, self.index] = v
            v = full
        return v.reshape(nb, self.d, self.d, order="C").transpose(0, 2, 1)


def eigs_near(fm: FloquetMatrix, target: complex, k: int = 20, dense_limit: int | None = None,
              tol: float = 1e-12) -> list[FloquetMode]:
    """``k`` modes closest to ``target``.

    Small problems are diagonalised densely; larger ones go through
    shift-invert Arnoldi. Residuals are relative to the eigenvector norm.
    """
    if k < 1:
        raise ConfigurationError("k must be at least 1")
    n = fm.shape[0]
    k = min(k, n)
    limit = FLOQUET_DENSE_LIMIT if dense_limit is None else dense_limit
    if n <= limit:
        res: EigResult = dense_eig(fm.matrix, vectors=True, check=False).nearest(target, k)
    else:
        res = shift_invert_eigs(fm.matrix, target, k, tol=tol)
    modes = []
    for lam, vec, r in zip(res.values, res.vectors.T, res.residuals):
        nrm = np.linalg.norm(vec)
        modes.append(FloquetMode(complex(lam), vec / nrm, float(r / nrm), fm.m_cut, fm.omega, fm.d, fm.index))
    return modes


# finite-size resonance ---------------------------------------------------------

def finite_size_resonance(p: ModelParams, sector: hilbert.AtomSector | None = None, k: int = 12,
                          window: float = 0.5) -> float:
    """Resonance frequency of the static part of the atom-only generator.

    Among eigenvalues of ``L_0`` whose imaginary part lies within
    ``window * omega_res`` of the mean-field ``omega_res``, the slowest
    decaying one is taken and its imaginary part returned.
    """
    sector = sector or hilbert.AtomSector(p.n_atoms)
    w_mf = p.omega_res
    h = build_atom_only_harmonics(p.with_(omega=p.omega or 2 * w_mf), sector)
    l0 = h.harmonics[0]
    idx = _sector_indices(atom_parity(sector), 1)
    l0 = l0[idx][:, idx]
    if l0.shape[0] <= FLOQUET_DENSE_LIMIT:
        vals = dense_eig(l0, vectors=False).values
    else:
        vals = shift_invert_eigs(l0, 1j * w_mf, min(k, l0.shape[0] - 2)).values
    cand = vals[np.abs(vals.imag - w_mf) <= window * w_mf]
    if not len(cand):
        raise ConvergenceError(f"no eigenvalue of L_0 within {window:.0%} of omega_res = {w_mf:.6g}")
    best = cand[np.argmax(cand.real)]
    return float(best.imag)


# dissipative gap ---------------------------------------------------------------

@dataclass
class GapResult:
    n_atoms: int
    omega: float
    m_cut: int
    gamma: float
    lam: complex
    residual: float
    candidates: list = field(default_factory=list, repr=False)
    ambiguous: bool = False


def _locked(modes, omega, fold_tol):
    """Modes with ``Im(lam) = omega/2 (mod omega)``, one representative per eigenvalue."""
    out = []
    for m in modes:
        off = abs(abs(m.folded.imag) - 0.5 * omega)
        if off <= fold_tol * omega:
            out.append(m)
    # the truncated matrix carries shifted copies of each mode; keep the most central
    out.sort(key=lambda m: m.edge_weight)
    reps = []
    for m in out:
        if any(abs(m.lam.real - r.lam.real) < 1e-7 * max(abs(r.lam.real), omega) for r in reps):
            continue
        reps.append(m)
    return reps


def dissipative_gap(p: ModelParams, sector: hilbert.AtomSector | None = None, m_cut: int = 4,
                    omega: float | None = None, k: int = 20, fold_tol: float = FOLD_TOL,
                    previous: complex | None = None, ambiguity_tol: float = 1e-10,
                    use_parity: bool = True) -> GapResult:
    """Gap ``gamma = -Re(lam)`` of the slowest mode locked at ``Im(lam) = omega/2``.

    ``omega`` defaults to twice the finite-size resonance. When ``previous``
    is given (the eigenvalue found at the previous system size, shifted so
    that its imaginary part sits at ``omega/2``), the candidate closest to it
    is chosen and the result is flagged if that differs from the slowest one.
    """
    sector = sector or hilbert.AtomSector(p.n_atoms)
    if omega is None:
        omega = 2.0 * finite_size_resonance(p, sector)
    q = p.with_(omega=omega)
    h = build_atom_only_harmonics(q, sector)
    kw = dict(parity=atom_parity(sector), sector=1) if use_parity else {}
    fm = assemble(h, m_cut, omega, **kw)
    target = 0.5j * omega
    modes = eigs_near(fm, target, k)
    reps = _locked(modes, omega, fold_tol)
    approximate = False
    if not reps:
        # truncation breaks exact locking slightly; take the closest mode in the window
        near = [m for m in modes if abs(abs(m.folded.imag) - 0.5 * omega) <= IM_WINDOW * omega]
        if not near:
            raise ConvergenceError(f"no mode near omega/2 among the {k} nearest eigenvalues")
        best_off = min(abs(abs(m.folded.imag) - 0.5 * omega) for m in near)
        reps = _locked(near, omega, best_off / omega * (1 + 1e-9))
        approximate = True
        log.warning("N=%d: no mode within %.1e omega of omega/2, closest is %.2e omega off",
                    p.n_atoms, fold_tol, best_off / omega)
    reps.sort(key=lambda m: abs(m.lam.real))
    best = reps[0]
    if len(reps) > 1 and abs(reps[1].lam.real - best.lam.real) < ambiguity_tol:
        raise AmbiguityError(f"two gap candidates: {best.lam!r} and {reps[1].lam!r}")
    ambiguous = approximate
    if previous is not None:
        tracked = min(reps, key=lambda m: abs(m.lam.real - previous.real))
        if tracked is not best:
            ambiguous = True
            log.warning("N=%d: continuity picks %s, slowest is %s", p.n_atoms, tracked.lam, best.lam)
            best = tracked
    lam = complex(best.lam.real, abs(best.folded.imag))
    return GapResult(p.n_atoms, omega, m_cut, -best.lam.real, lam, best.residual,
                     [m.lam for m in reps], ambiguous)


def gap_scan(p: ModelParams, n_list, m_cuts=(4,), track=True, **kw) -> list[GapResult]:
    """``dissipative_gap`` over system sizes, each with ``omega = 2 omega'_res(N)``.

    Results run over ``n_list`` for the first cut-off, then for the next, and so on.
    """
    out = []
    for m_cut in m_cuts:
        prev = None
        for n in n_list:
            if int(n) < 1:
                raise ConfigurationError(f"system size must be positive, got {n}")
            q = p.with_(n_atoms=int(n))
            r = dissipative_gap(q, m_cut=m_cut, previous=prev if track else None, **kw)
            prev = r.lam
            out.append(r)
    out.sort(key=lambda r: (list(n_list).index(r.n_atoms), list(m_cuts).index(r.m_cut)))
    return out


def log_slope(n, gamma):
    """Least-squares slope of ``log(gamma)`` against ``N``."""
    n = np.asarray(n, dtype=float)
    y = np.log(np.asarray(gamma, dtype=float))
    return float(np.polyfit(n, y, 1)[0])


def mode_pairing_error(values, omega) -> float:
    """Largest distance from each eigenvalue's conjugate to the folded spectrum."""
    f = fold(np.asarray(values), omega)
    worst = 0.0
    for lam in f:
        c = fold(np.conj(lam), omega)
        d = np.min(np.abs(f - c))
        # modes sitting on the fold edge map onto themselves across it
        d = min(d, np.min(np.abs(fold(f + 1e-3 * omega, omega) - fold(c + 1e-3 * omega, omega))))
        worst = max(worst, d)
    return float(worst)


def match_spectra(a, b, omega):
    """Pair two eigenvalue lists one-to-one by minimal total distance.

    Imaginary parts are compared modulo ``omega``. Returns ``(i, j, dist)``
    arrays with ``a[i]`` matched to ``b[j]``.
    """
    from scipy.optimize import linear_sum_assignment

    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    d = a[:, None] - b[None, :]
    im = np.mod(d.imag + 0.5 * omega, omega) - 0.5 * omega
    cost = np.hypot(d.real, im)
    i, j = linear_sum_assignment(cost)
    return i, j, cost[i, j]


def compare_models(p: ModelParams, n_phot: int, m_cut: int = 4, sector: int = 1, k: int = 20):
    """Floquet eigenvalues nearest ``i omega/2`` of the atom-only and the full cavity-atom model.

    Both matrices are restricted to the same coherence-parity ``sector``.
    Returns ``(atom, full)`` eigenvalue arrays of length ``k``.
    """
    s = hilbert.AtomSector(p.n_atoms)
    c = hilbert.CavitySpace(n_phot)
    w = p.omega
    fa = assemble(build_atom_only_harmonics(p, s), m_cut, w, parity=atom_parity(s), sector=sector)
    ff = assemble(build_full_harmonics(p, s, c), m_cut, w, parity=full_parity(s, c), sector=sector)
    la = np.array([m.lam for m in eigs_near(fa, 0.5j * w, k)])
    lf = np.array([m.lam for m in eigs_near(ff, 0.5j * w, k)])
    return la, lf
