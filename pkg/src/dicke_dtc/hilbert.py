"""Operator matrices for the fixed-N atomic sector and the truncated cavity.

Atomic basis states are labelled by the number of excited atoms ``k = n_up``
in ascending order, i.e. ``|n_up = k, n_down = N - k>``. Composite operators
use cavity-major ordering: ``kron(cavity_op, atom_op)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "AtomSector",
    "CavitySpace",
    "atom_ladder",
    "atom_observables",
    "cavity_ops",
    "kron",
    "is_hermitian",
    "dump_matrix",
    "load_matrix",
]

DENSE_LIMIT = 64


@dataclass(frozen=True)
class AtomSector:
    n_atoms: int

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("sector needs at least one atom")

    @property
    def dim(self) -> int:
        return self.n_atoms + 1

    def identity(self):
        return sp.identity(self.dim, dtype=complex, format="csr")


@dataclass(frozen=True)
class CavitySpace:
    n_phot_cut: int = 5

    def __post_init__(self):
        if self.n_phot_cut < 1:
            raise ValueError("photon cut-off must be at least 1")

    @property
    def dim(self) -> int:
        return self.n_phot_cut + 1

    def identity(self):
        return sp.identity(self.dim, dtype=complex, format="csr")


def atom_ladder(sector: AtomSector) -> sp.csr_matrix:
    """Collective raising operator ``b_up^dag b_down``.

    ``<k+1| L |k> = sqrt((k+1)(N-k))``.
    """
    n = sector.n_atoms
    k = np.arange(n)
    vals = np.sqrt((k + 1.0) * (n - k))
    return sp.csr_matrix((vals.astype(complex), (k + 1, k)), shape=(n + 1, n + 1))


def atom_observables(sector: AtomSector) -> dict:
    """``X``, ``Y``, ``Z`` and ``n_up`` in the Schwinger-boson representation."""
    lad = atom_ladder(sector)
    lad_h = lad.conj().T.tocsr()
    k = np.arange(sector.dim, dtype=float)
    return {
        "X": (lad + lad_h).tocsr(),
        "Y": (1j * (lad_h - lad)).tocsr(),
        "Z": sp.diags((2.0 * k - sector.n_atoms).astype(complex), format="csr"),
        "n_up": sp.diags(k.astype(complex), format="csr"),
    }


def cavity_ops(space: CavitySpace) -> dict:
    """Truncated ``a``, ``a_dag`` and photon number.

    The truncation makes ``[a, a_dag]`` equal the identity except in the last
    diagonal entry, which is ``-n_phot_cut``.
    """
    n = np.arange(1, space.dim)
    a = sp.csr_matrix((np.sqrt(n).astype(complex), (n - 1, n)), shape=(space.dim, space.dim))
    return {
        "a": a,
        "a_dag": a.conj().T.tocsr(),
        "number": sp.diags(np.arange(space.dim).astype(complex), format="csr"),
    }


def kron(cavity_op, atom_op) -> sp.csr_matrix:
    """Composite operator with the cavity index slow and the atom index fast."""
    return sp.kron(cavity_op, atom_op, format="csr")


def is_hermitian(m, rtol=1e-12) -> bool:
    m = sp.csr_matrix(m)
    diff = abs(m - m.conj().T).max() if m.nnz else 0.0
    scale = abs(m).max() if m.nnz else 1.0
    return diff <= rtol * max(scale, 1.0)


def densify(m, limit=DENSE_LIMIT):
    """Dense array for small operators, CSR otherwise."""
    if m.shape[0] <= limit:
        return m.toarray() if sp.issparse(m) else np.asarray(m)
    return sp.csr_matrix(m)


def dump_matrix(m, path) -> None:
    """Write nonzero entries as ``row col re im`` lines."""
    coo = sp.coo_matrix(m)
    with open(path, "w") as fh:
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


def load_matrix(path) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    shape = None
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                parts = line.split()
                if len(parts) == 4 and parts[1] == "shape":
                    shape = (int(parts[2]), int(parts[3]))
                continue
            r, c, re, im = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(complex(float(re), float(im)))
    return sp.csr_matrix((vals, (rows, cols)), shape=shape, dtype=complex)
