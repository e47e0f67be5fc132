"""Dissipative time crystal in the periodically driven open Dicke model.

Submodules
----------
model
    Parameters and closed-form scales of the driven cavity-atom system.
hilbert
    Collective-spin and cavity operators.
liouville
    Fourier-resolved Liouvillians for the full and the atom-only models.
floquet
    Floquet matrix assembly and the dissipative gap at half the drive frequency.
meanfield
    Large-N dynamics, phase diagram and linear stability.
semiclassical
    Stochastic trajectory ensembles, two-time correlations and spectra.
numerics
    Eigen-solvers, integrators and random streams.
"""

__version__ = "0.1.0"

from .model import ModelParams  # noqa: E402

__all__ = ["ModelParams", "__version__"]
