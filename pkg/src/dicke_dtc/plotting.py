"""Render PNG figures next to the CSV outputs of the command-line verbs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["phase_diagram", "gap_scan", "dynamics", "spectrum", "threshold"]

STYLE = {
    "figure.dpi": 120,
    "font.size": 9,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.2,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def phase_diagram(path, g1, omega, x2, gamma_max=None, g1_c_ratio=None):
    """Colour map of ``X^2_tav/N^2`` with the ``gamma_max = 0`` contour."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.4))
        mesh = ax.pcolormesh(omega, g1, x2, shading="nearest", cmap="magma")
        fig.colorbar(mesh, ax=ax, label=r"$\langle X^2\rangle_{tav}/N^2$")
        if gamma_max is not None and len(g1) > 1 and len(omega) > 1:
            ax.contour(omega, g1, gamma_max, levels=[0.0], colors="w", linewidths=0.9)
        if g1_c_ratio is not None:
            ax.axhline(g1_c_ratio, color="0.6", lw=0.8)
        ax.set_xlabel(r"$\omega/(2\omega_{res})$")
        ax.set_ylabel(r"$g_1/g_0$")
        return _save(fig, path)


def gap_scan(path, n_atoms, gamma, m_cut, gamma_fl=None, fit=None):
    """Gap against system size on a log axis, one marker per cut-off."""
    n_atoms = np.asarray(n_atoms)
    gamma = np.asarray(gamma)
    m_cut = np.asarray(m_cut)
    markers = "os^xd"
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 2.8))
        for i, m in enumerate(np.unique(m_cut)):
            sel = m_cut == m
            ax.semilogy(n_atoms[sel], gamma[sel], markers[i % len(markers)], mfc="none",
                        label=f"$M_{{cut}}={m}$")
        if gamma_fl is not None:
            ax.axhline(gamma_fl, ls="--", color="k", lw=0.8, label=r"$\gamma_{Fl}$")
        if fit is not None:
            slope, icpt = fit
            xs = np.linspace(n_atoms.min(), n_atoms.max(), 50)
            ax.semilogy(xs, np.exp(icpt + slope * xs), "k--", lw=0.8, label=f"slope {slope:.3g}")
        ax.set_xlabel("N")
        ax.set_ylabel(r"$\gamma/\kappa$")
        ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def dynamics(path, t, series: dict):
    """Overlay of ``X^2_tav/N^2`` curves from several methods."""
    styles = {"quantum": "k-", "meanfield": "b:", "semiclassical": "m--"}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.8, 2.8))
        for name, y in series.items():
            ax.plot(t, y, styles.get(name, "-"), label=name)
        ax.set_xlabel(r"$\kappa t$")
        ax.set_ylabel(r"$\langle X^2\rangle_{tav}/N^2$")
        ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def spectrum(path, omega_ratio, nu_over_omega, abs_s1, nu_fl=None, x2_scan=None):
    """Heat map of ``|S1|`` over drive and response frequency, plus the order parameter."""
    with plt.rc_context(STYLE):
        rows = 2 if x2_scan is not None else 1
        fig, axes = plt.subplots(rows, 1, figsize=(3.8, 2.6 * rows), sharex=True, squeeze=False)
        ax = axes[-1, 0]
        data = np.log10(np.maximum(abs_s1, 1e-300))
        ax.pcolormesh(omega_ratio, nu_over_omega, data.T, shading="nearest", cmap="viridis")
        if nu_fl is not None:
            ax.plot(omega_ratio, nu_fl, "r--", lw=0.8)
        ax.set_xlabel(r"$\omega/(2\omega_{res})$")
        ax.set_ylabel(r"$\nu/\omega$")
        if x2_scan is not None:
            top = axes[0, 0]
            for name, y in x2_scan.items():
                top.plot(omega_ratio, y, "o-" if name == "semiclassical" else "k-", ms=2.5, label=name)
            top.set_ylabel(r"$\langle X^2\rangle_{tav}/N^2$")
            top.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def threshold(path, omega_ratio, g1c_floquet, g1c_mathieu, g0):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 2.8))
        ax.plot(omega_ratio, np.asarray(g1c_floquet) / g0, "k-", label="Floquet")
        ax.plot(omega_ratio, np.asarray(g1c_mathieu) / g0, "r--", label="Mathieu")
        ax.set_xlabel(r"$\omega/(2\omega_{res})$")
        ax.set_ylabel(r"$g_1^c/g_0$")
        ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)
