"""Physical parameters of the periodically driven dissipative Dicke model.

All rates are plain floats in units where the cavity loss rate is one unless
the caller chooses otherwise. The coupling is ``g(t) = g0 + g1 cos(omega t)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "ModelParams",
    "critical_coupling",
    "resonance_frequency",
    "damping_gamma0",
    "threshold_g1c",
    "detuned_threshold",
    "coupling_g",
    "coupling_g_dot",
    "elimination_ratio",
    "load_params",
    "params_from_mapping",
]


def _critical(delta_c, kappa, delta):
    if delta_c <= 0:
        raise DomainError(f"critical coupling needs delta_c > 0, got {delta_c}")
    return math.sqrt(delta * (delta_c**2 + kappa**2) / (4.0 * delta_c))


@dataclass(frozen=True)
class ModelParams:
    """Immutable parameter set plus eagerly evaluated derived scalars.

    ``omega_res`` and ``g1_c`` only exist in the subcritical regime
    ``g0 <= g_c``; accessing them otherwise raises :class:`DomainError`.
    Supercritical sets are still accepted so raw Liouvillians can be built.
    """

    delta_c: float = 1.0
    kappa: float = 1.0
    delta: float = 0.1
    g0: float = 0.0
    g1: float = 0.0
    omega: float = 0.0
    n_atoms: int = 1

    g_c: float = field(init=False, repr=False)
    gamma0: float = field(init=False, repr=False)
    _omega_res: float | None = field(init=False, repr=False, compare=False)
    _g1_c: float | None = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.kappa > 0:
            raise ConfigurationError(f"kappa must be positive, got {self.kappa}")
        if not self.delta_c > 0:
            raise ConfigurationError(f"delta_c must be positive, got {self.delta_c}")
        if not self.delta > 0:
            raise ConfigurationError(f"delta must be positive, got {self.delta}")
        if self.g0 < 0 or self.g1 < 0:
            raise ConfigurationError("g0 and g1 must be non-negative")
        if self.omega < 0:
            raise ConfigurationError("omega must be non-negative")
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ConfigurationError(f"n_atoms must be a positive integer, got {self.n_atoms}")
        object.__setattr__(self, "n_atoms", int(self.n_atoms))

        g_c = _critical(self.delta_c, self.kappa, self.delta)
        den = self.delta_c**2 + self.kappa**2
        object.__setattr__(self, "g_c", g_c)
        object.__setattr__(
            self, "gamma0", 4.0 * self.kappa * self.delta_c * self.delta * self.g0**2 / den**2
        )
        if self.g0 <= g_c:
            w_res = self.delta * math.sqrt(max(0.0, 1.0 - (self.g0 / g_c) ** 2))
            object.__setattr__(self, "_omega_res", w_res)
            object.__setattr__(self, "_g1_c", 2.0 * self.kappa * w_res * self.g0 / den)
        else:
            object.__setattr__(self, "_omega_res", None)
            object.__setattr__(self, "_g1_c", None)
        if self.g0 + self.g1 >= g_c:
            warnings.warn(
                f"g0 + g1 = {self.g0 + self.g1:.6g} reaches the static threshold "
                f"g_c = {g_c:.6g}; outside the subcritical drive regime",
                RuntimeWarning,
                stacklevel=3,
            )

    @property
    def omega_res(self) -> float:
        if self._omega_res is None:
            raise DomainError(f"g0 = {self.g0} exceeds g_c = {self.g_c}: no resonance frequency")
        return self._omega_res

    @property
    def g1_c(self) -> float:
        if self._g1_c is None:
            raise DomainError(f"g0 = {self.g0} exceeds g_c = {self.g_c}: no modulation threshold")
        return self._g1_c

    @property
    def period(self) -> float:
        if self.omega <= 0:
            raise DomainError("drive period undefined for omega = 0")
        return 2.0 * math.pi / self.omega

    @property
    def cavity_denominator(self) -> float:
        """``delta_c**2 + kappa**2``, which appears in nearly every formula."""
        return self.delta_c**2 + self.kappa**2

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    @classmethod
    def from_ratios(
        cls,
        *,
        delta_c=1.0,
        kappa=1.0,
        delta=0.1,
        g0_over_gc=0.5,
        g1_over_g0=0.2,
        omega_over_2wres=1.0,
        n_atoms=10,
    ) -> "ModelParams":
        """Build a parameter set from ratios to g_c, g0 and 2 omega_res."""
        g_c = _critical(delta_c, kappa, delta)
        g0 = g0_over_gc * g_c
        w_res = delta * math.sqrt(1.0 - g0_over_gc**2)
        return cls(
            delta_c=delta_c,
            kappa=kappa,
            delta=delta,
            g0=g0,
            g1=g1_over_g0 * g0,
            omega=omega_over_2wres * 2.0 * w_res,
            n_atoms=n_atoms,
        )

    def as_dict(self) -> dict:
        return {
            "delta_c": self.delta_c,
            "kappa": self.kappa,
            "delta": self.delta,
            "g0": self.g0,
            "g1": self.g1,
            "omega": self.omega,
            "n_atoms": self.n_atoms,
        }


def critical_coupling(p: ModelParams) -> float:
    return _critical(p.delta_c, p.kappa, p.delta)


def resonance_frequency(p: ModelParams) -> float:
    """Small-oscillation frequency of the normal state, ``delta*sqrt(1-g0^2/g_c^2)``."""
    return p.omega_res


def damping_gamma0(p: ModelParams) -> float:
    return p.gamma0


def threshold_g1c(p: ModelParams) -> float:
    """Modulation amplitude at which the normal state turns unstable for omega = 2 omega_res."""
    return p.g1_c


def detuned_threshold(p: ModelParams, omega: float | None = None) -> float:
    """Perturbative modulation threshold away from exact parametric resonance.

    Valid only for small ``g1/g0`` and small detuning ``omega - 2*omega_res``;
    the caller is responsible for staying in that window.
    """
    if p.g0 == 0:
        raise DomainError("detuned threshold diverges for g0 = 0")
    omega = p.omega if omega is None else omega
    w = p.omega_res
    den = p.cavity_denominator
    on_res = 4.0 * p.kappa**2 * w**2 * p.g0**2 / den**2
    detune = den**2 * w**4 / (4.0 * p.delta_c**2 * p.delta**2 * p.g0**2) * (1.0 - omega / (2.0 * w)) ** 2
    return math.sqrt(on_res + detune)


def coupling_g(p: ModelParams, t):
    return p.g0 + p.g1 * np.cos(p.omega * t)


def coupling_g_dot(p: ModelParams, t):
    return -p.g1 * p.omega * np.sin(p.omega * t)


def elimination_ratio(p: ModelParams) -> float:
    """Largest slow scale over ``|delta_c - i kappa|``; cavity elimination wants this small.

    Diagnostic only, nothing is enforced.
    """
    return max(p.delta, p.omega, p.g0 + p.g1) / abs(complex(p.delta_c, -p.kappa))


_ABSOLUTE_KEYS = ("delta_c", "kappa", "delta", "g0", "g1", "omega", "n_atoms")
_RELATIVE_KEYS = ("g0_over_gc", "g1_over_g0", "omega_over_2wres")


def params_from_mapping(cfg: dict) -> ModelParams:
    """Resolve a flat key/value mapping, including the ratio convenience keys."""
    unknown = set(cfg) - set(_ABSOLUTE_KEYS) - set(_RELATIVE_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown parameter keys: {sorted(unknown)}")
    for abs_key, rel_key in (("g0", "g0_over_gc"), ("g1", "g1_over_g0"), ("omega", "omega_over_2wres")):
        if abs_key in cfg and rel_key in cfg:
            raise ConfigurationError(f"give either {abs_key} or {rel_key}, not both")

    base = {k: float(cfg[k]) for k in ("delta_c", "kappa", "delta") if k in cfg}
    delta_c = base.get("delta_c", 1.0)
    kappa = base.get("kappa", 1.0)
    delta = base.get("delta", 0.1)
    g_c = _critical(delta_c, kappa, delta)

    g0 = float(cfg["g0"]) if "g0" in cfg else float(cfg.get("g0_over_gc", 0.0)) * g_c
    g1 = float(cfg["g1"]) if "g1" in cfg else float(cfg.get("g1_over_g0", 0.0)) * g0
    if "omega" in cfg:
        omega = float(cfg["omega"])
    elif "omega_over_2wres" in cfg:
        if g0 > g_c:
            raise DomainError("omega_over_2wres needs g0 <= g_c")
        omega = float(cfg["omega_over_2wres"]) * 2.0 * delta * math.sqrt(1.0 - (g0 / g_c) ** 2)
    else:
        omega = 0.0
    n_atoms = cfg.get("n_atoms", 1)
    if isinstance(n_atoms, float) and not n_atoms.is_integer():
        raise ConfigurationError(f"n_atoms must be an integer, got {n_atoms}")
    return ModelParams(delta_c, kappa, delta, g0, g1, omega, int(n_atoms))


def load_params(path) -> ModelParams:
    """Read a flat ``key = value`` TOML file into :class:`ModelParams`.

    A ``[model]`` table is used if present, otherwise the top level.
    """
    import tomli

    text = Path(path).read_text()
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    data = data.get("model", data)
    flat = {k: v for k, v in data.items() if not isinstance(v, dict)}
    return params_from_mapping(flat)
