"""Physical and derived parameters of the Maxey-Riley equations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .errors import ConfigError, DomainError

PHYSICAL_KEYS = ("rho_p", "rho_f", "a", "T", "nu")


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional inputs: densities, particle diameter, flow time scale, viscosity."""

    rho_p: float
    rho_f: float
    a: float
    T: float
    nu: float

    def __post_init__(self):
        for name in PHYSICAL_KEYS:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be finite and positive, got {value!r}")


@dataclass(frozen=True)
class MreParams:
    """Nondimensional MRE parameters.

    Use :func:`derive_params` rather than the constructor so that ``R``,
    ``alpha`` and ``gamma`` are always consistent with ``beta`` and ``S``.
    """

    beta: float
    R: float
    S: float
    alpha: float
    gamma: float

    @property
    def history_coeff(self) -> float:
        """Prefactor sqrt(3/(pi S)) of the Basset term in the untransformed MRE."""
        return math.sqrt(3.0 / (math.pi * self.S))

    def to_dict(self) -> dict:
        return {"beta": self.beta, "R": self.R, "S": self.S,
                "alpha": self.alpha, "gamma": self.gamma}


def derive_params(beta: float, S: float) -> MreParams:
    """Build :class:`MreParams` from the density ratio and the Stokes number."""
    if not math.isfinite(S) or S <= 0:
        raise DomainError(f"Stokes number must be positive, got {S!r}")
    if not math.isfinite(beta) or beta < 0:
        raise DomainError(f"density ratio beta must be non-negative, got {beta!r}")
    R = (1.0 + 2.0 * beta) / 3.0
    alpha = 1.0 / (R * S)
    gamma = math.sqrt(3.0 / S) / R
    return MreParams(beta=beta, R=R, S=S, alpha=alpha, gamma=gamma)


def beta_from_R(R: float) -> float:
    """Invert R = (1 + 2 beta)/3."""
    if R < 1.0 / 3.0:
        raise DomainError(f"R must be at least 1/3, got {R!r}")
    return (3.0 * R - 1.0) / 2.0


def params_from_physical(p: PhysicalParams) -> MreParams:
    beta = p.rho_p / p.rho_f
    S = p.a ** 2 / (3.0 * p.T * p.nu)
    return derive_params(beta, S)


def _number(value) -> float:
    """Float from a number or a fraction string such as ``"7/9"``."""
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot read {value!r} as a number") from exc
    return float(value)


def params_from_config(cfg: Mapping) -> MreParams:
    """Read parameters from a JSON-style mapping.

    Accepts either ``beta``/``R`` plus ``S``, or the five physical keys
    ``rho_p, rho_f, a, T, nu``. Mixing both spellings is rejected.
    """
    physical = [k for k in PHYSICAL_KEYS if k in cfg]
    nondim = [k for k in ("beta", "R", "S") if k in cfg]
    if physical and nondim:
        raise ConfigError("parameters given both as physical keys and as beta/R/S")
    if physical:
        missing = [k for k in PHYSICAL_KEYS if k not in cfg]
        if missing:
            raise ConfigError(f"missing physical parameter(s): {', '.join(missing)}")
        return params_from_physical(PhysicalParams(**{k: _number(cfg[k]) for k in PHYSICAL_KEYS}))
    if "S" not in cfg:
        raise ConfigError("parameter block needs 'S'")
    if "beta" in cfg and "R" in cfg:
        raise ConfigError("give either 'beta' or 'R', not both")
    if "beta" in cfg:
        beta = _number(cfg["beta"])
    elif "R" in cfg:
        beta = beta_from_R(_number(cfg["R"]))
    else:
        raise ConfigError("parameter block needs 'beta' or 'R'")
    return derive_params(beta, _number(cfg["S"]))
