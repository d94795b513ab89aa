"""Analytic benchmark velocity fields.

Every field exposes ``eval(y, t) -> FlowSample`` with the velocity, its
spatial gradient ``grad_u[i, j] = du_i/dy_j`` and the material derivative
``du/dt + (u . grad) u``, all from closed-form differentiation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ConfigError
from .params import MreParams


@dataclass(frozen=True)
class FlowSample:
    u: np.ndarray
    grad_u: np.ndarray
    mat_deriv: np.ndarray


def _sample(u, grad_u, du_dt):
    u = np.asarray(u, dtype=float)
    grad_u = np.asarray(grad_u, dtype=float)
    return FlowSample(u=u, grad_u=grad_u, mat_deriv=np.asarray(du_dt, dtype=float) + grad_u @ u)


class QuiescentField:
    name = "quiescent"

    def velocity(self, y, t):
        return np.zeros(2)

    def eval(self, y, t) -> FlowSample:
        return FlowSample(u=np.zeros(2), grad_u=np.zeros((2, 2)), mat_deriv=np.zeros(2))

    def to_dict(self):
        return {"name": self.name}


@dataclass(frozen=True)
class VortexField:
    """Solid-body rotation u = omega * (-y2, y1)."""

    omega: float = 1.0
    name = "vortex"

    def velocity(self, y, t):
        return self.omega * np.array([-y[1], y[0]])

    def eval(self, y, t) -> FlowSample:
        w = self.omega
        grad = np.array([[0.0, -w], [w, 0.0]])
        return _sample(self.velocity(y, t), grad, np.zeros(2))

    def to_dict(self):
        return {"name": self.name, "omega": self.omega}


@dataclass(frozen=True)
class OscillatoryField:
    """Spatially homogeneous field u = (u1, sin(lambda t))."""

    u1: float = 0.05
    lam: float = 6.0
    name = "oscillatory"

    def velocity(self, y, t):
        return np.array([self.u1, np.sin(self.lam * t)])

    def eval(self, y, t) -> FlowSample:
        du_dt = np.array([0.0, self.lam * np.cos(self.lam * t)])
        return _sample(self.velocity(y, t), np.zeros((2, 2)), du_dt)

    def to_dict(self):
        return {"name": self.name, "u1": self.u1, "lambda": self.lam}


def _bickley_defaults():
    text = resources.files("mre").joinpath("data/bickley.json").read_text()
    raw = json.loads(text)
    U0, L, r0 = raw["U0"], raw["L"], raw["r0"]
    k = tuple(2.0 * n / r0 for n in raw["wavenumbers"])
    speeds = tuple(f * U0 for f in raw["phase_speed_fractions"])
    sigma = tuple(ki * ci for ki, ci in zip(k, speeds))
    return dict(U0=U0, L=L, A=tuple(raw["A"]), k=k, sigma=sigma)


@dataclass(frozen=True)
class BickleyField:
    """Meandering Bickley jet with stream function

    Psi = -U0 L tanh(y/L) + sum_i A_i U0 L sech^2(y/L) cos(k_i x - sigma_i t),

    velocity ``(-dPsi/dy, dPsi/dx)``. The stream function is evaluated as
    given; no periodic wrapping in ``x``.
    """

    U0: float
    L: float
    A: tuple
    k: tuple
    sigma: tuple
    name = "bickley"

    @classmethod
    def default(cls, **overrides) -> "BickleyField":
        params = _bickley_defaults()
        params.update(overrides)
        return cls(**{key: tuple(v) if isinstance(v, list) else v for key, v in params.items()})

    def stream(self, y, t):
        x1, x2 = y
        sech2 = 1.0 / np.cosh(x2 / self.L) ** 2
        psi = -self.U0 * self.L * np.tanh(x2 / self.L)
        for A, k, s in zip(self.A, self.k, self.sigma):
            psi += A * self.U0 * self.L * sech2 * np.cos(k * x1 - s * t)
        return psi

    def _terms(self, y, t):
        x1, x2 = y
        U0, L = self.U0, self.L
        th = np.tanh(x2 / L)
        s2 = 1.0 - th * th  # sech^2
        A = np.asarray(self.A)
        k = np.asarray(self.k)
        sig = np.asarray(self.sigma)
        phase = k * x1 - sig * t
        return U0, L, th, s2, A, k, sig, np.cos(phase), np.sin(phase)

    def velocity(self, y, t):
        U0, L, th, s2, A, k, sig, cos, sin = self._terms(y, t)
        u = U0 * s2 + 2.0 * U0 * s2 * th * np.sum(A * cos)
        v = -U0 * L * s2 * np.sum(A * k * sin)
        return np.array([u, v])

    def eval(self, y, t) -> FlowSample:
        U0, L, th, s2, A, k, sig, cos, sin = self._terms(y, t)
        a_cos = np.sum(A * cos)
        # d/dy of sech^2 and of sech^2 tanh, with respect to the physical y
        ds2 = -2.0 * s2 * th / L
        ds2th = s2 * (s2 - 2.0 * th * th) / L
        u = U0 * s2 + 2.0 * U0 * s2 * th * a_cos
        v = -U0 * L * s2 * np.sum(A * k * sin)
        du_dx = -2.0 * U0 * s2 * th * np.sum(A * k * sin)
        du_dy = U0 * ds2 + 2.0 * U0 * ds2th * a_cos
        dv_dx = -U0 * L * s2 * np.sum(A * k * k * cos)
        dv_dy = -U0 * L * ds2 * np.sum(A * k * sin)
        du_dt = 2.0 * U0 * s2 * th * np.sum(A * sig * sin)
        dv_dt = U0 * L * s2 * np.sum(A * k * sig * cos)
        grad = np.array([[du_dx, du_dy], [dv_dx, dv_dy]])
        return _sample([u, v], grad, [du_dt, dv_dt])

    def to_dict(self):
        return {"name": self.name, "U0": self.U0, "L": self.L, "A": list(self.A),
                "k": list(self.k), "sigma": list(self.sigma)}


def eval_field(fld, y, t) -> FlowSample:
    return fld.eval(np.asarray(y, dtype=float), float(t))


def boundary_forcing(q0, sample: FlowSample, params: MreParams) -> np.ndarray:
    """Right-hand side f = (1/R - 1) Du/Dt - (q0 . grad) u of the boundary condition."""
    return (1.0 / params.R - 1.0) * sample.mat_deriv - sample.grad_u @ np.asarray(q0)


def field_from_config(spec) -> object:
    """Build a field from its CLI/JSON description.

    ``spec`` is either a name (``"vortex"``, ``"gridded:<path>"``, ...) or a
    mapping with a ``name`` key plus per-field parameters.
    """
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    name = spec.pop("name", None)
    if name is None:
        raise ConfigError("field spec needs a 'name'")
    if name.startswith("gridded:"):
        from .gridded import GriddedField, load_grid_series

        path = name.split(":", 1)[1]
        return GriddedField(load_grid_series(path), path=path)
    if name == "gridded":
        from .gridded import GriddedField, load_grid_series

        return GriddedField(load_grid_series(spec["path"]), path=spec["path"])
    if name == "quiescent":
        return QuiescentField()
    if name == "vortex":
        return VortexField(omega=float(spec.get("omega", 1.0)))
    if name == "oscillatory":
        return OscillatoryField(u1=float(spec.get("u1", 0.05)),
                                lam=float(spec.get("lambda", spec.get("lam", 6.0))))
    if name == "bickley":
        return BickleyField.default(**spec)
    raise ConfigError(f"unknown flow field {name!r}")
