"""Closed-form benchmark trajectories and high-resolution numerical references.

The quiescent and oscillatory solutions are sums of improper integrals over
a wavenumber ``k``; see :func:`quiescent_solution` and
:func:`oscillatory_solution`. Velocities passed here are initial *relative*
velocities ``q0 = v(0) - u(y0, 0)`` (they coincide with the particle
velocity in a quiescent fluid).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import erfcx, wofz

from .errors import ConfigError, QuadratureError, ReferenceRejected
from .params import MreParams


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-12
    split_point: float | None = None
    max_subdivisions: int = 500

    def __post_init__(self):
        if not 1e-14 < self.rel_tol < 1e-3:
            raise ConfigError(f"rel_tol must lie in (1e-14, 1e-3), got {self.rel_tol!r}")


def _quad(fun, a, b, spec, points=None, epsabs=0.0):
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, err = quad(fun, a, b, epsabs=epsabs, epsrel=spec.rel_tol,
                              limit=spec.max_subdivisions, points=points)
        except IntegrationWarning as exc:
            raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {exc}") from exc
    return value, err


def improper_integral(integrand, spec: QuadratureSpec = QuadratureSpec(), scale=1.0, magnitude=0.0):
    """Integrate ``integrand`` over [0, inf).

    Adaptive quadrature on ``[0, K]`` plus the tail mapped to ``s in [0, 1)``
    through ``k = K + s/(1 - s)``. ``K`` defaults to ``8 * scale`` where
    ``scale`` is the wavenumber beyond which the integrand decays.

    ``magnitude`` is a typical size of the integral; when the result is much
    smaller (heavy cancellation) the tolerance is taken relative to it.

    Returns the value; raises :class:`QuadratureError` when the combined
    error estimate exceeds ``rel_tol`` relative to the result.
    """
    epsabs = 0.5 * spec.rel_tol * magnitude
    K = spec.split_point if spec.split_point is not None else 8.0 * scale
    inner_points = [p for p in (scale, 2.0 * scale) if 0 < p < K]
    head, err_head = _quad(integrand, 0.0, K, spec, points=inner_points or None, epsabs=epsabs)

    def tail_fn(s):
        if s >= 1.0:
            return 0.0
        one = 1.0 - s
        return integrand(K + s / one) / (one * one)

    tail, err_tail = _quad(tail_fn, 0.0, 1.0, spec, epsabs=epsabs)
    value = head + tail
    err = err_head + err_tail
    if err > max(spec.rel_tol * max(abs(value), magnitude), 1e-300) * 10.0:
        raise QuadratureError(f"error estimate {err:.3e} above tolerance for value {value:.6e}",
                              estimate=err)
    return value


def _denominator(k2, params):
    a, g = params.alpha, params.gamma
    return k2 * g * g + (k2 - a) ** 2


def _k_scale(params):
    return max(1.0, math.sqrt(params.alpha), params.gamma)


def relaxation_displacement(t, params: MreParams, spec=QuadratureSpec()):
    """(2/pi) int_0^inf gamma (1 - exp(-k^2 t)) / ((alpha - k^2)^2 + (k gamma)^2) dk.

    Displacement produced by a unit initial slip up to time ``t``.
    """
    if t == 0:
        return 0.0
    g = params.gamma

    def fn(k):
        k2 = k * k
        return g * -math.expm1(-k2 * t) / _denominator(k2, params)

    # magnitude: the t -> inf limit, gamma * int dk / den
    magnitude = improper_integral(lambda k: g / _denominator(k * k, params), spec, _k_scale(params))
    return 2.0 / math.pi * improper_integral(fn, spec, _k_scale(params), magnitude)


def _relaxation_roots(params: MreParams):
    # (alpha - k^2)^2 + (k gamma)^2 = (k^2 + s1^2)(k^2 + s2^2), s1 + s2 = gamma, s1 s2 = alpha
    g, a = params.gamma, params.alpha
    disc = np.sqrt(complex(g * g - 4.0 * a))
    return 0.5 * (g - disc), 0.5 * (g + disc)


# below this root separation (relative to gamma) the divided differences lose
# more digits to cancellation than the derivative at the midpoint (error of
# order separation^2) does
_DOUBLE_ROOT = 1e-5


def _erfcx(z):
    if abs(z.imag) < 1e-300:
        return complex(erfcx(z.real))
    return complex(wofz(1j * z))


def slip_relaxation(t, params: MreParams) -> float:
    """Relative velocity at ``t`` after a unit initial slip in fluid at rest.

    Closed form of ``(2 gamma / pi) int k^2 exp(-k^2 t) / den dk``, the time
    derivative of :func:`relaxation_displacement`::

        phi(t) = (s2 erfcx(s2 sqrt t) - s1 erfcx(s1 sqrt t)) / (s2 - s1)

    with ``s1, s2`` the roots of ``s^2 - gamma s + alpha``; ``phi(0) = 1``.
    """
    if t < 0:
        raise ConfigError(f"time must be non-negative, got {t!r}")
    s1, s2 = _relaxation_roots(params)
    rt = math.sqrt(t)
    if abs(s2 - s1) < _DOUBLE_ROOT * params.gamma:
        # double root: d/ds [s erfcx(s rt)] at the midpoint
        z = complex(0.5 * params.gamma * rt)
        val = _erfcx(z) + z * (2.0 * z * _erfcx(z) - 2.0 / math.sqrt(math.pi))
    else:
        val = (s2 * _erfcx(s2 * rt) - s1 * _erfcx(s1 * rt)) / (s2 - s1)
    return float(val.real)


def slip_displacement(t, params: MreParams) -> float:
    """Closed form of :func:`relaxation_displacement`, the integral of
    :func:`slip_relaxation` from 0 to ``t``::

        D(t) = ((erfcx(s2 sqrt t) - 1)/s2 - (erfcx(s1 sqrt t) - 1)/s1) / (s2 - s1)

    It tends to ``1/alpha = R S`` for large ``t``.
    """
    if t < 0:
        raise ConfigError(f"time must be non-negative, got {t!r}")
    if t == 0:
        return 0.0
    s1, s2 = _relaxation_roots(params)
    rt = math.sqrt(t)

    def part(s):
        return (_erfcx(s * rt) - 1.0) / s

    if abs(s2 - s1) < _DOUBLE_ROOT * params.gamma:
        m = 0.5 * params.gamma
        z = complex(m * rt)
        dE = 2.0 * z * _erfcx(z) - 2.0 / math.sqrt(math.pi)
        val = rt * dE / m - (_erfcx(z) - 1.0) / (m * m)
    else:
        val = (part(s2) - part(s1)) / (s2 - s1)
    return float(val.real)


def quiescent_solution(t, params: MreParams, y0, v0, spec=QuadratureSpec()):
    """Position at time ``t`` of a particle relaxing in fluid at rest."""
    if t < 0:
        raise ConfigError(f"time must be non-negative, got {t!r}")
    y0 = np.asarray(y0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if not np.any(v0):
        return y0.copy()
    return y0 + v0 * relaxation_displacement(t, params, spec)


def oscillatory_solution(t, params: MreParams, y0, q0, u1=0.05, lam=6.0, spec=QuadratureSpec()):
    """Position at time ``t`` in the field ``u = (u1, sin(lam t))``."""
    if t < 0:
        raise ConfigError(f"time must be non-negative, got {t!r}")
    if not lam > 0:
        raise ConfigError(f"oscillation frequency must be positive, got {lam!r}")
    y0 = np.asarray(y0, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    disp = relaxation_displacement(t, params, spec) if t > 0 else 0.0
    x = y0[0] + u1 * t + q0[0] * disp
    y = y0[1] + (1.0 - math.cos(lam * t)) / lam + q0[1] * disp
    R, g = params.R, params.gamma
    if R != 1.0 and t > 0:
        pref = 2.0 / math.pi * (1.0 - R) * lam / R
        sl, cl = math.sin(lam * t), math.cos(lam * t)
        scale = max(_k_scale(params), math.sqrt(lam))

        def fn(k):
            k2 = k * k
            base = k2 * g / (_denominator(k2, params) * (k2 * k2 + lam * lam))
            # transient minus steady cosine part, combined to limit cancellation
            return base * (math.exp(-k2 * t) - cl + k2 * sl / lam)

        def steady(k):
            k2 = k * k
            return k2 * g / (_denominator(k2, params) * (k2 * k2 + lam * lam))

        magnitude = improper_integral(steady, spec, scale)
        y += pref * improper_integral(fn, spec, scale, magnitude)
    return np.array([x, y])


class RelaxationSplitSystem:
    """Semi-discrete system with the analytic slip relaxation removed.

    ``q0 phi(t)`` (see :func:`slip_relaxation`) solves the heat equation with
    the homogeneous boundary condition and the discontinuous initial data of
    a non-zero initial slip; ``q0 D(t)`` (:func:`slip_displacement`) is the
    displacement it causes. The state holds ``q - q0 phi`` and
    ``y - q0 D``, both starting from zero slip, so the jump never reaches the
    grid. Field and boundary forcing are evaluated at the full ``y`` and ``q``.
    """

    def __init__(self, base, q0, t0=0.0):
        self.base = base
        self.t0 = float(t0)
        self.op = base.op
        self.params = base.params
        self.field = base.field
        self.size = base.size
        self.q0 = np.asarray(q0, dtype=float)

    def apply_linear(self, eta):
        return self.base.apply_linear(eta)

    def shifted_solver(self, h):
        return self.base.shifted_solver(h)

    def forcing(self, eta, t):
        from .fields import boundary_forcing

        Q, y = self.base.split(eta)
        tau = t - self.t0
        q_extra = self.q0 * slip_relaxation(tau, self.params)
        y_full = y + self.q0 * slip_displacement(tau, self.params)
        sample = self.field.eval(y_full, t)
        f = boundary_forcing(Q[0] + q_extra, sample, self.params)
        out = np.empty(self.size)
        out[:-2] = np.outer(self.op.source, f).ravel()
        out[-2:] = sample.u
        return out

    def rhs(self, eta, t):
        return self.apply_linear(eta) + self.forcing(eta, t)

    def restore(self, traj):
        """Add the analytic parts back to recorded positions and slip."""
        tau = traj.times - self.t0
        phi = np.array([slip_relaxation(x, self.params) for x in tau])
        disp = np.array([slip_displacement(x, self.params) for x in tau])
        traj.positions = traj.positions + np.outer(disp, self.q0)
        traj.rel_velocity = traj.rel_velocity + np.outer(phi, self.q0)
        return traj


def run_split(field, params: MreParams, y0, q0, t_span, N, order=4, scheme="imex4", c=None,
              meta=None):
    """FD run on the relaxation-split system (see :class:`RelaxationSplitSystem`)."""
    from .discretization import DEFAULT_C, build_system
    from .integrators import StepperConfig, initial_state_from_slip, integrate

    c = DEFAULT_C if c is None else c
    t0, T = t_span
    sys = RelaxationSplitSystem(build_system(field, params, N, order, c), q0, t0)
    cfg = StepperConfig(scheme=scheme, dt=(T - t0) / N)
    info = {"N": N, "c": c, "order": order, "split_slip": True}
    info.update(meta or {})
    traj = integrate(sys, initial_state_from_slip(y0, np.zeros(2), sys.op.grid), t_span, cfg,
                     meta=info)
    return sys.restore(traj)


def reference_trajectory(field, params: MreParams, y0, q0, t_span, finest_N=512,
                         refine=4, order=4, scheme="imex4", c=None, gate=0.01,
                         coarsest_error=None, split_slip=None):
    """High-resolution numerical reference with a self-convergence gate.

    Runs the solver at ``N_ref = refine * finest_N`` nodes and steps, and at
    ``N_ref / 2``. With ``coarsest_error`` given, the two final positions must
    differ by less than ``gate * coarsest_error`` (relative to the final
    position norm), otherwise :class:`ReferenceRejected` is raised; see
    :func:`check_reference` to apply the gate later.

    ``q0`` is the initial relative velocity. When it is non-zero (or
    ``split_slip`` is set) the runs use :class:`RelaxationSplitSystem`, which
    keeps the fourth-order scheme at full order despite the initial jump.
    """
    from .discretization import DEFAULT_C, build_system
    from .integrators import StepperConfig, initial_state_from_slip, integrate

    if refine < 4:
        raise ConfigError("reference must be at least 4x finer than the finest benchmark")
    c = DEFAULT_C if c is None else c
    q0 = np.asarray(q0, dtype=float)
    if split_slip is None:
        split_slip = bool(np.any(q0))
    t0, T = t_span
    runs = []
    for N in (refine * finest_N // 2, refine * finest_N):
        meta = {"N": N, "c": c, "order": order, "reference": True}
        if split_slip:
            traj = run_split(field, params, y0, q0, t_span, N, order, scheme, c, meta)
        else:
            sys = build_system(field, params, N, order, c)
            cfg = StepperConfig(scheme=scheme, dt=(T - t0) / N)
            eta0 = initial_state_from_slip(y0, q0, sys.op.grid)
            traj = integrate(sys, eta0, t_span, cfg, meta=meta)
        runs.append(traj)
    coarse, fine = runs
    diff = np.linalg.norm(coarse.final_position - fine.final_position)
    norm = np.linalg.norm(fine.final_position)
    fine.meta["self_convergence"] = diff / norm if norm > 1e-14 else diff
    if coarsest_error is not None:
        check_reference(fine, coarsest_error, gate)
    return fine


def check_reference(ref, coarsest_error, gate=0.01):
    """Raise :class:`ReferenceRejected` unless the self-convergence estimate is
    below ``gate`` times ``coarsest_error``."""
    self_err = ref.meta["self_convergence"]
    if not self_err < gate * coarsest_error:
        raise ReferenceRejected(
            f"reference self-convergence {self_err:.3e} is not below "
            f"{gate:g} x coarsest benchmark error {coarsest_error:.3e}")
