"""Time steppers for semi-discrete systems ``eta' = L eta + omega(eta, t)``.

Any object providing ``size``, ``apply_linear(eta)``, ``forcing(eta, t)`` and
``shifted_solver(h)`` (a callable solving ``(I - h L) x = r``) can be
stepped; :class:`~mre.discretization.FullSystem` is the main one.

* ``trapezoidal`` and ``dirk4`` treat the whole right-hand side implicitly and
  solve every implicit stage with Newton-Krylov (LGMRES inner solver,
  preconditioned by the inverse of ``I - h L``).
* ``imex2`` (implicit-explicit midpoint) and ``imex4`` (ARK4(3)6L[2]SA) treat
  ``L`` implicitly and ``omega`` explicitly, so every stage costs one linear
  solve with a cached factorization.
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import NoConvergence, newton_krylov
from scipy.sparse.linalg import LinearOperator

from . import tableaus
from .errors import ConfigError, IntegrationAborted, StepError

SCHEMES = ("trapezoidal", "dirk4", "imex2", "imex4")


@dataclass(frozen=True)
class StepperConfig:
    scheme: str
    dt: float
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    linear_tol: float = 1e-12

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.dt > 0:
            raise ConfigError(f"time step must be positive, got {self.dt!r}")
        for name in ("newton_tol", "linear_tol"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ConfigError(f"{name} must lie in (0, 1), got {value!r}")
        if self.newton_max_iter < 1:
            raise ConfigError("newton_max_iter must be at least 1")


@dataclass
class Trajectory:
    """Positions and boundary relative velocities at uniformly spaced times."""

    times: np.ndarray
    positions: np.ndarray
    rel_velocity: np.ndarray
    wall_time: float = 0.0
    meta: dict = field(default_factory=dict)
    velocity: np.ndarray | None = None
    history: object = None

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def final_position(self) -> np.ndarray:
        return self.positions[-1]


def initial_state(y0, v0, field, grid, t0=0.0) -> np.ndarray:
    """State at ``t0``: relative velocity ``v0 - u(y0, t0)`` on node 0, zero
    elsewhere in pseudo-space, position ``y0``."""
    y0 = np.asarray(y0, dtype=float)
    eta = np.zeros(2 * grid.n_unknowns + 2)
    eta[0:2] = np.asarray(v0, dtype=float) - field.velocity(y0, t0)
    eta[-2:] = y0
    return eta


def initial_state_from_slip(y0, q0, grid) -> np.ndarray:
    eta = np.zeros(2 * grid.n_unknowns + 2)
    eta[0:2] = q0
    eta[-2:] = y0
    return eta


def _newton(residual, guess, precond_solve, cfg: StepperConfig, what):
    # newton_krylov always takes a step, which breaks down on an exact guess
    if np.max(np.abs(residual(guess))) <= cfg.newton_tol:
        return guess
    n = len(guess)
    M = LinearOperator((n, n), matvec=precond_solve, dtype=float)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return newton_krylov(residual, guess, method="lgmres", inner_M=M,
                                 f_tol=cfg.newton_tol, maxiter=cfg.newton_max_iter,
                                 inner_rtol=cfg.linear_tol, verbose=False)
    except NoConvergence as exc:
        last = np.asarray(exc.args[0]) if exc.args else guess
        res = float(np.max(np.abs(residual(last))))
        raise StepError(f"{what}: Newton-Krylov did not converge in {cfg.newton_max_iter} "
                        f"iterations (residual {res:.3e})", residual=res) from exc
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise StepError(f"{what}: nonlinear solve failed ({exc})") from exc


def step_trapezoidal(sys, eta, t, cfg: StepperConfig) -> np.ndarray:
    """Trapezoidal rule, Newton-Krylov from a linearly implicit predictor.

    The predictor treats the linear part implicitly and freezes the forcing at
    an explicit Euler guess, so it is already the solution when the forcing
    does not depend on the state.
    """
    dt = cfg.dt
    f_k = sys.apply_linear(eta) + sys.forcing(eta, t)
    known = eta + 0.5 * dt * f_k
    t_new = t + dt
    solve = sys.shifted_solver(0.5 * dt)

    def residual(x):
        return x - 0.5 * dt * (sys.apply_linear(x) + sys.forcing(x, t_new)) - known

    predictor = solve(known + 0.5 * dt * sys.forcing(eta + dt * f_k, t_new))
    return _newton(residual, predictor, solve, cfg, f"trapezoidal step at t={t:.6g}")


def step_dirk(sys, eta, t, cfg: StepperConfig, tab=None) -> np.ndarray:
    """Stiffly accurate ESDIRK step; stage i starts Newton from stage i-1."""
    tab = tab or tableaus.esdirk4()
    dt = cfg.dt
    s = tab.stages
    K = np.empty((s, len(eta)))
    Y = eta
    K[0] = sys.apply_linear(eta) + sys.forcing(eta, t)
    solver = None
    for i in range(1, s):
        a_ii = tab.A[i, i]
        t_i = t + tab.c[i] * dt
        known = eta + dt * (tab.A[i, :i] @ K[:i])
        if solver is None or solver[0] != a_ii:
            solver = (a_ii, sys.shifted_solver(a_ii * dt))

        def residual(x, t_i=t_i, known=known, a_ii=a_ii):
            return x - a_ii * dt * (sys.apply_linear(x) + sys.forcing(x, t_i)) - known

        try:
            Y = _newton(residual, Y, solver[1], cfg, f"DIRK stage {i + 1} at t={t:.6g}")
        except StepError as exc:
            exc.stage = i + 1
            raise
        K[i] = (Y - known) / (a_ii * dt)
    if np.allclose(tab.b, tab.A[-1]):
        return Y
    return eta + dt * (tab.b @ K)


def step_imex(sys, eta, t, cfg: StepperConfig, tab=None) -> np.ndarray:
    """Additive Runge-Kutta step: linear part implicit, forcing explicit."""
    if tab is None:
        tab = tableaus.imex_midpoint() if cfg.scheme == "imex2" else tableaus.ark4()
    ex, im = tab.explicit, tab.implicit
    dt = cfg.dt
    s = ex.stages
    n = len(eta)
    KE = np.zeros((s, n))
    KI = np.zeros((s, n))
    for i in range(s):
        rhs = eta + dt * (ex.A[i, :i] @ KE[:i] + im.A[i, :i] @ KI[:i])
        a_ii = im.A[i, i]
        if a_ii != 0.0:
            Y = sys.shifted_solver(a_ii * dt)(rhs)
        else:
            Y = rhs
        if not np.all(np.isfinite(Y)):
            raise StepError(f"IMEX stage {i + 1} at t={t:.6g} produced non-finite values", stage=i + 1)
        KI[i] = sys.apply_linear(Y)
        KE[i] = sys.forcing(Y, t + ex.c[i] * dt)
    return eta + dt * (ex.b @ KE + im.b @ KI)


def stepper(scheme):
    return {"trapezoidal": step_trapezoidal, "dirk4": step_dirk,
            "imex2": step_imex, "imex4": step_imex}[scheme]


def shift_coefficients(cfg: StepperConfig):
    """Distinct ``h`` values whose factorizations a run needs."""
    if cfg.scheme == "trapezoidal":
        return [0.5 * cfg.dt]
    if cfg.scheme == "dirk4":
        return sorted({tableaus.esdirk4().A[i, i] * cfg.dt for i in range(1, 6)})
    tab = tableaus.imex_midpoint() if cfg.scheme == "imex2" else tableaus.ark4()
    return sorted({a * cfg.dt for a in np.diag(tab.implicit.A) if a != 0.0})


def n_steps_for(t_span, dt) -> int:
    t0, T = t_span
    ratio = (T - t0) / dt
    n = int(round(ratio))
    if n < 0 or abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)):
        raise ConfigError(f"time span {t_span} is not an integer multiple of dt={dt}")
    return n


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def integrate(sys, eta0, t_span, cfg: StepperConfig, meta=None) -> Trajectory:
    """Fixed-step integration; records position and boundary slip every step.

    Factorizations are prepared before the clock starts, so ``wall_time``
    covers the stepping loop only.
    """
    t0 = float(t_span[0])
    n = n_steps_for(t_span, cfg.dt)
    step = stepper(cfg.scheme)
    for h in shift_coefficients(cfg):
        sys.shifted_solver(h)
    times = t0 + cfg.dt * np.arange(n + 1)
    pos = np.empty((n + 1, 2))
    rel = np.empty((n + 1, 2))
    eta = np.array(eta0, dtype=float)
    pos[0], rel[0] = eta[-2:], eta[0:2]
    info = {"scheme": cfg.scheme, "dt": cfg.dt, "newton_tol": cfg.newton_tol,
            "newton_max_iter": cfg.newton_max_iter, "linear_tol": cfg.linear_tol}
    info.update(meta or {})
    start = time.perf_counter()
    for k in range(n):
        try:
            eta = step(sys, eta, times[k], cfg)
        except StepError as exc:
            elapsed = time.perf_counter() - start
            partial = Trajectory(times[:k + 1], pos[:k + 1].copy(), rel[:k + 1].copy(),
                                 elapsed, dict(info, aborted_at=float(times[k])))
            raise IntegrationAborted(f"integration aborted at t={times[k]:.6g}: {exc}",
                                     partial, exc) from exc
        pos[k + 1], rel[k + 1] = eta[-2:], eta[0:2]
    wall = time.perf_counter() - start
    info["wall_time"] = wall
    info["config_hash"] = config_hash(info | {"wall_time": None})
    return Trajectory(times, pos, rel, wall, info)
