"""Direct multistep integration of the Maxey-Riley equation with history term.

The velocity equation is integrated over one step,

    R (v_{n+1} - v_n) = int G dt - kappa (H_{n+1} - H_n),
    G = Du/Dt - (v - u) / S,   H(t) = int_0^t w(s) / sqrt(t - s) ds,

with ``w = v - u`` and ``kappa = sqrt(3 / (pi S))``. Differentiating ``H``
yields both the initial-slip term ``w(0)/sqrt(t)`` and the convolution of
``dw/dt``, so neither needs separate treatment. ``H`` is evaluated by product
quadrature over the whole stored history; the weight of the newest sample is
moved to the left-hand side. The local force is advanced by an
Adams-Bashforth predictor and one Adams-Moulton correction per step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, InstabilityError
from .fields import eval_field
from .integrators import Trajectory, config_hash
from .params import MreParams

ORDERS = (1, 2, 3)
DAITCHE_SCHEMES = ("daitche1", "daitche2", "daitche3")
DIVERGENCE_LIMIT = 1e8
# rows beyond this are built inside the loop to bound memory
PRECOMPUTE_LIMIT = 4096

_AB = {
    1: np.array([1.0]),
    2: np.array([3.0, -1.0]) / 2.0,
    3: np.array([23.0, -16.0, 5.0]) / 12.0,
}

# Adams-Moulton weights, newest value first
_AM = {
    1: np.array([1.0, 0.0]),
    2: np.array([1.0, 1.0]) / 2.0,
    3: np.array([5.0, 8.0, -1.0]) / 12.0,
}

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def kernel_moments(D, degree):
    """``int_0^1 sigma^k (D - sigma)^(-1/2) dsigma`` for ``k = 0..degree``.

    ``D = 1`` (the singular subinterval) uses the Beta-function recursion,
    ``D >= 2`` a 20-point Gauss-Legendre rule, which is exact to rounding
    because the integrand is analytic well beyond ``[0, 1]``.
    """
    D = np.atleast_1d(np.asarray(D, dtype=float))
    out = np.empty((D.size, degree + 1))
    powers = _GL_X[None, :] ** np.arange(degree + 1)[:, None]
    far = D > 1.0
    if far.any():
        kern = _GL_W[None, :] / np.sqrt(D[far, None] - _GL_X[None, :])
        out[far] = kern @ powers.T
    if (~far).any():
        m = np.empty(degree + 1)
        m[0] = 2.0
        for k in range(1, degree + 1):
            m[k] = m[k - 1] * k / (k + 0.5)
        out[~far] = m
    return out


@lru_cache(maxsize=None)
def _vandermonde_inverse(offsets):
    o = np.asarray(offsets, dtype=float)
    V = o[None, :] ** np.arange(len(o))[:, None]
    return np.linalg.inv(V)


class HistoryWeights:
    """Product-quadrature weights for ``int_0^{t_n} g(s) (t_n - s)^(-1/2) ds``.

    ``row(n)[j]`` multiplies ``g(t_j)``; the integral equals
    ``sqrt(h) * row(n) @ g[:n+1]``. On each subinterval ``g`` is replaced by
    its degree-``order`` interpolant on the most centred stencil inside
    ``[0, n]``, so the rule is exact for polynomials of degree ``<= order``
    once ``n >= order`` (for smaller ``n`` the degree drops to ``n``).
    Rows are built on first use and returned read-only.
    """

    def __init__(self, order: int, n_steps: int):
        if order not in ORDERS:
            raise ConfigError(f"history quadrature order must be one of {ORDERS}, got {order!r}")
        if n_steps < 0:
            raise ConfigError("n_steps must be non-negative")
        self.order = int(order)
        self.n_steps = int(n_steps)
        self._rows = {}

    def row(self, n: int) -> np.ndarray:
        if not 0 <= n <= self.n_steps:
            raise IndexError(f"row {n} outside 0..{self.n_steps}")
        cached = self._rows.get(n)
        if cached is None:
            cached = self._build(n)
            cached.setflags(write=False)
            self._rows[n] = cached
        return cached

    __getitem__ = row

    @property
    def table(self) -> list:
        return [self.row(n) for n in range(self.n_steps + 1)]

    def _build(self, n):
        w = np.zeros(n + 1)
        if n == 0:
            return w
        p = min(self.order, n)
        i = np.arange(n)
        start = np.clip(i - (p - 1) // 2, 0, n - p)
        mom = kernel_moments(n - i, p)
        shift = start - i
        for s in np.unique(shift):
            sel = shift == s
            inv = _vandermonde_inverse(tuple(float(s + m) for m in range(p + 1)))
            contrib = mom[sel] @ inv.T
            cols = start[sel, None] + np.arange(p + 1)[None, :]
            np.add.at(w, cols, contrib)
        return w


@dataclass
class DirectState:
    """Stored history of a direct run: one entry per time level."""

    y: list = field(default_factory=list)
    v: list = field(default_factory=list)
    w: list = field(default_factory=list)
    G: list = field(default_factory=list)

    def __len__(self):
        return len(self.y)

    def append(self, y, v, w, G):
        self.y.append(y)
        self.v.append(v)
        self.w.append(w)
        self.G.append(G)


def _local_force(sample, v, params: MreParams):
    w = v - sample.u
    return w, sample.mat_deriv - w / params.S


def _check(v, n, t):
    norm = float(np.linalg.norm(v))
    if not np.isfinite(norm) or norm > DIVERGENCE_LIMIT:
        raise InstabilityError(f"particle velocity diverged (|v| = {norm:.3e}) at step {n}, "
                               f"t={t:.6g}", step=n)


def _march(fld, params, state, t0, dt, n_steps, order, weights, correct=True):
    """Advance ``state`` (holding ``len(state) - 1`` completed steps) to ``n_steps``.

    Each step predicts with Adams-Bashforth and, when ``correct`` is set,
    applies one Adams-Moulton correction using the force evaluated at the
    prediction (PEC mode: that force is the one stored for later steps, so
    there is a single force evaluation per step). The newest history sample
    is always taken implicitly.
    """
    kappa = params.history_coeff
    sqh = np.sqrt(dt)
    for n in range(len(state) - 1, n_steps):
        t1 = t0 + (n + 1) * dt
        p = min(order, n + 1)
        vs = state.v[n::-1][:p]
        Gs = state.G[n::-1][:p]
        W1 = weights.row(n + 1)
        W0 = weights.row(n)
        ws = np.asarray(state.w)
        known = W1[:-1] @ ws - W0 @ ws
        diag = W1[-1]
        lhs = params.R + kappa * sqh * diag

        def velocity(local, u1):
            return (params.R * state.v[n] + dt * local - kappa * sqh * (known - diag * u1)) / lhs

        b = _AB[p]
        y1 = state.y[n] + dt * _combine(b, vs)
        s1 = eval_field(fld, y1, t1)
        v1 = velocity(_combine(b, Gs), s1.u)
        _check(v1, n + 1, t1)
        _, G1 = _local_force(s1, v1, params)
        if correct:
            a = _AM[p]
            y1 = state.y[n] + dt * _combine(a, [v1] + vs[:p - 1])
            s1 = eval_field(fld, y1, t1)
            v1 = velocity(_combine(a, [G1] + Gs[:p - 1]), s1.u)
            _check(v1, n + 1, t1)
        state.append(y1, v1, v1 - s1.u, G1)
    return state


def _combine(coeffs, values):
    return sum(c * x for c, x in zip(coeffs, values))


def _startup(fld, params, y0, v0, t0, dt, order, refine, floor):
    """Values at the first ``order - 1`` levels from a refined sub-run.

    A plain lower-order start would leave an ``O(dt^2)`` error in the
    position; the sub-run recurses until its step is below ``floor``.
    """
    state = DirectState()
    s0 = eval_field(fld, y0, t0)
    w0, G0 = _local_force(s0, v0, params)
    state.append(y0, v0, w0, G0)
    k = order - 1
    if k == 0:
        return state
    if refine <= 1 or dt <= floor:
        return _march(fld, params, state, t0, dt, k, order, HistoryWeights(order, k))
    sub = _startup(fld, params, y0, v0, t0, dt / refine, order, refine, floor)
    fine = _march(fld, params, sub, t0, dt / refine, k * refine, order,
                  HistoryWeights(order, k * refine))
    for j in range(1, k + 1):
        m = j * refine
        state.append(fine.y[m], fine.v[m], fine.w[m], fine.G[m])
    return state


def integrate_direct(fld, params: MreParams, y0, v0, dt, n_steps, order=3, t0=0.0,
                     startup_refine=8, meta=None) -> Trajectory:
    """Direct integration of the Maxey-Riley equation with Basset history.

    Parameters
    ----------
    fld : flow field
    params : MreParams
    y0, v0 : array_like
        Initial position and absolute particle velocity.
    dt : float
    n_steps : int
    order : {1, 2, 3}
        Order of the history quadrature and of the Adams-Bashforth parts.
    startup_refine : int
        Refinement factor of the recursive start-up sub-runs.

    Returns
    -------
    Trajectory
        ``rel_velocity`` holds ``v - u``; ``velocity`` the particle velocity.

    Raises
    ------
    InstabilityError
        If ``|v|`` exceeds 1e8 or stops being finite.
    """
    if order not in ORDERS:
        raise ConfigError(f"order must be one of {ORDERS}, got {order!r}")
    if not dt > 0:
        raise ConfigError(f"time step must be positive, got {dt!r}")
    n_steps = int(n_steps)
    if n_steps < 0:
        raise ConfigError("n_steps must be non-negative")
    y0 = np.asarray(y0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    weights = HistoryWeights(order, n_steps)
    info = {"scheme": f"daitche{order}", "dt": dt, "startup_refine": startup_refine}
    info.update(meta or {})
    if n_steps <= PRECOMPUTE_LIMIT:
        weights.table
    start = time.perf_counter()
    floor = min(dt * dt, dt / max(startup_refine, 1))
    state = _startup(fld, params, y0, v0, t0, dt, min(order, max(n_steps, 1)),
                     startup_refine, floor)
    state = _march(fld, params, state, t0, dt, n_steps, order, weights)
    wall = time.perf_counter() - start
    info["wall_time"] = wall
    info["config_hash"] = config_hash(info | {"wall_time": None})
    times = t0 + dt * np.arange(n_steps + 1)
    return Trajectory(times, np.array(state.y[:n_steps + 1]), np.array(state.w[:n_steps + 1]),
                      wall, info, velocity=np.array(state.v[:n_steps + 1]), history=state)


def compute_weights(order: int, n_steps: int) -> HistoryWeights:
    """History quadrature weights for ``n_steps`` steps (rows built lazily)."""
    return HistoryWeights(order, n_steps)
