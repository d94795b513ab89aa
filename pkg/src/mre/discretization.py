"""Quasi-uniform grid on [0, inf) and the finite-difference operators of the
semi-discrete system

    d/dt [q; y] = [[A_s, 0], [E, 0]] [q; y] + [v(q0, y, t); u(y, t)],

where ``q`` interleaves the two velocity components node by node
(q0_x, q0_y, q1_x, q1_y, ...) for nodes 0..N-2, and ``E`` copies ``q0`` into
the position rows. The far-field node N-1 is a homogeneous Dirichlet node.

Both components obey the same scalar operator, so operators are stored per
component (size N-1) and act on the state reshaped to ``(N-1, 2)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyError, ConfigError
from .fields import boundary_forcing
from .params import MreParams

DEFAULT_C = 10.0


def log_map(xi, c):
    """x(xi) = -c ln(1 - xi); valid for any xi < 1, including negative xi."""
    return -c * np.log1p(-np.asarray(xi, dtype=float))


@dataclass(frozen=True, eq=False)
class PseudoGrid:
    N: int
    c: float
    d: float
    xi: np.ndarray
    x: np.ndarray
    psi: np.ndarray
    zeta: np.ndarray

    @property
    def n_unknowns(self) -> int:
        """Nodes carried in the state (0..N-2)."""
        return self.N - 1


def build_grid(N: int, c: float = DEFAULT_C) -> PseudoGrid:
    """Uniform reference nodes xi_n = n/N, n = 0..N-1, mapped logarithmically.

    ``psi[n] = x_{n+1/2} - x_{n-1/2}`` and ``zeta[n] = x_{n+3/4} - x_{n+1/4}``
    for n = 0..N-2, with fractional nodes taken through the exact map
    (``x_{-1/2}`` is its analytic continuation).
    """
    if int(N) != N or N < 4:
        raise ConfigError(f"grid needs at least 4 nodes, got N={N!r}")
    if not (math.isfinite(c) and c > 0):
        raise ConfigError(f"mapping scale c must be positive, got {c!r}")
    N = int(N)
    n = np.arange(N, dtype=float)
    xi = n / N
    x = log_map(xi, c)
    m = n[:-1]
    # closed forms of the map differences, free of cancellation
    psi = c * np.log1p(1.0 / (N - m - 0.5))
    zeta = c * np.log1p(0.5 / (N - m - 0.75))
    return PseudoGrid(N=N, c=float(c), d=1.0 / N, xi=xi, x=x, psi=psi, zeta=zeta)


@dataclass(frozen=True, eq=False)
class SpatialOperator:
    """Per-component operator (size N-1) and boundary source vector.

    ``apply`` and ``shifted_factor`` act on per-component arrays of shape
    ``(N-1, 2)``. ``scalar`` is the explicit matrix: sparse for FD2, dense for
    FD4 (built on first access only, stepping never needs it). ``A_s`` and
    ``source_map`` give the interleaved forms acting on the full q-vector.
    """

    grid: PseudoGrid
    params: MreParams
    order: int
    source: np.ndarray
    sparse_scalar: object = None
    compact: object = None

    @property
    def size(self) -> int:
        return 2 * self.grid.n_unknowns

    @cached_property
    def scalar(self):
        if self.sparse_scalar is not None:
            return self.sparse_scalar
        return self.compact.dense()

    @property
    def A_s(self):
        if sp.issparse(self.scalar):
            return sp.kron(self.scalar, sp.identity(2), format="csr")
        return np.kron(self.scalar, np.eye(2))

    @property
    def source_map(self) -> np.ndarray:
        return np.kron(self.source[:, None], np.eye(2))

    def dense_scalar(self) -> np.ndarray:
        return self.scalar.toarray() if sp.issparse(self.scalar) else np.asarray(self.scalar)

    def apply(self, Q):
        if self.sparse_scalar is not None:
            return self.sparse_scalar @ Q
        return self.compact.apply(Q)

    def shifted_factor(self, h):
        """Return ``solve(R)`` for ``(I - h A_s) X = R``."""
        if self.compact is not None:
            return self.compact.shifted_factor(h)
        n = self.grid.n_unknowns
        M = (sp.identity(n, format="csc") - h * self.sparse_scalar).tocsc()
        return _splu(M, f"I - {h} A").solve


def _splu(M, label):
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            return spla.splu(M.tocsc())
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise AssemblyError(f"{label} is singular") from exc


def assemble_fd2(grid: PseudoGrid, params: MreParams) -> SpatialOperator:
    """Second-order operator on the mapped grid with the Robin-type boundary row."""
    psi, zeta = grid.psi, grid.zeta
    a, g = params.alpha, params.gamma
    n = grid.n_unknowns
    lower = np.zeros(n - 1)
    diag = np.empty(n)
    upper = np.zeros(n - 1)
    denom = zeta[0] * (2.0 + g * psi[0])
    diag[0] = -(g + 2.0 * a * zeta[0]) / denom
    upper[0] = g / denom
    m = np.arange(1, n)
    lower[m - 1] = 1.0 / (2.0 * psi[m] * zeta[m - 1])
    diag[m] = -(zeta[m - 1] + zeta[m]) / (2.0 * psi[m] * zeta[m - 1] * zeta[m])
    upper[m[:-1]] = 1.0 / (2.0 * psi[m[:-1]] * zeta[m[:-1]])
    scalar = sp.diags([lower, diag, upper], [-1, 0, 1], format="csr")
    source = np.zeros(n)
    source[0] = 2.0 / (2.0 + g * psi[0])
    return SpatialOperator(grid=grid, params=params, order=2, source=source, sparse_scalar=scalar)


def boundary_closure_coefficients(alpha, gamma, c, d):
    """Coefficients (b_hat0, b0, b1, b2, b3) of the fourth-order boundary row
    that embeds the boundary condition (leading error d^4/60 d^5q/dxi^5)."""
    b_hat0 = -2.0 * c / (3.0 * gamma)
    b0 = (12.0 * alpha * d * c - 17.0 * gamma) / (18.0 * gamma)
    return b_hat0, b0, 0.5, 0.5, -1.0 / 18.0


def _banded(lower, diag, upper):
    ab = np.zeros((3, len(diag)))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    return ab


def fd4_banded_parts(grid: PseudoGrid, params: MreParams):
    """Banded pieces of the compact scheme, per component.

    Returns ``(M1, M2)`` in ``solve_banded`` (1, 1) layout and ``(B1, B2)`` as
    sparse matrices; the entries follow the Pade interior rows mapped to the
    pseudo-space through the exact Jacobian of the log map.
    """
    N, c, d = grid.N, grid.c, grid.d
    n = grid.n_unknowns
    k = np.arange(n, dtype=float)
    # dq/dxi at node k equals dq/dx times c N/(N - k)
    w = N * c / (N - k)
    lower = w[:-1].copy()   # row k>=1, column k-1
    upper = w[1:].copy()    # row k, column k+1
    diag1 = 4.0 * w
    diag1[0] = w[0]         # = c
    diag2 = diag1.copy()
    upper1 = upper.copy()
    upper2 = upper.copy()
    upper2[0] = 3.0 * w[1]
    M1 = _banded(lower, diag1, upper1)
    M2 = _banded(lower, diag2, upper2)

    _, b0, b1, b2, b3 = boundary_closure_coefficients(params.alpha, params.gamma, c, d)
    rows = [0, 0, 0, 0]
    cols = [0, 1, 2, 3]
    B1_vals = [b0, b1, b2, b3]
    B2_vals = [-17.0 / 6.0, 1.5, 1.5, -1.0 / 6.0]
    interior = np.arange(1, n)
    r_lo, c_lo = interior, interior - 1
    r_hi = interior[:-1]
    c_hi = r_hi + 1
    rows_i = np.concatenate([r_lo, r_hi])
    cols_i = np.concatenate([c_lo, c_hi])
    vals_i = np.concatenate([np.full(len(r_lo), -3.0), np.full(len(r_hi), 3.0)])

    def build(top):
        return sp.csr_matrix(
            (np.concatenate([top, vals_i]) / d,
             (np.concatenate([rows, rows_i]), np.concatenate([cols, cols_i]))),
            shape=(n, n))

    return M1, M2, build(B1_vals), build(B2_vals)


def _solve_banded(ab, rhs, label):
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            return sla.solve_banded((1, 1), ab, rhs)
        except (np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
            dense = np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[2, :-1], -1)
            raise AssemblyError(f"{label} is singular", np.linalg.cond(dense, 1)) from exc


class CompactParts:
    """Sparse form of the compact operator ``A_s = Psi^-1 B2 M1^-1 B1`` with
    ``Psi = M2 - kappa B2 M1^-1 e0 e0^T`` and ``kappa = 2c/(3 gamma)``.

    Introducing ``s = M1^-1 (kappa e0 e0^T + h B1) x`` turns
    ``(Psi - h B2 M1^-1 B1) x = b`` into the sparse block system
    ``[[M2, -B2], [-(kappa e0 e0^T + h B1), M1]] [x; s] = [b; 0]``, so neither
    applying ``A_s`` (``h = 0`` with a different right-hand side) nor solving
    with ``I - h A_s`` needs a dense matrix.
    """

    def __init__(self, grid: PseudoGrid, params: MreParams):
        self.n = grid.n_unknowns
        self.kappa = 2.0 * grid.c / (3.0 * params.gamma)
        self.M1b, self.M2b, self.B1, self.B2 = fd4_banded_parts(grid, params)
        self.M1 = _from_banded(self.M1b)
        self.M2 = _from_banded(self.M2b)
        e0 = np.zeros(self.n)
        e0[0] = 1.0
        # g = B2 M1^-1 e0, the rank-one direction of Psi
        self.g = self.B2 @ _solve_banded(self.M1b, e0, "M1")
        self._factors = {}

    def _block(self, h):
        key = float(h)
        lu = self._factors.get(key)
        if lu is None:
            n = self.n
            E00 = sp.csr_matrix(([self.kappa], ([0], [0])), shape=(n, n))
            K = sp.bmat([[self.M2, -self.B2], [-(E00 + h * self.B1), self.M1]], format="csc")
            lu = _splu(K, "compact block system" if h == 0 else f"I - {h} A")
            self._factors[key] = lu
        return lu

    def psi_apply(self, X):
        X = np.asarray(X, dtype=float)
        return self.M2 @ X - self.kappa * np.multiply.outer(self.g, X[0])

    def psi_solve(self, B):
        lu = self._block(0.0)
        B = np.asarray(B, dtype=float)
        rhs = np.concatenate([B, np.zeros_like(B)])
        # with h = 0 the block system solves Psi x = B (B1 drops out)
        return lu.solve(rhs)[: self.n]

    def apply(self, Q):
        Q = np.asarray(Q, dtype=float)
        rhs = np.concatenate([np.zeros_like(Q), self.B1 @ Q])
        return self._block(0.0).solve(rhs)[: self.n]

    def shifted_factor(self, h):
        lu = self._block(h)

        def solve(R):
            b = self.psi_apply(R)
            return lu.solve(np.concatenate([b, np.zeros_like(b)]))[: self.n]

        return solve

    def source(self):
        return -self.kappa * self.psi_solve(self.g)

    def dense(self):
        return _fd4_dense(self)


def _from_banded(ab):
    n = ab.shape[1]
    return sp.diags([ab[2, :-1], ab[1], ab[0, 1:]], [-1, 0, 1], shape=(n, n), format="csr")


def _fd4_dense(parts: CompactParts) -> np.ndarray:
    """Dense ``A_s`` through Sherman-Morrison on the banded pieces."""
    n, kappa = parts.n, parts.kappa
    D1 = _solve_banded(parts.M1b, parts.B1.toarray(), "M1")
    G = parts.B2 @ D1
    Z = _solve_banded(parts.M2b, np.column_stack([G, parts.g]), "M2")
    Z_main, z_w = Z[:, :-1], Z[:, -1]
    denom = 1.0 - kappa * z_w[0]
    if abs(denom) < 1e-13 * max(1.0, abs(kappa * z_w[0])):
        raise AssemblyError("Psi is singular", float("inf"))
    # Psi^-1 X = M2^-1 X + kappa M2^-1 g (e0^T M2^-1 X) / denom
    return np.ascontiguousarray(Z_main + np.outer(z_w, kappa * Z_main[0] / denom))


def assemble_fd4(grid: PseudoGrid, params: MreParams) -> SpatialOperator:
    """Fourth-order compact operator ``A_s = Psi^-1 B2 M1^-1 B1``.

    Held in sparse factored form (:class:`CompactParts`); the dense matrix is
    only formed when ``scalar`` is accessed.
    """
    if grid.N < 8:
        raise ConfigError(f"fourth-order stencil needs N >= 8, got N={grid.N}")
    parts = CompactParts(grid, params)
    return SpatialOperator(grid=grid, params=params, order=4, source=parts.source(),
                           compact=parts)


def assemble(grid: PseudoGrid, params: MreParams, order: int) -> SpatialOperator:
    if order == 2:
        return assemble_fd2(grid, params)
    if order == 4:
        return assemble_fd4(grid, params)
    raise ConfigError(f"finite-difference order must be 2 or 4, got {order!r}")


class FullSystem:
    """Semi-discrete system ``eta' = A eta + omega(eta, t)``.

    State layout: ``eta = [q (2(N-1) entries, interleaved); y (2)]``.
    Shifted solves ``(I - h A) x = r`` are factorized once per distinct ``h``
    and cached; instances are otherwise immutable.
    """

    def __init__(self, op: SpatialOperator, field, params: MreParams):
        self.op = op
        self.field = field
        self.params = params
        self.n_nodes = op.grid.n_unknowns
        self.size = 2 * self.n_nodes + 2
        self._sparse = op.order == 2
        self._solvers = {}

    # --- structure -----------------------------------------------------
    @property
    def matrix(self):
        """The full block matrix A (sparse for FD2, dense for FD4)."""
        n2 = 2 * self.n_nodes
        couple = sp.csr_matrix((np.ones(2), ([0, 1], [0, 1])), shape=(2, n2))
        A = sp.bmat([[self.op.A_s if self._sparse else sp.csr_matrix(self.op.A_s), None],
                     [couple, sp.csr_matrix((2, 2))]], format="csr")
        return A if self._sparse else A.toarray()

    def split(self, eta):
        eta = np.asarray(eta)
        return eta[:-2].reshape(self.n_nodes, 2), eta[-2:]

    def q0(self, eta):
        return np.asarray(eta)[0:2]

    def position(self, eta):
        return np.asarray(eta)[-2:]

    # --- operator actions ------------------------------------------------
    def apply_linear(self, eta):
        Q, _ = self.split(eta)
        out = np.empty(self.size)
        out[:-2] = self.op.apply(Q).ravel()
        out[-2:] = Q[0]
        return out

    def forcing(self, eta, t):
        Q, y = self.split(eta)
        sample = self.field.eval(y, t)
        f = boundary_forcing(Q[0], sample, self.params)
        out = np.empty(self.size)
        out[:-2] = np.outer(self.op.source, f).ravel()
        out[-2:] = sample.u
        return out

    def rhs(self, eta, t):
        return self.apply_linear(eta) + self.forcing(eta, t)

    def shifted_solver(self, h):
        """Return ``solve(r)`` for ``(I - h A) x = r``."""
        key = float(h)
        solver = self._solvers.get(key)
        if solver is None:
            solver = self._factor(key)
            self._solvers[key] = solver
        return solver

    def _factor(self, h):
        n = self.n_nodes
        inner = self.op.shifted_factor(h)

        def solve(r):
            r = np.asarray(r, dtype=float)
            Q = inner(r[:-2].reshape(n, 2))
            out = np.empty(self.size)
            out[:-2] = Q.ravel()
            out[-2:] = r[-2:] + h * Q[0]
            return out

        return solve


def assemble_full(op: SpatialOperator, field, params: MreParams) -> FullSystem:
    return FullSystem(op, field, params)


def build_system(field, params: MreParams, N: int, order: int, c: float = DEFAULT_C) -> FullSystem:
    grid = build_grid(N, c)
    return FullSystem(assemble(grid, params, order), field, params)
