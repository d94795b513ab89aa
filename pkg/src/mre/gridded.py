"""Velocity fields sampled on a regular space-time grid.

Binary layout (little-endian)::

    b"MREGRID1"                      8 bytes
    u64 nx, ny, nt                   24 bytes
    f64 x0, y0, dx, dy, t0, dt       48 bytes
    nt x (nx*ny f64 u, nx*ny f64 v)  index iy*nx + ix inside each block

Space is interpolated with a tensor-product not-a-knot cubic spline per
snapshot, time linearly between the two bracketing snapshots.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import DomainError, FormatError
from .fields import FlowSample

MAGIC = b"MREGRID1"
_HEADER = struct.Struct("<8s3Q6d")


@dataclass(frozen=True, eq=False)
class GridSeries:
    nx: int
    ny: int
    x0: float
    y0: float
    dx: float
    dy: float
    t0: float
    dt: float
    nt: int
    u_data: np.ndarray  # shape (nt, ny, nx)
    v_data: np.ndarray

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise DomainError(f"grid needs nx, ny >= 4 for cubic splines, got {self.nx}x{self.ny}")
        if self.nt < 2:
            raise DomainError(f"need at least two snapshots, got {self.nt}")
        if not (self.dx > 0 and self.dy > 0 and self.dt > 0):
            raise DomainError("grid spacings dx, dy, dt must be positive")
        shape = (self.nt, self.ny, self.nx)
        for name in ("u_data", "v_data"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.size != self.nt * self.nx * self.ny:
                raise DomainError(f"{name} has {arr.size} samples, expected {np.prod(shape)}")
            object.__setattr__(self, name, arr.reshape(shape))

    @property
    def xs(self):
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def ys(self):
        return self.y0 + self.dy * np.arange(self.ny)

    @property
    def t_end(self):
        return self.t0 + (self.nt - 1) * self.dt

    def __eq__(self, other):
        if not isinstance(other, GridSeries):
            return NotImplemented
        head = ("nx", "ny", "nt", "x0", "y0", "dx", "dy", "t0", "dt")
        return (all(getattr(self, k) == getattr(other, k) for k in head)
                and np.array_equal(self.u_data, other.u_data)
                and np.array_equal(self.v_data, other.v_data))


def load_grid_series(path) -> GridSeries:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"file shorter than the {_HEADER.size}-byte header", len(raw))
    magic, nx, ny, nt, x0, y0, dx, dy, t0, dt = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    offset = _HEADER.size
    for i, value in enumerate((x0, y0, dx, dy, t0, dt)):
        if not np.isfinite(value):
            raise FormatError("non-finite header value", 32 + 8 * i)
    expected = offset + 16 * nt * nx * ny
    if len(raw) != expected:
        at = min(len(raw), expected)
        kind = "truncated payload" if len(raw) < expected else "trailing bytes after payload"
        raise FormatError(f"{kind}: expected {expected} bytes, found {len(raw)}", at)
    data = np.frombuffer(raw, dtype="<f8", offset=offset).reshape(nt, 2, ny, nx)
    bad = np.flatnonzero(~np.isfinite(data.ravel()))
    if bad.size:
        raise FormatError("non-finite velocity sample", offset + 8 * int(bad[0]))
    try:
        return GridSeries(nx=nx, ny=ny, x0=x0, y0=y0, dx=dx, dy=dy, t0=t0, dt=dt, nt=nt,
                          u_data=data[:, 0].copy(), v_data=data[:, 1].copy())
    except DomainError as exc:
        raise FormatError(str(exc), 8) from exc


def dump_grid_series(g: GridSeries) -> bytes:
    header = _HEADER.pack(MAGIC, g.nx, g.ny, g.nt, g.x0, g.y0, g.dx, g.dy, g.t0, g.dt)
    payload = np.stack([g.u_data, g.v_data], axis=1).astype("<f8")
    return header + payload.tobytes()


def write_grid_series(g: GridSeries, path) -> None:
    Path(path).write_bytes(dump_grid_series(g))


def sample_field(fld, nx, ny, x0, y0, dx, dy, nt, t0, dt) -> GridSeries:
    """Sample any analytic field on a regular grid (used for synthetic fixtures)."""
    xs = x0 + dx * np.arange(nx)
    ys = y0 + dy * np.arange(ny)
    u = np.empty((nt, ny, nx))
    v = np.empty((nt, ny, nx))
    for k in range(nt):
        t = t0 + k * dt
        for iy, yy in enumerate(ys):
            for ix, xx in enumerate(xs):
                u[k, iy, ix], v[k, iy, ix] = fld.velocity(np.array([xx, yy]), t)
    return GridSeries(nx=nx, ny=ny, x0=x0, y0=y0, dx=dx, dy=dy, t0=t0, dt=dt, nt=nt,
                      u_data=u, v_data=v)


def csv_to_grid_series(path) -> GridSeries:
    """Convert a CSV snapshot stack with columns ``t,x,y,u,v``.

    Every snapshot must cover the same regular grid; row order is free.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"t", "x", "y", "u", "v"} - set(reader.fieldnames or ())
        if missing:
            raise DomainError(f"CSV lacks column(s) {sorted(missing)}")
        for row in reader:
            rows.append([float(row[k]) for k in ("t", "x", "y", "u", "v")])
    arr = np.array(rows)
    ts, xs, ys = (np.unique(arr[:, i]) for i in range(3))
    nt, nx, ny = len(ts), len(xs), len(ys)
    if len(arr) != nt * nx * ny:
        raise DomainError(f"CSV has {len(arr)} rows, a full {nt}x{ny}x{nx} stack needs {nt * nx * ny}")

    def spacing(values, label):
        if len(values) < 2:
            raise DomainError(f"need at least two distinct {label} values")
        steps = np.diff(values)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise DomainError(f"{label} values are not equally spaced")
        return float((values[-1] - values[0]) / (len(values) - 1))

    dx, dy, dt = spacing(xs, "x"), spacing(ys, "y"), spacing(ts, "t")
    it = np.searchsorted(ts, arr[:, 0])
    ix = np.searchsorted(xs, arr[:, 1])
    iy = np.searchsorted(ys, arr[:, 2])
    u = np.full((nt, ny, nx), np.nan)
    v = np.full((nt, ny, nx), np.nan)
    u[it, iy, ix] = arr[:, 3]
    v[it, iy, ix] = arr[:, 4]
    if np.isnan(u).any():
        raise DomainError("CSV stack has duplicate or missing grid points")
    return GridSeries(nx=nx, ny=ny, x0=float(xs[0]), y0=float(ys[0]), dx=dx, dy=dy,
                      t0=float(ts[0]), dt=dt, nt=nt, u_data=u, v_data=v)


class GriddedField:
    """Field interface over a :class:`GridSeries`.

    Spline coefficients for every snapshot are built once at construction.
    """

    name = "gridded"

    def __init__(self, grid: GridSeries, path=None):
        self.grid = grid
        self.path = path
        xs, ys = grid.xs, grid.ys
        # splines take (x, y) with data indexed [ix, iy]
        self._u = [RectBivariateSpline(xs, ys, grid.u_data[k].T, kx=3, ky=3, s=0)
                   for k in range(grid.nt)]
        self._v = [RectBivariateSpline(xs, ys, grid.v_data[k].T, kx=3, ky=3, s=0)
                   for k in range(grid.nt)]

    def _check(self, y, t):
        g = self.grid
        x_hi = g.x0 + (g.nx - 1) * g.dx
        y_hi = g.y0 + (g.ny - 1) * g.dy
        if not (g.x0 <= y[0] <= x_hi):
            raise DomainError(f"x = {float(y[0])!r} outside gridded domain [{g.x0}, {x_hi}]")
        if not (g.y0 <= y[1] <= y_hi):
            raise DomainError(f"y = {float(y[1])!r} outside gridded domain [{g.y0}, {y_hi}]")
        if not (g.t0 <= t <= g.t_end):
            raise DomainError(f"t = {float(t)!r} outside snapshot range [{g.t0}, {g.t_end}]")

    def _bracket(self, t):
        g = self.grid
        k = min(int(np.floor((t - g.t0) / g.dt)), g.nt - 2)
        theta = (t - (g.t0 + k * g.dt)) / g.dt
        return k, theta

    def _space(self, k, y, dx=0, dy=0):
        return np.array([float(self._u[k](y[0], y[1], dx=dx, dy=dy, grid=False)),
                         float(self._v[k](y[0], y[1], dx=dx, dy=dy, grid=False))])

    def velocity(self, y, t):
        y = np.asarray(y, dtype=float)
        self._check(y, t)
        k, th = self._bracket(t)
        return (1.0 - th) * self._space(k, y) + th * self._space(k + 1, y)

    def eval(self, y, t) -> FlowSample:
        y = np.asarray(y, dtype=float)
        self._check(y, t)
        k, th = self._bracket(t)
        u_a, u_b = self._space(k, y), self._space(k + 1, y)
        gx = (1.0 - th) * self._space(k, y, dx=1) + th * self._space(k + 1, y, dx=1)
        gy = (1.0 - th) * self._space(k, y, dy=1) + th * self._space(k + 1, y, dy=1)
        u = (1.0 - th) * u_a + th * u_b
        grad = np.column_stack([gx, gy])
        du_dt = (u_b - u_a) / self.grid.dt
        return FlowSample(u=u, grad_u=grad, mat_deriv=du_dt + grad @ u)

    def to_dict(self):
        return {"name": self.name, "path": None if self.path is None else str(self.path)}


def eval_gridded(g, y, t) -> FlowSample:
    """Evaluate a gridded field; accepts a GridSeries or a prebuilt GriddedField."""
    fld = g if isinstance(g, GriddedField) else GriddedField(g)
    return fld.eval(y, t)
