import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mre.errors import DomainError, FormatError
from mre.fields import BickleyField, VortexField, eval_field
from mre.gridded import (MAGIC, GriddedField, GridSeries, csv_to_grid_series, dump_grid_series,
                         eval_gridded, load_grid_series, sample_field, write_grid_series)

HEADER = 80


def zero_file(path, nx=4, ny=4, nt=2):
    head = MAGIC + struct.pack("<3Q6d", nx, ny, nt, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0)
    path.write_bytes(head + bytes(16 * nx * ny * nt))
    return path


class Lambda:
    def __init__(self, fn):
        self.fn = fn

    def velocity(self, y, t):
        return np.asarray(self.fn(y[0], y[1], t), dtype=float)


def grid_from(fn, nx=12, ny=10, nt=3, x0=-1.0, y0=-0.5, dx=0.2, dy=0.15, t0=0.0, dt=0.5):
    return sample_field(Lambda(fn), nx, ny, x0, y0, dx, dy, nt, t0, dt)


def test_minimal_zero_file(tmp_path):
    g = load_grid_series(zero_file(tmp_path / "z.bin"))
    assert (g.nx, g.ny, g.nt) == (4, 4, 2)
    assert g.u_data.shape == (2, 4, 4)
    assert not g.u_data.any() and not g.v_data.any()


def test_bad_magic(tmp_path):
    p = zero_file(tmp_path / "z.bin")
    raw = bytearray(p.read_bytes())
    raw[0:8] = b"NOTAGRID"
    p.write_bytes(bytes(raw))
    with pytest.raises(FormatError) as err:
        load_grid_series(p)
    assert err.value.offset == 0


def test_truncated_payload(tmp_path):
    p = zero_file(tmp_path / "z.bin")
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(FormatError) as err:
        load_grid_series(p)
    assert err.value.offset == len(raw) - 8


def test_short_header(tmp_path):
    p = tmp_path / "h.bin"
    p.write_bytes(MAGIC + b"\x00" * 10)
    with pytest.raises(FormatError):
        load_grid_series(p)


def test_non_finite_sample_offset(tmp_path):
    p = zero_file(tmp_path / "z.bin")
    raw = bytearray(p.read_bytes())
    at = HEADER + 8 * 37
    raw[at:at + 8] = struct.pack("<d", float("nan"))
    p.write_bytes(bytes(raw))
    with pytest.raises(FormatError) as err:
        load_grid_series(p)
    assert err.value.offset == at


def test_round_trip_byte_identical(tmp_path, rng):
    g = grid_from(lambda x, y, t: (np.sin(x + t), x * y))
    p = tmp_path / "g.bin"
    write_grid_series(g, p)
    raw = p.read_bytes()
    back = load_grid_series(p)
    assert back == g
    q = tmp_path / "g2.bin"
    write_grid_series(back, q)
    assert q.read_bytes() == raw
    # memory layout: block k holds u then v, index iy*nx + ix
    data = np.frombuffer(raw, "<f8", offset=HEADER)
    k, iy, ix = 1, 3, 5
    assert data[k * 2 * g.nx * g.ny + iy * g.nx + ix] == g.u_data[k, iy, ix]
    assert data[(k * 2 + 1) * g.nx * g.ny + iy * g.nx + ix] == g.v_data[k, iy, ix]
    assert len(dump_grid_series(g)) == HEADER + 16 * g.nx * g.ny * g.nt


def test_series_validation():
    with pytest.raises(DomainError):
        GridSeries(3, 4, 0, 0, 1, 1, 0, 1, 2, np.zeros(24), np.zeros(24))
    with pytest.raises(DomainError):
        GridSeries(4, 4, 0, 0, 1, 1, 0, 1, 1, np.zeros(16), np.zeros(16))
    with pytest.raises(DomainError):
        GridSeries(4, 4, 0, 0, 0.0, 1, 0, 1, 2, np.zeros(32), np.zeros(32))
    with pytest.raises(DomainError):
        GridSeries(4, 4, 0, 0, 1, 1, 0, 1, 2, np.zeros(31), np.zeros(32))


def test_constant_field():
    fld = GriddedField(grid_from(lambda x, y, t: (1.0, 0.0)))
    s = fld.eval([0.13, 0.41], 0.77)
    np.testing.assert_allclose(s.u, [1.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(s.grad_u, 0.0, atol=1e-12)
    np.testing.assert_allclose(s.mat_deriv, 0.0, atol=1e-12)


def test_shear_gradient():
    fld = GriddedField(grid_from(lambda x, y, t: (y, 0.0)))
    for p in ([0.05, 0.02], [-0.33, 0.71], [0.6, 0.3]):
        s = fld.eval(p, 0.3)
        assert s.grad_u[0, 1] == pytest.approx(1.0, abs=1e-12)
        assert s.u[0] == pytest.approx(p[1], abs=1e-12)


_CUBIC = {}


@given(st.floats(-0.95, 1.15), st.floats(-0.45, 0.8), st.floats(0.0, 1.0),
       st.lists(st.floats(-1, 1), min_size=10, max_size=10))
@settings(max_examples=40, deadline=None)
def test_cubic_reproduced(x, y, t, c):
    def poly(x, y):
        return (c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
                + c[6] * x ** 3 + c[7] * x * x * y + c[8] * x * y * y + c[9] * y ** 3)

    fld = _CUBIC.setdefault(tuple(c), GriddedField(grid_from(lambda a, b, s: (poly(a, b),
                                                                              -poly(b, a)))))
    u = fld.velocity([x, y], t)
    np.testing.assert_allclose(u, [poly(x, y), -poly(y, x)], atol=1e-12, rtol=0)


_LINEAR_T = GriddedField(grid_from(lambda x, y, t: (1.0 + 2.0 * t, x - t)))


@given(st.floats(-0.95, 1.15), st.floats(-0.45, 0.8), st.floats(0.0, 1.0))
@settings(max_examples=40, deadline=None)
def test_linear_in_time_exact(x, y, t):
    s = _LINEAR_T.eval([x, y], t)
    np.testing.assert_allclose(s.u, [1.0 + 2.0 * t, x - t], atol=1e-12)
    # du/dt + (u . grad) u with grad = [[0, 0], [1, 0]]
    np.testing.assert_allclose(s.mat_deriv, [2.0, -1.0 + (1.0 + 2.0 * t)], atol=1e-11)


def test_vortex_resampling():
    vort = VortexField()
    g = sample_field(vort, 161, 161, -2.0, -2.0, 0.025, 0.025, 2, 0.0, 1.0)
    fld = GriddedField(g)
    for p in ([0.5, 0.3], [-1.1, 0.7], [1.3, -1.2], [-0.4, -0.9]):
        a, b = fld.eval(p, 0.4), eval_field(vort, np.array(p), 0.4)
        for got, want in ((a.u, b.u), (a.grad_u, b.grad_u), (a.mat_deriv, b.mat_deriv)):
            assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-4
    np.testing.assert_allclose(eval_gridded(g, [0.5, 0.3], 0.4).u, fld.eval([0.5, 0.3], 0.4).u)


def test_bickley_resampling():
    # nonlinear in space, so this exercises the spline error itself
    bick = BickleyField.default()
    g = sample_field(bick, 241, 81, 0.0, -2.0, 0.025, 0.05, 2, 0.0, 1e-3)
    fld = GriddedField(g)
    for p in ([1.3, 0.4], [3.2, -0.8], [4.9, 1.1]):
        a, b = fld.velocity(p, 0.0), bick.velocity(np.array(p), 0.0)
        assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-4


def test_continuity_across_cells():
    fld = GriddedField(grid_from(lambda x, y, t: (np.sin(2 * x) * np.cos(y), np.exp(x * y)),
                                 nt=4))
    g = fld.grid
    xn = g.x0 + 4 * g.dx
    yn = g.y0 + 3 * g.dy
    tn = g.t0 + g.dt
    for a, b in ((([xn - 1e-9, 0.1], 0.3), ([xn + 1e-9, 0.1], 0.3)),
                 (([0.1, yn - 1e-9], 0.3), ([0.1, yn + 1e-9], 0.3)),
                 (([0.1, 0.2], tn - 1e-9), ([0.1, 0.2], tn + 1e-9))):
        ua, ub = fld.velocity(*a), fld.velocity(*b)
        assert np.linalg.norm(ua - ub) < 1e-6 * np.linalg.norm(ua)


def test_out_of_domain():
    fld = GriddedField(grid_from(lambda x, y, t: (x, y)))
    with pytest.raises(DomainError, match="x = 5.0"):
        fld.eval([5.0, 0.0], 0.1)
    with pytest.raises(DomainError, match="y = "):
        fld.eval([0.0, -3.0], 0.1)
    with pytest.raises(DomainError, match="t = "):
        fld.eval([0.0, 0.0], 1.5)


def test_csv_conversion(tmp_path, rng):
    g = grid_from(lambda x, y, t: (x + t, y * y), nx=5, ny=4, nt=2)
    rows = []
    for k in range(g.nt):
        for iy, yy in enumerate(g.ys):
            for ix, xx in enumerate(g.xs):
                rows.append((g.t0 + k * g.dt, xx, yy, g.u_data[k, iy, ix], g.v_data[k, iy, ix]))
    rows = [rows[i] for i in rng.permutation(len(rows))]
    p = tmp_path / "s.csv"
    p.write_text("t,x,y,u,v\n" + "".join(",".join(repr(float(v)) for v in r) + "\n" for r in rows))
    back = csv_to_grid_series(p)
    assert (back.nx, back.ny, back.nt) == (5, 4, 2)
    np.testing.assert_allclose(back.u_data, g.u_data)
    np.testing.assert_allclose(back.v_data, g.v_data)
    assert back.dx == pytest.approx(g.dx) and back.dt == pytest.approx(g.dt)

    p.write_text("t,x,y,u\n0,0,0,0\n")
    with pytest.raises(DomainError, match="lacks"):
        csv_to_grid_series(p)
