import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mre.bench import (BenchmarkConfig, ConvergenceReport, ConvergenceRow, closed_form,
                       emit_report, error_final_rel_l2, error_max_rel_l2, final_error, fit_order,
                       parse_report, parse_scheme, read_work_precision, run_convergence,
                       run_scheme, run_work_precision, write_convergence, write_work_precision)
from mre.errors import ConfigError, DomainError, MetricError
from mre.integrators import Trajectory


def traj_of(positions, times=None):
    positions = np.asarray(positions, dtype=float)
    times = np.arange(len(positions), dtype=float) if times is None else times
    return Trajectory(times, positions, np.zeros_like(positions))


def test_max_rel_identical_is_zero(rng):
    y = rng.normal(size=(7, 2))
    assert error_max_rel_l2(traj_of(y), y) == 0.0
    assert error_max_rel_l2(traj_of(y), traj_of(y)) == 0.0


def test_max_rel_constant_offset():
    th = np.linspace(0, 3, 9)
    exact = np.column_stack([np.cos(th), np.sin(th)])
    delta = np.array([3e-3, -4e-3])
    assert error_max_rel_l2(traj_of(exact + delta), exact) == pytest.approx(5e-3, rel=1e-12)


def test_max_rel_skips_zero_reference():
    exact = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    got = exact + np.array([[1.0, 1.0], [0.1, 0.0], [0.0, 0.0]])
    assert error_max_rel_l2(traj_of(got), exact) == pytest.approx(0.1)
    with pytest.raises(MetricError):
        error_max_rel_l2(traj_of(np.ones((3, 2))), np.zeros((3, 2)))


def test_max_rel_callable_and_grid_mismatch():
    t = np.linspace(0, 1, 5)
    y = np.column_stack([1 + t, t])
    assert error_max_rel_l2(traj_of(y, t), lambda s: np.array([1 + s, s])) == 0.0
    with pytest.raises(MetricError):
        error_max_rel_l2(traj_of(y, t), traj_of(y, t * 2))


def test_final_rel():
    ref = np.array([[0.0, 0.0], [0.6, 0.8]])
    assert error_final_rel_l2(traj_of(ref), traj_of(ref)) == 0.0
    assert error_final_rel_l2(traj_of(ref * (1 + 1e-3)), traj_of(ref)) == pytest.approx(1e-3)
    err, absolute = final_error(traj_of([[0, 0], [3e-3, 4e-3]]), np.zeros(2))
    assert absolute and err == pytest.approx(5e-3)
    with pytest.raises(MetricError):
        error_final_rel_l2(traj_of(ref), traj_of(ref, np.array([0.0, 2.0])))


def test_fit_order_synthetic_pair():
    assert fit_order([64, 128], [1e-2, 2.5e-3]) == pytest.approx(2.0, abs=1e-12)


@given(st.floats(0.1, 6.0), st.floats(1e-6, 1e3), st.integers(2, 7))
@settings(max_examples=60, deadline=None)
def test_fit_order_exact_power_law(p, C, k):
    Ns = 16 * 2 ** np.arange(k)
    assert fit_order(Ns, C * Ns ** (-p)) == pytest.approx(p, abs=1e-12)


def test_fit_order_rejects():
    with pytest.raises(MetricError):
        fit_order([8], [1.0])
    with pytest.raises(MetricError):
        fit_order([8, 16], [1.0, 0.0])


def test_parse_scheme():
    assert parse_scheme("FD2+Trap").name == "fd2+trapezoidal"
    s = parse_scheme("fd4+imex4")
    assert (s.kind, s.order, s.stepper) == ("fd", 4, "imex4")
    d = parse_scheme("daitche3")
    assert (d.kind, d.order) == ("daitche", 3)
    for bad in ("fd3+imex2", "fd2", "daitche4", "rk4", "fd2+euler"):
        with pytest.raises(ConfigError):
            parse_scheme(bad)


def test_config_validation():
    cfg = BenchmarkConfig()
    assert cfg.ladder == (32, 64, 128, 256, 512)
    assert cfg.dt_for(32) == pytest.approx(1 / 32)
    bad = [dict(ladder=(64, 32)), dict(ladder=(32, 32)), dict(schemes=()),
           dict(metric="l1"), dict(v0=(0, 0), q0=(0, 0)), dict(t_span=(1.0, 0.0)),
           dict(y0=(0.0,)), dict(params={"R": 1.0}), dict(repeats=0),
           dict(reference={"bogus": 1}), dict(newton_tol=-1.0)]
    for kw in bad:
        with pytest.raises(ConfigError):
            BenchmarkConfig(**kw)
    with pytest.raises(DomainError):
        BenchmarkConfig(params={"R": 0.2, "S": 0.1})
    with pytest.raises(ConfigError, match="unknown config"):
        BenchmarkConfig.from_dict({"ladders": [1]})


def test_config_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"field": "quiescent", "params": {"R": "7/9", "S": 0.3}, "ladder": [8, 16]}')
    cfg = BenchmarkConfig.from_json(p)
    assert cfg.mre_params().R == pytest.approx(7 / 9)
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        BenchmarkConfig.from_json(p)
    p.write_text("{nope")
    with pytest.raises(ConfigError):
        BenchmarkConfig.from_json(p)


def test_slip_from_v0():
    cfg = BenchmarkConfig(field={"name": "vortex"}, y0=(1.0, 0.0), v0=(0.0, 1.5))
    np.testing.assert_allclose(cfg.slip(), [0.0, 0.5])
    assert np.all(BenchmarkConfig().slip() == 0.0)


def sample_report():
    rows = [ConvergenceRow("fd2+imex2", 32, 1 / 32, 1.25e-3),
            ConvergenceRow("fd2+imex2", 64, 1 / 64, 3.1e-4),
            ConvergenceRow("daitche3", 32, 1 / 32, None, True),
            ConvergenceRow("daitche3", 64, 1 / 64, None, True)]
    return ConvergenceReport(rows, {"fd2+imex2": 2.011, "daitche3": None})


def test_report_round_trip():
    rep = sample_report()
    text = emit_report(rep)
    assert text.splitlines()[0] == "scheme,N,dt,error,order_fit,unstable"
    assert parse_report(text) == rep
    with pytest.raises(ConfigError):
        parse_report("a,b\n")


@given(st.lists(st.tuples(st.sampled_from(["fd2+trapezoidal", "fd4+dirk4", "daitche2"]),
                          st.integers(1, 10 ** 6), st.floats(1e-9, 1.0),
                          st.one_of(st.none(), st.floats(1e-300, 1e3)), st.booleans()),
                max_size=12),
       st.dictionaries(st.sampled_from(["fd2+trapezoidal", "fd4+dirk4", "daitche2"]),
                       st.one_of(st.none(), st.floats(-10, 10))))
@settings(max_examples=60, deadline=None)
def test_report_round_trip_property(rows, orders):
    rows = [ConvergenceRow(*r) for r in rows]
    # the table carries one order per scheme present in it
    orders = {r.scheme: orders.get(r.scheme) for r in rows}
    rep = ConvergenceReport(rows, orders)
    assert parse_report(emit_report(rep)) == rep


def test_write_convergence(tmp_path):
    path = write_convergence(sample_report(), tmp_path)
    assert parse_report(path.read_text()) == sample_report()
    assert (tmp_path / "convergence.json").exists()


def test_work_precision_round_trip(tmp_path):
    rows = [("fd2+imex2", 32, 1 / 32, 0.0123, 4.5e-3), ("daitche3", 64, 1 / 64, 0.5, 1e-6)]
    path = write_work_precision(rows, tmp_path, {"note": "x"})
    assert path.read_text().splitlines()[0] == "scheme,N,dt,wall_time_s,error"
    assert read_work_precision(path) == rows


def quiescent_cfg(**kw):
    base = dict(field="quiescent", params={"R": 7 / 9, "S": 0.3}, y0=(0.0, 0.0), q0=(0.1, 0.0),
                t_span=(0.0, 1.0), schemes=("fd2+imex2", "daitche3"), ladder=(16, 32))
    base.update(kw)
    return BenchmarkConfig(**base)


def test_run_convergence_quiescent():
    rep = run_convergence(quiescent_cfg())
    assert rep.meta["metric"] == "max_rel"
    for scheme in ("fd2+imex2", "daitche3"):
        Ns, errs = rep.errors(scheme)
        assert Ns == [16, 32] and errs[1] < errs[0]
        assert not rep.unstable(scheme)
        assert rep.order(scheme) == pytest.approx(fit_order(Ns, errs))


def test_unstable_flag_propagates():
    cfg = BenchmarkConfig(field="bickley", params={"R": 1 / 3, "S": 0.01}, y0=(0.0, 0.0),
                          q0=(0.0, 0.0), t_span=(0.0, 1.0), schemes=("daitche3",), ladder=(32, 64))
    rep = run_convergence(cfg, reference=Trajectory(np.array([0.0, 1.0]), np.ones((2, 2)),
                                                    np.zeros((2, 2))))
    assert rep.unstable("daitche3")
    assert rep.order("daitche3") is None
    assert all(r.error is None and r.unstable for r in rep.rows)
    assert "diverged" in rep.meta["failures"]["daitche3"]
    assert ",true" in emit_report(rep)


def test_closed_form_selection():
    assert closed_form(quiescent_cfg()) is not None
    assert closed_form(BenchmarkConfig(field={"name": "oscillatory"})) is not None
    assert closed_form(BenchmarkConfig(field="bickley")) is None


def test_zero_step_work_precision():
    cfg = quiescent_cfg(t_span=(0.0, 0.0), y0=(0.5, 0.0), ladder=(8,), repeats=1)
    rows = run_work_precision(cfg)
    assert len(rows) == 2
    for scheme, N, dt, wall, err in rows:
        assert wall >= 0.0
        assert err == 0.0


def test_run_scheme_step_count():
    cfg = quiescent_cfg(t_span=(0.5, 1.5))
    for scheme in ("fd4+dirk4", "daitche1"):
        traj = run_scheme(cfg, scheme, 16)
        assert traj.n_steps == 16
        assert traj.times[0] == 0.5 and traj.times[-1] == pytest.approx(1.5)


def test_wall_time_scaling():
    cfg = quiescent_cfg(schemes=("fd2+imex2",), ladder=(1024, 2048), repeats=3)
    rows = run_work_precision(cfg)
    ratio = rows[1][3] / rows[0][3]
    # sanity window only; the work is N steps of O(N) each
    assert 1.5 <= ratio <= 6.0
