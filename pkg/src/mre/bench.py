"""Error metrics, convergence-order studies and work-precision measurements."""

from __future__ import annotations

import contextlib
import csv
import gc
import io
import json
import math
from dataclasses import asdict, dataclass
from dataclasses import field as dc_field
from pathlib import Path

import numpy as np

from .daitche import integrate_direct
from .discretization import DEFAULT_C, build_system
from .errors import ConfigError, InstabilityError, IntegrationAborted, MetricError
from .fields import OscillatoryField, QuiescentField, field_from_config
from .integrators import (StepperConfig, Trajectory, initial_state_from_slip, integrate)
from .params import MreParams, params_from_config
from .reference import (check_reference, oscillatory_solution, quiescent_solution,
                        reference_trajectory)

NORM_FLOOR = 1e-14
METRICS = ("auto", "max_rel", "final_rel")
DEFAULT_LADDER = (32, 64, 128, 256, 512)
CONVERGENCE_COLUMNS = ("scheme", "N", "dt", "error", "order_fit", "unstable")
WORKPREC_COLUMNS = ("scheme", "N", "dt", "wall_time_s", "error")

_STEPPER_ALIASES = {"trap": "trapezoidal", "trapezoidal": "trapezoidal", "imex2": "imex2",
                    "imex4": "imex4", "dirk4": "dirk4"}


# --- metrics ----------------------------------------------------------------

def _exact_positions(traj: Trajectory, exact) -> np.ndarray:
    if isinstance(exact, Trajectory):
        if len(exact.times) != len(traj.times) or not np.allclose(exact.times, traj.times,
                                                                 rtol=0, atol=1e-12):
            raise MetricError("exact trajectory is sampled on a different time grid")
        return np.asarray(exact.positions)
    if callable(exact):
        return np.array([exact(t) for t in traj.times], dtype=float)
    arr = np.asarray(exact, dtype=float)
    if arr.shape != np.shape(traj.positions):
        raise MetricError(f"exact positions have shape {arr.shape}, expected "
                          f"{np.shape(traj.positions)}")
    return arr


def error_max_rel_l2(traj: Trajectory, exact) -> float:
    """Maximum over time levels of ``|y_k - y*_k| / |y*_k|``.

    ``exact`` is a trajectory on the same time grid, a callable ``t -> y*(t)``
    or an array of positions. Levels with ``|y*_k| < 1e-14`` are skipped.
    """
    ref = _exact_positions(traj, exact)
    norms = np.linalg.norm(ref, axis=1)
    keep = norms >= NORM_FLOOR
    if not keep.any():
        raise MetricError("every reference position has norm below 1e-14; relative error undefined")
    diff = np.linalg.norm(np.asarray(traj.positions)[keep] - ref[keep], axis=1)
    return float(np.max(diff / norms[keep]))


def final_error(traj: Trajectory, ref) -> tuple:
    """``(error, absolute)``: relative final-time error, or the absolute one
    (``absolute=True``) when the reference position is below 1e-14."""
    if isinstance(ref, Trajectory):
        if not math.isclose(ref.times[-1], traj.times[-1], rel_tol=0, abs_tol=1e-12):
            raise MetricError(f"final times differ: {traj.times[-1]} vs {ref.times[-1]}")
        y_ref = np.asarray(ref.final_position)
    elif callable(ref):
        y_ref = np.asarray(ref(traj.times[-1]), dtype=float)
    else:
        y_ref = np.asarray(ref, dtype=float)
    diff = float(np.linalg.norm(traj.final_position - y_ref))
    norm = float(np.linalg.norm(y_ref))
    if norm < NORM_FLOOR:
        return diff, True
    return diff / norm, False


def error_final_rel_l2(traj: Trajectory, ref) -> float:
    """Relative final-time error; see :func:`final_error` for the fallback."""
    return final_error(traj, ref)[0]


def fit_order(Ns, errors) -> float:
    """Negated least-squares slope of ``log(error)`` against ``log(N)``."""
    Ns = np.asarray(Ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if Ns.size < 2 or Ns.size != errors.size:
        raise MetricError("order fit needs at least two (N, error) pairs")
    if np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        raise MetricError("order fit needs positive finite errors")
    slope = np.polyfit(np.log(Ns), np.log(errors), 1)[0]
    return float(-slope)


# --- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class SchemeSpec:
    name: str
    kind: str          # "fd" or "daitche"
    order: int
    stepper: str | None = None


def parse_scheme(name: str) -> SchemeSpec:
    """``fd2+imex2``, ``fd4+dirk4``, ``fd2+trap`` ... or ``daitche1..3``."""
    key = name.strip().lower()
    if key.startswith("daitche"):
        try:
            order = int(key[len("daitche"):])
        except ValueError:
            order = -1
        if order not in (1, 2, 3):
            raise ConfigError(f"unknown scheme {name!r}")
        return SchemeSpec(f"daitche{order}", "daitche", order)
    space, _, stepper = key.partition("+")
    if space not in ("fd2", "fd4") or stepper not in _STEPPER_ALIASES:
        raise ConfigError(f"unknown scheme {name!r}; expected fd2|fd4 + one of "
                          f"{sorted(set(_STEPPER_ALIASES.values()))}, or daitche1-3")
    stepper = _STEPPER_ALIASES[stepper]
    return SchemeSpec(f"{space}+{stepper}", "fd", int(space[2]), stepper)


def _vec2(value, label):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (2,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{label} must be two finite numbers, got {value!r}")
    return tuple(float(x) for x in arr)


@dataclass(frozen=True)
class BenchmarkConfig:
    """One benchmark: a particle setup, schemes and a resolution ladder.

    Each ladder entry ``N`` means ``N`` nodes in space and ``N`` steps of
    ``dt = (T - t0) / N``. Exactly one of ``v0`` (absolute velocity) and
    ``q0`` (relative velocity) is used; ``q0 = (0, 0)`` if neither is given.
    """

    field: object = "bickley"
    params: dict = dc_field(default_factory=lambda: {"R": 4.0 / 3.0, "S": 0.1})
    y0: tuple = (0.0, 0.0)
    v0: tuple | None = None
    q0: tuple | None = None
    t_span: tuple = (0.0, 1.0)
    schemes: tuple = ("fd2+imex2",)
    ladder: tuple = DEFAULT_LADDER
    metric: str = "auto"
    c: float = DEFAULT_C
    reference: dict = dc_field(default_factory=dict)
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    linear_tol: float = 1e-12
    repeats: int = 3
    out: str | None = None
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "y0", _vec2(self.y0, "y0"))
        if self.v0 is not None and self.q0 is not None:
            raise ConfigError("give either v0 or q0, not both")
        if self.v0 is not None:
            object.__setattr__(self, "v0", _vec2(self.v0, "v0"))
        if self.q0 is not None:
            object.__setattr__(self, "q0", _vec2(self.q0, "q0"))
        t0, T = (float(x) for x in self.t_span)
        if not T >= t0:
            raise ConfigError(f"t_span must satisfy T >= t0, got {self.t_span!r}")
        object.__setattr__(self, "t_span", (t0, T))
        schemes = (self.schemes,) if isinstance(self.schemes, str) else tuple(self.schemes)
        if not schemes:
            raise ConfigError("at least one scheme is required")
        object.__setattr__(self, "schemes", tuple(parse_scheme(s).name for s in schemes))
        ladder = tuple(int(n) for n in self.ladder)
        if not ladder or any(n < 1 for n in ladder):
            raise ConfigError("ladder entries must be positive integers")
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ConfigError(f"resolution ladder must be strictly increasing, got {ladder}")
        object.__setattr__(self, "ladder", ladder)
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        params_from_config(self.params)
        StepperConfig("imex2", 1.0, self.newton_tol, self.newton_max_iter, self.linear_tol)
        unknown = set(self.reference) - {"refine", "order", "scheme", "gate", "c"}
        if unknown:
            raise ConfigError(f"unknown reference option(s): {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "BenchmarkConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    # derived objects
    def mre_params(self) -> MreParams:
        return params_from_config(self.params)

    def flow(self):
        return field_from_config(self.field)

    def slip(self, fld=None) -> np.ndarray:
        """Initial relative velocity ``q0``."""
        if self.v0 is not None:
            fld = fld if fld is not None else self.flow()
            return np.asarray(self.v0) - fld.velocity(np.asarray(self.y0), self.t_span[0])
        return np.asarray(self.q0 if self.q0 is not None else (0.0, 0.0), dtype=float)

    def dt_for(self, N: int) -> float:
        t0, T = self.t_span
        return (T - t0) / N if T > t0 else 1.0 / N

    def stepper(self, stepper: str, N: int) -> StepperConfig:
        return StepperConfig(stepper, self.dt_for(N), self.newton_tol, self.newton_max_iter,
                             self.linear_tol)


# --- runs -------------------------------------------------------------------------

def run_scheme(cfg: BenchmarkConfig, scheme: str, N: int, fld=None, params=None) -> Trajectory:
    """One run of ``scheme`` at ladder entry ``N``.

    Raises :class:`InstabilityError` (direct scheme) or
    :class:`IntegrationAborted` (finite-difference schemes) on failure.
    """
    spec = parse_scheme(scheme)
    fld = fld if fld is not None else cfg.flow()
    params = params if params is not None else cfg.mre_params()
    q0 = cfg.slip(fld)
    t0, T = cfg.t_span
    dt = cfg.dt_for(N)
    n_steps = int(round((T - t0) / dt))
    meta = {"N": N, "scheme_name": spec.name}
    if spec.kind == "daitche":
        v0 = q0 + fld.velocity(np.asarray(cfg.y0), t0)
        return integrate_direct(fld, params, cfg.y0, v0, dt, n_steps, spec.order, t0=t0,
                                meta=meta)
    sys = build_system(fld, params, N, spec.order, cfg.c)
    eta0 = initial_state_from_slip(cfg.y0, q0, sys.op.grid)
    meta.update({"c": cfg.c, "order": spec.order})
    return integrate(sys, eta0, (t0, t0 + n_steps * dt), cfg.stepper(spec.stepper, N), meta=meta)


def closed_form(cfg: BenchmarkConfig, fld=None, params=None):
    """``t -> y*(t)`` for the quiescent and oscillatory benchmarks, else ``None``."""
    fld = fld if fld is not None else cfg.flow()
    params = params if params is not None else cfg.mre_params()
    q0 = cfg.slip(fld)
    t0 = cfg.t_span[0]
    y0 = np.asarray(cfg.y0)
    if isinstance(fld, QuiescentField):
        return lambda t: quiescent_solution(t - t0, params, y0, q0)
    if isinstance(fld, OscillatoryField) and t0 == 0.0:
        return lambda t: oscillatory_solution(t, params, y0, q0, fld.u1, fld.lam)
    return None


@dataclass
class ConvergenceRow:
    scheme: str
    N: int
    dt: float
    error: float | None
    unstable: bool = False


@dataclass
class ConvergenceReport:
    rows: list
    orders: dict
    meta: dict = dc_field(default_factory=dict, compare=False)

    def errors(self, scheme: str):
        pairs = [(r.N, r.error) for r in self.rows if r.scheme == scheme and r.error is not None]
        return [p[0] for p in pairs], [p[1] for p in pairs]

    def unstable(self, scheme: str) -> bool:
        return any(r.unstable for r in self.rows if r.scheme == scheme)

    def order(self, scheme: str):
        return self.orders.get(scheme)


def emit_report(report: ConvergenceReport) -> str:
    """CSV text with columns ``scheme,N,dt,error,order_fit,unstable``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONVERGENCE_COLUMNS)
    for r in report.rows:
        order = report.orders.get(r.scheme)
        err = "" if r.error is None else repr(float(r.error))
        w.writerow([r.scheme, r.N, repr(float(r.dt)), err,
                    "" if order is None else repr(float(order)), str(bool(r.unstable)).lower()])
    return buf.getvalue()


def parse_report(text: str) -> ConvergenceReport:
    rows, orders = [], {}
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CONVERGENCE_COLUMNS:
        raise ConfigError(f"convergence table must start with {','.join(CONVERGENCE_COLUMNS)}")
    for rec in reader:
        if not rec:
            continue
        scheme, N, dt, error, order, unstable = rec
        rows.append(ConvergenceRow(scheme, int(N), float(dt), None if error == "" else float(error),
                                   unstable == "true"))
        if scheme not in orders:
            orders[scheme] = None if order == "" else float(order)
    return ConvergenceReport(rows, orders)


def _fit_or_none(Ns, errs):
    try:
        return fit_order(Ns, errs)
    except MetricError:
        return None


def run_convergence(cfg: BenchmarkConfig, reference=None, log=None) -> ConvergenceReport:
    """Run every scheme over the ladder and fit convergence orders.

    The error is measured against the closed form when one exists, otherwise
    against :func:`~mre.reference.reference_trajectory` (or ``reference``,
    a precomputed trajectory). The reference must pass the self-convergence
    gate against the smallest coarsest-resolution error of all schemes.
    Schemes that fail with an instability are flagged and get no order.
    """
    fld, params = cfg.flow(), cfg.mre_params()
    exact = closed_form(cfg, fld, params)
    metric = cfg.metric
    if metric == "auto":
        metric = "max_rel" if exact is not None else "final_rel"
    meta = {"config": cfg.to_dict(), "metric": metric, "params": params.to_dict()}
    if exact is None and reference is None:
        opts = dict(cfg.reference)
        reference = reference_trajectory(
            fld, params, cfg.y0, cfg.slip(fld), cfg.t_span, finest_N=max(cfg.ladder),
            refine=opts.get("refine", 4), order=opts.get("order", 4),
            scheme=opts.get("scheme", "imex4"), c=opts.get("c", cfg.c))
    target = exact if exact is not None else reference
    if reference is not None:
        meta["reference"] = dict(reference.meta)

    rows, orders, absolute = [], {}, []
    for scheme in cfg.schemes:
        errs, failed = [], None
        for N in cfg.ladder:
            try:
                traj = run_scheme(cfg, scheme, N, fld, params)
            except (InstabilityError, IntegrationAborted) as exc:
                failed = str(exc)
                break
            if metric == "max_rel":
                err = error_max_rel_l2(traj, target)
            else:
                err, is_abs = final_error(traj, target)
                if is_abs:
                    absolute.append([scheme, N])
            errs.append(err)
            rows.append(ConvergenceRow(scheme, N, cfg.dt_for(N), err))
            if log:
                log(f"{scheme} N={N} error={err:.3e}")
        if failed is not None:
            for N in cfg.ladder[len(errs):]:
                rows.append(ConvergenceRow(scheme, N, cfg.dt_for(N), None, True))
            for r in rows:
                if r.scheme == scheme:
                    r.unstable = True
            orders[scheme] = None
            meta.setdefault("failures", {})[scheme] = failed
            if log:
                log(f"{scheme} unstable: {failed}")
        else:
            orders[scheme] = _fit_or_none(cfg.ladder, errs)
    meta["absolute_fallback"] = absolute
    if exact is None:
        coarsest = [r.error for r in rows if r.N == cfg.ladder[0] and not r.unstable
                    and r.error is not None and r.error > 0]
        if coarsest:
            gate = cfg.reference.get("gate", 0.01)
            meta["reference_gate"] = {"gate": gate, "coarsest_error": min(coarsest)}
            check_reference(reference, min(coarsest), gate)
    return ConvergenceReport(rows, orders, meta)


@contextlib.contextmanager
def _gc_paused():
    # as in timeit: collector pauses would swamp the shortest runs
    enabled = gc.isenabled()
    gc.collect()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


def run_work_precision(cfg: BenchmarkConfig, reference=None, log=None) -> list:
    """Rows ``(scheme, N, dt, wall_time_s, error)``.

    The wall time is the minimum over ``cfg.repeats`` runs of the stepping loop
    alone. Unstable runs are skipped.
    """
    fld, params = cfg.flow(), cfg.mre_params()
    exact = closed_form(cfg, fld, params)
    metric = cfg.metric
    if metric == "auto":
        metric = "max_rel" if exact is not None else "final_rel"
    if exact is None and reference is None:
        opts = dict(cfg.reference)
        reference = reference_trajectory(
            fld, params, cfg.y0, cfg.slip(fld), cfg.t_span, finest_N=max(cfg.ladder),
            refine=opts.get("refine", 4), order=opts.get("order", 4),
            scheme=opts.get("scheme", "imex4"), c=opts.get("c", cfg.c))
    target = exact if exact is not None else reference
    out = []
    for scheme in cfg.schemes:
        for N in cfg.ladder:
            try:
                with _gc_paused():
                    runs = [run_scheme(cfg, scheme, N, fld, params) for _ in range(cfg.repeats)]
            except (InstabilityError, IntegrationAborted) as exc:
                if log:
                    log(f"{scheme} N={N} skipped: {exc}")
                continue
            traj = runs[0]
            if metric == "max_rel":
                try:
                    err = error_max_rel_l2(traj, target)
                except MetricError:
                    err = final_error(traj, target)[0]
            else:
                err = final_error(traj, target)[0]
            wall = min(r.wall_time for r in runs)
            out.append((scheme, N, cfg.dt_for(N), wall, err))
            if log:
                log(f"{scheme} N={N} wall={wall:.4f}s error={err:.3e}")
    return out


def write_convergence(report: ConvergenceReport, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "convergence.csv"
    path.write_text(emit_report(report))
    from .serialize import write_json
    write_json(report.meta | {"orders": report.orders}, out_dir / "convergence.json")
    return path


def write_work_precision(rows, out_dir, meta=None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "workprec.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WORKPREC_COLUMNS)
        for scheme, N, dt, wall, err in rows:
            w.writerow([scheme, N, repr(float(dt)), repr(float(wall)), repr(float(err))])
    from .serialize import write_json
    write_json(meta or {}, out_dir / "workprec.json")
    return path


def read_work_precision(path) -> list:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != WORKPREC_COLUMNS:
            raise ConfigError(f"work-precision table must start with {','.join(WORKPREC_COLUMNS)}")
        return [(s, int(N), float(dt), float(w), float(e)) for s, N, dt, w, e in reader]
