"""Trajectory CSV/JSON files and operator dumps."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import FormatError
from .integrators import Trajectory

TRAJECTORY_COLUMNS = ("t", "y1", "y2", "q1", "q2")


def _fmt(x) -> str:
    return f"{x:.17g}"


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_trajectory(traj: Trajectory, path, extra_meta=None) -> Path:
    """Write ``t,y1,y2,q1,q2`` rows (17 significant digits) plus a JSON sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for t, y, q in zip(traj.times, traj.positions, traj.rel_velocity):
            w.writerow([_fmt(t), _fmt(y[0]), _fmt(y[1]), _fmt(q[0]), _fmt(q[1])])
    meta = dict(traj.meta)
    meta["wall_time"] = traj.wall_time
    meta.update(extra_meta or {})
    write_json(meta, sidecar_path(path))
    return path


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRAJECTORY_COLUMNS:
        raise FormatError(f"{path}: expected header {','.join(TRAJECTORY_COLUMNS)}", 0)
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, 5)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed trajectory row ({exc})", None) from exc
    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    return Trajectory(data[:, 0], data[:, 1:3], data[:, 3:5], float(meta.get("wall_time", 0.0)),
                      meta)


def dump_operator(sys, path) -> Path:
    """Write the full linear operator of a semi-discrete system in Matrix Market format."""
    A = sys.matrix
    if not sp.issparse(A):
        A = np.asarray(A)
    path = Path(path)
    with path.open("wb") as fh:
        scipy.io.mmwrite(fh, A, comment="semi-discrete operator A (state: q interleaved, y)",
                         precision=17)
    return path
