"""Command-line interface: ``mre run|reference|convergence|work-precision|grid-convert``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .bench import BenchmarkConfig, parse_scheme
from .discretization import build_system
from .errors import ConfigError, MREError
from .gridded import csv_to_grid_series, write_grid_series
from .reference import reference_trajectory
from .serialize import dump_operator, write_json, write_trajectory

log = logging.getLogger("mre")


def _load(args) -> BenchmarkConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    try:
        data = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{args.config}: top level must be an object")
    # single-run shorthand
    if "scheme" in data:
        data["schemes"] = [data.pop("scheme")]
    if "N" in data:
        data["ladder"] = [data.pop("N")]
    if args.seed is not None:
        data["seed"] = args.seed
    return BenchmarkConfig.from_dict(data)


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    fld, params = cfg.flow(), cfg.mre_params()
    dumped = False
    for scheme in cfg.schemes:
        spec = parse_scheme(scheme)
        for N in cfg.ladder:
            if args.dump_operator and not dumped and spec.kind == "fd":
                sys_ = build_system(fld, params, N, spec.order, cfg.c)
                dump_operator(sys_, args.dump_operator)
                log.info("operator (%s, N=%d) written to %s", spec.name, N, args.dump_operator)
                dumped = True
            traj = bench.run_scheme(cfg, scheme, N, fld, params)
            path = out / f"trajectory_{spec.name.replace('+', '_')}_N{N}.csv"
            write_trajectory(traj, path, {"params": params.to_dict(), "field": cfg.field,
                                          "seed": cfg.seed})
            print(f"{path}  final position {np.array2string(traj.final_position, precision=10)}"
                  f"  wall {traj.wall_time:.4f}s")
    if args.dump_operator and not dumped:
        raise ConfigError("--dump-operator needs at least one finite-difference scheme")
    return 0


def cmd_reference(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    fld, params = cfg.flow(), cfg.mre_params()
    opts = dict(cfg.reference)
    ref = reference_trajectory(fld, params, cfg.y0, cfg.slip(fld), cfg.t_span,
                               finest_N=max(cfg.ladder), refine=opts.get("refine", 4),
                               order=opts.get("order", 4), scheme=opts.get("scheme", "imex4"),
                               c=opts.get("c", cfg.c))
    path = write_trajectory(ref, out / "reference.csv",
                            {"reference": True, "params": params.to_dict(), "field": cfg.field})
    print(f"{path}  self-convergence {ref.meta['self_convergence']:.3e}")
    return 0


def cmd_convergence(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    report = bench.run_convergence(cfg, log=log.info)
    path = bench.write_convergence(report, out)
    for scheme in cfg.schemes:
        order = report.order(scheme)
        shown = "unstable" if report.unstable(scheme) else f"{order:.2f}"
        print(f"{scheme:18s} order {shown}")
    print(f"written {path}")
    return 0


def cmd_work_precision(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    rows = bench.run_work_precision(cfg, log=log.info)
    path = bench.write_work_precision(rows, out, {"config": cfg.to_dict(),
                                                  "timing": "min over repeats, stepping loop only"})
    for scheme, N, dt, wall, err in rows:
        print(f"{scheme:18s} N={N:<6d} wall {wall:.4f}s error {err:.3e}")
    print(f"written {path}")
    return 0


def cmd_grid_convert(args) -> int:
    grid = csv_to_grid_series(args.input)
    write_grid_series(grid, args.output)
    write_json({"source": str(args.input), "nx": grid.nx, "ny": grid.ny, "nt": grid.nt},
               Path(args.output).with_suffix(".json"))
    print(f"{args.output}: nx={grid.nx} ny={grid.ny} nt={grid.nt}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="benchmark configuration (JSON)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="seed recorded in metadata (u64)")
    common.add_argument("-v", "--verbose", action="store_true", help="progress logging")

    parser = argparse.ArgumentParser(prog="mre", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="integrate and write trajectories")
    p.add_argument("--dump-operator", metavar="PATH",
                   help="write the first finite-difference operator in Matrix Market format")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("reference", parents=[common], help="high-resolution reference trajectory")
    p.set_defaults(func=cmd_reference)
    p = sub.add_parser("convergence", parents=[common], help="convergence-order study")
    p.set_defaults(func=cmd_convergence)
    p = sub.add_parser("work-precision", parents=[common], help="runtime against error")
    p.set_defaults(func=cmd_work_precision)
    p = sub.add_parser("grid-convert", parents=[common],
                       help="convert a CSV snapshot stack (t,x,y,u,v) to the binary grid format")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_grid_convert)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        parser.error("--seed must be an unsigned 64-bit integer")
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"mre: error: {exc}", file=sys.stderr)
        return 2
    except MREError as exc:
        print(f"mre: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
