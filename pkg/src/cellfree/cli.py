# Command line front end: generate realizations, cluster APs, solve single
# drops end to end, sweep scenario axes, and emit the two-AP example table.
# Errors are machine readable on stderr; exit 2 flags a bad config, exit 3 a
# numerical failure.

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .clustering import clusters_for_mode
from .config import (
    ROLE_EXAMPLE,
    ROLE_SOLVER_INIT,
    ConfigError,
    Mode,
    Precoding,
    load_scenario,
    substream,
)
from .experiments import SWEEP_AXES, build_allocation, run_scenario, sweep, sweep_csv
from .geometry import PlacementError, generate_realization
from .rates import StreamAllocation, sum_rate
from .two_ap import NormMode, ConvergenceError, figure1_sweep
from .wmmse import SolverDivergence, mr_precoder, wmmse_solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _fail(code, kind, message, **context):
    doc = {"error": kind, "message": message}
    doc.update(context)
    print(json.dumps(doc), file=sys.stderr)
    return code


def _write(text, out_path):
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _apply_overrides(config, args):
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        updates["trials"] = args.trials
    if getattr(args, "mode", None) is not None:
        updates["mode"] = Mode(args.mode)
    if getattr(args, "ref_distance", None) is not None:
        updates["ref_distance"] = args.ref_distance
    if updates:
        config = dataclasses.replace(config, **updates)
    return config.validate()


def _load(args):
    return _apply_overrides(load_scenario(args.config), args)


def _cmd_generate(args):
    config = _load(args)
    realization = generate_realization(config, trial=0)
    _write(realization.to_json() + "\n", args.out)
    return EXIT_OK


def _cmd_cluster(args):
    config = _load(args)
    realization = generate_realization(config, trial=0)
    clusters = clusters_for_mode(config, realization)
    doc = json.loads(clusters.to_json())
    doc["max_pairwise_distance_m"] = clusters.max_pairwise_distance(
        realization.ap_positions, realization.area_side
    )
    _write(json.dumps(doc, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def _cmd_solve(args):
    config = _load(args)
    realization = generate_realization(config, trial=0)
    clusters = clusters_for_mode(config, realization)
    if args.allocation_file:
        with open(args.allocation_file) as fh:
            alloc = StreamAllocation.from_json(fh.read())
        alloc = StreamAllocation.validated(alloc.d, clusters, config.M, config.N)
    else:
        alloc = build_allocation(config, realization, clusters, trial=0)
        alloc = StreamAllocation.validated(alloc.d, clusters, config.M, config.N)
    if config.precoding == Precoding.MR:
        state = mr_precoder(realization, clusters, alloc)
        report = sum_rate(realization, clusters, alloc, state)
    else:
        rng = substream(config.seed, 0, ROLE_SOLVER_INIT)
        _, report = wmmse_solve(realization, clusters, alloc, config.solver, rng)
    if args.format == "csv":
        lines = ["trial,k,c,rate"]
        for trial, k, c, rate in report.stream_csv_rows(trial=0):
            lines.append(f"{trial},{k},{c},{rate:.9g}")
        _write("\n".join(lines) + "\n", args.out)
    else:
        doc = json.loads(report.to_json())
        doc["clusters"] = [list(c) for c in clusters.clusters]
        doc["allocation"] = alloc.d.tolist()
        _write(json.dumps(doc, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def _cmd_sweep(args):
    config = _load(args)
    axis, values = args.axis, args.values
    if axis is None or values is None:
        with open(args.config) as fh:
            doc = json.load(fh)
        block = doc.get("sweep", {})
        axis = axis or block.get("axis")
        values = values or block.get("values")
    if axis not in SWEEP_AXES:
        raise ConfigError("sweep.axis", f"must be one of {SWEEP_AXES}")
    if not values:
        raise ConfigError("sweep.values", "missing sweep values")
    values = [float(v) for v in values]
    rows = sweep(config, axis, values)
    _write(sweep_csv(rows), args.out)
    return EXIT_OK


def _cmd_example(args):
    rng = substream(args.seed or 0, 0, ROLE_EXAMPLE)
    rho_grid = args.rho_db or [-40, -35, -30, -25, -20, -15, -10]
    rows = figure1_sweep(
        rho_grid_db=rho_grid,
        norm_mode=NormMode(args.norm_mode),
        trials=args.trials or 100,
        rng=rng,
    )
    lines = ["rho_db,strategy,rate"]
    for rho_db, strategy, rate in rows:
        lines.append(f"{rho_db:.9g},{strategy},{rate:.9g}")
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _cmd_run(args):
    config = _load(args)
    result = run_scenario(config)
    _write(result.to_json() + "\n", args.out)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="cellfree")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="scenario JSON path")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output path (stdout when omitted)")

    p = sub.add_parser("generate", help="emit one network realization as JSON")
    common(p)

    p = sub.add_parser("cluster", help="emit the AP partition as JSON")
    common(p)
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--ref-distance", dest="ref_distance", type=float)

    p = sub.add_parser("solve", help="solve one realization end to end")
    common(p)
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--ref-distance", dest="ref_distance", type=float)
    p.add_argument("--allocation-file", help="pin the stream allocation from JSON")
    p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("run", help="run all trials of a scenario")
    common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--mode", choices=[m.value for m in Mode])

    p = sub.add_parser("sweep", help="sweep one scenario axis to CSV")
    common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--axis", choices=list(SWEEP_AXES))
    p.add_argument("--values", type=lambda s: [float(v) for v in s.split(",")])

    p = sub.add_parser("example", help="two-AP example rate table as CSV")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--trials", type=int)
    p.add_argument("--norm-mode", dest="norm_mode", default="IID",
                   choices=[m.value for m in NormMode])
    p.add_argument("--rho-db", dest="rho_db", type=lambda s: [float(v) for v in s.split(",")])

    return parser


_HANDLERS = {
    "generate": _cmd_generate,
    "cluster": _cmd_cluster,
    "solve": _cmd_solve,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "example": _cmd_example,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc.message, field=exc.field_name)
    except FileNotFoundError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except (SolverDivergence, ConvergenceError, PlacementError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", str(exc), exception=type(exc).__name__)


if __name__ == "__main__":
    sys.exit(main())
