"""Command-line interface.

Subcommands: simulate, optimize, verify, oracle, compare, adjoint.
All artifacts land in --out (env var EPICTRL_OUT takes precedence); CSV files
use 17 significant digits. Failures exit nonzero and print a machine-readable
error object to stderr. `verify` exits 0 iff every check passes.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import plots
from .adjoint import adjoint_to_csv, full_adjoint
from .forward import (BangSchedule, GridControl, events_to_json, simulate,
                      trajectory_to_csv)
from .model import (PRESET_NAMES, ShipmentSchedule, load_scenario, preset,
                    validate_assumptions)
from .optimize import (OptimizeOptions, brute_force_switch_grid, compare_costs,
                       fbsm_grid, optimize_switch_times)
from .verify import verify_solution

FMT = "%.17g"


def _add_common(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESET_NAMES, help="built-in scenario")
    src.add_argument("--scenario", metavar="PATH", help="scenario JSON file")
    p.add_argument("--h", type=float, default=0.01, help="RK4 step in days")
    p.add_argument("--epsilon", type=float, default=None,
                   help="override shipment smoothing width (days)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--strict", action="store_true",
                   help="treat model-assumption failures as errors")


def _load(args):
    sc = preset(args.preset) if args.preset else load_scenario(args.scenario)
    if args.epsilon is not None:
        sc = dataclasses.replace(
            sc, shipments=ShipmentSchedule(sc.shipments.week_budgets,
                                           epsilon=args.epsilon))
    report = validate_assumptions(sc)
    if not report.all_passed:
        failed = ", ".join(name for name, _ in report.failed())
        if args.strict:
            raise RuntimeError(f"model assumptions violated: {failed}")
        print(f"warning: model assumptions not satisfied: {failed}",
              file=sys.stderr)
    return sc


def _outdir(args):
    out = os.environ.get("EPICTRL_OUT", args.out)
    os.makedirs(out, exist_ok=True)
    return out


def _path(out, name):
    return os.path.join(out, name)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, default=_jsonable)


def _write_series_csv(path, columns):
    """columns: list of (header, 1-d array); all equal length."""
    names = [c[0] for c in columns]
    arrays = [np.asarray(c[1]) for c in columns]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for k in range(len(arrays[0])):
            writer.writerow(FMT % a[k] for a in arrays)


def _load_schedule(path, scenario):
    with open(path) as fh:
        data = json.load(fh)
    if "schedule" in data:
        data = data["schedule"]
    if data.get("type") == "grid":
        return GridControl(np.asarray(data["u"], dtype=float))
    return BangSchedule(np.asarray(data["tau"], dtype=float))


def _control_series(trajectory, scenario):
    us = trajectory.u_realized * trajectory.s
    cols = [("time", trajectory.times)]
    cols += [(f"us_{i + 1}", us[:, i]) for i in range(scenario.K)]
    return cols


# ---------------------------------------------------------------------------
# Subcommands


def cmd_simulate(args):
    sc = _load(args)
    out = _outdir(args)
    control = (_load_schedule(args.schedule, sc) if args.schedule
               else BangSchedule.full(sc.K, sc.n_weeks))
    tr = simulate(sc, control, args.h)
    trajectory_to_csv(tr, sc, _path(out, "trajectory.csv"), fmt=FMT)
    events_to_json(tr, _path(out, "events.json"))
    plots.plot_states(tr, sc, _path(out, "states.svg"))
    _write_series_csv(
        _path(out, "states.csv"),
        [("time", tr.times)]
        + [(f"s_{i + 1}", tr.s[:, i]) for i in range(sc.K)]
        + [(f"I_{i + 1}", tr.x[:, 0, i]) for i in range(sc.K)]
        + [("V", tr.V), ("D_eps", sc.shipments.smoothed(tr.times))])
    plots.plot_controls(tr, sc, _path(out, "controls.svg"))
    _write_series_csv(_path(out, "controls.csv"), _control_series(tr, sc))
    print(f"simulated {tr.n_nodes} nodes, {len(tr.events)} events -> {out}")
    return 0


def _opt_options(args):
    return OptimizeOptions(h=args.h, starts=args.starts, seed=args.seed)


def cmd_optimize(args):
    sc = _load(args)
    out = _outdir(args)
    if args.mode == "grid":
        result = fbsm_grid(sc, _opt_options(args))
    else:
        result = optimize_switch_times(sc, _opt_options(args))
    tr = simulate(sc, result.control, args.h)
    _write_json(_path(out, "result.json"), result.to_dict())
    trajectory_to_csv(tr, sc, _path(out, "trajectory.csv"), fmt=FMT)
    events_to_json(tr, _path(out, "events.json"))
    plots.plot_controls(tr, sc, _path(out, "controls.svg"))
    _write_series_csv(_path(out, "controls.csv"), _control_series(tr, sc))
    baseline = simulate(sc, BangSchedule.never(sc.K, sc.n_weeks), args.h)
    plots.plot_infectious(tr, sc, _path(out, "infectious.svg"),
                          baseline=baseline)
    _write_series_csv(_path(out, "infectious.csv"),
                      [("time", tr.times),
                       ("total_infectious", tr.infectious() @ sc.n),
                       ("no_vaccination", baseline.infectious() @ sc.n)])
    if result.log:
        with open(_path(out, "log.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            n_par = len(result.log[0][3])
            writer.writerow(["start", "evaluation", "J"]
                            + [f"tau_{i + 1}" for i in range(n_par)])
            for start, n_eval, J, params in result.log:
                writer.writerow([start, n_eval]
                                + [FMT % v for v in (J, *params)])
    print(f"J = {result.J:.10f}  (mode={args.mode}, "
          f"{result.n_evaluations} evaluations) -> {out}")
    return 0


def cmd_verify(args):
    sc = _load(args)
    out = _outdir(args)
    if args.schedule:
        control = _load_schedule(args.schedule, sc)
    else:
        control = optimize_switch_times(sc, _opt_options(args)).control
    tr = simulate(sc, control, args.h)
    adj, info = full_adjoint(sc, tr)
    schedule = control if isinstance(control, BangSchedule) else None
    report = verify_solution(sc, tr, adj, schedule=schedule)
    report.to_json(_path(out, "verify.json"))
    adjoint_to_csv(adj, sc, _path(out, "adjoint.csv"), fmt=FMT)
    print(report.summary())
    return 0 if report.passed else 1


def cmd_oracle(args):
    sc = _load(args)
    out = _outdir(args)
    result = brute_force_switch_grid(sc, args.resolution, h=args.h)
    _write_json(_path(out, "oracle.json"),
                {"tau": result.control.tau.tolist(), "J": result.J,
                 "n_evaluations": result.n_evaluations,
                 "resolution": args.resolution, "h": args.h})
    print(f"oracle J = {result.J:.10f} over {result.n_evaluations} "
          f"grid points -> {out}")
    return 0


def cmd_compare(args):
    sc = _load(args)
    out = _outdir(args)
    opts = _opt_options(args)
    report = compare_costs(sc, c_q=args.cq, options=opts)
    plots.plot_compare(report, _path(out, "compare"))
    series_keys = ["effort_linear", "effort_quadratic", "infectious_linear",
                   "infectious_quadratic", "cumulative_linear",
                   "cumulative_quadratic", "running_difference"]
    _write_series_csv(_path(out, "compare_series.csv"),
                      [("time", report["times"])]
                      + [(k, report[k]) for k in series_keys])
    _write_json(_path(out, "compare.json"),
                {"c_q": report["c_q"], "J_linear": report["J_linear"],
                 "J_quadratic": report["J_quadratic"],
                 "result_linear": report["result_linear"].to_dict(),
                 "result_quadratic": report["result_quadratic"].to_dict()})
    print(f"J_linear = {report['J_linear']:.6f}  "
          f"J_quadratic = {report['J_quadratic']:.6f}  "
          f"(c_q = {report['c_q']:.6g}) -> {out}")
    return 0


def cmd_adjoint(args):
    sc = _load(args)
    out = _outdir(args)
    control = (_load_schedule(args.schedule, sc) if args.schedule
               else BangSchedule.full(sc.K, sc.n_weeks))
    tr = simulate(sc, control, args.h)
    adj, info = full_adjoint(sc, tr)
    adjoint_to_csv(adj, sc, _path(out, "adjoint.csv"), fmt=FMT)
    plots.plot_adjoint(adj, sc, _path(out, "psi_s.svg"))
    _write_series_csv(_path(out, "psi_s.csv"),
                      [("time", adj.times)]
                      + [(f"psi_s_{i + 1}", adj.psi_s[:, i])
                         for i in range(sc.K)])
    _write_json(_path(out, "lambda.json"),
                {"lambda_week": [float(adj.lam[round(7 * w / tr.h)])
                                 for w in range(sc.n_weeks)],
                 "info": {k: v for k, v in info.items()
                          if isinstance(v, (int, float, bool, str, list))}})
    print(f"adjoint integrated on {len(adj.times)} nodes -> {out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="epictrl",
        description="Constrained vaccination scheduling in metapopulation "
                    "epidemic models: simulate, optimize, verify.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate the controlled dynamics")
    _add_common(p)
    p.add_argument("--schedule", metavar="PATH",
                   help="schedule JSON (default: vaccinate at full rate)")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("optimize", help="optimize the vaccination schedule")
    _add_common(p)
    p.add_argument("--mode", choices=["bang", "grid"], default="bang")
    p.add_argument("--starts", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("verify", help="run the structural checks on a solution")
    _add_common(p)
    p.add_argument("--schedule", metavar="PATH",
                   help="schedule JSON (default: optimize first)")
    p.add_argument("--starts", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("oracle", help="brute-force switch-time grid search")
    _add_common(p)
    p.add_argument("--resolution", type=float, default=0.5,
                   help="switch-time grid spacing in days")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("compare", help="linear vs quadratic effort cost")
    _add_common(p)
    p.add_argument("--cq", type=float, default=None,
                   help="quadratic effort weight (default: calibrated)")
    p.add_argument("--starts", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("adjoint", help="integrate costates and multipliers")
    _add_common(p)
    p.add_argument("--schedule", metavar="PATH",
                   help="schedule JSON (default: vaccinate at full rate)")
    p.set_defaults(fn=cmd_adjoint)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": {"type": type(exc).__name__,
                                    "message": str(exc)}}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
