"""Command-line entry point: ``bilba plan|sweep|eval-holdout|trace``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .errors import BilbaError
from .harness import (
    PLANNERS,
    RunReport,
    evaluate_holdout,
    holdout_experiment,
    resolve_params,
    run,
    sweep,
)
from .belief import Belief
from .scenario import AXES, load_scenario
from .trace import emit_trace


def _kv(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), yaml.safe_load(v)


def _cell(text: str) -> tuple[str, float]:
    try:
        axis, mag = text.split(":")
        mag_f = float(mag)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected axis:magnitude, got {text!r}") from None
    if axis not in AXES:
        raise argparse.ArgumentTypeError(f"axis must be one of {', '.join(AXES)}")
    return axis, mag_f


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t]


def _write(path, text: str) -> None:
    Path(path).write_text(text)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _load_scenario(args):
    scn = load_scenario(args.scenario)
    if getattr(args, "axis", None):
        if args.magnitude is None:
            raise BilbaError("--axis needs --magnitude")
        scn = scn.with_uncertainty(args.axis, args.magnitude)
    return scn


def cmd_plan(args) -> int:
    scn = _load_scenario(args)
    rep = run(scn, args.planner, args.seed, args.budget, dict(args.params))
    if args.out:
        _write(args.out, rep.dumps(timing=False))
    if args.report:
        _write(args.report, rep.dumps(timing=True))
    if args.trace and rep.plan is not None:
        emit_trace(rep.plan_object(), scn.belief(), scn.manip, scn.env, args.trace, title=f"{scn.name} seed {args.seed}")
    n = len(rep.plan["motions"]) if rep.plan else 0
    print(f"{rep.status}: {n} motions, {rep.sim_calls} simulator calls, {rep.planning_time_s:.2f} s"
          + (f" ({rep.message})" if rep.message else ""))
    return rep.exit_code


def cmd_sweep(args) -> int:
    scn = _load_scenario(args)
    cells = args.cells or [(ax.axis, ax.magnitude) for ax in scn.uncertainty]

    def progress(axis, mag, planner, rep):
        print(f"{axis}:{mag:g} {planner} seed {rep.seed}: {rep.status} {rep.sim_calls} calls", file=sys.stderr)

    table = sweep(scn, cells, args.planners, args.repeats, args.seed, args.budget, dict(args.params), progress)
    text = _dump(table)
    if args.out:
        _write(args.out, text)
    for row in table["cells"]:
        print(f"{row['axis']}:{row['magnitude']:g} {row['planner']}: {row['successes']}/{row['runs']} ok, "
              f"calls {row['median_sim_calls']:.0f} +- {row['mad_sim_calls']:.0f}, "
              f"time {row['median_time_s']:.2f} +- {row['mad_time_s']:.2f} s")
    return 0


def cmd_eval_holdout(args) -> int:
    scn = _load_scenario(args)
    if args.plan:
        rep = RunReport.from_dict(json.loads(Path(args.plan).read_text()))
        plan = rep.plan_object()
        if plan is None:
            raise BilbaError(f"{args.plan} holds no plan")
        extremal, interior = scn.holdout_beliefs()
        _, sim_params = resolve_params(scn, args.planner, args.seed, dict(args.params))
        frac = evaluate_holdout(plan, Belief(tuple(extremal) + tuple(interior)), scn.goal, scn.manip, scn.env, sim_params)
        print(f"held-out success fraction: {frac:.4f}")
        if args.out:
            _write(args.out, _dump({"plan": args.plan, "success_fraction": frac}))
        return 0

    def progress(alpha, rep, frac):
        print(f"alpha {alpha} seed {rep.seed}: {rep.status} {rep.sim_calls} calls, fraction {frac:.3f}", file=sys.stderr)

    table = holdout_experiment(scn, args.alphas, args.repeats, args.planner, args.seed, args.budget,
                               dict(args.params), progress)
    if args.out:
        _write(args.out, _dump(table))
    for row in table["rows"]:
        print(f"alpha {row['alpha']}: median fraction {row['median_success_fraction']:.3f}, "
              f"median calls {row['median_sim_calls']:.0f}")
    return 0


def cmd_trace(args) -> int:
    scn = _load_scenario(args)
    rep = RunReport.from_dict(json.loads(Path(args.plan).read_text()))
    plan = rep.plan_object()
    if plan is None:
        raise BilbaError(f"{args.plan} holds no plan")
    emit_trace(plan, scn.belief(), scn.manip, scn.env, args.out, title=f"{scn.name} {rep.planner} seed {rep.seed}")
    print(f"wrote {args.out} ({len(plan) + 1} panels)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bilba", description="Belief-space compliant-motion planning benchmarks.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, planner=True):
        p.add_argument("--scenario", required=True, help="scenario file or bundled name (peg_hole, puzzle)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--budget", type=int, default=None, help="cap on particle simulations")
        p.add_argument("--params", type=_kv, action="append", default=[], metavar="K=V",
                       help="parameter override; prefix simulator keys with 'sim.'")
        p.add_argument("--axis", choices=AXES, help="replace the scenario's uncertainty axis")
        p.add_argument("--magnitude", type=float, help="magnitude for --axis (metres, degrees for pitch)")
        if planner:
            p.add_argument("--planner", choices=PLANNERS, default="bilba-fixed")

    p = sub.add_parser("plan", help="run one planner and write its report")
    common(p)
    p.add_argument("--out", help="plan file (deterministic report without timing)")
    p.add_argument("--report", help="full report including wall-clock time")
    p.add_argument("--trace", help="also write an SVG trace")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("sweep", help="benchmark planners over uncertainty cells")
    common(p, planner=False)
    p.add_argument("--cells", type=_cell, nargs="+", help="axis:magnitude pairs, e.g. x:0.01 pitch:2")
    p.add_argument("--planners", choices=PLANNERS, nargs="+", default=list(PLANNERS))
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval-holdout", help="plan from compact beliefs, score on the held-out belief")
    common(p)
    p.add_argument("--alphas", type=_ints, default=[0, 4, 8])
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--plan", help="score an existing plan file instead of planning")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_holdout)

    p = sub.add_parser("trace", help="render a plan file as an SVG belief trajectory")
    p.add_argument("--scenario", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--axis", choices=AXES)
    p.add_argument("--magnitude", type=float)
    p.set_defaults(func=cmd_trace)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BilbaError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
