"""Planner runs, reports, benchmark sweeps and held-out belief evaluation."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional

import numpy as np
from scipy.stats import median_abs_deviation

from .baseline import LABEL as BASELINE_LABEL
from .baseline import BaselineParams, best_plan
from .belief import Belief, contacts_of
from .errors import BilbaError, InvalidParam, NoPlan
from .geometry import ContactPair, PartGeometry
from .planner import FIXED, VARIABLE, Plan, PlannerParams, bilba, stream
from .scenario import Scenario
from .sim import SimParams, Simulator

REPORT_VERSION = 1
PLANNERS = ("bilba-variable", "bilba-fixed", "best")
DEFAULT_BUDGET = 5000

STATUS_PLAN = "plan_found"
STATUS_NO_PLAN = "no_plan"
STATUS_ERROR = "error"
EXIT_CODES = {STATUS_PLAN: 0, STATUS_ERROR: 1, STATUS_NO_PLAN: 2}


# ---------------------------------------------------------------------------
# parameters


def _coerce(value, default):
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int) and not isinstance(value, bool):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        return value
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(value)
    return value


def _build(cls, base: dict, overrides: dict, what: str):
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(overrides) - names)
    if unknown:
        raise InvalidParam(f"unknown {what} parameter(s): {', '.join(unknown)}")
    defaults = asdict(cls())
    kw = dict(base)
    kw.update({k: _coerce(v, defaults[k]) for k, v in overrides.items()})
    try:
        return cls(**kw)
    except TypeError as exc:
        raise InvalidParam(f"bad {what} parameters: {exc}") from None


def split_overrides(overrides: dict) -> tuple[dict, dict]:
    """Separate ``sim.``-prefixed keys from planner keys."""
    sim, rest = {}, {}
    for k, v in overrides.items():
        if k.startswith("sim."):
            sim[k[4:]] = v
        else:
            rest[k] = v
    return rest, sim


def resolve_params(scn: Scenario, planner: str, seed: int, overrides: dict | None = None):
    """Planner (or baseline) and simulator parameters for one run.

    Scenario overrides apply first, command-line overrides last. The baseline
    inherits the planner's fixed stiffness so both search with the same
    default controller.
    """
    if planner not in PLANNERS:
        raise InvalidParam(f"planner must be one of {', '.join(PLANNERS)}")
    rest, sim_kw = split_overrides(dict(overrides or {}))
    sim_params = _build(SimParams, {}, {**scn.sim_params, **sim_kw}, "simulator")
    if planner == "best":
        pp = _build(PlannerParams, {}, scn.params, "planner")
        base = {"k_trans": 0.5 * pp.k_t_stiff, "k_rot": 0.5 * pp.k_r_stiff, "timeout": pp.timeout}
        params = _build(BaselineParams, base, {**scn.baseline_params, **rest, "seed": seed}, "baseline")
    else:
        mode = VARIABLE if planner == "bilba-variable" else FIXED
        params = _build(PlannerParams, {}, {**scn.params, **rest, "mode": mode, "seed": seed}, "planner")
    return params, sim_params


# ---------------------------------------------------------------------------
# single runs


@dataclass
class RunReport:
    scenario: str
    planner: str
    seed: int
    status: str
    message: str
    plan: Optional[dict]
    sim_calls: int
    belief_calls: int
    attempts: int
    schedules: list
    steps: list
    per_particle_goal: list
    goal: list
    params: dict
    sim_params: dict
    budget: Optional[int]
    label: str
    planning_time_s: float = 0.0
    schema_version: int = REPORT_VERSION

    @property
    def success(self) -> bool:
        return self.status == STATUS_PLAN

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("planning_time_s")
        return d

    def dumps(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def plan_object(self) -> Optional[Plan]:
        return Plan.from_dict(self.plan) if self.plan is not None else None


def _mode_name(key, scn: Scenario) -> str:
    e, m = key
    return f"({scn.env.name(e)}, {scn.manip.name(m)})"


def particle_goal_flags(b0: Belief, plan: Plan, goal: ContactPair, manip: PartGeometry, env: PartGeometry,
                        sim_params: SimParams | None = None) -> list[bool]:
    """Fresh re-simulation of ``plan``; one goal flag per particle."""
    sim = Simulator(manip, env, sim_params)
    post = sim.plan(b0, plan.motions)
    return [goal in contacts_of(q, env, manip, sim.params.tol_contact) for q in post]


def run(scn: Scenario, planner: str, seed: int = 0, budget: int | None = None,
        overrides: dict | None = None, b0: Belief | None = None) -> RunReport:
    """Run one planner and verify its plan independently of the planner's own check."""
    b0 = b0 if b0 is not None else scn.belief()
    goal = list(scn.goal_names())
    try:
        params, sim_params = resolve_params(scn, planner, seed, overrides)
    except BilbaError as exc:
        return RunReport(scn.name, planner, seed, STATUS_ERROR, str(exc), None, 0, 0, 0, [], [], [], goal,
                         {}, {}, budget, "")
    sim = Simulator(scn.manip, scn.env, sim_params)
    t0 = time.perf_counter()
    message = ""
    try:
        if planner == "best":
            res = best_plan(b0, scn.goal, scn.manip, scn.env, params,
                            DEFAULT_BUDGET if budget is None else budget, sim=sim)
        else:
            res = bilba(b0, scn.goal, scn.manip, scn.env, params, sim=sim, budget=budget)
        status = STATUS_PLAN
    except NoPlan as exc:
        res = getattr(exc, "result", None)
        status, message = STATUS_NO_PLAN, str(exc)
    except BilbaError as exc:
        res, status, message = None, STATUS_ERROR, str(exc)
    elapsed = time.perf_counter() - t0

    plan = res.plan if (res is not None and status == STATUS_PLAN) else None
    flags: list[bool] = []
    if plan is not None:
        flags = particle_goal_flags(b0, plan, scn.goal, scn.manip, scn.env, sim_params)
        if not all(flags):
            status, message = STATUS_NO_PLAN, "plan failed independent re-simulation"
    steps = []
    if plan is not None:
        for i, (key, prov) in enumerate(zip(plan.schedule_trace, plan.provenance)):
            steps.append({"index": i, "target": _mode_name(key, scn), "provenance": prov})
    return RunReport(
        scenario=scn.name,
        planner=planner,
        seed=seed,
        status=status,
        message=message,
        plan=plan.to_dict() if plan is not None and status == STATUS_PLAN else None,
        sim_calls=res.calls if res is not None else 0,
        belief_calls=res.belief_calls if res is not None else 0,
        attempts=res.attempts if res is not None else 0,
        schedules=[[_mode_name(k, scn) for k in s] for s in (res.schedules if res is not None else [])],
        steps=steps,
        per_particle_goal=flags,
        goal=goal,
        params=params.to_dict(),
        sim_params=asdict(sim_params),
        budget=DEFAULT_BUDGET if (planner == "best" and budget is None) else budget,
        label=BASELINE_LABEL if planner == "best" else f"bilba ({params.mode} stiffness)",
        planning_time_s=elapsed,
    )


# ---------------------------------------------------------------------------
# sweeps


def _median_mad(x: Iterable[float]) -> tuple[float, float]:
    a = np.asarray(list(x), float)
    if a.size == 0:
        return float("nan"), float("nan")
    return float(np.median(a)), float(median_abs_deviation(a))


def aggregate(reports: list[RunReport]) -> dict:
    calls = [r.sim_calls for r in reports]
    times = [r.planning_time_s for r in reports]
    mc, dc = _median_mad(calls)
    mt, dt = _median_mad(times)
    ok = sum(r.success for r in reports)
    return {
        "runs": len(reports),
        "successes": ok,
        "success_rate": ok / len(reports) if reports else float("nan"),
        "median_sim_calls": mc,
        "mad_sim_calls": dc,
        "median_time_s": mt,
        "mad_time_s": dt,
        "seeds": [r.seed for r in reports],
        "statuses": [r.status for r in reports],
        "sim_calls": calls,
        "planning_times_s": times,
    }


def sweep(scn: Scenario, cells: list[tuple[str, float]], planners: list[str], repeats: int,
          seed0: int = 0, budget: int | None = None, overrides: dict | None = None, progress=None) -> dict:
    """Median +- MAD per (axis, magnitude, planner) cell.

    Each run's seed depends only on its repeat index, so the table does not
    depend on the order in which cells or planners are listed.
    """
    if repeats <= 0:
        raise InvalidParam("repeats must be positive")
    rows = []
    for axis, mag in sorted(set((a, float(m)) for a, m in cells)):
        cell = scn.with_uncertainty(axis, mag)
        for planner in sorted(set(planners)):
            reports = []
            for r in range(repeats):
                rep = run(cell, planner, seed0 + r, budget, overrides)
                reports.append(rep)
                if progress is not None:
                    progress(axis, mag, planner, rep)
            rows.append({"axis": axis, "magnitude": mag, "planner": planner, **aggregate(reports)})
    return {"schema_version": REPORT_VERSION, "scenario": scn.name, "repeats": repeats, "budget": budget, "cells": rows}


# ---------------------------------------------------------------------------
# held-out beliefs


def evaluate_holdout(plan: Plan, b_full: Belief, goal: ContactPair, manip: PartGeometry, env: PartGeometry,
                     sim_params: SimParams | None = None) -> float:
    """Fraction of held-out particles that end in ``goal`` under ``plan``."""
    flags = particle_goal_flags(b_full, plan, goal, manip, env, sim_params)
    return float(np.mean(flags))


def compact_belief(extremal: Belief, interior: Belief, alpha: int, rng: np.random.Generator) -> Belief:
    """Extremal particles plus ``alpha`` interior ones drawn without replacement."""
    if not 0 <= alpha <= len(interior):
        raise InvalidParam(f"alpha must lie in [0, {len(interior)}]")
    pick = sorted(rng.choice(len(interior), size=alpha, replace=False).tolist()) if alpha else []
    return Belief(tuple(extremal) + tuple(interior[i] for i in pick))


def holdout_experiment(scn: Scenario, alphas: list[int], repeats: int, planner: str = "bilba-fixed",
                       seed0: int = 0, budget: int | None = None, overrides: dict | None = None,
                       progress=None) -> dict:
    """Plan from compact beliefs and score each plan on the full held-out belief.

    A run that returns no plan scores 0.
    """
    extremal, interior = scn.holdout_beliefs()
    b_full = Belief(tuple(extremal) + tuple(interior))
    _, sim_params = resolve_params(scn, planner, seed0, overrides)
    rows = []
    for alpha in sorted(set(alphas)):
        fracs, calls, statuses, seeds = [], [], [], []
        for r in range(repeats):
            seed = seed0 + r
            b_plan = compact_belief(extremal, interior, alpha, stream(seed, 0xA, alpha))
            rep = run(scn, planner, seed, budget, overrides, b0=b_plan)
            plan = rep.plan_object()
            frac = evaluate_holdout(plan, b_full, scn.goal, scn.manip, scn.env, sim_params) if plan else 0.0
            fracs.append(frac)
            calls.append(rep.sim_calls)
            statuses.append(rep.status)
            seeds.append(seed)
            if progress is not None:
                progress(alpha, rep, frac)
        mf, df = _median_mad(fracs)
        mc, dc = _median_mad(calls)
        rows.append({
            "alpha": alpha,
            "planning_particles": len(extremal) + alpha,
            "median_success_fraction": mf,
            "mad_success_fraction": df,
            "median_sim_calls": mc,
            "mad_sim_calls": dc,
            "success_fractions": fracs,
            "sim_calls": calls,
            "statuses": statuses,
            "seeds": seeds,
        })
    return {
        "schema_version": REPORT_VERSION,
        "scenario": scn.name,
        "planner": planner,
        "held_out_particles": len(b_full),
        "repeats": repeats,
        "rows": rows,
    }
