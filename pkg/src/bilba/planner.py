"""Bi-level belief-space planner.

The outer level searches the mode subgraph for a contact schedule; the
inner level greedily picks compliant motions that drive every particle
into the next scheduled contact, scoring candidates by how many particles
reach it and how homogeneous the resulting contact sets are.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import se2
from .belief import Belief, BeliefOps
from .contact_graph import (
    FREE,
    ModeGraph,
    connect_free_mode,
    dijkstra_schedule,
    make_graph,
    mode_key,
    prune_edge,
)
from .errors import EmptyGraph, FeatureSingularity, InvalidParam, NoPlan, NoSchedule, SamplingFailure
from .geometry import TOL_CONTACT, CObsSlice, ContactPair, PartGeometry, boundary_normal, cobs_slice, contains, sample_boundary
from .gp import GpModel, SearchGrid, normalize_scores, predict_mean
from .sim import CompliantMotion, SimParams, Simulator, stiffness_matrix

FIXED = "fixed"
VARIABLE = "variable"
COBS_SAMPLE = "cobs_sample"
GP_PROPOSAL = "gp_proposal"


@dataclass(frozen=True)
class PlannerParams:
    k_t_stiff: float = 2000.0
    k_t_soft: float = 100.0
    k_r_stiff: float = 50.0
    k_r_soft: float = 2.0
    eps_noise: float = 0.3
    noise_trans: float = 0.01
    noise_rot: float = 0.05
    config_noise: float = 0.01
    n_samples: int = 8
    n_gp: int = 64
    n_sim: int = 4
    n_iters: int = 3
    n_attempts: int = 10
    lam: float = 0.5
    delta_proj: float = 0.1
    n_free: int = 3
    n_boundary_samples: int = 200
    mode: str = FIXED
    seed: int = 0
    timeout: float = 5.0
    # caps that keep the greedy loops finite when scores plateau
    max_rounds: int = 8
    max_segments: int = 12
    gp_signal_var: tuple = (1e-2, 1e1)
    gp_inv_length: tuple = (1e0, 1e6)
    gp_grid_n: int = 8

    def __post_init__(self):
        if not (0 < self.k_t_soft < self.k_t_stiff):
            raise InvalidParam("need 0 < k_t_soft < k_t_stiff")
        if not (0 < self.k_r_soft < self.k_r_stiff):
            raise InvalidParam("need 0 < k_r_soft < k_r_stiff")
        if not 0.0 <= self.eps_noise <= 1.0:
            raise InvalidParam("eps_noise must lie in [0, 1]")
        if not 0.0 < self.lam < 1.0:
            raise InvalidParam("lam must lie in (0, 1)")
        if not 0.0 < self.delta_proj < 1.0:
            raise InvalidParam("delta_proj must lie in (0, 1)")
        for name in ("n_samples", "n_gp", "n_attempts", "n_free", "n_boundary_samples", "max_rounds", "max_segments"):
            if getattr(self, name) <= 0:
                raise InvalidParam(f"{name} must be positive")
        for name in ("n_sim", "n_iters"):
            if getattr(self, name) < 0:
                raise InvalidParam(f"{name} must be non-negative")
        if self.mode not in (FIXED, VARIABLE):
            raise InvalidParam(f"mode must be '{FIXED}' or '{VARIABLE}'")
        object.__setattr__(self, "gp_signal_var", tuple(float(v) for v in self.gp_signal_var))
        object.__setattr__(self, "gp_inv_length", tuple(float(v) for v in self.gp_inv_length))

    @property
    def gp_grid(self) -> SearchGrid:
        return SearchGrid(self.gp_signal_var, self.gp_inv_length, self.gp_grid_n)

    def replace(self, **kw) -> "PlannerParams":
        d = asdict(self)
        d.update(kw)
        return PlannerParams(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gp_signal_var"] = list(self.gp_signal_var)
        d["gp_inv_length"] = list(self.gp_inv_length)
        return d

    @classmethod
    def field_types(cls) -> dict:
        return {f.name: f.type for f in fields(cls)}


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one (seed, key...) coordinate."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


# ---------------------------------------------------------------------------
# stiffness


def fixed_stiffness(params: PlannerParams) -> np.ndarray:
    return stiffness_matrix(0.5 * params.k_r_stiff, 0.5 * params.k_t_stiff)


def soft_stiffness(normal: np.ndarray, n_theta: float, params: PlannerParams) -> np.ndarray:
    """Soft along the contact normal, stiff along the tangent."""
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    kt = params.k_t_stiff * np.eye(2) + (params.k_t_soft - params.k_t_stiff) * np.outer(n, n)
    kr = params.k_r_soft if abs(n_theta) > 0.5 else params.k_r_stiff
    return stiffness_matrix(kr, kt)


def compute_stiffness(b: Belief, slc: CObsSlice, params: PlannerParams, tol_contact: float = TOL_CONTACT) -> np.ndarray:
    if params.mode == FIXED:
        return fixed_stiffness(params)
    q = b[0]
    rel = q.manipuland_in_env()
    d, closest, _ = slc.nearest_boundary(rel[:2])
    if d > 10.0 * tol_contact:
        return fixed_stiffness(params)
    n3 = boundary_normal(slc, closest, tol_contact=tol_contact)
    nt = se2.rot(q.env_pose[2]) @ n3[:2]
    if np.hypot(*nt) < 1e-12:
        return fixed_stiffness(params)
    return soft_stiffness(nt, float(n3[2]), params)


# ---------------------------------------------------------------------------
# motion sampling


def sample_noised_config(
    slc: CObsSlice, pair: ContactPair, eps_noise: float, noise_scale: float, rng: np.random.Generator
) -> np.ndarray:
    """Boundary point carrying ``pair``, occasionally pushed into the obstacle."""
    p = sample_boundary(slc, pair, 1, rng)[0]
    if rng.random() < eps_noise:
        r = noise_scale * math.sqrt(rng.random())
        a = rng.uniform(-math.pi, math.pi)
        cand = p + r * np.array([math.cos(a), math.sin(a)])
        if contains(slc, cand) != "exterior":
            return cand
    return p


def featurize_motion(u: CompliantMotion) -> np.ndarray:
    """Lie-algebra coordinates ``(theta, rho_x, rho_y)`` of the setpoint."""
    if abs(se2.wrap_angle(u.setpoint[2])) >= math.pi - 1e-9:
        raise FeatureSingularity("setpoint rotation at +-pi has no unique log")
    return se2.log(u.setpoint)


def noise_motions(
    U: list[CompliantMotion], n: int, noise_trans: float, noise_rot: float, rng: np.random.Generator
) -> list[CompliantMotion]:
    """Perturb the features of motions drawn uniformly from ``U``; stiffness is kept."""
    if not U:
        return []
    scale = np.array([noise_rot, noise_trans, noise_trans])
    idx = rng.integers(0, len(U), size=n)
    noise = rng.uniform(-1.0, 1.0, size=(n, 3)) * scale
    out = []
    for i, dn in zip(idx, noise):
        u = U[int(i)]
        xi = featurize_motion(u) + dn
        out.append(CompliantMotion(u.stiffness, se2.exp(xi), u.timeout))
    return out


@dataclass
class Candidate:
    motion: Optional[CompliantMotion]
    score: float
    posterior: Optional[Belief] = None
    source: str = COBS_SAMPLE


class _BudgetExhausted(Exception):
    pass


class _Context:
    """Simulator, contact queries and slice shared by one planning run."""

    def __init__(self, sim: Simulator, slc: CObsSlice, params: PlannerParams, budget: int | None = None):
        self.sim = sim
        self.slc = slc
        self.params = params
        self.ops = BeliefOps(sim.env, sim.manip, sim.params.tol_contact)
        self.budget = budget
        self.calls0 = sim.calls

    def evaluate(self, b: Belief, u: CompliantMotion, pair: ContactPair) -> tuple[float, Belief]:
        if self.budget is not None and self.sim.calls - self.calls0 + len(b) > self.budget:
            raise _BudgetExhausted
        post = self.sim.belief(b, u)
        return self.ops.score(post, pair, self.params.lam), post


def sample_motion(
    b: Belief, K: np.ndarray, pair: ContactPair, ctx: _Context, rng: np.random.Generator
) -> tuple[Candidate, list[CompliantMotion], list[float]]:
    """Score setpoints inferred from boundary samples, one batch per particle."""
    p = ctx.params
    theta = ctx.slc.rotation
    best = Candidate(None, 0.0)
    U: list[CompliantMotion] = []
    H: list[float] = []
    for q in b:
        grasp_inv = se2.inverse(q.grasp)
        for _ in range(p.n_samples):
            xy = sample_noised_config(ctx.slc, pair, p.eps_noise, p.config_noise, rng)
            target = se2.compose(q.env_pose, np.array([xy[0], xy[1], theta]))
            u = CompliantMotion(K, se2.compose(target, grasp_inv), p.timeout)
            h, post = ctx.evaluate(b, u, pair)
            U.append(u)
            H.append(h)
            if h >= best.score:
                best = Candidate(u, h, post, COBS_SAMPLE)
    if best.motion is None:
        raise SamplingFailure("no motion was sampled")
    return best, U, H


def gpr_propose(
    b: Belief,
    U: list[CompliantMotion],
    H: list[float],
    pair: ContactPair,
    ctx: _Context,
    rng: np.random.Generator,
) -> Candidate:
    """Simulate the test motions the GP ranks highest; ``U`` and ``H`` grow in place."""
    p = ctx.params
    best = Candidate(None, 0.0, None, GP_PROPOSAL)
    for _ in range(p.n_iters):
        tests = noise_motions(U, p.n_gp, p.noise_trans, p.noise_rot, rng)
        X = np.array([featurize_motion(u) for u in U])
        T = np.array([featurize_motion(u) for u in tests])
        y, _, _ = normalize_scores(H)
        model = GpModel.fit(X, y, p.gp_grid)
        pred = predict_mean(model, T)
        top = np.argsort(-pred, kind="stable")[: p.n_sim]
        for i in top:
            u = tests[int(i)]
            h, post = ctx.evaluate(b, u, pair)
            U.append(u)
            H.append(h)
            if h >= best.score:
                best = Candidate(u, h, post, GP_PROPOSAL)
    return best


@dataclass
class TraceRecord:
    attempt: int
    segment: int
    mode: tuple
    round: int
    score_sample: float
    score_gp: float
    chosen: str
    best_score: float
    positions: list

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Segment:
    motions: list
    provenance: list
    posterior: Belief
    ok: bool


def make_contact(
    b_curr: Belief,
    pair: ContactPair,
    K: np.ndarray,
    ctx: _Context,
    rng: np.random.Generator,
    trace: list | None = None,
    tag: tuple = (0, 0),
) -> Segment:
    """Greedy motion sequence that brings every particle into ``pair``."""
    h_best = 0.0
    b = b_curr
    zeta: list[CompliantMotion] = []
    prov: list[str] = []
    rounds = 0
    while not ctx.ops.goal_satisfied(b, pair):
        if rounds >= ctx.params.max_rounds:
            return Segment(zeta, prov, b, False)
        rounds += 1
        cand_q, U, H = sample_motion(b, K, pair, ctx, rng)
        if ctx.ops.goal_satisfied(cand_q.posterior, pair):
            _record(trace, tag, pair, rounds, cand_q.score, float("nan"), COBS_SAMPLE, cand_q.score, cand_q.posterior)
            return Segment(zeta + [cand_q.motion], prov + [COBS_SAMPLE], cand_q.posterior, True)
        cand_gp = gpr_propose(b, U, H, pair, ctx, rng)
        if cand_gp.motion is not None and ctx.ops.goal_satisfied(cand_gp.posterior, pair):
            _record(trace, tag, pair, rounds, cand_q.score, cand_gp.score, GP_PROPOSAL, cand_gp.score, cand_gp.posterior)
            return Segment(zeta + [cand_gp.motion], prov + [GP_PROPOSAL], cand_gp.posterior, True)
        if max(cand_gp.score, cand_q.score) < h_best:
            _record(trace, tag, pair, rounds, cand_q.score, cand_gp.score, "none", h_best, b)
            return Segment(zeta, prov, b, False)
        chosen = cand_gp if (cand_gp.motion is not None and cand_gp.score > cand_q.score) else cand_q
        h_best = chosen.score
        zeta.append(chosen.motion)
        prov.append(chosen.source)
        b = chosen.posterior
        _record(trace, tag, pair, rounds, cand_q.score, cand_gp.score, chosen.source, h_best, b)
    return Segment(zeta, prov, b, True)


def _record(trace, tag, pair, rnd, hq, hgp, chosen, hbest, b):
    if trace is None:
        return
    trace.append(TraceRecord(
        tag[0], tag[1], tuple(pair.key), rnd, float(hq), float(hgp), chosen, float(hbest),
        b.manip_positions().round(6).tolist(),
    ))


# ---------------------------------------------------------------------------
# outer loop


@dataclass
class Plan:
    motions: list
    schedule_trace: list  # target contact pair key per motion
    provenance: list  # COBS_SAMPLE or GP_PROPOSAL per motion

    def __len__(self) -> int:
        return len(self.motions)

    def to_dict(self) -> dict:
        return {
            "motions": [u.to_dict() for u in self.motions],
            "schedule_trace": [list(k) for k in self.schedule_trace],
            "provenance": list(self.provenance),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Plan":
        return cls(
            [CompliantMotion.from_dict(m) for m in d["motions"]],
            [tuple(k) for k in d["schedule_trace"]],
            list(d["provenance"]),
        )


@dataclass
class PlanningResult:
    plan: Optional[Plan]
    calls: int
    belief_calls: int
    attempts: int
    trace: list = field(default_factory=list)
    schedules: list = field(default_factory=list)
    graph: Optional[ModeGraph] = None


def build_graph(b0: Belief, goal: ContactPair, manip: PartGeometry, env: PartGeometry, params: PlannerParams):
    """Slice and mode graph from the first particle whose graph holds the goal."""
    for i, q in enumerate(b0):
        slc = cobs_slice(manip, env, q.manipuland_in_env()[2])
        try:
            g = make_graph(slc, q.env_pose[2])
        except EmptyGraph:
            continue
        if goal in g.vertices:
            g = connect_free_mode(g, slc, q, params.n_free, params.n_boundary_samples, stream(params.seed, 0xF, i))
            return slc, g
    raise NoPlan("goal contact does not appear in any particle's mode graph")


def bilba(
    b0: Belief,
    goal: ContactPair,
    manip: PartGeometry,
    env: PartGeometry,
    params: PlannerParams | None = None,
    sim_params: SimParams | None = None,
    sim: Simulator | None = None,
    budget: int | None = None,
) -> PlanningResult:
    """Search for a conformant plan that puts every particle of ``b0`` in ``goal``.

    ``budget`` caps the number of particle simulations spent on planning.
    Raises NoPlan when every attempt fails or the budget runs out; the
    partial statistics are attached to the exception as ``exc.result``.
    """
    params = params or PlannerParams()
    sim = sim or Simulator(manip, env, sim_params)
    ops = BeliefOps(env, manip, sim.params.tol_contact)
    result = PlanningResult(None, 0, 0, 0)
    calls0, bcalls0 = sim.calls, sim.belief_calls

    def finish():
        result.calls = sim.calls - calls0
        result.belief_calls = sim.belief_calls - bcalls0

    if ops.goal_satisfied(b0, goal):
        result.plan = Plan([], [], [])
        finish()
        return result
    try:
        slc, g = build_graph(b0, goal, manip, env, params)
    except NoPlan as exc:
        finish()
        exc.result = result
        raise
    result.graph = g
    if budget is not None and budget < 0:
        raise InvalidParam("budget must be non-negative")
    ctx = _Context(sim, slc, params, budget)
    try:
        plan = _outer_loop(b0, goal, g, ctx, result)
    except _BudgetExhausted:
        finish()
        exc = NoPlan(f"planning budget of {budget} simulator calls exhausted")
        exc.result = result
        raise exc from None
    finish()
    if plan is not None:
        result.plan = plan
        return result
    exc = NoPlan(f"no conformant plan after {result.attempts} attempts")
    exc.result = result
    raise exc


def _outer_loop(b0: Belief, goal: ContactPair, g: ModeGraph, ctx: _Context, result: PlanningResult) -> Optional[Plan]:
    params, sim, ops, slc = ctx.params, ctx.sim, ctx.ops, ctx.slc
    fixed = fixed_stiffness(params)
    for attempt in range(params.n_attempts):
        result.attempts = attempt + 1
        b = b0
        motions: list = []
        sched: list = []
        prov: list = []
        current = FREE
        try:
            schedule = dijkstra_schedule(g, b, FREE, goal, params.delta_proj)
        except NoSchedule:
            break
        result.schedules.append([tuple(m.key) for m in schedule])
        seg_idx = 0
        while len(schedule) and seg_idx < params.max_segments:
            target = schedule[0]
            K = fixed if current is FREE else compute_stiffness(b, slc, params, sim.params.tol_contact)
            seg = make_contact(b, target, K, ctx, stream(params.seed, attempt, seg_idx), result.trace, (attempt, seg_idx))
            seg_idx += 1
            if not seg.ok:
                g = prune_edge(g, (current, target))
                result.graph = g
                break
            motions += seg.motions
            prov += seg.provenance
            sched += [tuple(target.key)] * len(seg.motions)
            b = seg.posterior
            current = target
            if ops.goal_satisfied(b, goal):
                break
            try:
                schedule = dijkstra_schedule(g, b, current, goal, params.delta_proj)
            except NoSchedule:
                break
            result.schedules.append([tuple(m.key) for m in schedule])
        if ops.goal_satisfied(b, goal):
            plan = Plan(motions, sched, prov)
            if verify_plan(b0, plan, goal, sim.manip, sim.env, sim.params):
                return plan
    return None


def verify_plan(
    b0: Belief, plan: Plan, goal: ContactPair, manip: PartGeometry, env: PartGeometry, sim_params: SimParams | None = None
) -> bool:
    """Re-simulate ``plan`` from scratch and test the goal on every particle."""
    fresh = Simulator(manip, env, sim_params)
    post = fresh.plan(b0, plan.motions)
    return BeliefOps(env, manip, fresh.params.tol_contact).goal_satisfied(post, goal)


__all__ = [
    "PlannerParams",
    "Plan",
    "PlanningResult",
    "TraceRecord",
    "Candidate",
    "bilba",
    "build_graph",
    "compute_stiffness",
    "fixed_stiffness",
    "soft_stiffness",
    "sample_noised_config",
    "sample_motion",
    "gpr_propose",
    "make_contact",
    "featurize_motion",
    "noise_motions",
    "verify_plan",
    "stream",
    "mode_key",
]
