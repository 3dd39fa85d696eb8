"""Belief-space expansive tree baseline.

A representative stand-in for a belief-space EST: grow a tree of beliefs by
applying random fixed-stiffness motions to nodes in sparsely covered
regions, with no contact schedule guiding the search.
"""

from __future__ import annotations

import math

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import se2
from .belief import Belief, BeliefOps
from .errors import InvalidParam, InvalidStart, NoPlan
from .geometry import ContactPair, PartGeometry
from .planner import Plan, PlanningResult, stream
from .sim import CompliantMotion, SimParams, Simulator, stiffness_matrix

LABEL = "belief-EST stand-in (inverse-density expansion, random setpoints)"


@dataclass(frozen=True)
class BaselineParams:
    k_trans: float = 1000.0
    k_rot: float = 25.0
    grid_cell: float = 0.02
    margin: float = 0.0
    # setpoint rotation is drawn from nominal +- theta_spread; pi covers the circle
    theta_spread: float = math.pi
    timeout: float = 5.0
    seed: int = 0

    def __post_init__(self):
        for name in ("k_trans", "k_rot", "grid_cell", "timeout"):
            if not getattr(self, name) > 0:
                raise InvalidParam(f"{name} must be positive")
        if not 0.0 <= self.theta_spread <= math.pi:
            raise InvalidParam("theta_spread must lie in [0, pi]")
        if self.margin < 0:
            raise InvalidParam("margin must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TreeNode:
    belief: Belief
    parent: Optional[int]
    motion: Optional[CompliantMotion]
    cell: tuple


@dataclass
class BeliefTree:
    nodes: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    def add(self, belief: Belief, parent, motion, grid_cell: float) -> int:
        mean = belief.manip_positions().mean(axis=0)
        cell = tuple(int(v) for v in np.floor(mean / grid_cell))
        self.nodes.append(TreeNode(belief, parent, motion, cell))
        self.counts[cell] = self.counts.get(cell, 0) + 1
        return len(self.nodes) - 1

    def weights(self) -> np.ndarray:
        w = np.array([1.0 / self.counts[n.cell] for n in self.nodes])
        return w / w.sum()

    def path(self, idx: int) -> list[CompliantMotion]:
        out = []
        while self.nodes[idx].parent is not None:
            out.append(self.nodes[idx].motion)
            idx = self.nodes[idx].parent
        return out[::-1]


def workspace(env: PartGeometry, manip: PartGeometry, b0: Belief, margin: float) -> tuple[np.ndarray, np.ndarray]:
    """Box around the environment and the initial manipuland positions, padded
    by the manipuland's radius plus ``margin``."""
    lo, hi = env.bounds()
    corners = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    pts = np.vstack([se2.transform_points(b0[0].env_pose, corners), b0.manip_positions()])
    mlo, mhi = manip.bounds()
    pad = float(np.hypot(*np.maximum(np.abs(mlo), np.abs(mhi)))) + margin
    return pts.min(axis=0) - pad, pts.max(axis=0) + pad


def best_plan(
    b0: Belief,
    goal: ContactPair,
    manip: PartGeometry,
    env: PartGeometry,
    params: BaselineParams | None = None,
    budget: int = 5000,
    sim_params: SimParams | None = None,
    sim: Simulator | None = None,
    tree_out: list | None = None,
) -> PlanningResult:
    """Grow the tree until a node satisfies ``goal`` or ``budget`` particle simulations run out."""
    params = params or BaselineParams()
    sim = sim or Simulator(manip, env, sim_params)
    ops = BeliefOps(env, manip, sim.params.tol_contact)
    rng = stream(params.seed, 0xB)
    calls0, bcalls0 = sim.calls, sim.belief_calls
    result = PlanningResult(None, 0, 0, 1)

    def finish():
        result.calls = sim.calls - calls0
        result.belief_calls = sim.belief_calls - bcalls0

    tree = BeliefTree()
    if tree_out is not None:
        tree_out.append(tree)
    tree.add(b0, None, None, params.grid_cell)
    if ops.goal_satisfied(b0, goal):
        result.plan = Plan([], [], [])
        finish()
        return result
    K = stiffness_matrix(params.k_rot, params.k_trans)
    lo, hi = workspace(env, manip, b0, params.margin)
    theta = b0[0].manipuland_pose()[2]
    grasp_inv = se2.inverse(b0[0].grasp)
    n = len(b0)
    while sim.calls - calls0 + n <= budget:
        idx = int(rng.choice(len(tree.nodes), p=tree.weights()))
        xy = rng.uniform(lo, hi)
        th = theta + rng.uniform(-params.theta_spread, params.theta_spread)
        target = np.array([xy[0], xy[1], th])
        u = CompliantMotion(K, se2.compose(target, grasp_inv), params.timeout)
        try:
            post = sim.belief(tree.nodes[idx].belief, u)
        except InvalidStart:
            # the failed particle still consumed simulator calls
            continue
        new = tree.add(post, idx, u, params.grid_cell)
        if ops.goal_satisfied(post, goal):
            motions = tree.path(new)
            result.plan = Plan(motions, [tuple(goal.key)] * len(motions), ["random"] * len(motions))
            finish()
            return result
    finish()
    exc = NoPlan(f"baseline exhausted its budget of {budget} simulator calls")
    exc.result = result
    raise exc


def audit_tree(tree: BeliefTree, sim: Simulator, n: int = 10, rng: np.random.Generator | None = None) -> bool:
    """Re-simulate up to ``n`` random edges and compare with the stored children."""
    rng = rng if rng is not None else np.random.default_rng(0)
    children = [i for i, node in enumerate(tree.nodes) if node.parent is not None]
    if not children:
        return True
    pick = rng.choice(children, size=min(n, len(children)), replace=False)
    for i in pick:
        node = tree.nodes[int(i)]
        again = sim.belief(tree.nodes[node.parent].belief, node.motion)
        if any(a != b for a, b in zip(again, node.belief)):
            return False
    return True
