"""Planar belief-space planning of compliant motions for part mating."""

from .baseline import BaselineParams, best_plan
from .belief import Belief, BeliefOps
from .contact_graph import FREE, ModeGraph, dijkstra_schedule, make_graph
from .errors import BilbaError, NoPlan, ScenarioError
from .geometry import ContactPair, PartGeometry, cobs_slice
from .harness import RunReport, evaluate_holdout, run, sweep
from .planner import Plan, PlannerParams, bilba
from .scenario import Scenario, load_scenario
from .sim import CompliantMotion, Configuration, SimParams, Simulator

__version__ = "0.1.0"

__all__ = [
    "BaselineParams",
    "Belief",
    "BeliefOps",
    "BilbaError",
    "CompliantMotion",
    "Configuration",
    "ContactPair",
    "FREE",
    "ModeGraph",
    "NoPlan",
    "PartGeometry",
    "Plan",
    "PlannerParams",
    "RunReport",
    "Scenario",
    "ScenarioError",
    "SimParams",
    "Simulator",
    "best_plan",
    "bilba",
    "cobs_slice",
    "dijkstra_schedule",
    "evaluate_holdout",
    "load_scenario",
    "make_graph",
    "run",
    "sweep",
]
