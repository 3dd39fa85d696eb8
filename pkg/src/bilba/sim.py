"""Deterministic planar simulator for compliant motions.

The gripper and the grasped manipuland move as one rigid body pulled toward
a setpoint by a Cartesian spring-damper with damping ``B = 2 sqrt(K)``.
Contact with the fixed environment uses penalty normal forces and
tanh-regularised Coulomb friction. Only the gripper pose changes; grasp and
environment pose are carried through untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernel, se2
from .errors import InvalidStart
from .geometry import TOL_CONTACT, PartGeometry


@dataclass(frozen=True, eq=False)
class Configuration:
    gripper_pose: np.ndarray
    grasp: np.ndarray
    env_pose: np.ndarray

    def __post_init__(self):
        for name in ("gripper_pose", "grasp", "env_pose"):
            a = np.array(getattr(self, name), dtype=float).reshape(3)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def manipuland_pose(self) -> np.ndarray:
        return se2.compose(self.gripper_pose, self.grasp)

    def manipuland_in_env(self) -> np.ndarray:
        return se2.compose(se2.inverse(self.env_pose), self.manipuland_pose())

    def with_gripper(self, g: np.ndarray) -> "Configuration":
        return replace(self, gripper_pose=np.asarray(g, float))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return (
            np.array_equal(self.gripper_pose, other.gripper_pose)
            and np.array_equal(self.grasp, other.grasp)
            and np.array_equal(self.env_pose, other.env_pose)
        )

    def __hash__(self) -> int:
        return hash((self.gripper_pose.tobytes(), self.grasp.tobytes(), self.env_pose.tobytes()))


def stiffness_matrix(k_rot: float, k_trans) -> np.ndarray:
    """Block-diagonal 3x3 stiffness over ``(phi, x, y)``."""
    K = np.zeros((3, 3))
    K[0, 0] = k_rot
    K[1:, 1:] = np.asarray(k_trans, float) if np.ndim(k_trans) == 2 else np.eye(2) * float(k_trans)
    return K


@dataclass(frozen=True, eq=False)
class CompliantMotion:
    stiffness: np.ndarray
    setpoint: np.ndarray
    timeout: float = 5.0

    def __post_init__(self):
        K = np.array(self.stiffness, dtype=float).reshape(3, 3)
        if not np.allclose(K, K.T, atol=1e-9):
            raise ValueError("stiffness must be symmetric")
        if np.any(np.abs(K[0, 1:]) > 1e-12):
            raise ValueError("rotational and translational stiffness must be decoupled")
        if np.linalg.eigvalsh(K).min() < -1e-9:
            raise ValueError("stiffness must be positive semi-definite")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        sp = np.array(self.setpoint, dtype=float).reshape(3)
        K.setflags(write=False)
        sp.setflags(write=False)
        object.__setattr__(self, "stiffness", K)
        object.__setattr__(self, "setpoint", sp)

    @property
    def k_rot(self) -> float:
        return float(self.stiffness[0, 0])

    @property
    def k_trans(self) -> np.ndarray:
        return self.stiffness[1:, 1:]

    def damping(self) -> tuple[float, np.ndarray]:
        w, V = np.linalg.eigh(self.k_trans)
        Bt = 2.0 * (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
        return 2.0 * math.sqrt(max(self.k_rot, 0.0)), Bt

    def to_dict(self) -> dict:
        return {
            "stiffness": self.stiffness.tolist(),
            "setpoint": self.setpoint.tolist(),
            "timeout": self.timeout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompliantMotion":
        return cls(np.array(d["stiffness"]), np.array(d["setpoint"]), float(d.get("timeout", 5.0)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, CompliantMotion):
            return NotImplemented
        return (
            np.array_equal(self.stiffness, other.stiffness)
            and np.array_equal(self.setpoint, other.setpoint)
            and self.timeout == other.timeout
        )

    __hash__ = None


@dataclass(frozen=True)
class SimParams:
    dt: float = 1e-3
    mass: float = 1.0
    inertia: float = 0.01
    contact_stiffness: float = 1e6
    contact_damping_ratio: float = 1.0
    friction: float = 0.3
    slip_velocity: float = 1e-3
    rest_velocity_eps: float = 1e-4
    rest_steps: int = 50
    max_steps: int = 100_000
    tol_contact: float = TOL_CONTACT

    def __post_init__(self):
        for name in ("dt", "mass", "inertia", "contact_stiffness", "slip_velocity",
                     "rest_velocity_eps", "rest_steps", "max_steps", "tol_contact"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SimParams.{name} must be positive")
        if self.friction < 0:
            raise ValueError("SimParams.friction must be non-negative")

    @property
    def contact_damping(self) -> float:
        return 2.0 * self.contact_damping_ratio * math.sqrt(self.contact_stiffness * self.mass)


@dataclass
class _Arrays:
    M: np.ndarray
    mstart: np.ndarray
    mcount: np.ndarray
    medge_exp: np.ndarray


def _manip_arrays(part: PartGeometry) -> _Arrays:
    M = np.concatenate([p.vertices for p in part.pieces]).astype(float)
    counts = np.array([len(p) for p in part.pieces], dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    exp = np.array([f for flags in part.edge_exposed for f in flags], dtype=np.bool_)
    return _Arrays(np.ascontiguousarray(M), starts, counts, exp)


def _env_arrays(part: PartGeometry, env_pose: np.ndarray):
    E = np.concatenate(part.posed(env_pose)).astype(float)
    counts = np.array([len(p) for p in part.pieces], dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    EN = np.empty_like(E)
    for s, n in zip(starts, counts):
        P = E[s:s + n]
        d = np.roll(P, -1, axis=0) - P
        nn = np.stack([d[:, 1], -d[:, 0]], axis=1)
        EN[s:s + n] = nn / np.linalg.norm(nn, axis=1, keepdims=True)
    eexp = np.array([f for flags in part.edge_exposed for f in flags], dtype=np.bool_)
    vexp = np.array([f for flags in part.vertex_exposed for f in flags], dtype=np.bool_)
    return np.ascontiguousarray(E), EN, starts, counts, eexp, vexp


@dataclass
class MotionResult:
    configuration: Configuration
    steps: int
    max_depth: float


class Simulator:
    """f(q, u) and f_bel(b, u) for one manipuland/environment pair.

    ``calls`` counts single-configuration simulations; ``belief_calls``
    counts belief propagations.
    """

    def __init__(self, manip: PartGeometry, env: PartGeometry, params: SimParams | None = None):
        self.manip = manip
        self.env = env
        self.params = params or SimParams()
        self._m = _manip_arrays(manip)
        self._env_cache: dict[bytes, tuple] = {}
        self.calls = 0
        self.belief_calls = 0

    def _env(self, env_pose: np.ndarray):
        key = np.asarray(env_pose, float).tobytes()
        arr = self._env_cache.get(key)
        if arr is None:
            arr = _env_arrays(self.env, env_pose)
            self._env_cache[key] = arr
        return arr

    def penetration(self, q: Configuration) -> float:
        m = self._m
        return float(_kernel.penetration(
            np.array(q.gripper_pose), np.array(q.grasp), m.M, m.mstart, m.mcount, m.medge_exp,
            *self._env(q.env_pose),
        ))

    def run(self, q: Configuration, u: CompliantMotion, params: SimParams | None = None) -> MotionResult:
        p = params or self.params
        m = self._m
        br, Bt = u.damping()
        n_steps = min(int(round(u.timeout / p.dt)), p.max_steps)
        g, status, steps, maxd = _kernel.integrate(
            np.array(q.gripper_pose), np.array(q.grasp), m.M, m.mstart, m.mcount, m.medge_exp,
            *self._env(q.env_pose),
            np.ascontiguousarray(u.k_trans), u.k_rot, np.ascontiguousarray(Bt), br,
            np.array(u.setpoint),
            p.dt, p.mass, p.inertia, p.contact_stiffness, p.contact_damping,
            p.friction, p.slip_velocity, p.rest_velocity_eps, p.rest_steps, n_steps,
            p.tol_contact,
        )
        self.calls += 1
        if status == _kernel.STATUS_PENETRATING_START:
            raise InvalidStart(f"initial penetration {maxd:.3g} m exceeds {p.tol_contact:g} m")
        return MotionResult(q.with_gripper(g), int(steps), float(maxd))

    def motion(self, q: Configuration, u: CompliantMotion) -> Configuration:
        return self.run(q, u).configuration

    def belief(self, b, u: CompliantMotion):
        from .belief import Belief

        out = []
        for i, q in enumerate(b.particles):
            try:
                out.append(self.motion(q, u))
            except InvalidStart as exc:
                raise InvalidStart(str(exc), particle=i) from None
        self.belief_calls += 1
        return Belief(tuple(out))

    def plan(self, b, motions: Sequence[CompliantMotion]):
        for u in motions:
            b = self.belief(b, u)
        return b


def simulate_motion(q: Configuration, u: CompliantMotion, params: SimParams, sim: Simulator) -> Configuration:
    return sim.run(q, u, params).configuration


def simulate_belief(b, u: CompliantMotion, sim: Simulator):
    return sim.belief(b, u)


def simulate_plan(b, plan: Sequence[CompliantMotion], sim: Simulator):
    return sim.plan(b, plan)
