"""Scenario files: part geometry, nominal poses, uncertainty layout and goal.

Scenarios are YAML documents with ``schema_version: 1``. See README.md for
the full schema. Feature references use ``p<piece>.e<index>`` for edges and
``p<piece>.v<index>`` for vertices, with local indices inside the piece;
a part may also give those references friendlier names.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import se2
from .belief import Belief
from .errors import InvalidGeometry, ScenarioError
from .geometry import ENV, MANIP, ContactPair, ConvexPolygon, PartGeometry, signed_area
from .sim import Configuration, Simulator, SimParams

SCHEMA_VERSION = 1
AXES = ("x", "y", "grasp_y", "pitch", "env_x")
_REF = re.compile(r"^p(\d+)\.([ev])(\d+)$")


@dataclass(frozen=True)
class UncertaintyAxis:
    """One direction of uncertainty.

    ``x`` and ``grasp_y`` shift the grasp, ``pitch`` rotates it (degrees),
    ``y`` and ``env_x`` translate the environment. Lengths are in metres.
    """

    axis: str
    magnitude: float
    count: int = 3

    def offsets(self) -> list[float]:
        """Evenly spaced offsets in ``[-m, m]``, nominal first, then by size with minus before plus."""
        vals = np.linspace(-self.magnitude, self.magnitude, self.count)
        return [float(v) for v in sorted(vals, key=lambda v: (round(abs(v), 12), v))]


@dataclass(frozen=True)
class Offset:
    grasp_x: float = 0.0
    grasp_y: float = 0.0
    pitch: float = 0.0  # radians
    env_x: float = 0.0
    env_y: float = 0.0

    @classmethod
    def along(cls, axis: str, value: float) -> "Offset":
        if axis == "x":
            return cls(grasp_x=value)
        if axis == "grasp_y":
            return cls(grasp_y=value)
        if axis == "pitch":
            return cls(pitch=math.radians(value))
        if axis == "y":
            return cls(env_y=value)
        if axis == "env_x":
            return cls(env_x=value)
        raise ScenarioError(f"unknown uncertainty axis {axis!r}")


@dataclass(frozen=True)
class HoldoutSpec:
    """Held-out belief: ``+-`` extremal particles per axis plus random ones
    drawn uniformly inside the ellipsoid spanned by the axes."""

    axes: tuple[UncertaintyAxis, ...]
    n_random: int = 8
    seed: int = 0


@dataclass(frozen=True)
class Scenario:
    name: str
    manip: PartGeometry
    env: PartGeometry
    gripper_pose: np.ndarray
    grasp: np.ndarray
    env_pose: np.ndarray
    uncertainty: tuple[UncertaintyAxis, ...]
    goal: ContactPair
    params: dict = field(default_factory=dict)
    sim_params: dict = field(default_factory=dict)
    baseline_params: dict = field(default_factory=dict)
    holdout: Optional[HoldoutSpec] = None
    source: str = ""

    def configuration(self, off: Offset = Offset()) -> Configuration:
        grasp = self.grasp + np.array([off.grasp_x, off.grasp_y, 0.0])
        grasp = se2.compose(np.array([0.0, 0.0, off.pitch]), grasp)
        env_pose = self.env_pose + np.array([off.env_x, off.env_y, 0.0])
        return Configuration(self.gripper_pose.copy(), grasp, env_pose)

    def belief(self) -> Belief:
        """Nominal particle followed by the offsets of every axis."""
        offs = [Offset()]
        for ax in self.uncertainty:
            offs += [Offset.along(ax.axis, v) for v in ax.offsets() if v != 0.0]
        return Belief(tuple(self.configuration(o) for o in offs))

    def with_uncertainty(self, axis: str, magnitude: float, count: int = 3) -> "Scenario":
        _check_axis(axis, magnitude, count, "uncertainty")
        return replace(self, uncertainty=(UncertaintyAxis(axis, float(magnitude), int(count)),))

    def holdout_beliefs(self) -> tuple[Belief, Belief]:
        """(extremal particles, random interior particles) of the held-out belief."""
        if self.holdout is None:
            raise ScenarioError(f"scenario {self.name!r} defines no holdout section")
        h = self.holdout
        ext = []
        for ax in h.axes:
            ext += [Offset.along(ax.axis, s * ax.magnitude) for s in (-1.0, 1.0)]
        rng = np.random.default_rng(h.seed)
        rand = []
        while len(rand) < h.n_random:
            v = rng.uniform(-1.0, 1.0, len(h.axes))
            if v @ v > 1.0:
                continue
            total = Offset()
            for ax, c in zip(h.axes, v):
                o = Offset.along(ax.axis, c * ax.magnitude)
                total = Offset(*(a + b for a, b in zip(_fields(total), _fields(o))))
            rand.append(total)
        return (
            Belief(tuple(self.configuration(o) for o in ext)),
            Belief(tuple(self.configuration(o) for o in rand)),
        )

    def goal_names(self) -> tuple[str, str]:
        return self.env.name(self.goal.env.id), self.manip.name(self.goal.manip.id)


def _fields(o: Offset) -> tuple:
    return (o.grasp_x, o.grasp_y, o.pitch, o.env_x, o.env_y)


# ---------------------------------------------------------------------------
# loading


class _Doc:
    """Parsed YAML plus node positions, so errors can cite a line."""

    def __init__(self, text: str, source: str):
        self.source = source
        try:
            self.root = yaml.compose(text)
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" line {mark.line + 1}" if mark is not None else ""
            raise ScenarioError(f"{source}:{where} invalid YAML: {exc}") from exc
        if not isinstance(self.data, dict):
            raise ScenarioError(f"{source}: top level must be a mapping")

    def line(self, path: tuple) -> Optional[int]:
        node = self.root
        best = node.start_mark.line + 1 if node is not None else None
        for key in path:
            if isinstance(node, yaml.MappingNode):
                nxt = None
                for k, v in node.value:
                    if k.value == str(key):
                        nxt = v
                        break
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                nxt = node.value[key]
            else:
                nxt = None
            if nxt is None:
                break
            node = nxt
            best = node.start_mark.line + 1
        return best

    def error(self, path: tuple, msg: str) -> ScenarioError:
        field_name = ".".join(str(p) for p in path) or "<root>"
        ln = self.line(path)
        where = f" line {ln}" if ln is not None else ""
        return ScenarioError(f"{self.source}:{where} field '{field_name}': {msg}")


def _get(doc: _Doc, d: dict, path: tuple, key: str, default: Any = ..., kind=None):
    if key not in d:
        if default is ...:
            raise doc.error(path, f"missing required field '{key}'")
        return default
    v = d[key]
    if kind is not None and not isinstance(v, kind):
        raise doc.error(path + (key,), f"expected {_kind_name(kind)}, got {type(v).__name__}")
    return v


def _kind_name(kind) -> str:
    if isinstance(kind, tuple):
        return " or ".join(k.__name__ for k in kind)
    return kind.__name__


def _pose(doc: _Doc, d: dict, key: str, default=None) -> np.ndarray:
    v = _get(doc, d, (), key, default if default is not None else ...)
    if not (isinstance(v, (list, tuple)) and len(v) == 3 and all(isinstance(c, (int, float)) for c in v)):
        raise doc.error((key,), "expected a pose [x, y, theta]")
    return np.array(v, dtype=float)


def _part(doc: _Doc, d: dict, key: str, owner: str) -> PartGeometry:
    sec = _get(doc, d, (), key, kind=dict)
    pieces = _get(doc, sec, (key,), "pieces", kind=list)
    if not pieces:
        raise doc.error((key, "pieces"), "need at least one piece")
    polys = []
    for k, p in enumerate(pieces):
        path = (key, "pieces", k)
        try:
            v = np.array(p, dtype=float)
        except (TypeError, ValueError):
            raise doc.error(path, f"{key} piece {k} must be a list of [x, y] vertices") from None
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise doc.error(path, f"{key} piece {k} needs at least three [x, y] vertices")
        if signed_area(v) < 0:
            raise doc.error(path, f"{key} piece {k} is wound clockwise; list vertices counter-clockwise")
        try:
            polys.append(ConvexPolygon(v))
        except InvalidGeometry as exc:
            raise doc.error(path, f"{key} piece {k} is not a valid convex polygon: {exc}") from None
    # ids follow the PartGeometry numbering: piece by piece, edges then vertices
    offsets, nxt = [], 0
    for poly in polys:
        offsets.append(nxt)
        nxt += 2 * len(poly)
    names = {}
    raw = _get(doc, sec, (key,), "names", {}, kind=dict)
    for nm, ref in raw.items():
        fid = _resolve_ref(doc, (key, "names", nm), str(ref), polys, offsets)
        if fid in names:
            raise doc.error((key, "names", nm), f"feature {ref} is named twice")
        names[fid] = str(nm)
    try:
        return PartGeometry(tuple(polys), owner, names)
    except InvalidGeometry as exc:
        raise doc.error((key, "pieces"), str(exc)) from None


def _resolve_ref(doc: _Doc, path: tuple, ref: str, polys, offsets) -> int:
    m = _REF.match(ref)
    if not m:
        raise doc.error(path, f"feature reference {ref!r} must look like 'p0.e2' or 'p1.v0'")
    k, kind, i = int(m.group(1)), m.group(2), int(m.group(3))
    if k >= len(polys) or i >= len(polys[k]):
        raise doc.error(path, f"feature reference {ref!r} is out of range")
    return offsets[k] + i + (len(polys[k]) if kind == "v" else 0)


def _feature(doc: _Doc, path: tuple, name: str, part: PartGeometry) -> int:
    m = _REF.match(name)
    if m:
        k, kind, i = int(m.group(1)), m.group(2), int(m.group(3))
        if k < len(part.pieces) and i < len(part.pieces[k]):
            return (part.edge(k, i) if kind == "e" else part.vertex(k, i)).id
    try:
        return part.id_of(name)
    except KeyError:
        raise doc.error(path, f"{part.owner} has no feature {name!r}") from None


def _check_axis(axis, magnitude, count, where: str, doc: _Doc | None = None, path: tuple = ()):
    def fail(msg):
        if doc is not None:
            raise doc.error(path, msg)
        raise ScenarioError(f"{where}: {msg}")

    if axis not in AXES:
        fail(f"axis must be one of {', '.join(AXES)}, got {axis!r}")
    if not isinstance(magnitude, (int, float)) or magnitude < 0:
        fail("magnitude must be a non-negative number")
    if not isinstance(count, int) or count < 1 or count % 2 == 0:
        fail("count must be a positive odd integer")


def _axes(doc: _Doc, raw, path: tuple) -> tuple[UncertaintyAxis, ...]:
    if raw is None:
        return ()
    items = raw if isinstance(raw, list) else [raw]
    out = []
    for j, it in enumerate(items):
        p = path + ((j,) if isinstance(raw, list) else ())
        if not isinstance(it, dict):
            raise doc.error(p, "expected a mapping with axis and magnitude")
        axis = _get(doc, it, p, "axis")
        mag = _get(doc, it, p, "magnitude")
        count = _get(doc, it, p, "count", 3)
        _check_axis(axis, mag, count, "", doc, p)
        out.append(UncertaintyAxis(str(axis), float(mag), int(count)))
    return tuple(out)


def _overrides(doc: _Doc, d: dict, key: str) -> dict:
    v = _get(doc, d, (), key, {}, kind=dict)
    return {str(k): (tuple(x) if isinstance(x, list) else x) for k, x in v.items()}


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    doc = _Doc(text, source)
    d = doc.data
    ver = _get(doc, d, (), "schema_version")
    if ver != SCHEMA_VERSION:
        raise doc.error(("schema_version",), f"unsupported schema_version {ver!r}, expected {SCHEMA_VERSION}")
    manip = _part(doc, d, "manipuland", MANIP)
    env = _part(doc, d, "environment", ENV)
    goal_raw = _get(doc, d, (), "goal", kind=list)
    if len(goal_raw) != 2:
        raise doc.error(("goal",), "expected [environment feature, manipuland feature]")
    ge = _feature(doc, ("goal", 0), str(goal_raw[0]), env)
    gm = _feature(doc, ("goal", 1), str(goal_raw[1]), manip)
    hold = None
    if "holdout" in d:
        h = _get(doc, d, (), "holdout", kind=dict)
        axes = _axes(doc, _get(doc, h, ("holdout",), "axes", kind=list), ("holdout", "axes"))
        n_random = _get(doc, h, ("holdout",), "n_random", 8, kind=int)
        if n_random < 0:
            raise doc.error(("holdout", "n_random"), "must be non-negative")
        hold = HoldoutSpec(axes, n_random, _get(doc, h, ("holdout",), "seed", 0, kind=int))
    scn = Scenario(
        name=str(_get(doc, d, (), "name", Path(source).stem)),
        manip=manip,
        env=env,
        gripper_pose=_pose(doc, d, "gripper_pose"),
        grasp=_pose(doc, d, "grasp"),
        env_pose=_pose(doc, d, "env_pose", [0.0, 0.0, 0.0]),
        uncertainty=_axes(doc, d.get("uncertainty"), ("uncertainty",)),
        goal=ContactPair(env.feature(ge), manip.feature(gm)),
        params=_overrides(doc, d, "params"),
        sim_params=_overrides(doc, d, "sim_params"),
        baseline_params=_overrides(doc, d, "baseline_params"),
        holdout=hold,
        source=source,
    )
    check_start(scn, doc)
    return scn


def check_start(scn: Scenario, doc: _Doc | None = None) -> None:
    """Every particle must start without interpenetration."""
    try:
        sp = SimParams(**scn.sim_params)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{scn.source}: field 'sim_params': {exc}") from None
    sim = Simulator(scn.manip, scn.env, sp)
    for i, q in enumerate(scn.belief()):
        depth = sim.penetration(q)
        if depth > sp.tol_contact:
            msg = f"particle {i} starts {depth:.4g} m inside the environment"
            if doc is not None:
                raise doc.error(("gripper_pose",), msg)
            raise ScenarioError(msg)


def bundled_scenarios() -> list[str]:
    root = resources.files("bilba") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_scenario(path) -> Scenario:
    """Load a scenario file, or a bundled scenario by bare name (``peg_hole``)."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and str(path) in bundled_scenarios():
        res = resources.files("bilba") / "scenarios" / f"{path}.yaml"
        return parse_scenario(res.read_text(), f"{path}.yaml")
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(text, str(path))
