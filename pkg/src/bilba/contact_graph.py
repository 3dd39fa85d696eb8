"""Mode subgraph over contact pairs, belief-weighted edge costs and Dijkstra."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .belief import Belief, uncertainty_direction
from .errors import DegenerateBelief, EmptyGraph, InvalidParam, NoSchedule, NotOnBoundary
from .geometry import (
    THETA_FD,
    TOL_CONTACT,
    CObsSlice,
    ContactPair,
    boundary_normal,
    edge_normal_for,
    pair_name,
)
from .sim import Configuration


class _Free:
    """The contact-free mode."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "FREE"

    def __reduce__(self):
        return (_Free, ())


FREE = _Free()
Mode = Union[_Free, ContactPair]


def mode_key(m: Mode) -> tuple[int, int]:
    """Sort key: free first, then (env id, manip id)."""
    if m is FREE:
        return (-1, -1)
    return m.key


def _edge(u: Mode, v: Mode) -> frozenset:
    return frozenset((u, v))


@dataclass(frozen=True)
class ModeGraph:
    vertices: frozenset
    edges: dict  # frozenset({u, v}) -> tuple of certificate indices into cobs_vertices
    normals: dict  # ContactPair -> (n_x, n_y, n_theta)
    trans_normals: dict = field(default_factory=dict)  # ContactPair -> unit (n_x, n_y)
    env_rotation: float = 0.0

    def neighbours(self, m: Mode) -> list[Mode]:
        out = [next(iter(e - {m})) for e in self.edges if m in e]
        return sorted(out, key=mode_key)

    def has_edge(self, u: Mode, v: Mode) -> bool:
        return _edge(u, v) in self.edges

    def with_edges(self, edges: dict) -> "ModeGraph":
        return ModeGraph(self.vertices, dict(edges), self.normals, self.trans_normals, self.env_rotation)

    def dump(self, env=None, manip=None, belief: Belief | None = None, delta_proj: float = 0.1) -> dict:
        """Plain-data view of the graph, with edge costs when a belief is given."""

        def nm(m):
            if m is FREE:
                return "free"
            if env is not None and manip is not None:
                return pair_name(m, env, manip)
            return f"{m.env.id}:{m.manip.id}"

        rows = []
        for e in sorted(self.edges, key=lambda e: sorted(mode_key(m) for m in e)):
            u, v = sorted(e, key=mode_key)
            row = {"u": nm(u), "v": nm(v), "certificates": list(self.edges[e])}
            if belief is not None:
                row["cost_uv"] = edge_cost(belief, self, (u, v), delta_proj)
                row["cost_vu"] = edge_cost(belief, self, (v, u), delta_proj)
            rows.append(row)
        return {
            "vertices": [nm(m) for m in sorted(self.vertices, key=mode_key)],
            "edges": rows,
        }


def _mode_normal(slc: CObsSlice, pair: ContactPair) -> tuple[np.ndarray, np.ndarray]:
    nt = edge_normal_for(slc, pair)
    longest = max((e for e in slc.boundary_edges if pair in e.pairs), key=lambda e: e.length)
    mid = 0.5 * (longest.a + longest.b)
    try:
        n_theta = boundary_normal(slc, mid, THETA_FD, TOL_CONTACT)[2]
    except NotOnBoundary:  # pragma: no cover - midpoint lies on its own edge
        n_theta = 0.0
    n3 = np.array([nt[0], nt[1], 0.0])
    # keep the translational direction of the merged face, take n_theta from the local probe
    scale = np.sqrt(max(1.0 - n_theta * n_theta, 0.0))
    n3[:2] *= scale
    n3[2] = n_theta
    return n3 / np.linalg.norm(n3), nt


def make_graph(slc: CObsSlice, env_rotation: float = 0.0) -> ModeGraph:
    """Mode subgraph certified by the slice's C-obs vertices.

    ``env_rotation`` is the world rotation of the environment frame in which
    the slice is expressed; it is used to rotate face normals into the world
    frame when they are compared against belief directions.
    """
    if not slc.boundary_edges:
        raise EmptyGraph("the slice has no boundary")
    verts: set[ContactPair] = set()
    edges: dict[frozenset, list[int]] = {}
    for idx, (_, pairs) in enumerate(slc.cobs_vertices):
        ps = sorted(pairs, key=mode_key)
        verts.update(ps)
        for i in range(len(ps)):
            for j in range(i + 1, len(ps)):
                edges.setdefault(_edge(ps[i], ps[j]), []).append(idx)
    if not verts:
        raise EmptyGraph("no C-obs vertex carries a contact pair")
    normals = {}
    trans = {}
    for p in verts:
        normals[p], trans[p] = _mode_normal(slc, p)
    return ModeGraph(
        frozenset(verts), {e: tuple(c) for e, c in edges.items()}, normals, trans, float(env_rotation)
    )


def connect_free_mode(
    g: ModeGraph,
    slc: CObsSlice,
    q0: Configuration,
    n_free: int = 3,
    n_samples: int = 200,
    rng: np.random.Generator | None = None,
) -> ModeGraph:
    """Link the free mode to the ``n_free`` modes nearest to ``q0``.

    Distances are measured from the manipuland position of ``q0`` (in the
    environment frame) to boundary samples carrying each mode. Ties go to
    the smaller (env id, manip id).
    """
    if n_free <= 0:
        raise InvalidParam("n_free must be positive")
    if n_samples <= 0:
        raise InvalidParam("n_samples must be positive")
    rng = rng if rng is not None else np.random.default_rng(0)
    p0 = q0.manipuland_in_env()[:2]
    edges_b = slc.boundary_edges
    lengths = np.array([e.length for e in edges_b])
    cum = np.cumsum(lengths)
    u = rng.uniform(0.0, cum[-1], size=n_samples)
    nearest: dict[ContactPair, float] = {}
    for ui in u:
        j = min(int(np.searchsorted(cum, ui, side="right")), len(edges_b) - 1)
        e = edges_b[j]
        t = (ui - (cum[j] - lengths[j])) / lengths[j]
        d = float(np.hypot(*(e.a + t * (e.b - e.a) - p0)))
        for pair in e.pairs:
            if pair in g.vertices and d < nearest.get(pair, np.inf):
                nearest[pair] = d
    ranked = sorted(nearest, key=lambda m: (nearest[m], mode_key(m)))[:n_free]
    edges = {e: c for e, c in g.edges.items() if FREE not in e}
    for m in ranked:
        edges[_edge(FREE, m)] = ()
    return ModeGraph(g.vertices | {FREE}, edges, g.normals, g.trans_normals, g.env_rotation)


def _world_normal(g: ModeGraph, m: ContactPair) -> np.ndarray:
    n = g.trans_normals[m]
    c, s = np.cos(g.env_rotation), np.sin(g.env_rotation)
    return np.array([c * n[0] - s * n[1], s * n[0] + c * n[1]])


def _cost(direction: np.ndarray | None, g: ModeGraph, dest: Mode, delta_proj: float) -> float:
    if dest is FREE or direction is None:
        return 1.0
    return float(1.0 - delta_proj * float(direction @ _world_normal(g, dest)))


def _belief_direction(b: Belief) -> np.ndarray | None:
    try:
        return uncertainty_direction(b)
    except DegenerateBelief:  # singleton or collapsed belief: no preferred direction
        return None


def edge_cost(b: Belief, g: ModeGraph, edge: tuple, delta_proj: float = 0.1) -> float:
    """Cost of traversing ``edge = (src, dest)``; only the destination's normal matters."""
    src, dest = edge
    if not g.has_edge(src, dest):
        raise KeyError(f"edge {edge} not in graph")
    return _cost(_belief_direction(b), g, dest, delta_proj)


@dataclass(frozen=True)
class ContactSchedule:
    modes: tuple  # ContactPair, ending at the goal

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __getitem__(self, i):
        return self.modes[i]


def dijkstra_schedule(
    g: ModeGraph, b: Belief, start: Mode, goal: ContactPair, delta_proj: float = 0.1
) -> ContactSchedule:
    """Cheapest mode path from ``start`` to ``goal`` (start excluded).

    Equal-cost paths are resolved by comparing the sequences of mode keys.
    """
    if goal not in g.vertices:
        raise NoSchedule(f"goal {goal} is not a graph vertex")
    if start not in g.vertices:
        raise NoSchedule(f"start mode {start} is not a graph vertex")
    if start == goal:
        return ContactSchedule(())
    direction = _belief_direction(b)
    adj: dict = {m: [] for m in g.vertices}
    for e in g.edges:
        if len(e) != 2:
            continue
        u, v = tuple(e)
        adj[u].append(v)
        adj[v].append(u)
    heap = [(0.0, (mode_key(start),), (start,))]
    done: set = set()
    while heap:
        cost, keys, path = heapq.heappop(heap)
        m = path[-1]
        if m in done:
            continue
        done.add(m)
        if m == goal:
            return ContactSchedule(tuple(path[1:]))
        for n in adj[m]:
            if n in done:
                continue
            c = cost + _cost(direction, g, n, delta_proj)
            heapq.heappush(heap, (c, keys + (mode_key(n),), path + (n,)))
    raise NoSchedule(f"goal {goal} unreachable from {start}")


def prune_edge(g: ModeGraph, step: tuple) -> ModeGraph:
    """Drop the edge ``step = (from_mode, to_mode)``; absent edges are a no-op."""
    e = _edge(*step)
    if e not in g.edges:
        return g
    return g.with_edges({k: v for k, v in g.edges.items() if k != e})
