"""Convex-polygon geometry and configuration-space obstacle slices.

Parts are unions of convex polygons. A slice is the set of manipuland
reference-point positions (environment frame) that make the manipuland
overlap the environment at one fixed relative orientation; it is the union
of the Minkowski sums ``E (+) -R(theta) M`` over all piece pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import se2
from .errors import ContactNotInSlice, InvalidGeometry, NotOnBoundary

TOL_GEOM = 1e-9
TOL_CONTACT = 5e-4
THETA_FD = math.radians(0.5)

ENV = "environment"
MANIP = "manipuland"

# offset used to decide on which side of a cell edge the union lies
_PROBE = 1e-7


def _cross(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _perp_out(d: np.ndarray) -> np.ndarray:
    # outward normal of a CCW edge direction
    return np.array([d[1], -d[0]])


class ConvexPolygon:
    """Strictly convex CCW polygon."""

    __slots__ = ("vertices",)

    def __init__(self, vertices: Sequence[Sequence[float]]):
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise InvalidGeometry(f"polygon needs >=3 2D vertices, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidGeometry("polygon vertices must be finite")
        if signed_area(v) <= 0:
            raise InvalidGeometry("polygon vertices must be counter-clockwise")
        n = len(v)
        for i in range(n):
            prev, cur, nxt = v[i - 1], v[i], v[(i + 1) % n]
            base = nxt - prev
            blen = float(np.hypot(*base))
            if blen <= TOL_GEOM:
                raise InvalidGeometry(f"repeated vertex at index {i}")
            # distance of the vertex to the chord of its neighbours
            if _cross(base, cur - prev) / blen > -TOL_GEOM:
                raise InvalidGeometry(f"vertex {i} is collinear or reflex")
        v.setflags(write=False)
        self.vertices = v

    def __len__(self) -> int:
        return len(self.vertices)

    def __repr__(self) -> str:
        return f"ConvexPolygon({self.vertices.tolist()!r})"

    def edges(self) -> list[tuple[np.ndarray, np.ndarray]]:
        v = self.vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]

    def normals(self) -> np.ndarray:
        d = np.roll(self.vertices, -1, axis=0) - self.vertices
        n = np.stack([d[:, 1], -d[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        c = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        a = c.sum() / 2.0
        return np.array([((v[:, 0] + w[:, 0]) * c).sum(), ((v[:, 1] + w[:, 1]) * c).sum()]) / (6.0 * a)

    def signed_distances(self, p) -> np.ndarray:
        """Signed distance of ``p`` to each edge line (positive outside)."""
        return np.einsum("ij,ij->i", np.asarray(p, float) - self.vertices, self.normals())

    def contains(self, p, tol: float = 0.0) -> bool:
        return bool(self.signed_distances(p).max() <= tol)

    def transformed(self, g: np.ndarray) -> "ConvexPolygon":
        return ConvexPolygon(se2.transform_points(g, self.vertices))


def signed_area(v: np.ndarray) -> float:
    w = np.roll(v, -1, axis=0)
    return float((v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]).sum() / 2.0)


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull, CCW, collinear points dropped."""
    pts = sorted(set(map(tuple, np.asarray(points, float).tolist())))
    if len(pts) < 3:
        return np.array(pts)

    def half(seq):
        out: list[tuple[float, float]] = []
        for p in seq:
            while len(out) >= 2:
                a, b = out[-2], out[-1]
                if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(reversed(pts))
    return np.array(lower[:-1] + upper[:-1])


def minkowski_sum(a: ConvexPolygon, b: ConvexPolygon) -> ConvexPolygon:
    if not isinstance(a, ConvexPolygon) or not isinstance(b, ConvexPolygon):
        raise InvalidGeometry("minkowski_sum takes two ConvexPolygons")
    sums = (a.vertices[:, None, :] + b.vertices[None, :, :]).reshape(-1, 2)
    return ConvexPolygon(convex_hull(sums))


def reflect(p: ConvexPolygon) -> ConvexPolygon:
    """Point reflection through the origin (keeps CCW order)."""
    return ConvexPolygon(-p.vertices)


class Feature(NamedTuple):
    owner: str
    id: int
    kind: str  # "edge" | "vertex"


class ContactPair(NamedTuple):
    env: Feature
    manip: Feature

    @property
    def key(self) -> tuple[int, int]:
        return (self.env.id, self.manip.id)


@dataclass(frozen=True)
class PartGeometry:
    """A rigid part: convex pieces with a global feature index.

    Piece ``k`` edge ``i`` runs from vertex ``i`` to ``i+1``. Ids are handed
    out piece by piece, edges before vertices.
    """

    pieces: tuple[ConvexPolygon, ...]
    owner: str
    names: dict[int, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.pieces:
            raise InvalidGeometry("part needs at least one piece")
        edge_ids, vert_ids = [], []
        nxt = 0
        for p in self.pieces:
            n = len(p)
            edge_ids.append(list(range(nxt, nxt + n)))
            vert_ids.append(list(range(nxt + n, nxt + 2 * n)))
            nxt += 2 * n
        object.__setattr__(self, "edge_ids", edge_ids)
        object.__setattr__(self, "vertex_ids", vert_ids)
        object.__setattr__(self, "n_features", nxt)
        kinds = {}
        where = {}
        for k, p in enumerate(self.pieces):
            for i in range(len(p)):
                kinds[edge_ids[k][i]] = "edge"
                kinds[vert_ids[k][i]] = "vertex"
                where[edge_ids[k][i]] = (k, i)
                where[vert_ids[k][i]] = (k, i)
        object.__setattr__(self, "_kinds", kinds)
        object.__setattr__(self, "_where", where)
        object.__setattr__(self, "edge_exposed", self._exposed_edges())
        object.__setattr__(self, "vertex_exposed", self._exposed_vertices())
        if len(self.pieces) > 1 and not self._connected():
            raise InvalidGeometry(f"{self.owner} pieces do not form a connected union")

    @classmethod
    def from_vertex_lists(cls, pieces, owner: str, names: dict[int, str] | None = None):
        return cls(tuple(ConvexPolygon(p) for p in pieces), owner, dict(names or {}))

    def _exposed_edges(self) -> list[list[bool]]:
        out = []
        for k, p in enumerate(self.pieces):
            flags = []
            for (a, b), n in zip(p.edges(), p.normals()):
                probe = (a + b) / 2.0 + _PROBE * n
                covered = any(q.contains(probe, TOL_GEOM) for j, q in enumerate(self.pieces) if j != k)
                flags.append(not covered)
            out.append(flags)
        return out

    def _exposed_vertices(self) -> list[list[bool]]:
        out = []
        seen: list[np.ndarray] = []
        for k, p in enumerate(self.pieces):
            flags = []
            n = len(p)
            for i, v in enumerate(p.vertices):
                on_exposed = self.edge_exposed[k][i] or self.edge_exposed[k][i - 1]
                dup = any(np.hypot(*(v - s)) <= 1e3 * TOL_GEOM for s in seen)
                flags.append(on_exposed and not dup)
                seen.append(v)
            out.append(flags)
        return out

    def _connected(self) -> bool:
        n = len(self.pieces)
        adj = {i: set() for i in range(n)}
        for i in range(n):
            for j in range(i + 1, n):
                if _polygon_distance(self.pieces[i].vertices, self.pieces[j].vertices) <= 1e3 * TOL_GEOM:
                    adj[i].add(j)
                    adj[j].add(i)
        seen, stack = {0}, [0]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == n

    def feature(self, fid: int) -> Feature:
        return Feature(self.owner, fid, self._kinds[fid])

    def locate(self, fid: int) -> tuple[int, int]:
        """(piece index, local index) of a feature id."""
        return self._where[fid]

    def edge(self, k: int, i: int) -> Feature:
        return Feature(self.owner, self.edge_ids[k][i], "edge")

    def vertex(self, k: int, i: int) -> Feature:
        return Feature(self.owner, self.vertex_ids[k][i], "vertex")

    def name(self, fid: int) -> str:
        if fid in self.names:
            return self.names[fid]
        return ("e" if self._kinds[fid] == "edge" else "v") + str(fid)

    def id_of(self, name: str) -> int:
        for fid, n in self.names.items():
            if n == name:
                return fid
        if name[:1] in "ev" and name[1:].isdigit() and int(name[1:]) in self._kinds:
            return int(name[1:])
        raise KeyError(f"{self.owner} has no feature named {name!r}")

    def posed(self, g: np.ndarray) -> list[np.ndarray]:
        return [se2.transform_points(g, p.vertices) for p in self.pieces]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        allv = np.concatenate([p.vertices for p in self.pieces])
        return allv.min(axis=0), allv.max(axis=0)


def pair_name(pair: ContactPair, env: PartGeometry, manip: PartGeometry) -> str:
    return f"({env.name(pair.env.id)}, {manip.name(pair.manip.id)})"


# ---------------------------------------------------------------------------
# slices


@dataclass(frozen=True)
class BoundaryEdge:
    a: np.ndarray
    b: np.ndarray
    normal: np.ndarray
    pairs: frozenset

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.b - self.a)))

    def distance(self, p) -> float:
        return _point_segment_distance(np.asarray(p, float), self.a, self.b)


@dataclass(frozen=True)
class CObsSlice:
    rotation: float
    cells: tuple[ConvexPolygon, ...]
    boundary_edges: tuple[BoundaryEdge, ...]
    cobs_vertices: tuple[tuple[np.ndarray, frozenset], ...]
    manip: PartGeometry = field(repr=False)
    env: PartGeometry = field(repr=False)

    def pairs(self) -> set[ContactPair]:
        out: set[ContactPair] = set()
        for e in self.boundary_edges:
            out |= e.pairs
        return out

    def nearest_boundary(self, p) -> tuple[float, np.ndarray, BoundaryEdge]:
        p = np.asarray(p, float)
        best = None
        for e in self.boundary_edges:
            q = _closest_on_segment(p, e.a, e.b)
            d = float(np.hypot(*(p - q)))
            if best is None or d < best[0]:
                best = (d, q, e)
        return best


def _point_segment_distance(p, a, b) -> float:
    q = _closest_on_segment(p, a, b)
    return float(math.hypot(p[0] - q[0], p[1] - q[1]))


def _closest_on_segment(p, a, b) -> np.ndarray:
    d = b - a
    L2 = float(d @ d)
    if L2 == 0.0:
        return a.copy()
    t = min(1.0, max(0.0, float((p - a) @ d) / L2))
    return a + t * d


def _support(verts: np.ndarray, n: np.ndarray, tol: float) -> list[int]:
    h = verts @ n
    return [int(i) for i in np.flatnonzero(h >= h.max() - tol)]


def _label_cell_edge(n, env_piece, k_env, neg_manip, k_manip, env, manip) -> frozenset:
    """Contact pairs generating a Minkowski cell edge with outward normal n."""
    scale = max(1.0, float(np.abs(env_piece).max()), float(np.abs(neg_manip).max()))
    tol = 1e3 * TOL_GEOM * scale
    se = _support(env_piece, n, tol)
    sm = _support(neg_manip, n, tol)
    ne, nm = len(env_piece), len(neg_manip)

    def env_feat():
        if len(se) >= 2:
            i = _edge_index(se, ne)
            return env.edge(k_env, i), env.edge_exposed[k_env][i]
        return env.vertex(k_env, se[0]), env.vertex_exposed[k_env][se[0]]

    def manip_feat():
        if len(sm) >= 2:
            i = _edge_index(sm, nm)
            return manip.edge(k_manip, i), manip.edge_exposed[k_manip][i]
        return manip.vertex(k_manip, sm[0]), manip.vertex_exposed[k_manip][sm[0]]

    fe, ok_e = env_feat()
    fm, ok_m = manip_feat()
    if fe.kind == "vertex" and fm.kind == "vertex":
        return frozenset()
    if not (ok_e and ok_m):
        return frozenset()
    return frozenset({ContactPair(fe, fm)})


def _edge_index(idx: list[int], n: int) -> int:
    # edge i joins vertex i and i+1 (cyclic); idx holds both endpoints
    s = set(idx)
    for i in idx:
        if (i + 1) % n in s:
            return i
    return idx[0]


def _segment_splits(p, r, q, w, eps=1e-12) -> list[float]:
    """Parameters along p + s r where segment q + u w touches it."""
    denom = _cross(r, w)
    qp = q - p
    rr = float(r @ r)
    if abs(denom) > 1e-14 * max(rr, float(w @ w)):
        s = _cross(qp, w) / denom
        u = _cross(qp, r) / denom
        if -eps <= s <= 1 + eps and -eps <= u <= 1 + eps:
            return [min(1.0, max(0.0, s))]
        return []
    if abs(_cross(qp, r)) > 1e-12 * math.sqrt(rr):
        return []
    out = []
    for pt in (q, q + w):
        s = float((pt - p) @ r) / rr
        if 0.0 < s < 1.0:
            out.append(s)
    return out


class _PointSet:
    def __init__(self, tol: float):
        self.tol = tol
        self.points: list[np.ndarray] = []

    def index(self, p: np.ndarray) -> int:
        for i, q in enumerate(self.points):
            if abs(p[0] - q[0]) <= self.tol and abs(p[1] - q[1]) <= self.tol:
                return i
        self.points.append(np.asarray(p, float).copy())
        return len(self.points) - 1


def cobs_slice(manip: PartGeometry, env: PartGeometry, theta: float) -> CObsSlice:
    if not math.isfinite(theta):
        raise InvalidGeometry("slice rotation must be finite")
    R = se2.rot(theta)
    cells: list[ConvexPolygon] = []
    cell_edges: list[list[tuple[np.ndarray, np.ndarray, np.ndarray, frozenset]]] = []
    for ke, ep in enumerate(env.pieces):
        for km, mp in enumerate(manip.pieces):
            neg = -(mp.vertices @ R.T)
            cell = minkowski_sum(ep, ConvexPolygon(neg))
            cells.append(cell)
            edges = []
            for (a, b), n in zip(cell.edges(), cell.normals()):
                labels = _label_cell_edge(n, ep.vertices, ke, neg, km, env, manip)
                edges.append((a, b, n, labels))
            cell_edges.append(edges)

    pts = _PointSet(10 * TOL_GEOM)
    raw: dict[tuple[int, int], tuple[np.ndarray, set]] = {}
    for ci, edges in enumerate(cell_edges):
        for a, b, n, labels in edges:
            r = b - a
            splits = {0.0, 1.0}
            for cj, other in enumerate(cell_edges):
                if cj == ci:
                    continue
                for c, d, _, _ in other:
                    splits.update(_segment_splits(a, r, c, d - c))
            ss = sorted(splits)
            for s0, s1 in zip(ss[:-1], ss[1:]):
                if (s1 - s0) * math.sqrt(float(r @ r)) <= 10 * TOL_GEOM:
                    continue
                p0, p1 = a + s0 * r, a + s1 * r
                probe = (p0 + p1) / 2.0 + _PROBE * n
                if any(cells[cj].contains(probe, 0.0) for cj in range(len(cells)) if cj != ci):
                    continue
                i0, i1 = pts.index(p0), pts.index(p1)
                if i0 == i1:
                    continue
                key = (min(i0, i1), max(i0, i1))
                if key in raw:
                    raw[key][1].update(labels)
                else:
                    raw[key] = (n, set(labels), i0, i1)

    segs = {k: [v[2], v[3], v[0], frozenset(v[1])] for k, v in raw.items()}
    segs = _merge_collinear(segs, pts)

    edges_out = []
    incident: dict[int, set] = {}
    for i0, i1, n, labels in segs.values():
        edges_out.append(BoundaryEdge(pts.points[i0], pts.points[i1], n, labels))
        incident.setdefault(i0, set()).update(labels)
        incident.setdefault(i1, set()).update(labels)
    verts = tuple(
        (pts.points[i], frozenset(s)) for i, s in sorted(incident.items()) if len(s) >= 2
    )
    edges_out.sort(key=lambda e: (sorted(p.key for p in e.pairs), e.a[0], e.a[1]))
    return CObsSlice(float(theta), tuple(cells), tuple(edges_out), verts, manip, env)


def _merge_collinear(segs: dict, pts: _PointSet) -> dict:
    changed = True
    while changed:
        changed = False
        by_vertex: dict[int, list] = {}
        for k, s in segs.items():
            by_vertex.setdefault(s[0], []).append(k)
            by_vertex.setdefault(s[1], []).append(k)
        for v, ks in by_vertex.items():
            if len(ks) != 2:
                continue
            s, t = segs[ks[0]], segs[ks[1]]
            if s[3] != t[3] or abs(_cross(s[2], t[2])) > 1e-9 or float(s[2] @ t[2]) < 0:
                continue
            ends = [i for i in (s[0], s[1], t[0], t[1]) if i != v]
            if len(ends) != 2 or ends[0] == ends[1]:
                continue
            del segs[ks[0]]
            del segs[ks[1]]
            # keep CCW direction: start of the one that ends at v
            start = s[0] if s[1] == v else t[0]
            end = t[1] if t[0] == v else s[1]
            segs[(min(start, end), max(start, end))] = [start, end, s[2], s[3]]
            changed = True
            break
    return segs


def contains(slc: CObsSlice, p, tol_contact: float = TOL_CONTACT) -> str:
    """Classify ``p`` as ``"interior"``, ``"boundary"`` or ``"exterior"``."""
    p = np.asarray(p, float)
    if slc.boundary_edges:
        d, _, _ = slc.nearest_boundary(p)
        if d <= tol_contact:
            return "boundary"
    if any(c.contains(p, 0.0) for c in slc.cells):
        return "interior"
    return "exterior"


def interior_mask(slc: CObsSlice, points) -> np.ndarray:
    """Vectorised strict interior test for an ``(N, 2)`` array of points."""
    P = np.asarray(points, float).reshape(-1, 2)
    out = np.zeros(len(P), dtype=bool)
    for c in slc.cells:
        d = (P[:, None, :] - c.vertices[None, :, :]) * c.normals()[None, :, :]
        out |= d.sum(axis=2).max(axis=1) < 0.0
    return out


def boundary_normal(
    slc: CObsSlice, p, theta_fd: float = THETA_FD, tol_contact: float = TOL_CONTACT
) -> np.ndarray:
    """Unit outward normal ``(n_x, n_y, n_theta)`` of the slice boundary at ``p``.

    ``n_theta`` comes from a central difference of the signed penetration
    depth over the relative rotation; at corners the translational part is
    the normalised mean of the incident edge normals.
    """
    p = np.asarray(p, float)
    near = [e for e in slc.boundary_edges if e.distance(p) <= tol_contact]
    if not near:
        raise NotOnBoundary(f"point {p.tolist()} is not on the slice boundary")
    normals: list[np.ndarray] = []
    for e in near:
        if not any(np.allclose(e.normal, m, atol=1e-12) for m in normals):
            normals.append(e.normal)
    nt = np.mean(normals, axis=0)
    norm = float(np.hypot(*nt))
    if norm < 1e-12:
        nt = near[0].normal
    else:
        nt = nt / norm
    hi = signed_depth(slc.manip, slc.env, np.array([p[0], p[1], slc.rotation + theta_fd]))
    lo = signed_depth(slc.manip, slc.env, np.array([p[0], p[1], slc.rotation - theta_fd]))
    dtheta = (hi - lo) / (2.0 * theta_fd)
    n = np.array([nt[0], nt[1], -dtheta])
    return n / np.linalg.norm(n)


def sample_boundary(slc: CObsSlice, pair: ContactPair, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    edges = [e for e in slc.boundary_edges if pair in e.pairs]
    if not edges:
        raise ContactNotInSlice(f"contact pair {pair} does not label any boundary edge")
    if n <= 0:
        return []
    lengths = np.array([e.length for e in edges])
    cum = np.cumsum(lengths)
    u = rng.uniform(0.0, cum[-1], size=n)
    out = []
    for ui in u:
        j = min(int(np.searchsorted(cum, ui, side="right")), len(edges) - 1)
        start = cum[j] - lengths[j]
        t = (ui - start) / lengths[j]
        e = edges[j]
        out.append(e.a + t * (e.b - e.a))
    return out


def edge_normal_for(slc: CObsSlice, pair: ContactPair) -> np.ndarray:
    """Length-weighted mean translational normal of edges labelled ``pair``."""
    acc = np.zeros(2)
    for e in slc.boundary_edges:
        if pair in e.pairs:
            acc += e.length * e.normal
    n = float(np.hypot(*acc))
    if n == 0.0:
        raise ContactNotInSlice(f"contact pair {pair} does not label any boundary edge")
    return acc / n


# ---------------------------------------------------------------------------
# pairwise polygon queries


def _polygon_distance(a: np.ndarray, b: np.ndarray) -> float:
    best = math.inf
    for P, Q in ((a, b), (b, a)):
        for p in P:
            for i in range(len(Q)):
                best = min(best, _point_segment_distance(p, Q[i], Q[(i + 1) % len(Q)]))
    return best


def sat_overlap(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum projection overlap over both polygons' edge normals.

    Positive means the interiors intersect (the value is the penetration
    depth); non-positive means a separating axis exists.
    """
    best = math.inf
    for P in (a, b):
        d = np.roll(P, -1, axis=0) - P
        n = np.stack([d[:, 1], -d[:, 0]], axis=1)
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        pa = a @ n.T
        pb = b @ n.T
        ov = np.minimum(pa.max(axis=0), pb.max(axis=0)) - np.maximum(pa.min(axis=0), pb.min(axis=0))
        best = min(best, float(ov.min()))
    return best


def signed_depth(manip: PartGeometry, env: PartGeometry, q_rel: np.ndarray) -> float:
    """Penetration depth of the deepest overlapping piece pair, or minus the
    separation distance when nothing overlaps. ``q_rel`` is the manipuland
    pose in the environment frame."""
    mp = manip.posed(q_rel)
    best = -math.inf
    for a in mp:
        for b in env.pieces:
            ov = sat_overlap(a, b.vertices)
            best = max(best, ov if ov > 0 else -_polygon_distance(a, b.vertices))
    return best


def overlaps(manip: PartGeometry, env: PartGeometry, q_rel: np.ndarray, tol: float = 0.0) -> bool:
    mp = manip.posed(q_rel)
    return any(sat_overlap(a, b.vertices) > tol for a in mp for b in env.pieces)
