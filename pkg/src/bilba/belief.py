"""Particle beliefs and the contact-set operators used to score them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateBelief
from .geometry import TOL_CONTACT, ContactPair, PartGeometry
from .sim import Configuration

ContactSet = frozenset  # of ContactPair


@dataclass(frozen=True)
class Belief:
    particles: tuple[Configuration, ...]

    def __post_init__(self):
        ps = tuple(self.particles)
        if not ps:
            raise ValueError("a belief needs at least one particle")
        object.__setattr__(self, "particles", ps)

    def __len__(self) -> int:
        return len(self.particles)

    def __iter__(self):
        return iter(self.particles)

    def __getitem__(self, i: int) -> Configuration:
        return self.particles[i]

    def manip_positions(self) -> np.ndarray:
        return np.array([q.manipuland_pose()[:2] for q in self.particles])


def contacts_of(q: Configuration, env: PartGeometry, manip: PartGeometry, tol_contact: float = TOL_CONTACT) -> ContactSet:
    """Contact pairs active at ``q``.

    A feature pair is active when the witness gap is within ``tol_contact``
    and the opposing piece lies on the outer side of the edge involved.
    Parallel edges that touch over a stretch longer than the tolerance are
    reported as one edge-edge pair instead of their endpoint vertices.
    """
    rel = q.manipuland_in_env()
    mposed = manip.posed(rel)
    tol = tol_contact
    found: set[ContactPair] = set()
    for ke, ep in enumerate(env.pieces):
        E = ep.vertices
        En = ep.normals()
        for km, M in enumerate(mposed):
            Mn = _normals(M)
            ee_pairs: set[tuple[int, int]] = set()
            # environment edges against the manipuland
            for i in range(len(E)):
                if not env.edge_exposed[ke][i]:
                    continue
                a, b, n = E[i], E[(i + 1) % len(E)], En[i]
                L = float(np.hypot(*(b - a)))
                t = (b - a) / L
                d = (M - a) @ n
                if abs(d.min()) > tol:
                    continue
                s = (M - a) @ t
                covered: set[int] = set()
                for j in range(len(M)):
                    if not manip.edge_exposed[km][j]:
                        continue
                    j2 = (j + 1) % len(M)
                    if Mn[j] @ n >= 0:
                        continue
                    lo, hi = max(0.0, min(s[j], s[j2])), min(L, max(s[j], s[j2]))
                    if hi - lo <= tol:
                        continue
                    dl = np.interp(lo, sorted((s[j], s[j2])), [d[j], d[j2]] if s[j] <= s[j2] else [d[j2], d[j]])
                    dh = np.interp(hi, sorted((s[j], s[j2])), [d[j], d[j2]] if s[j] <= s[j2] else [d[j2], d[j]])
                    if abs(dl) <= tol and abs(dh) <= tol:
                        found.add(ContactPair(env.edge(ke, i), manip.edge(km, j)))
                        ee_pairs.add((i, j))
                        covered.update((j, j2))
                for j in range(len(M)):
                    if j in covered or not manip.vertex_exposed[km][j]:
                        continue
                    if d[j] <= tol and -tol <= s[j] <= L + tol:
                        found.add(ContactPair(env.edge(ke, i), manip.vertex(km, j)))
            # manipuland edges against environment vertices
            for j in range(len(M)):
                if not manip.edge_exposed[km][j]:
                    continue
                a, b, n = M[j], M[(j + 1) % len(M)], Mn[j]
                L = float(np.hypot(*(b - a)))
                t = (b - a) / L
                d = (E - a) @ n
                if abs(d.min()) > tol:
                    continue
                s = (E - a) @ t
                for i in range(len(E)):
                    if not env.vertex_exposed[ke][i]:
                        continue
                    if (i, j) in ee_pairs or ((i - 1) % len(E), j) in ee_pairs:
                        continue
                    if d[i] <= tol and -tol <= s[i] <= L + tol:
                        found.add(ContactPair(env.vertex(ke, i), manip.edge(km, j)))
    return frozenset(found)


def _normals(P: np.ndarray) -> np.ndarray:
    d = np.roll(P, -1, axis=0) - P
    n = np.stack([d[:, 1], -d[:, 0]], axis=1)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def belief_contacts(b: Belief, env: PartGeometry, manip: PartGeometry, tol_contact: float = TOL_CONTACT) -> list[ContactSet]:
    return [contacts_of(q, env, manip, tol_contact) for q in b.particles]


def common_contacts(sets: Sequence[ContactSet]) -> ContactSet:
    it = iter(sets)
    out = set(next(it))
    for s in it:
        out &= s
    return frozenset(out)


def union_contacts(sets: Iterable[ContactSet]) -> ContactSet:
    out: set = set()
    for s in sets:
        out |= s
    return frozenset(out)


def iou(a: ContactSet, b: ContactSet) -> float:
    u = a | b
    if not u:
        return 1.0
    return len(a & b) / len(u)


def score(sets: Sequence[ContactSet], desired: ContactPair, lam: float = 0.5) -> float:
    """Particles holding ``desired`` plus ``lam`` times the IOU of the common
    and union contact sets."""
    hits = sum(1 for s in sets if desired in s)
    return hits + lam * iou(common_contacts(sets), union_contacts(sets))


def goal_satisfied(sets: Sequence[ContactSet], goal: ContactPair) -> bool:
    return goal in common_contacts(sets)


def uncertainty_direction(b: Belief) -> np.ndarray:
    """Top eigenvector of the centred scatter of manipuland positions."""
    if len(b) < 2:
        raise DegenerateBelief("need at least two particles")
    P = b.manip_positions()
    C = P - P.mean(axis=0)
    S = C.T @ C
    if np.allclose(C, 0.0, atol=1e-12):
        raise DegenerateBelief("all particles share one manipuland position")
    w, V = np.linalg.eigh(S)
    u = V[:, int(np.argmax(w))]
    return _fix_sign(u / np.linalg.norm(u))


def _fix_sign(u: np.ndarray) -> np.ndarray:
    for c in u:
        if abs(c) > 1e-12:
            return u if c > 0 else -u
    return u


class BeliefOps:
    """Contact queries bound to one part pair."""

    def __init__(self, env: PartGeometry, manip: PartGeometry, tol_contact: float = TOL_CONTACT):
        self.env = env
        self.manip = manip
        self.tol_contact = tol_contact

    def contacts(self, q: Configuration) -> ContactSet:
        return contacts_of(q, self.env, self.manip, self.tol_contact)

    def sets(self, b: Belief) -> list[ContactSet]:
        return [self.contacts(q) for q in b.particles]

    def common(self, b: Belief) -> ContactSet:
        return common_contacts(self.sets(b))

    def union(self, b: Belief) -> ContactSet:
        return union_contacts(self.sets(b))

    def score(self, b: Belief, desired: ContactPair, lam: float = 0.5) -> float:
        return score(self.sets(b), desired, lam)

    def goal_satisfied(self, b: Belief, goal: ContactPair) -> bool:
        return goal_satisfied(self.sets(b), goal)
