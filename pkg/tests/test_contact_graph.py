import numpy as np
import pytest

from bilba.belief import Belief
from bilba.contact_graph import (
    FREE,
    connect_free_mode,
    dijkstra_schedule,
    edge_cost,
    make_graph,
    mode_key,
    prune_edge,
)
from bilba.errors import InvalidParam, NoSchedule
from bilba.geometry import cobs_slice

from oracles import brute_force_shortest


@pytest.fixture(scope="module")
def peg_graph(peg):
    slc = cobs_slice(peg.manip, peg.env, 0.0)
    g = make_graph(slc)
    return slc, g


def _name(peg, m):
    return "free" if m is FREE else f"{peg.env.name(m.env.id)}/{peg.manip.name(m.manip.id)}"


def test_graph_edges_come_from_certificates(peg_graph):
    slc, g = peg_graph
    for e, certs in g.edges.items():
        assert certs
        for c in certs:
            assert e <= slc.cobs_vertices[c][1]


def test_goal_mode_neighbours(peg, peg_graph):
    _, g = peg_graph
    names = {_name(peg, m) for m in g.neighbours(peg.goal)}
    # sliding off the hole floor lands the peg's sides on the hole walls
    assert names == {"L/l", "R/r"}


def test_free_mode_links_nearest(peg, peg_graph):
    slc, g = peg_graph
    q0 = peg.belief()[0]
    gf = connect_free_mode(g, slc, q0, n_free=3, n_samples=500, rng=np.random.default_rng(0))
    linked = gf.neighbours(FREE)
    assert len(linked) == 3
    # free edges carry no certificate and do not disturb other edges
    assert all(gf.edges[frozenset((FREE, m))] == () for m in linked)
    assert {e: c for e, c in gf.edges.items() if FREE not in e} == g.edges
    with pytest.raises(InvalidParam):
        connect_free_mode(g, slc, q0, n_free=0)


def test_edge_cost_formula(peg, peg_graph):
    _, g = peg_graph
    b = peg.belief()  # spread along x
    delta = 0.1
    for e in g.edges:
        u, v = sorted(e, key=mode_key)
        for src, dest in ((u, v), (v, u)):
            n = g.trans_normals[dest]
            expected = 1.0 - delta * float(np.array([1.0, 0.0]) @ n)
            assert abs(edge_cost(b, g, (src, dest), delta) - expected) < 1e-12


def test_dijkstra_matches_brute_force(peg, peg_graph):
    slc, g = peg_graph
    gf = connect_free_mode(g, slc, peg.belief()[0], n_free=7, n_samples=2000, rng=np.random.default_rng(1))
    b = peg.belief()
    verts = sorted(gf.vertices, key=mode_key)

    def cost(m):
        return 1.0 if m is FREE else 1.0 - 0.1 * float(np.array([1.0, 0.0]) @ gf.trans_normals[m])

    for goal in verts:
        if goal is FREE:
            continue
        sched = dijkstra_schedule(gf, b, FREE, goal, 0.1)
        best = brute_force_shortest(verts, set(gf.edges), FREE, goal, cost)
        got = sum(cost(m) for m in sched)
        assert abs(got - best[0]) < 1e-12
        assert sched[-1] == goal


def test_dijkstra_trivial_and_missing(peg, peg_graph):
    _, g = peg_graph
    b = peg.belief()
    assert len(dijkstra_schedule(g, b, peg.goal, peg.goal)) == 0
    with pytest.raises(NoSchedule):
        dijkstra_schedule(g, b, FREE, peg.goal)  # free mode not linked yet


def test_prune_edge(peg, peg_graph):
    _, g = peg_graph
    e = next(iter(sorted(g.edges, key=lambda e: sorted(mode_key(m) for m in e))))
    u, v = tuple(e)
    pruned = prune_edge(g, (u, v))
    assert not pruned.has_edge(u, v) and g.has_edge(u, v)
    assert prune_edge(pruned, (u, v)) is pruned


def test_pruning_redirects_schedule(peg, peg_graph):
    slc, g = peg_graph
    gf = connect_free_mode(g, slc, peg.belief()[0], n_free=7, n_samples=2000, rng=np.random.default_rng(1))
    b = peg.belief()
    first = dijkstra_schedule(gf, b, FREE, peg.goal)
    cut = prune_edge(gf, (FREE, first[0]))
    try:
        second = dijkstra_schedule(cut, b, FREE, peg.goal)
    except NoSchedule:
        return
    assert second[0] != first[0]


def test_degenerate_belief_gives_unit_costs(peg, peg_graph):
    _, g = peg_graph
    b = Belief((peg.belief()[0],))
    e = next(iter(g.edges))
    u, v = tuple(e)
    assert edge_cost(b, g, (u, v)) == 1.0
