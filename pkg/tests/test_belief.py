import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bilba.belief import (
    Belief,
    BeliefOps,
    common_contacts,
    contacts_of,
    iou,
    score,
    uncertainty_direction,
    union_contacts,
)
from bilba.errors import DegenerateBelief
from bilba.geometry import ContactPair, Feature
from bilba.sim import Configuration

from oracles import score_by_formula, top_eigvec_2x2

PAIRS = [ContactPair(Feature("environment", e, "edge"), Feature("manipuland", m, "edge")) for e in range(4) for m in range(3)]
contact_sets = st.lists(st.frozensets(st.sampled_from(PAIRS), max_size=6), min_size=1, max_size=6)


@settings(max_examples=200)
@given(contact_sets, st.sampled_from(PAIRS), st.floats(0.01, 0.99))
def test_score_matches_formula(sets, desired, lam):
    assert score(sets, desired, lam) == score_by_formula(sets, desired, lam)


@given(contact_sets)
def test_common_within_union(sets):
    assert common_contacts(sets) <= union_contacts(sets)
    assert 0.0 <= iou(common_contacts(sets), union_contacts(sets)) <= 1.0


def test_iou_of_empty_sets_is_one():
    assert iou(frozenset(), frozenset()) == 1.0


def test_score_examples():
    a, b = PAIRS[0], PAIRS[1]
    assert score([{a}, {a}, {a}], a, 0.5) == 3.5
    assert score([{a}, {b}], a, 0.5) == 1.0
    assert score([set(), set()], a, 0.5) == 0.5


def _belief(points):
    return Belief(tuple(Configuration([x, y, 0.0], [0, 0, 0], [0, 0, 0]) for x, y in points))


@settings(max_examples=100)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=2, max_size=8))
def test_uncertainty_direction_matches_closed_form(points):
    P = np.array(points)
    C = P - P.mean(axis=0)
    S = C.T @ C
    w = np.linalg.eigvalsh(S)
    if np.allclose(C, 0.0, atol=1e-12) or w[1] - w[0] < 1e-6 * max(w[1], 1e-12):
        return  # no unique principal axis
    u = uncertainty_direction(_belief(points))
    v = top_eigvec_2x2(S)
    assert abs(abs(float(u @ v)) - 1.0) < 1e-6


def test_uncertainty_direction_along_x():
    u = uncertainty_direction(_belief([(-0.01, 0.1), (0.0, 0.1), (0.01, 0.1)]))
    np.testing.assert_allclose(u, [1.0, 0.0], atol=1e-12)


def test_degenerate_beliefs():
    with pytest.raises(DegenerateBelief):
        uncertainty_direction(_belief([(0.0, 0.0)]))
    with pytest.raises(DegenerateBelief):
        uncertainty_direction(_belief([(0.1, 0.2), (0.1, 0.2)]))


def test_peg_resting_on_hole_floor(peg, peg_sim):
    # peg centred in the hole, bottom flush with the floor
    q = Configuration([0.0, 0.1, 0.0], peg.grasp, [0, 0, 0])
    cs = contacts_of(q, peg.env, peg.manip)
    assert peg.goal in cs
    ops = BeliefOps(peg.env, peg.manip)
    assert ops.goal_satisfied(Belief((q,)), peg.goal)
    high = Configuration([0.0, 0.2, 0.0], peg.grasp, [0, 0, 0])
    assert contacts_of(high, peg.env, peg.manip) == frozenset()
    assert not ops.goal_satisfied(Belief((q, high)), peg.goal)
    assert ops.score(Belief((q, high)), peg.goal, 0.5) == 1.0
