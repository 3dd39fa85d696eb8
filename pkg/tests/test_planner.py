import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bilba import planner as pl
from bilba import se2
from bilba.belief import Belief
from bilba.contact_graph import FREE
from bilba.errors import FeatureSingularity, InvalidParam, NoPlan
from bilba.geometry import cobs_slice, contains
from bilba.harness import resolve_params
from bilba.planner import (
    PlannerParams,
    bilba,
    compute_stiffness,
    featurize_motion,
    fixed_stiffness,
    gpr_propose,
    make_contact,
    noise_motions,
    sample_motion,
    sample_noised_config,
    soft_stiffness,
)
from bilba.sim import CompliantMotion, Configuration, Simulator, stiffness_matrix

SMALL = dict(n_samples=2, n_gp=16, n_sim=2, n_iters=1, max_rounds=3)


@pytest.fixture(scope="module")
def peg_params(peg):
    params, _ = resolve_params(peg, "bilba-fixed", 0)
    return params


@pytest.fixture
def ctx(peg, peg_params):
    sim = Simulator(peg.manip, peg.env)
    return pl._Context(sim, cobs_slice(peg.manip, peg.env, 0.0), peg_params)


def _pair(scn, env_name, manip_name):
    from bilba.geometry import ContactPair

    return ContactPair(scn.env.feature(scn.env.id_of(env_name)), scn.manip.feature(scn.manip.id_of(manip_name)))


# ---------------------------------------------------------------- parameters


def test_params_validation():
    with pytest.raises(InvalidParam):
        PlannerParams(k_t_soft=3000.0)
    with pytest.raises(InvalidParam):
        PlannerParams(eps_noise=1.5)
    with pytest.raises(InvalidParam):
        PlannerParams(n_samples=0)
    with pytest.raises(InvalidParam):
        PlannerParams(mode="bogus")


# ---------------------------------------------------------------- stiffness


def test_fixed_stiffness_is_half_the_stiff_gains(peg):
    p = PlannerParams()
    np.testing.assert_array_equal(fixed_stiffness(p), np.diag([25.0, 1000.0, 1000.0]))
    slc = cobs_slice(peg.manip, peg.env, 0.0)
    assert np.array_equal(compute_stiffness(peg.belief(), slc, p), fixed_stiffness(p))


def test_soft_axis_follows_contact_normal():
    p = PlannerParams()
    K = soft_stiffness(np.array([1.0, 0.0]), 0.0, p)[1:, 1:]
    w, V = np.linalg.eigh(K)
    np.testing.assert_allclose(w, [p.k_t_soft, p.k_t_stiff])
    np.testing.assert_allclose(np.abs(V[:, 0]), [1.0, 0.0], atol=1e-12)


def test_chamfer_stiffness_is_rotated_diagonal():
    p = PlannerParams()
    n = np.array([1.0, 1.0]) / math.sqrt(2.0)
    K = soft_stiffness(n, 0.0, p)[1:, 1:]
    # the soft axis is the normal, the stiff axis the tangent
    R = se2.rot(math.pi / 4)
    expected = R @ np.diag([p.k_t_soft, p.k_t_stiff]) @ R.T
    np.testing.assert_allclose(K, expected, atol=1e-9)
    np.testing.assert_allclose(K, K.T, atol=1e-12)
    np.testing.assert_allclose(np.linalg.eigvalsh(K), [p.k_t_soft, p.k_t_stiff], atol=1e-9)


@settings(max_examples=100)
@given(st.floats(-math.pi, math.pi), st.floats(-1, 1))
def test_stiffness_spectrum(angle, n_theta):
    p = PlannerParams()
    K = soft_stiffness(np.array([math.cos(angle), math.sin(angle)]), n_theta, p)
    w = np.linalg.eigvalsh(K)
    allowed = [p.k_t_soft, p.k_t_stiff, p.k_r_soft, p.k_r_stiff]
    assert all(min(abs(v - a) for a in allowed) < 1e-9 for v in w)
    assert K[0, 0] == (p.k_r_soft if abs(n_theta) > 0.5 else p.k_r_stiff)


def test_variable_stiffness_on_hole_floor(peg):
    p = PlannerParams(mode="variable")
    q = Configuration([0.0, 0.1, 0.0], peg.grasp, [0, 0, 0])  # resting on the hole floor
    K = compute_stiffness(Belief((q,)), cobs_slice(peg.manip, peg.env, 0.0), p)
    np.testing.assert_allclose(K[1:, 1:], np.diag([p.k_t_stiff, p.k_t_soft]), atol=1e-6)
    far = Configuration([0.0, 0.3, 0.0], peg.grasp, [0, 0, 0])
    assert np.array_equal(compute_stiffness(Belief((far,)), cobs_slice(peg.manip, peg.env, 0.0), p), fixed_stiffness(p))


# ---------------------------------------------------------------- sampling


def test_noised_config_without_noise_stays_on_boundary(peg, rng):
    slc = cobs_slice(peg.manip, peg.env, 0.0)
    for _ in range(50):
        assert contains(slc, sample_noised_config(slc, peg.goal, 0.0, 0.01, rng)) == "boundary"


def test_noised_config_never_exterior(peg, rng):
    slc = cobs_slice(peg.manip, peg.env, 0.0)
    pairs = sorted(slc.pairs(), key=lambda p: p.key)
    for i in range(1000):
        p = sample_noised_config(slc, pairs[i % len(pairs)], 1.0, 0.02, rng)
        assert contains(slc, p) != "exterior"


def test_outward_noise_is_rejected(peg, monkeypatch):
    slc = cobs_slice(peg.manip, peg.env, 0.0)
    floor = np.array([0.0, 0.05])
    monkeypatch.setattr(pl, "sample_boundary", lambda *a, **k: floor[None, :])

    class Upward:
        # noise always fires at full radius, pointing straight up into free space
        draws = iter([0.0, 1.0])

        def random(self):
            return next(self.draws)

        def uniform(self, lo, hi):
            return math.pi / 2

    p = sample_noised_config(slc, peg.goal, 1.0, 0.01, Upward())
    np.testing.assert_array_equal(p, floor)

    class Downward(Upward):
        draws = iter([0.0, 1.0])

        def uniform(self, lo, hi):
            return -math.pi / 2

    p = sample_noised_config(slc, peg.goal, 1.0, 0.01, Downward())
    np.testing.assert_allclose(p, [0.0, 0.04], atol=1e-12)


def test_featurize_motion():
    K = stiffness_matrix(1.0, 10.0)
    np.testing.assert_array_equal(featurize_motion(CompliantMotion(K, [0, 0, 0])), np.zeros(3))
    np.testing.assert_allclose(featurize_motion(CompliantMotion(K, [0.2, -0.1, 0.0])), [0.0, 0.2, -0.1])
    with pytest.raises(FeatureSingularity):
        featurize_motion(CompliantMotion(K, [0.0, 0.0, math.pi]))


def test_noise_motions_keep_stiffness_and_bounds(rng):
    K = stiffness_matrix(3.0, np.array([[100.0, 0.0], [0.0, 50.0]]))
    U = [CompliantMotion(K, [0.1 * i, 0.0, 0.1]) for i in range(4)]
    out = noise_motions(U, 200, 0.01, 0.05, rng)
    feats = np.array([featurize_motion(u) for u in U])
    for u in out:
        assert np.array_equal(u.stiffness, K)
        d = np.abs(feats - featurize_motion(u))
        assert np.any(np.all(d <= np.array([0.05, 0.01, 0.01]) + 1e-12, axis=1))


def test_sample_motion_singleton_reaches_contact(peg, peg_params):
    sim = Simulator(peg.manip, peg.env)
    params = peg_params.replace(n_samples=1, eps_noise=0.0)
    ctx = pl._Context(sim, cobs_slice(peg.manip, peg.env, 0.0), params)
    b = Belief((peg.belief()[0],))
    top = _pair(peg, "LT", "b")
    best, U, H = sample_motion(b, fixed_stiffness(params), top, ctx, np.random.default_rng(3))
    assert best.score == 1.0 + params.lam
    assert len(U) == len(H) == 1


def test_sample_motion_bookkeeping(peg, ctx):
    b = peg.belief()
    best, U, H = sample_motion(b, fixed_stiffness(ctx.params), peg.goal, ctx, np.random.default_rng(0))
    assert len(U) == len(H) == len(b) * ctx.params.n_samples
    assert best.score == max(H)


def test_sample_motion_chamfer_contact(peg, ctx):
    b = peg.belief()
    chamfer = _pair(peg, "RC", "br")
    best, _, _ = sample_motion(b, fixed_stiffness(ctx.params), chamfer, ctx, np.random.default_rng(0))
    hits = sum(chamfer in ctx.ops.contacts(q) for q in best.posterior)
    assert hits >= 2


def test_gpr_propose_accounting(peg, ctx):
    b = peg.belief()
    _, U, H = sample_motion(b, fixed_stiffness(ctx.params), peg.goal, ctx, np.random.default_rng(0))
    before = ctx.sim.belief_calls
    n0 = len(U)
    gpr_propose(b, U, H, peg.goal, ctx, np.random.default_rng(1))
    p = ctx.params
    assert ctx.sim.belief_calls - before == p.n_iters * p.n_sim
    assert len(U) == len(H) == n0 + p.n_iters * p.n_sim


def test_gpr_propose_without_iterations(peg, ctx):
    ctx.params = ctx.params.replace(n_iters=0)
    cand = gpr_propose(peg.belief(), [], [], peg.goal, ctx, np.random.default_rng(0))
    assert cand.motion is None and cand.score == 0.0


def test_gpr_candidates_stay_near_training_motions(peg, peg_params):
    near, total = 0, 0
    box = np.array([peg_params.noise_rot, peg_params.noise_trans, peg_params.noise_trans]) + 1e-12
    for seed in range(20):
        sim = Simulator(peg.manip, peg.env)
        params = peg_params.replace(n_samples=2, n_iters=1)
        c = pl._Context(sim, cobs_slice(peg.manip, peg.env, 0.0), params)
        b = peg.belief()
        _, U, H = sample_motion(b, fixed_stiffness(params), peg.goal, c, np.random.default_rng(seed))
        train = np.array([featurize_motion(u) for u in U])
        n0 = len(U)
        gpr_propose(b, U, H, peg.goal, c, np.random.default_rng(100 + seed))
        for u in U[n0:]:
            total += 1
            near += bool(np.any(np.all(np.abs(train - featurize_motion(u)) <= box, axis=1)))
    assert near / total >= 0.8


# ---------------------------------------------------------------- make_contact


def test_make_contact_when_already_satisfied(peg, ctx):
    q = Configuration([0.0, 0.1, 0.0], peg.grasp, [0, 0, 0])
    seg = make_contact(Belief((q,)), peg.goal, fixed_stiffness(ctx.params), ctx, np.random.default_rng(0))
    assert seg.ok and seg.motions == []


def test_make_contact_single_particle_chamfer(peg, ctx):
    b = Belief((Configuration([0.03, 0.16, 0.0], peg.grasp, [0, 0, 0]),))
    chamfer = _pair(peg, "RC", "br")
    seg = make_contact(b, chamfer, fixed_stiffness(ctx.params), ctx, np.random.default_rng(0))
    assert seg.ok and len(seg.motions) == 1
    assert chamfer in ctx.ops.contacts(seg.posterior[0])


def test_make_contact_impossible_target_fails(peg, peg_params):
    sim = Simulator(peg.manip, peg.env)
    params = peg_params.replace(**SMALL)
    c = pl._Context(sim, cobs_slice(peg.manip, peg.env, 0.0), params)
    under = _pair(peg, "e0", "t")  # peg top against the underside of the slab
    trace = []
    seg = make_contact(peg.belief(), under, fixed_stiffness(params), c, np.random.default_rng(0), trace)
    assert not seg.ok
    assert max(t.round for t in trace) <= params.max_rounds


def test_round_budget_and_monotone_best(peg, peg_params):
    sim = Simulator(peg.manip, peg.env)
    params = peg_params.replace(max_rounds=4)
    c = pl._Context(sim, cobs_slice(peg.manip, peg.env, 0.0), params)
    b = peg.belief()
    trace = []
    make_contact(b, _pair(peg, "RC", "br"), fixed_stiffness(params), c, np.random.default_rng(5), trace)
    rounds = max(t.round for t in trace)
    per_round = len(b) * params.n_samples + params.n_iters * params.n_sim
    assert sim.belief_calls <= rounds * per_round
    best = [t.best_score for t in trace if t.chosen != "none"]
    assert best == sorted(best)


# ---------------------------------------------------------------- outer loop


def test_bilba_empty_plan_when_goal_holds(peg):
    q = Configuration([0.0, 0.1, 0.0], peg.grasp, [0, 0, 0])
    res = bilba(Belief((q,)), peg.goal, peg.manip, peg.env)
    assert len(res.plan) == 0 and res.calls == 0


def test_bilba_pitch_plan_is_conformant(peg, peg_params):
    scn = peg.with_uncertainty("pitch", 1.0)
    res = bilba(scn.belief(), peg.goal, peg.manip, peg.env, peg_params)
    post = Simulator(peg.manip, peg.env).plan(scn.belief(), res.plan.motions)
    ops = pl.BeliefOps(peg.env, peg.manip)
    assert all(peg.goal in ops.contacts(q) for q in post)
    assert set(res.plan.provenance) <= {pl.COBS_SAMPLE, pl.GP_PROPOSAL}


def test_bilba_is_deterministic(peg, peg_params):
    a = bilba(peg.belief(), peg.goal, peg.manip, peg.env, peg_params)
    b = bilba(peg.belief(), peg.goal, peg.manip, peg.env, peg_params)
    assert a.plan.to_dict() == b.plan.to_dict() and a.calls == b.calls


def test_failed_edge_is_pruned_before_next_attempt(peg, peg_params, monkeypatch):
    real = pl.make_contact
    calls = []

    def failing_first(b, pair, K, ctx, rng, trace=None, tag=(0, 0)):
        calls.append((tag, pair))
        if len(calls) == 1:
            return pl.Segment([], [], b, False)
        return real(b, pair, K, ctx, rng, trace, tag)

    monkeypatch.setattr(pl, "make_contact", failing_first)
    try:
        res = bilba(peg.belief(), peg.goal, peg.manip, peg.env, peg_params.replace(n_attempts=3))
    except NoPlan as exc:
        res = exc.result
    first = res.schedules[0]
    second = res.schedules[1]
    assert second[0] != first[0]
    assert not res.graph.has_edge(FREE, calls[0][1])


def test_budget_is_respected(peg, peg_params):
    sim = Simulator(peg.manip, peg.env)
    with pytest.raises(NoPlan) as info:
        bilba(peg.belief(), peg.goal, peg.manip, peg.env, peg_params, sim=sim, budget=10)
    assert info.value.result.calls <= 10
    with pytest.raises(InvalidParam):
        bilba(peg.belief(), peg.goal, peg.manip, peg.env, peg_params, budget=-1)


def test_plan_round_trip(peg, peg_params):
    res = bilba(peg.belief(), peg.goal, peg.manip, peg.env, peg_params)
    again = pl.Plan.from_dict(res.plan.to_dict())
    assert again.motions == res.plan.motions and again.schedule_trace == res.plan.schedule_trace
