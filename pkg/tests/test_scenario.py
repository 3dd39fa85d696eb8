import math
from importlib import resources

import numpy as np
import pytest

from bilba import se2
from bilba.errors import ScenarioError
from bilba.scenario import UncertaintyAxis, bundled_scenarios, load_scenario, parse_scenario
from bilba.sim import Simulator

PEG_TEXT = resources.files("bilba").joinpath("scenarios/peg_hole.yaml").read_text()


def test_bundled():
    assert bundled_scenarios() == ["peg_hole", "puzzle"]


def test_offsets_are_nominal_first():
    assert UncertaintyAxis("x", 0.01).offsets() == [0.0, -0.01, 0.01]
    assert UncertaintyAxis("x", 0.02, 5).offsets() == pytest.approx([0.0, -0.01, 0.01, -0.02, 0.02])


def test_x_layout(peg):
    xs = [q.manipuland_pose()[0] for q in peg.belief()]
    np.testing.assert_allclose(xs, [0.0, -0.01, 0.01], atol=1e-12)


def test_pitch_layout(peg):
    b = peg.with_uncertainty("pitch", 2.0).belief()
    th = [math.degrees(q.manipuland_pose()[2]) for q in b]
    np.testing.assert_allclose(th, [0.0, -2.0, 2.0], atol=1e-9)


def test_y_axis_moves_the_environment(peg):
    b = peg.with_uncertainty("y", 0.01).belief()
    np.testing.assert_allclose([q.env_pose[1] for q in b], [0.0, -0.01, 0.01])
    np.testing.assert_allclose([q.manipuland_pose()[1] for q in b], [0.135] * 3)


def _holdout_coords(peg, q):
    # undo compose([0, 0, pitch], grasp + [dx, dy, 0])
    pitch = q.grasp[2]
    dx, dy = se2.rot(-pitch) @ q.grasp[:2] - peg.grasp[:2]
    return np.array([dx / 0.01, dy / 0.005, math.degrees(pitch) / 3.0])


def test_holdout_beliefs(peg):
    ext, inner = peg.holdout_beliefs()
    assert len(ext) == 6 and len(inner) == 8
    for q in ext:
        c = _holdout_coords(peg, q)
        assert sorted(np.round(np.abs(c), 9)) == [0.0, 0.0, 1.0]
    for q in inner:
        c = _holdout_coords(peg, q)
        assert c @ c <= 1.0 + 1e-9
    sim = Simulator(peg.manip, peg.env)
    assert all(sim.penetration(q) <= 0.0 for q in list(ext) + list(inner))


def test_goal_names(peg, puzzle):
    assert peg.goal_names() == ("B", "b")
    assert puzzle.goal_names() == ("wall", "r")


def _edit(old, new):
    assert old in PEG_TEXT
    return PEG_TEXT.replace(old, new)


def test_clockwise_piece_is_named():
    text = _edit("[[-0.15, -0.05], [0.15, -0.05], [0.15, 0.0], [-0.15, 0.0]]",
                 "[[-0.15, 0.0], [0.15, 0.0], [0.15, -0.05], [-0.15, -0.05]]")
    with pytest.raises(ScenarioError, match=r"line 10 .*piece 0 is wound clockwise"):
        parse_scenario(text, "bad.yaml")


def test_unknown_feature():
    with pytest.raises(ScenarioError, match=r"bad.yaml: line \d+ field 'goal.0'.*nope"):
        parse_scenario(_edit("goal: [B, b]", "goal: [nope, b]"), "bad.yaml")


def test_missing_field_and_bad_axis():
    with pytest.raises(ScenarioError, match="grasp"):
        parse_scenario(_edit("grasp: [0.0, -0.05, 0.0]\n", ""), "bad.yaml")
    with pytest.raises(ScenarioError, match="axis"):
        parse_scenario(_edit("{axis: x, magnitude: 0.01, count: 3}", "{axis: z, magnitude: 0.01}"), "bad.yaml")


def test_penetrating_start_rejected():
    with pytest.raises(ScenarioError, match="particle 0 starts"):
        parse_scenario(_edit("gripper_pose: [0.0, 0.185, 0.0]", "gripper_pose: [0.0, 0.08, 0.0]"), "bad.yaml")


def test_schema_version():
    with pytest.raises(ScenarioError, match="schema_version"):
        parse_scenario(_edit("schema_version: 1", "schema_version: 2"), "bad.yaml")


def test_load_from_path(tmp_path):
    p = tmp_path / "copy.yaml"
    p.write_text(PEG_TEXT)
    assert load_scenario(p).name == "peg_hole"
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "missing.yaml")
