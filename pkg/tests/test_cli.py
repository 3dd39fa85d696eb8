import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from bilba.cli import main
from bilba.harness import RunReport, evaluate_holdout, run, sweep
from bilba.planner import Plan
from bilba.trace import emit_trace

SVG = "{http://www.w3.org/2000/svg}"


@pytest.fixture(scope="module")
def plan_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("plan") / "plan.json"
    assert main(["plan", "--scenario", "peg_hole", "--seed", "0", "--out", str(out)]) == 0
    return out


def _panels(path):
    root = ET.parse(path).getroot()
    return [g for g in root.iter(SVG + "g") if g.get("class") == "panel"]


def test_plan_file_contents(plan_file):
    d = json.loads(plan_file.read_text())
    assert d["status"] == "plan_found" and d["planner"] == "bilba-fixed"
    assert "planning_time_s" not in d
    assert all(d["per_particle_goal"])
    assert len(d["steps"]) == len(d["plan"]["motions"])


def test_plan_file_is_byte_identical(tmp_path, plan_file):
    for i in range(2):
        out = tmp_path / f"again{i}.json"
        assert main(["plan", "--scenario", "peg_hole", "--seed", "0", "--out", str(out)]) == 0
        assert out.read_bytes() == plan_file.read_bytes()


def test_budget_too_small_exits_2(tmp_path):
    out = tmp_path / "r.json"
    code = main(["plan", "--scenario", "peg_hole", "--planner", "best", "--budget", "1", "--out", str(out)])
    assert code == 2
    assert json.loads(out.read_text())["status"] == "no_plan"


def test_errors_exit_1(tmp_path, capsys):
    assert main(["plan", "--scenario", str(tmp_path / "missing.yaml")]) == 1
    assert main(["plan", "--scenario", "peg_hole", "--params", "no_such_key=3"]) == 1
    assert "error:" in capsys.readouterr().err


def test_trace_panels(tmp_path, plan_file, peg):
    svg = tmp_path / "t.svg"
    assert main(["trace", "--scenario", "peg_hole", "--plan", str(plan_file), "--out", str(svg)]) == 0
    plan = RunReport.from_dict(json.loads(plan_file.read_text())).plan_object()
    panels = _panels(svg)
    assert len(panels) == len(plan) + 1
    for k, g in enumerate(panels):
        circles = list(g.iter(SVG + "circle"))
        assert sum(c.get("class") == "particle" and c.get("fill") == "red" for c in circles) == len(peg.belief())
        assert sum(c.get("class") == "setpoint" for c in circles) == (1 if k else 0)


def test_empty_plan_trace_has_one_panel(tmp_path, peg):
    svg = emit_trace(Plan([], [], []), peg.belief(), peg.manip, peg.env, tmp_path / "e.svg")
    assert len(_panels(svg)) == 1


def test_evaluate_holdout_trivial_cases(plan_file, peg):
    plan = RunReport.from_dict(json.loads(plan_file.read_text())).plan_object()
    assert evaluate_holdout(plan, peg.belief(), peg.goal, peg.manip, peg.env) == 1.0
    assert evaluate_holdout(Plan([], [], []), peg.belief(), peg.goal, peg.manip, peg.env) == 0.0


def test_eval_holdout_on_plan_file(tmp_path, plan_file, capsys):
    out = tmp_path / "h.json"
    assert main(["eval-holdout", "--scenario", "peg_hole", "--plan", str(plan_file), "--out", str(out)]) == 0
    frac = json.loads(out.read_text())["success_fraction"]
    assert 0.0 <= frac <= 1.0


def test_sweep_is_order_independent(peg):
    cells = [("x", 0.01), ("pitch", 1.0)]
    kw = dict(repeats=1, seed0=0, budget=400)
    a = sweep(peg, cells, ["best", "bilba-fixed"], **kw)
    b = sweep(peg, cells[::-1], ["bilba-fixed", "best"], **kw)
    strip = lambda t: [{k: v for k, v in row.items() if "time" not in k} for row in t["cells"]]
    assert strip(a) == strip(b)


def test_report_round_trip(peg):
    rep = run(peg, "bilba-fixed", 0)
    again = RunReport.from_dict(json.loads(rep.dumps()))
    assert again == rep
    np.testing.assert_array_equal(again.plan_object().motions[0].stiffness, rep.plan_object().motions[0].stiffness)
