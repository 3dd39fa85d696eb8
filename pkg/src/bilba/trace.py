"""SVG belief-trajectory traces: one panel per plan step plus the start."""

from __future__ import annotations

import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from . import se2
from .belief import Belief
from .geometry import PartGeometry, cobs_slice
from .planner import Plan
from .sim import SimParams, Simulator

PARTICLE_COLOR = "red"
SETPOINT_COLOR = "green"
PANEL = 320.0
PAD = 16.0


def belief_trajectory(b0: Belief, plan: Plan, manip: PartGeometry, env: PartGeometry,
                      sim_params: SimParams | None = None) -> list[Belief]:
    """``[b0, b1, ...]``, one posterior per motion."""
    sim = Simulator(manip, env, sim_params)
    out = [b0]
    for u in plan.motions:
        out.append(sim.belief(out[-1], u))
    return out


def _outline(b0: Belief, manip: PartGeometry, env: PartGeometry) -> list[np.ndarray]:
    q = b0[0]
    slc = cobs_slice(manip, env, q.manipuland_in_env()[2])
    return [se2.transform_points(q.env_pose, np.array([e.a, e.b])) for e in slc.boundary_edges]


def emit_trace(plan: Plan, b0: Belief, manip: PartGeometry, env: PartGeometry, path,
               sim_params: SimParams | None = None, title: str = "") -> Path:
    """Write the trace to ``path``.

    Each panel shows the C-obs slice outline of the first particle, the
    manipuland positions of every particle (red) and, after the first panel,
    the commanded manipuland position of that step's setpoint (green).
    """
    beliefs = belief_trajectory(b0, plan, manip, env, sim_params)
    segs = _outline(b0, manip, env)
    setpoints = [se2.compose(u.setpoint, b0[0].grasp)[:2] for u in plan.motions]
    pts = [s for seg in segs for s in seg] + [p for b in beliefs for p in b.manip_positions()] + setpoints
    P = np.array(pts)
    lo, hi = P.min(axis=0), P.max(axis=0)
    scale = (PANEL - 2 * PAD) / max(float((hi - lo).max()), 1e-9)

    def xy(p, k):
        x = k * PANEL + PAD + (p[0] - lo[0]) * scale
        y = PANEL - PAD - (p[1] - lo[1]) * scale
        return f"{x:.2f}", f"{y:.2f}"

    n = len(beliefs)
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=f"{n * PANEL:.0f}",
                     height=f"{PANEL + 20:.0f}", viewBox=f"0 0 {n * PANEL:.0f} {PANEL + 20:.0f}")
    if title:
        ET.SubElement(svg, "title").text = title
    for k, b in enumerate(beliefs):
        g = ET.SubElement(svg, "g", {"class": "panel", "id": f"step-{k}"})
        ET.SubElement(g, "rect", x=f"{k * PANEL:.0f}", y="0", width=f"{PANEL:.0f}", height=f"{PANEL:.0f}",
                      fill="white", stroke="#999")
        for seg in segs:
            (x1, y1), (x2, y2) = xy(seg[0], k), xy(seg[1], k)
            ET.SubElement(g, "line", {"x1": x1, "y1": y1, "x2": x2, "y2": y2, "stroke": "black", "stroke-width": "1"})
        if k > 0:
            cx, cy = xy(setpoints[k - 1], k)
            ET.SubElement(g, "circle", {"class": "setpoint"}, cx=cx, cy=cy, r="4", fill=SETPOINT_COLOR)
        for p in b.manip_positions():
            cx, cy = xy(p, k)
            ET.SubElement(g, "circle", {"class": "particle"}, cx=cx, cy=cy, r="3", fill=PARTICLE_COLOR)
        label = "start" if k == 0 else f"after motion {k}"
        ET.SubElement(g, "text", {"x": f"{k * PANEL + 6:.0f}", "y": f"{PANEL + 14:.0f}", "font-size": "12"}).text = label
    out = Path(path)
    ET.ElementTree(svg).write(out, encoding="utf-8", xml_declaration=True)
    return out
