"""Static SVG drawings of scenarios, grasp candidates and trajectories."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .geometry import transform_points
from .planner.bezier import bezier_eval
from .scenario import Scenario

__all__ = ["render_svg"]

PX_PER_M = 80.0


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_svg(scenario: Scenario, trajectory=None, pair: tuple[int, int] | None = None,
               samples_per_segment: int = 100, title: str | None = None) -> str:
    """SVG text for the map, the object at start and goal, grasp candidates and an optional trajectory."""
    m = scenario.map
    w, h = m.extent
    ox, oy = m.origin
    W, H = w * PX_PER_M, h * PX_PER_M

    def px(p):
        p = np.atleast_2d(p)
        return np.stack([(p[:, 0] - ox) * PX_PER_M, H - (p[:, 1] - oy) * PX_PER_M], axis=1)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_fmt(W)}" height="{_fmt(H)}" '
           f'viewBox="0 0 {_fmt(W)} {_fmt(H)}">']
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append(f'<rect x="0" y="0" width="{_fmt(W)}" height="{_fmt(H)}" fill="white" stroke="black"/>')
    # obstacle cells, merged into horizontal runs per row
    res = m.resolution * PX_PER_M
    out.append('<g fill="#444">')
    for r in range(m.height_cells):
        row = m.grid[r]
        c = 0
        while c < len(row):
            if row[c]:
                c0 = c
                while c < len(row) and row[c]:
                    c += 1
                y = H - (r + 1) * res
                out.append(f'<rect x="{_fmt(c0 * res)}" y="{_fmt(y)}" width="{_fmt((c - c0) * res)}" '
                           f'height="{_fmt(res)}"/>')
            else:
                c += 1
    out.append("</g>")
    for pose, color in ((scenario.start_pose, "#2a7ab0"), (scenario.goal_pose, "#7ab02a")):
        pts = px(transform_points(pose, scenario.object.vertices))
        d = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        out.append(f'<polygon points="{d}" fill="{color}" fill-opacity="0.4" stroke="{color}"/>')
    if scenario.grasp_set:
        out.append('<g fill="#999">')
        for g in scenario.grasp_set:
            (x, y), = px(g.base)
            out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2"/>')
        out.append("</g>")
    if pair is not None:
        for k, color in zip(pair, ("#d03030", "#d08030")):
            g = scenario.grasp_set[k]
            (bx, by), = px(g.base)
            (gx, gy), = px(g.grasp)
            out.append(f'<circle cx="{_fmt(bx)}" cy="{_fmt(by)}" r="{_fmt(0.3 * PX_PER_M)}" fill="none" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<line x1="{_fmt(bx)}" y1="{_fmt(by)}" x2="{_fmt(gx)}" y2="{_fmt(gy)}" stroke="{color}"/>')
    if trajectory is not None and trajectory.segments:
        s = np.linspace(0.0, 1.0, samples_per_segment)
        q = np.concatenate([bezier_eval(seg, s) for seg in trajectory.segments])
        for cols, color in (((0, 1), "#d03030"), ((2, 3), "#d08030"), ((4, 5), "#2a7ab0")):
            pts = px(q[:, cols])
            d = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
            out.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
