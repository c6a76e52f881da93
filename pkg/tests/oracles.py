"""Independent post-hoc checks of planner output, shared by the planner and acceptance tests."""

import numpy as np

from cograsp.planner import PlannerConfig, bezier_derivative, bezier_eval, grasp_anchors, regions_for_scenario
from cograsp.planner.trajectory import collision_radius


def check_solution(sol, sc, pair, cfg=PlannerConfig()):
    """Post-hoc constraint oracle, independent of the planner's own verification."""
    g = [sc.grasp_set[k] for k in pair]
    t = np.linspace(0, sol.duration, 100)
    q = sol.evaluate(t)
    c, s = np.cos(q[:, 6]), np.sin(q[:, 6])
    for r, gc in enumerate(g):
        ag, ab = grasp_anchors(sc.object, sc.start_pose, gc)
        robot = q[:, 2 * r: 2 * r + 2]
        grasp_w = q[:, 4:6] + np.stack([c * ag[0] - s * ag[1], s * ag[0] + c * ag[1]], axis=1)
        nom_w = q[:, 4:6] + np.stack([c * ab[0] - s * ab[1], s * ab[0] + c * ab[1]], axis=1)
        d = np.linalg.norm(robot - grasp_w, axis=1)
        assert np.all(d >= cfg.r_min - 2e-6)
        assert np.all(d <= cfg.r_max + 2e-6)
        rc = collision_radius(sc.object, ab, cfg, sc.map.resolution)
        assert np.all(np.linalg.norm(robot - nom_w, axis=1) <= rc + 2e-6)
    segs = sol.segments
    for a, b in zip(segs, segs[1:]):
        np.testing.assert_allclose(bezier_eval(a, 1.0), bezier_eval(b, 0.0), atol=1e-9)
        np.testing.assert_allclose(bezier_derivative(a, 1.0), bezier_derivative(b, 0.0), atol=1e-9)
    regs = regions_for_scenario(sc)
    for k, sg in enumerate(segs):
        for cp in sg.control_points:
            assert regs.robot_regions[k].contains(cp[0:2], 1e-9)
            assert regs.robot_regions[k].contains(cp[2:4], 1e-9)
            assert regs.object_regions[k].contains(cp[4:7], 1e-9)
