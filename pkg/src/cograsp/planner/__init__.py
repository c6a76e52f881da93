"""Convex corridors and the joint trajectory optimizer used as the feasibility oracle."""

from .bezier import BezierSegment, bezier_derivative, bezier_eval
from .regions import (BrokenChain, ConvexRegion, CorridorError, EndpointNotCovered, RegionSequence,
                      SeedInCollision, build_region_sequence, grow_convex_region, regions_for_scenario)
from .trajectory import (PlannerConfig, TrajectorySolution, evaluate_objective, feasibility,
                         grasp_anchors, objective_terms, solve_trajectory)

__all__ = [
    "BezierSegment",
    "bezier_eval",
    "bezier_derivative",
    "ConvexRegion",
    "RegionSequence",
    "CorridorError",
    "SeedInCollision",
    "BrokenChain",
    "EndpointNotCovered",
    "grow_convex_region",
    "build_region_sequence",
    "regions_for_scenario",
    "PlannerConfig",
    "TrajectorySolution",
    "evaluate_objective",
    "objective_terms",
    "feasibility",
    "grasp_anchors",
    "solve_trajectory",
]
