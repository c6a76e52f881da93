"""Candidate grasp configurations: base positions on a circle around each grasp
point, filtered for base clearance, arm-reach clearance and free space."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    disc_collides,
    point_in_free_space,
    segment_clear,
    transform_points,
)

__all__ = [
    "GraspConfiguration",
    "SamplingConfig",
    "EmptyGraspSet",
    "sample_circle",
    "candidate_passes",
    "build_grasp_set",
]


class EmptyGraspSet(RuntimeError):
    """No candidate survived filtering; the scenario is degenerate."""


@dataclass(frozen=True)
class GraspConfiguration:
    """Robot base position paired with a world-frame grasp point (at the start pose)."""

    base: tuple[float, float]
    grasp: tuple[float, float]
    grasp_index: int
    angle_index: int = 0

    def as_array(self) -> np.ndarray:
        """(x_r, y_r, x_g, y_g)."""
        return np.array([*self.base, *self.grasp], dtype=float)

    def to_dict(self) -> dict:
        return {"base": list(self.base), "grasp": list(self.grasp),
                "grasp_index": self.grasp_index, "angle_index": self.angle_index}

    @classmethod
    def from_dict(cls, d: dict) -> "GraspConfiguration":
        return cls((float(d["base"][0]), float(d["base"][1])),
                   (float(d["grasp"][0]), float(d["grasp"][1])),
                   int(d["grasp_index"]), int(d.get("angle_index", 0)))


@dataclass(frozen=True)
class SamplingConfig:
    sample_radius: float = 0.55
    samples_per_grasp_point: int = 60
    r_min: float = 0.35
    r_max: float = 0.7
    base_footprint_radius: float = 0.30

    def __post_init__(self):
        if not (self.r_min <= self.sample_radius <= self.r_max):
            raise ValueError("sample_radius must lie within [r_min, r_max]")
        if self.samples_per_grasp_point < 1:
            raise ValueError("samples_per_grasp_point must be >= 1")


def sample_circle(center, radius: float, n: int) -> np.ndarray:
    """``n`` points at angles ``2*pi*i/n`` measured from +x."""
    if radius <= 0 or n < 1:
        raise ValueError("need radius > 0 and n >= 1")
    a = 2.0 * math.pi * np.arange(n) / n
    return np.asarray(center, dtype=float) + radius * np.stack([np.cos(a), np.sin(a)], axis=1)


def candidate_passes(scenario, base, grasp, cfg: SamplingConfig) -> bool:
    """The three filter predicates applied to one candidate base position."""
    m = scenario.map
    if not point_in_free_space(m, base):
        return False
    if disc_collides(m, base, cfg.base_footprint_radius, scenario.object, scenario.start_pose):
        return False
    return segment_clear(m, base, grasp)


def build_grasp_set(scenario, cfg: SamplingConfig | None = None) -> list[GraspConfiguration]:
    cfg = cfg or SamplingConfig()
    world_grasps = transform_points(scenario.start_pose, scenario.object.grasp_points)
    out = []
    for gi, g in enumerate(world_grasps):
        for ai, base in enumerate(sample_circle(g, cfg.sample_radius, cfg.samples_per_grasp_point)):
            if candidate_passes(scenario, base, g, cfg):
                out.append(GraspConfiguration((float(base[0]), float(base[1])),
                                              (float(g[0]), float(g[1])), gi, ai))
    if not out:
        raise EmptyGraspSet("no grasp candidate survived filtering")
    return out
