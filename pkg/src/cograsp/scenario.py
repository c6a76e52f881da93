"""Scenario container and its JSON file format.

A scenario file is a JSON object::

    {
      "format": "cograsp.scenario/1",
      "map": {"width": W, "height": H, "resolution": r, "origin": [x0, y0],
              "cells": "<W*H chars of '0'/'1', row-major, row 0 = lowest y>"},
      "object": {"name": ..., "vertices": [[x, y], ...], "grasp_points": [[x, y], ...]},
      "start_pose": [x, y, yaw],
      "goal_pose": [x, y, yaw],
      "seeds": [[x, y, yaw(, yaw_cap)], ...],   # optional corridor seeds
      "grasp_set": [{"base": [x, y], "grasp": [x, y], "grasp_index": i,
                     "angle_index": a}, ...],    # optional
      "meta": {...}                              # optional grouping keys
    }

The JSON Schema lives in ``scenario.schema.json`` next to this module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import GeometryError, ObjectShape, OccupancyMap, Pose2, polygon_collides
from .grasp_sampling import GraspConfiguration

FORMAT = "cograsp.scenario/1"
SCHEMA_PATH = Path(__file__).with_name("scenario.schema.json")


@dataclass
class Scenario:
    map: OccupancyMap
    object: ObjectShape
    start_pose: Pose2
    goal_pose: Pose2
    grasp_set: list[GraspConfiguration] = field(default_factory=list)
    seeds: list[Pose2] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    # per-seed cap on the yaw half-range of its object region (None = planner default)
    seed_yaw_caps: list = field(default_factory=list)

    def __post_init__(self):
        if not self.seed_yaw_caps:
            self.seed_yaw_caps = [None] * len(self.seeds)
        if len(self.seed_yaw_caps) != len(self.seeds):
            raise ValueError("seed_yaw_caps must match seeds in length")

    def validate(self):
        if polygon_collides(self.map, self.object, self.start_pose):
            raise GeometryError("object collides at start pose")
        if polygon_collides(self.map, self.object, self.goal_pose):
            raise GeometryError("object collides at goal pose")
        return self

    @property
    def m(self) -> int:
        return len(self.grasp_set)

    def to_dict(self) -> dict:
        g = self.map.grid
        d = {
            "format": FORMAT,
            "map": {
                "width": int(g.shape[1]),
                "height": int(g.shape[0]),
                "resolution": self.map.resolution,
                "origin": list(self.map.origin),
                "cells": "".join("1" if v else "0" for v in g.ravel()),
            },
            "object": self.object.to_dict(),
            "start_pose": self.start_pose.to_list(),
            "goal_pose": self.goal_pose.to_list(),
        }
        if self.seeds:
            d["seeds"] = [s.to_list() + ([] if c is None else [float(c)])
                          for s, c in zip(self.seeds, self.seed_yaw_caps)]
        if self.grasp_set:
            d["grasp_set"] = [gc.to_dict() for gc in self.grasp_set]
        if self.meta:
            d["meta"] = self.meta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if d.get("format", FORMAT) != FORMAT:
            raise ValueError(f"unsupported scenario format {d.get('format')!r}")
        md = d["map"]
        w, h = int(md["width"]), int(md["height"])
        cells = md["cells"]
        if len(cells) != w * h:
            raise ValueError("map cell string length does not match width*height")
        grid = (np.frombuffer(cells.encode("ascii"), dtype=np.uint8) == ord("1")).reshape(h, w)
        return cls(
            map=OccupancyMap(grid, float(md["resolution"]), tuple(md.get("origin", (0.0, 0.0)))),
            object=ObjectShape.from_dict(d["object"]),
            start_pose=Pose2.from_list(d["start_pose"]),
            goal_pose=Pose2.from_list(d["goal_pose"]),
            grasp_set=[GraspConfiguration.from_dict(g) for g in d.get("grasp_set", [])],
            seeds=[Pose2.from_list(s[:3]) for s in d.get("seeds", [])],
            meta=dict(d.get("meta", {})),
            seed_yaw_caps=[float(s[3]) if len(s) > 3 else None for s in d.get("seeds", [])],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(scenario.to_json() + "\n")


def load_scenario(path, validate_schema: bool = False) -> Scenario:
    d = json.loads(Path(path).read_text())
    if validate_schema:
        import jsonschema

        jsonschema.validate(d, json.loads(SCHEMA_PATH.read_text()))
    return Scenario.from_dict(d)
