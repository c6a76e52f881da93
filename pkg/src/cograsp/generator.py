"""Procedural two-room transport scenarios.

Each map has two rooms split by a wall with a single narrow passage. Tables
are rectangles placed against the room walls. The object starts near a
table in room A, at one of ``count`` evenly spaced yaws, and must reach the
center of room B. Corridor seeds are chosen so that the convex region chain
is valid whenever the geometry allows it; when it does not (for instance a
passage narrower than the object) the scenario is still written, and the
labeling step turns the broken corridor into all-zero labels.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt

from .geometry import ObjectShape, OccupancyMap, Pose2, polygon_collides
from .grasp_sampling import EmptyGraspSet, SamplingConfig, build_grasp_set
from .planner.regions import CorridorError, MAX_YAW, build_region_sequence
from .scenario import Scenario

log = logging.getLogger(__name__)

__all__ = [
    "GenerationFailed",
    "TemplateConfig",
    "SHAPES",
    "make_shape",
    "orientation_sweep",
    "generate_site",
    "generate_benchmark",
]


class GenerationFailed(RuntimeError):
    """No collision-free start/goal placement was found within the retry budget."""


def _rect(length: float, width: float) -> list[list[float]]:
    a, b = length / 2, width / 2
    return [[-a, -b], [a, -b], [a, b], [-a, b]]


def _bar() -> ObjectShape:
    gp = [[x, s * 0.06] for x in (-0.55, 0.0, 0.55) for s in (1, -1)]
    return ObjectShape(_rect(1.2, 0.12), gp, "bar")


def _rectangle() -> ObjectShape:
    gp = [[x, s * 0.15] for x in (-0.4, 0.4) for s in (1, -1)] + [[0.5, 0.0], [-0.5, 0.0]]
    return ObjectShape(_rect(1.0, 0.3), gp, "rectangle")


def _tee() -> ObjectShape:
    v = [[-0.6, 0.1], [-0.6, -0.1], [0.6, -0.1], [0.6, 0.1], [0.1, 0.1], [0.1, 0.6],
         [-0.1, 0.6], [-0.1, 0.1]]
    gp = [[-0.6, 0.0], [0.6, 0.0], [0.0, 0.6], [-0.3, -0.1], [0.3, -0.1]]
    return ObjectShape(v, gp, "tee")


def _triangle() -> ObjectShape:
    v = [[-0.5, -0.35], [0.5, -0.35], [0.0, 0.5]]
    gp = [[-0.25, -0.35], [0.25, -0.35], [-0.25, 0.075], [0.25, 0.075]]
    return ObjectShape(v, gp, "triangle")


def _asymmetric() -> ObjectShape:
    v = [[-0.7, -0.1], [0.5, -0.1], [0.5, 0.3], [0.3, 0.3], [0.3, 0.1], [-0.7, 0.1]]
    gp = [[-0.7, 0.0], [-0.2, -0.1], [0.4, -0.1], [0.5, 0.2], [-0.2, 0.1]]
    return ObjectShape(v, gp, "asymmetric")


# bar and rectangle are the training shapes; the others are held out
SHAPES = {
    "bar": _bar,
    "rectangle": _rectangle,
    "tee": _tee,
    "triangle": _triangle,
    "asymmetric": _asymmetric,
}


def make_shape(name: str) -> ObjectShape:
    try:
        return SHAPES[name]()
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; known: {sorted(SHAPES)}") from None


def orientation_sweep(count: int) -> list[float]:
    """``count`` yaws evenly spaced over [-pi, pi)."""
    return [-math.pi + 2 * math.pi * i / count for i in range(count)]


@dataclass
class TemplateConfig:
    width: float = 10.0
    height: float = 6.0
    resolution: float = 0.05
    wall_thickness: float = 0.5
    passage_width: float = 0.65
    tables_room_a: int = 2
    tables_room_b: int = 1
    table_length: tuple = (0.6, 1.2)
    table_depth: tuple = (0.5, 0.8)
    site_clearance: tuple = (0.3, 1.2)  # free space around the object beyond its radius
    robot_clearance: float = 0.30
    sampling: SamplingConfig = field(default_factory=lambda: SamplingConfig(samples_per_grasp_point=16))
    max_retries: int = 50

    def __post_init__(self):
        if isinstance(self.sampling, dict):
            self.sampling = SamplingConfig(**self.sampling)
        self.table_length = tuple(self.table_length)
        self.table_depth = tuple(self.table_depth)
        self.site_clearance = tuple(self.site_clearance)
        if self.passage_width <= 0 or self.wall_thickness <= 0:
            raise ValueError("passage width and wall thickness must be positive")

    @property
    def wall_x(self) -> tuple[float, float]:
        c = self.width / 2
        return c - self.wall_thickness / 2, c + self.wall_thickness / 2

    @property
    def passage_y(self) -> float:
        return self.height / 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["table_length"] = list(self.table_length)
        d["table_depth"] = list(self.table_depth)
        d["site_clearance"] = list(self.site_clearance)
        return d


def _base_map(cfg: TemplateConfig) -> OccupancyMap:
    m = OccupancyMap.empty(cfg.width, cfg.height, cfg.resolution)
    x0, x1 = cfg.wall_x
    m.fill_rect(x0, 0.0, x1, cfg.height)
    h = cfg.passage_width / 2
    # widen the carve by half a cell so the passage keeps its nominal width on the cell lattice
    m.fill_rect(x0 - cfg.resolution, cfg.passage_y - h, x1 + cfg.resolution, cfg.passage_y + h, False)
    return m


def _place_tables(m: OccupancyMap, cfg: TemplateConfig, rng: np.random.Generator,
                  room: tuple[float, float], count: int, keep_clear: list) -> list[list[float]]:
    """Tables flush against the outer walls of ``room`` (x-range), away from ``keep_clear`` discs."""
    tables = []
    for _ in range(count):
        for _try in range(20):
            length = rng.uniform(*cfg.table_length)
            depth = rng.uniform(*cfg.table_depth)
            side = rng.integers(3)  # 0 bottom, 1 top, 2 outer side wall
            if side < 2:
                x0 = rng.uniform(room[0], room[1] - length)
                rect = [x0, 0.0, x0 + length, depth] if side == 0 else \
                    [x0, cfg.height - depth, x0 + length, cfg.height]
            else:
                y0 = rng.uniform(0.0, cfg.height - length)
                outer = room[0] if room[0] < cfg.width / 2 else room[1]
                rect = [outer, y0, outer + depth, y0 + length] if outer == room[0] else \
                    [outer - depth, y0, outer, y0 + length]
            if any(_rect_disc_distance(rect, c) < r for c, r in keep_clear):
                continue
            if any(_rects_overlap(rect, t, 0.3) for t in tables):
                continue
            tables.append([float(v) for v in rect])
            m.fill_rect(*rect)
            break
    return tables


def _rect_disc_distance(rect, c) -> float:
    dx = max(rect[0] - c[0], 0.0, c[0] - rect[2])
    dy = max(rect[1] - c[1], 0.0, c[1] - rect[3])
    return math.hypot(dx, dy)


def _rects_overlap(a, b, gap: float) -> bool:
    return not (a[2] + gap <= b[0] or b[2] + gap <= a[0] or a[3] + gap <= b[1] or b[3] + gap <= a[1])


def _passage_yaw(yaw: float) -> float:
    """Passage-aligned yaw (0 or pi) nearest to ``yaw``; the object's long axis is its body x."""
    return 0.0 if abs(math.remainder(yaw, 2 * math.pi)) <= math.pi / 2 else math.pi


def _seed_plans(cfg: TemplateConfig, start: Pose2, goal: Pose2):
    py = cfg.passage_y
    pyaw = goal.yaw
    wall = cfg.wall_x
    passage = (Pose2((wall[0] + wall[1]) / 2, py, pyaw), 0.0)
    s = (start, None)
    g = (goal, None)
    yield [s, passage, g]
    yield [s, (Pose2(start.x, py, pyaw), None), passage, g]
    yield [s, (Pose2(start.x, py, start.yaw), None), (Pose2(start.x, py, pyaw), None), passage, g]
    yield [s, (Pose2(wall[0] - 1.0, py, pyaw), None), passage, g]


def _choose_seeds(m: OccupancyMap, obj: ObjectShape, cfg: TemplateConfig, start: Pose2, goal: Pose2):
    plans = list(_seed_plans(cfg, start, goal))
    for plan in plans:
        seeds = [p for p, _ in plan]
        caps = [MAX_YAW if c is None else c for _, c in plan]
        try:
            build_region_sequence(m, start, goal, seeds, obj, robot_clearance=cfg.robot_clearance,
                                  yaw_limits=caps)
        except CorridorError:
            continue
        return plan, True
    return plans[0], False


def _find_site(m: OccupancyMap, obj: ObjectShape, cfg: TemplateConfig, rng: np.random.Generator,
               tables: list, yaws: list[float]) -> np.ndarray | None:
    """A cell center in room A near a table where every sweep yaw is collision-free.

    Candidates keep between ``site_clearance[0]`` and ``site_clearance[1]`` of
    free space beyond the object's radius, measured to any obstacle, and lie
    within the upper bound of at least one room-A table.
    """
    radius = float(np.max(np.linalg.norm(obj.vertices, axis=1)))
    res = cfg.resolution
    # distance to the nearest obstacle; the map border counts as obstacle
    free = np.pad(~m.grid, 1, constant_values=False)
    clear = distance_transform_edt(free)[1:-1, 1:-1] * res
    rows, cols = np.indices(m.grid.shape)
    xy = np.stack([m.origin[0] + (cols + 0.5) * res, m.origin[1] + (rows + 0.5) * res], axis=-1)
    lo, hi = radius + cfg.site_clearance[0], radius + cfg.site_clearance[1]
    ok = (clear >= lo) & (clear <= hi) & (xy[..., 0] < cfg.wall_x[0])
    near = np.zeros_like(ok)
    for t in tables:
        dx = np.maximum.reduce([t[0] - xy[..., 0], np.zeros(ok.shape), xy[..., 0] - t[2]])
        dy = np.maximum.reduce([t[1] - xy[..., 1], np.zeros(ok.shape), xy[..., 1] - t[3]])
        near |= np.hypot(dx, dy) <= hi
    cand = np.argwhere(ok & near)
    if len(cand) == 0:
        return None
    for k in rng.permutation(len(cand))[:50]:
        p = xy[tuple(cand[k])]
        if all(not polygon_collides(m, obj, Pose2(p[0], p[1], y)) for y in yaws):
            return p
    return None


def generate_site(cfg: TemplateConfig, shape: str, count: int, rng: np.random.Generator,
                  site_id: str = "site") -> list[Scenario]:
    """One map and object site swept over ``count`` start yaws."""
    obj = make_shape(shape)
    yaws = orientation_sweep(count)
    room_a = (0.0, cfg.wall_x[0])
    room_b = (cfg.wall_x[1], cfg.width)
    goal_xy = np.array([(room_b[0] + room_b[1]) / 2, cfg.passage_y])
    passage_xy = np.array([(cfg.wall_x[0] + cfg.wall_x[1]) / 2, cfg.passage_y])
    radius = float(np.max(np.linalg.norm(obj.vertices, axis=1)))
    for attempt in range(cfg.max_retries):
        m = _base_map(cfg)
        keep = [(passage_xy, cfg.wall_thickness / 2 + 1.2), (goal_xy, radius + 0.9)]
        tables_a = _place_tables(m, cfg, rng, room_a, cfg.tables_room_a, keep)
        tables = tables_a + _place_tables(m, cfg, rng, room_b, cfg.tables_room_b, keep)
        if not tables_a:
            continue
        site = _find_site(m, obj, cfg, rng, tables_a, yaws)
        if site is None:
            continue
        goals = [Pose2(goal_xy[0], goal_xy[1], _passage_yaw(y)) for y in yaws]
        if any(polygon_collides(m, obj, g) for g in goals):
            continue
        nearest = int(np.argmin([_rect_disc_distance(t, site) for t in tables]))
        out = []
        try:
            for i, (yaw, goal) in enumerate(zip(yaws, goals)):
                start = Pose2(site[0], site[1], yaw)
                sc = Scenario(m, obj, start, goal)
                plan, ok = _choose_seeds(m, obj, cfg, start, goal)
                sc.seeds = [p for p, _ in plan]
                sc.seed_yaw_caps = [c for _, c in plan]
                sc.grasp_set = build_grasp_set(sc, cfg.sampling)
                sc.meta = {"object_id": shape, "site_id": site_id, "table_id": f"{site_id}/t{nearest}",
                           "orientation_index": i, "corridor_ok": ok}
                out.append(sc)
        except EmptyGraspSet:
            continue
        return out
    raise GenerationFailed(f"no valid placement for {shape!r} after {cfg.max_retries} attempts")


def generate_benchmark(cfg: TemplateConfig, shapes: list[str], sites_per_shape: int,
                       orientations: int, seed: int) -> list[Scenario]:
    """All scenarios of the benchmark, in a deterministic order."""
    rng = np.random.default_rng(seed)
    out = []
    for shape in shapes:
        for s in range(sites_per_shape):
            out.extend(generate_site(cfg, shape, orientations, rng, f"{shape}-{s}"))
    return out
