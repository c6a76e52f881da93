"""Convex free-space regions grown as axis-aligned boxes from seed points.

Robot regions live in (x, y); object regions in (x, y, yaw) with yaw unwrapped
around the seed. Positions are sampled on the lattice of map cell centers and
yaw on a ``yaw_step`` lattice anchored at the seed yaw, so the collision test
for a whole candidate box reduces to a summed-area-table lookup over a
precomputed configuration-space obstacle grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import ObjectShape, OccupancyMap, Pose2, disc_samples, polygon_collides, rotation

__all__ = [
    "ConvexRegion",
    "RegionSequence",
    "CorridorError",
    "SeedInCollision",
    "BrokenChain",
    "EndpointNotCovered",
    "robot_cspace",
    "object_cspace",
    "grow_convex_region",
    "build_region_sequence",
    "unwrap_into",
    "regions_for_scenario",
]

YAW_STEP = math.pi / 36
MAX_YAW = math.pi / 2


class CorridorError(RuntimeError):
    pass


class SeedInCollision(CorridorError):
    pass


class BrokenChain(CorridorError):
    def __init__(self, k: int):
        super().__init__(f"regions {k} and {k + 1} do not intersect")
        self.k = k


class EndpointNotCovered(CorridorError):
    pass


@dataclass
class ConvexRegion:
    """``{x : normals @ x <= offsets}``; normals are unit rows."""

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        self.normals = np.asarray(self.normals, dtype=float)
        self.offsets = np.asarray(self.offsets, dtype=float)
        norms = np.linalg.norm(self.normals, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("halfspace normals must be unit length")

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @classmethod
    def from_box(cls, lo, hi) -> "ConvexRegion":
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        eye = np.eye(len(lo))
        return cls(np.concatenate([eye, -eye]), np.concatenate([hi, -lo]))

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) of an axis-aligned region."""
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        for n, b in zip(self.normals, self.offsets):
            axis = int(np.argmax(np.abs(n)))
            if abs(abs(n[axis]) - 1.0) > 1e-12:
                raise ValueError("region is not an axis-aligned box")
            if n[axis] > 0:
                hi[axis] = min(hi[axis], b)
            else:
                lo[axis] = max(lo[axis], -b)
        return lo, hi

    def contains(self, x, tol: float = 1e-9) -> bool:
        return bool(np.all(self.normals @ np.asarray(x, dtype=float) <= self.offsets + tol))

    def violation(self, x) -> float:
        return float(max(0.0, np.max(self.normals @ np.asarray(x, dtype=float) - self.offsets)))

    def intersects(self, other: "ConvexRegion") -> bool:
        try:
            lo1, hi1 = self.box
            lo2, hi2 = other.box
        except ValueError:
            from scipy.optimize import linprog

            a = np.concatenate([self.normals, other.normals])
            b = np.concatenate([self.offsets, other.offsets])
            res = linprog(np.zeros(self.dim), A_ub=a, b_ub=b, bounds=[(None, None)] * self.dim)
            return res.status == 0
        return bool(np.all(np.maximum(lo1, lo2) <= np.minimum(hi1, hi2)))

    def to_dict(self) -> dict:
        return {"normals": self.normals.tolist(), "offsets": self.offsets.tolist()}


@dataclass
class RegionSequence:
    robot_regions: list[ConvexRegion]
    object_regions: list[ConvexRegion]
    seeds: list[Pose2] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.robot_regions)


def _shift_or(blocked_pad: np.ndarray, pad: int, offsets: np.ndarray, shape) -> np.ndarray:
    h, w = shape
    out = np.zeros(shape, dtype=bool)
    for dr, dc in offsets:
        out |= blocked_pad[pad + dr: pad + dr + h, pad + dc: pad + dc + w]
    return out


def _padded(m: OccupancyMap, pad: int) -> np.ndarray:
    return np.pad(m.grid, pad, mode="constant", constant_values=True)


def _cell_offsets(m: OccupancyMap, pts: np.ndarray) -> np.ndarray:
    """Cell offsets of body points relative to a body origin placed at a cell center."""
    off = np.floor(pts / m.resolution + 0.5).astype(np.int64)
    return np.unique(off[:, ::-1], axis=0)  # (drow, dcol)


def robot_cspace(m: OccupancyMap, clearance: float = 0.0) -> np.ndarray:
    """Blocked lattice points for a disc robot of radius ``clearance``."""
    if clearance <= 0:
        return m.grid.copy()
    off = _cell_offsets(m, disc_samples(clearance, m.resolution / 2.0))
    pad = int(np.max(np.abs(off))) + 1
    return _shift_or(_padded(m, pad), pad, off, m.grid.shape)


def object_cspace(m: OccupancyMap, obj: ObjectShape, yaws) -> np.ndarray:
    """Blocked lattice points per yaw, shape (len(yaws), H, W).

    Exactly matches ``polygon_collides`` evaluated with the object origin at
    cell centers.
    """
    pts = obj.sample_points(m.resolution)
    offs = [_cell_offsets(m, pts @ rotation(a).T) for a in yaws]
    pad = max(int(np.max(np.abs(o))) for o in offs) + 1
    padded = _padded(m, pad)
    return np.stack([_shift_or(padded, pad, o, m.grid.shape) for o in offs])


def _sat(blocked: np.ndarray) -> np.ndarray:
    s = blocked.astype(np.int64)
    for ax in range(s.ndim):
        s = np.cumsum(s, axis=ax)
    return np.pad(s, [(1, 0)] * s.ndim)


def _box_sum(sat: np.ndarray, lo, hi) -> int:
    """Inclusive index box sum over the original array."""
    if len(lo) == 2:
        (a0, b0), (a1, b1) = lo, (hi[0] + 1, hi[1] + 1)
        return int(sat[a1, b1] - sat[a0, b1] - sat[a1, b0] + sat[a0, b0])
    (a0, b0, c0), (a1, b1, c1) = lo, (hi[0] + 1, hi[1] + 1, hi[2] + 1)
    return int(sat[a1, b1, c1] - sat[a0, b1, c1] - sat[a1, b0, c1] - sat[a1, b1, c0]
               + sat[a0, b0, c1] + sat[a0, b1, c0] + sat[a1, b0, c0] - sat[a0, b0, c0])


def _bracket(v: float, n: int) -> tuple[int, int]:
    """Lattice indices bracketing continuous lattice coordinate ``v``."""
    f = math.floor(v)
    if abs(v - round(v)) < 1e-9:
        f = int(round(v))
        return f, f
    return f, f + 1


def _grow(sat: np.ndarray, lo: list[int], hi: list[int], shape, order) -> tuple[list[int], list[int]]:
    if _box_sum(sat, lo, hi) != 0:
        raise SeedInCollision("seed box is in collision")
    grew = True
    while grew:
        grew = False
        for axis, sign in order:
            nlo, nhi = list(lo), list(hi)
            if sign > 0:
                if hi[axis] + 1 >= shape[axis]:
                    continue
                nhi[axis] += 1
                slab_lo, slab_hi = list(nlo), list(nhi)
                slab_lo[axis] = nhi[axis]
            else:
                if lo[axis] - 1 < 0:
                    continue
                nlo[axis] -= 1
                slab_lo, slab_hi = list(nlo), list(nhi)
                slab_hi[axis] = nlo[axis]
            if _box_sum(sat, slab_lo, slab_hi) == 0:
                lo, hi = nlo, nhi
                grew = True
    return lo, hi


class _CSpaceCache:
    """Summed-area tables keyed by (kind, parameters), reused across seeds."""

    def __init__(self, m: OccupancyMap, obj: ObjectShape | None = None):
        self.m = m
        self.obj = obj
        self._store: dict = {}

    def robot(self, clearance: float) -> np.ndarray:
        key = ("robot", round(clearance, 9))
        if key not in self._store:
            self._store[key] = _sat(robot_cspace(self.m, clearance))
        return self._store[key]

    def object(self, seed_yaw: float, yaw_step: float, n_half: int) -> np.ndarray:
        key = ("object", round(seed_yaw, 12), round(yaw_step, 12), n_half)
        if key not in self._store:
            yaws = seed_yaw + yaw_step * np.arange(-n_half, n_half + 1)
            self._store[key] = _sat(object_cspace(self.m, self.obj, yaws))
        return self._store[key]


def grow_convex_region(m: OccupancyMap, seed, dim: int, obj: ObjectShape | None = None,
                       clearance: float = 0.0, yaw_step: float = YAW_STEP,
                       max_yaw: float = MAX_YAW, _cache: _CSpaceCache | None = None) -> ConvexRegion:
    """Greedy box growth from ``seed`` in fixed face order +x, -x, +y, -y(, +yaw, -yaw).

    ``clearance`` inflates obstacles for a disc-shaped robot (dim 2 only).
    """
    seed = np.asarray(seed, dtype=float)
    res = m.resolution
    u = (seed[0] - m.origin[0]) / res - 0.5
    v = (seed[1] - m.origin[1]) / res - 0.5
    c0, c1 = _bracket(u, m.width_cells)
    r0, r1 = _bracket(v, m.height_cells)
    if min(c0, r0) < 0 or c1 >= m.width_cells or r1 >= m.height_cells:
        raise SeedInCollision("seed outside the map")
    cache = _cache or _CSpaceCache(m, obj)
    if dim == 2:
        sat = cache.robot(clearance)
        lo, hi = _grow(sat, [r0, c0], [r1, c1], m.grid.shape,
                       [(1, 1), (1, -1), (0, 1), (0, -1)])
        box_lo = np.array([m.origin[0] + (lo[1] + 0.5) * res, m.origin[1] + (lo[0] + 0.5) * res])
        box_hi = np.array([m.origin[0] + (hi[1] + 0.5) * res, m.origin[1] + (hi[0] + 0.5) * res])
        return ConvexRegion.from_box(box_lo, box_hi)
    if dim != 3 or obj is None:
        raise ValueError("dim must be 2, or 3 with an object")
    yaw0 = float(seed[2])
    if polygon_collides(m, obj, Pose2(seed[0], seed[1], yaw0)):
        raise SeedInCollision("object collides at the seed pose")
    n_half = int(round(max_yaw / yaw_step))
    sat = cache.object(yaw0, yaw_step, n_half)
    shape = (2 * n_half + 1, *m.grid.shape)
    lo, hi = _grow(sat, [n_half, r0, c0], [n_half, r1, c1], shape,
                   [(2, 1), (2, -1), (1, 1), (1, -1), (0, 1), (0, -1)])
    box_lo = np.array([m.origin[0] + (lo[2] + 0.5) * res, m.origin[1] + (lo[1] + 0.5) * res,
                       yaw0 + (lo[0] - n_half) * yaw_step])
    box_hi = np.array([m.origin[0] + (hi[2] + 0.5) * res, m.origin[1] + (hi[1] + 0.5) * res,
                       yaw0 + (hi[0] - n_half) * yaw_step])
    return ConvexRegion.from_box(box_lo, box_hi)


def unwrap_into(theta: float, lo: float, hi: float) -> float | None:
    """A representative ``theta + 2*pi*k`` inside ``[lo, hi]``, or None."""
    k = math.ceil((lo - theta) / (2 * math.pi) - 1e-12)
    cand = theta + 2 * math.pi * k
    if cand > hi + 1e-9:
        return None
    return min(max(cand, lo), hi)


def _shift_yaw(region: ConvexRegion, delta: float) -> ConvexRegion:
    lo, hi = region.box
    lo[2] += delta
    hi[2] += delta
    return ConvexRegion.from_box(lo, hi)


def _pose_in_object_region(region: ConvexRegion, pose: Pose2) -> np.ndarray | None:
    lo, hi = region.box
    yaw = unwrap_into(pose.yaw, lo[2], hi[2])
    if yaw is None:
        return None
    q = np.array([pose.x, pose.y, yaw])
    return q if region.contains(q) else None


def build_region_sequence(m: OccupancyMap, start: Pose2, goal: Pose2, seeds: list[Pose2],
                          obj: ObjectShape, robot_clearance: float = 0.0,
                          yaw_step: float = YAW_STEP, max_yaw: float = MAX_YAW,
                          yaw_limits: list[float] | None = None) -> RegionSequence:
    """Grow one robot box and one object box per seed and check the chain.

    ``yaw_limits`` optionally caps the yaw half-range grown around each seed;
    a cap of 0 yields a fixed-yaw slab, which is how a narrow passage is
    covered by a box that stays long along the passage.
    """
    if len(seeds) < 2:
        raise ValueError("need at least two seeds")
    if yaw_limits is None:
        yaw_limits = [max_yaw] * len(seeds)
    cache = _CSpaceCache(m, obj)
    robot, objr = [], []
    for s, lim in zip(seeds, yaw_limits):
        robot.append(grow_convex_region(m, (s.x, s.y), 2, clearance=robot_clearance, _cache=cache))
        objr.append(grow_convex_region(m, (s.x, s.y, s.yaw), 3, obj, yaw_step=yaw_step,
                                       max_yaw=min(lim, max_yaw), _cache=cache))
    # yaw is periodic: shift each object box by whole turns to line up with its predecessor
    for k in range(1, len(objr)):
        prev_c = objr[k - 1].box[0][2] + objr[k - 1].box[1][2]
        cur_c = objr[k].box[0][2] + objr[k].box[1][2]
        turns = round((prev_c - cur_c) / (4 * math.pi))
        if turns:
            objr[k] = _shift_yaw(objr[k], 2 * math.pi * turns)
    seq = RegionSequence(robot, objr, list(seeds))
    if _pose_in_object_region(objr[0], start) is None:
        raise EndpointNotCovered("start pose is outside the first object region")
    if _pose_in_object_region(objr[-1], goal) is None:
        raise EndpointNotCovered("goal pose is outside the last object region")
    for k in range(len(seeds) - 1):
        if not (robot[k].intersects(robot[k + 1]) and objr[k].intersects(objr[k + 1])):
            raise BrokenChain(k)
    return seq


def regions_for_scenario(scenario, robot_clearance: float = 0.30, yaw_step: float = YAW_STEP,
                         max_yaw: float = MAX_YAW) -> RegionSequence:
    """Corridor from the seeds stored in ``scenario``; the robot clearance is the base radius."""
    caps = [max_yaw if c is None else c for c in scenario.seed_yaw_caps]
    return build_region_sequence(scenario.map, scenario.start_pose, scenario.goal_pose,
                                 scenario.seeds, scenario.object, robot_clearance=robot_clearance,
                                 yaw_step=yaw_step, max_yaw=max_yaw, yaw_limits=caps)
