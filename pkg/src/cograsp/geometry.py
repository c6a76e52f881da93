"""Planar geometry: occupancy maps, rigid transforms, polygonal objects and
sample-based collision predicates.

Cell convention: cell ``(row, col)`` covers
``[origin.x + col*res, origin.x + (col+1)*res) x [origin.y + row*res, ...)``;
row 0 is the lowest ``y``. Anything outside the grid counts as an obstacle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "wrap_angle",
    "rotation",
    "Pose2",
    "OccupancyMap",
    "ObjectShape",
    "transform_point",
    "transform_points",
    "inverse_pose",
    "point_in_free_space",
    "points_free",
    "polygon_collides",
    "segment_clear",
    "disc_samples",
    "disc_collides",
    "rasterize_scene",
    "points_in_polygon",
    "point_segment_distance",
    "GeometryError",
]


class GeometryError(ValueError):
    """Raised when a geometric input violates its invariants."""


def wrap_angle(a: float) -> float:
    """Wrap an angle into ``[-pi, pi)``."""
    w = (a + math.pi) % (2.0 * math.pi) - math.pi
    # float modulo can land exactly on +pi for tiny negative inputs
    if w >= math.pi:
        w -= 2.0 * math.pi
    return w


def rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2:
    """Planar pose; yaw is normalized into ``[-pi, pi)`` on construction."""

    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        for v in (self.x, self.y, self.yaw):
            if not math.isfinite(v):
                raise GeometryError(f"non-finite pose component {v!r}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.yaw]

    @classmethod
    def from_list(cls, v) -> "Pose2":
        return cls(float(v[0]), float(v[1]), float(v[2]))


def transform_point(pose: Pose2, p) -> np.ndarray:
    """Rotate ``p`` by the pose yaw, then translate by the pose position."""
    return rotation(pose.yaw) @ np.asarray(p, dtype=float) + pose.position


def transform_points(pose: Pose2, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    return pts @ rotation(pose.yaw).T + pose.position


def inverse_pose(pose: Pose2) -> Pose2:
    t = -(rotation(-pose.yaw) @ pose.position)
    return Pose2(t[0], t[1], -pose.yaw)


@dataclass
class OccupancyMap:
    """Boolean obstacle grid. ``grid[row, col]`` is True for obstacle cells."""

    grid: np.ndarray
    resolution: float = 0.05
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        self.grid = np.ascontiguousarray(np.asarray(self.grid, dtype=bool))
        if self.grid.ndim != 2:
            raise GeometryError("occupancy grid must be 2-D")
        if not self.resolution > 0:
            raise GeometryError("resolution must be positive")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @property
    def height_cells(self) -> int:
        return self.grid.shape[0]

    @property
    def width_cells(self) -> int:
        return self.grid.shape[1]

    @property
    def extent(self) -> tuple[float, float]:
        """(width, height) in meters."""
        return (self.width_cells * self.resolution, self.height_cells * self.resolution)

    @classmethod
    def empty(cls, width_m: float, height_m: float, resolution: float = 0.05,
              origin=(0.0, 0.0)) -> "OccupancyMap":
        w = int(round(width_m / resolution))
        h = int(round(height_m / resolution))
        return cls(np.zeros((h, w), dtype=bool), resolution, origin)

    def cell_of(self, pts) -> tuple[np.ndarray, np.ndarray]:
        """(row, col) integer indices of the cells containing ``pts``."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        col = np.floor((pts[:, 0] - self.origin[0]) / self.resolution).astype(np.int64)
        row = np.floor((pts[:, 1] - self.origin[1]) / self.resolution).astype(np.int64)
        return row, col

    def cell_center(self, row, col) -> np.ndarray:
        return np.stack([
            self.origin[0] + (np.asarray(col) + 0.5) * self.resolution,
            self.origin[1] + (np.asarray(row) + 0.5) * self.resolution,
        ], axis=-1)

    def fill_rect(self, x0: float, y0: float, x1: float, y1: float, value: bool = True):
        """Mark every cell whose center lies in the axis-aligned rectangle."""
        res = self.resolution
        c0 = max(int(math.ceil((x0 - self.origin[0]) / res - 0.5)), 0)
        c1 = min(int(math.floor((x1 - self.origin[0]) / res - 0.5)), self.width_cells - 1)
        r0 = max(int(math.ceil((y0 - self.origin[1]) / res - 0.5)), 0)
        r1 = min(int(math.floor((y1 - self.origin[1]) / res - 0.5)), self.height_cells - 1)
        if c0 <= c1 and r0 <= r1:
            self.grid[r0:r1 + 1, c0:c1 + 1] = value

    def copy(self) -> "OccupancyMap":
        return OccupancyMap(self.grid.copy(), self.resolution, self.origin)


def points_free(m: OccupancyMap, pts) -> np.ndarray:
    """Vectorized free-space test; out-of-bounds points are not free."""
    row, col = m.cell_of(pts)
    inside = (row >= 0) & (row < m.height_cells) & (col >= 0) & (col < m.width_cells)
    free = np.zeros(row.shape, dtype=bool)
    free[inside] = ~m.grid[row[inside], col[inside]]
    return free


def point_in_free_space(m: OccupancyMap, p) -> bool:
    return bool(points_free(m, p)[0])


def points_in_polygon(poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Even-odd ray casting. Points exactly on the boundary may go either way."""
    poly = np.asarray(poly, dtype=float)
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x0, y0 = poly[:, 0][None, :], poly[:, 1][None, :]
    x1, y1 = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    straddle = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    crossing = straddle & (x < xint)
    return (np.count_nonzero(crossing, axis=1) % 2) == 1


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point in ``p`` (n,2) to segment ab."""
    p = np.asarray(p, dtype=float).reshape(-1, 2)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(p - a, axis=1)
    t = np.clip((p - a) @ ab / denom, 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


@dataclass
class ObjectShape:
    """Simple polygon in the object frame plus grasp points on its boundary."""

    vertices: np.ndarray
    grasp_points: np.ndarray
    name: str = "object"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        self.grasp_points = np.asarray(self.grasp_points, dtype=float).reshape(-1, 2)
        n = len(self.vertices)
        if n < 3:
            raise GeometryError("object polygon needs at least 3 vertices")
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_intersect(self.vertices[i], self.vertices[(i + 1) % n],
                                       self.vertices[j], self.vertices[(j + 1) % n]):
                    raise GeometryError("object polygon self-intersects")
        for g in self.grasp_points:
            if self.boundary_distance(g[None, :])[0] > 1e-6:
                raise GeometryError(f"grasp point {g.tolist()} is off the boundary")

    def edges(self):
        v = self.vertices
        return zip(v, np.roll(v, -1, axis=0))

    def boundary_distance(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return np.min(np.stack([point_segment_distance(pts, a, b) for a, b in self.edges()]), axis=0)

    def contains(self, pts) -> np.ndarray:
        return points_in_polygon(self.vertices, pts)

    @property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def canonical_vertices(self) -> np.ndarray:
        """Counter-clockwise winding starting at the lexicographically smallest vertex."""
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        signed = float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
        if signed < 0:
            v = v[::-1]
        start = min(range(len(v)), key=lambda i: (v[i, 0], v[i, 1]))
        return np.roll(v, -start, axis=0)

    def sample_points(self, resolution: float) -> np.ndarray:
        """Boundary samples at spacing <= resolution/2 plus interior grid samples
        at pitch resolution/2, all in the object frame."""
        key = round(float(resolution), 12)
        if key in self._cache:
            return self._cache[key]
        step = resolution / 2.0
        pts = []
        for a, b in self.edges():
            n = max(int(math.ceil(np.linalg.norm(b - a) / step)), 1)
            t = np.arange(n) / n
            pts.append(a + t[:, None] * (b - a))
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        xs = np.arange(lo[0] + step / 2, hi[0], step)
        ys = np.arange(lo[1] + step / 2, hi[1], step)
        if len(xs) and len(ys):
            gx, gy = np.meshgrid(xs, ys)
            grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
            pts.append(grid[self.contains(grid)])
        out = np.concatenate(pts, axis=0)
        self._cache[key] = out
        return out

    def to_dict(self) -> dict:
        return {"name": self.name, "vertices": self.vertices.tolist(),
                "grasp_points": self.grasp_points.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectShape":
        return cls(d["vertices"], d["grasp_points"], d.get("name", "object"))


def polygon_collides(m: OccupancyMap, obj: ObjectShape, pose: Pose2) -> bool:
    pts = transform_points(pose, obj.sample_points(m.resolution))
    return not bool(np.all(points_free(m, pts)))


def segment_clear(m: OccupancyMap, a, b) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = int(math.ceil(np.linalg.norm(b - a) / (m.resolution / 2.0))) + 1
    t = np.linspace(0.0, 1.0, max(n, 2))
    return bool(np.all(points_free(m, a + t[:, None] * (b - a))))


def disc_samples(radius: float, spacing: float) -> np.ndarray:
    """Center, concentric rings and the rim of a disc, at roughly ``spacing`` pitch."""
    pts = [np.zeros((1, 2))]
    n_rings = max(int(math.ceil(radius / spacing)), 1)
    for k in range(1, n_rings + 1):
        r = radius * k / n_rings
        n = max(int(math.ceil(2 * math.pi * r / spacing)), 6)
        a = 2 * math.pi * np.arange(n) / n
        pts.append(np.stack([r * np.cos(a), r * np.sin(a)], axis=1))
    return np.concatenate(pts, axis=0)


def disc_collides(m: OccupancyMap, center, radius: float,
                  obj: ObjectShape | None = None, pose: Pose2 | None = None) -> bool:
    """Dense-sample a disc against map obstacles and, optionally, a posed object."""
    pts = np.asarray(center, dtype=float) + disc_samples(radius, m.resolution / 2.0)
    if not np.all(points_free(m, pts)):
        return True
    if obj is not None:
        local = transform_points(inverse_pose(pose), pts)
        if np.any(obj.contains(local)):
            return True
        # rim points can straddle a thin polygon; also test distance to the boundary
        if float(obj.boundary_distance(transform_points(inverse_pose(pose), center)[0])[0]) < radius:
            return True
    return False


def object_cells(m: OccupancyMap, obj: ObjectShape, pose: Pose2) -> np.ndarray:
    """Boolean grid of cells touched by the posed object (centers inside or samples in)."""
    occ = np.zeros_like(m.grid)
    centers = m.cell_center(*np.indices(m.grid.shape)).reshape(-1, 2)
    local = transform_points(inverse_pose(pose), centers)
    lo, hi = obj.vertices.min(axis=0), obj.vertices.max(axis=0)
    near = np.all((local >= lo - m.resolution) & (local <= hi + m.resolution), axis=1)
    inside = np.zeros(len(centers), dtype=bool)
    inside[near] = obj.contains(local[near])
    occ.ravel()[inside] = True
    row, col = m.cell_of(transform_points(pose, obj.sample_points(m.resolution)))
    ok = (row >= 0) & (row < m.height_cells) & (col >= 0) & (col < m.width_cells)
    occ[row[ok], col[ok]] = True
    return occ


def rasterize_scene(m: OccupancyMap, obj: ObjectShape | None, pose: Pose2 | None,
                    out_size: int = 64) -> np.ndarray:
    """Nearest-neighbour raster: obstacle 1.0, object 0.5, free 0.0.

    Output row ``r`` samples source row ``floor((r + 0.5) * H / out_size)``; the
    same rule applies to columns.
    """
    if out_size < 1:
        raise GeometryError("out_size must be positive")
    src = np.zeros(m.grid.shape)
    if obj is not None:
        src[object_cells(m, obj, pose)] = 0.5
    src[m.grid] = 1.0
    rows = np.floor((np.arange(out_size) + 0.5) * m.height_cells / out_size).astype(int)
    cols = np.floor((np.arange(out_size) + 0.5) * m.width_cells / out_size).astype(int)
    return src[np.ix_(rows, cols)]
