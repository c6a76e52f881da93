import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cograsp.geometry import (
    GeometryError,
    ObjectShape,
    OccupancyMap,
    Pose2,
    inverse_pose,
    point_in_free_space,
    points_free,
    polygon_collides,
    rasterize_scene,
    segment_clear,
    transform_point,
    wrap_angle,
)

finite = st.floats(-50, 50, allow_nan=False)
angles = st.floats(-20, 20, allow_nan=False)


def unit_square():
    return ObjectShape([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]], [[0.5, 0.0]])


def strip_map():
    """10 m x 4 m free map with an obstacle strip x in [2, 3]."""
    m = OccupancyMap.empty(10.0, 4.0, 0.05)
    m.fill_rect(2.0, 0.0, 3.0, 4.0)
    return m


# transform_point ---------------------------------------------------------

def test_transform_identity():
    np.testing.assert_allclose(transform_point(Pose2(0, 0, 0), [1, 2]), [1, 2])


def test_transform_quarter_turn():
    np.testing.assert_allclose(transform_point(Pose2(0, 0, math.pi / 2), [1, 0]), [0, 1], atol=1e-12)


def test_transform_half_turn_with_offset():
    # hand evaluation: R(pi) (1, 0) = (-1, 0); plus (1, 1) gives (0, 1)
    np.testing.assert_allclose(transform_point(Pose2(1, 1, math.pi), [1, 0]), [0, 1], atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(finite, finite, angles, finite, finite)
def test_transform_inverse_roundtrip(x, y, yaw, px, py):
    pose = Pose2(x, y, yaw)
    p = np.array([px, py])
    back = transform_point(pose, transform_point(inverse_pose(pose), p))
    np.testing.assert_allclose(back, p, atol=1e-9)


@given(angles)
def test_yaw_is_wrapped(yaw):
    w = Pose2(0, 0, yaw).yaw
    assert -math.pi <= w < math.pi
    assert math.isclose(math.cos(w), math.cos(yaw), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(yaw), abs_tol=1e-9)


def test_wrap_angle_pi_maps_to_minus_pi():
    assert wrap_angle(math.pi) == -math.pi
    assert wrap_angle(-1e-18) < math.pi


def test_pose_rejects_nan():
    with pytest.raises(GeometryError):
        Pose2(float("nan"), 0.0)


# free space ---------------------------------------------------------------

def test_point_free_center_of_empty_map():
    m = OccupancyMap.empty(10 * 0.05, 10 * 0.05, 0.05)
    assert point_in_free_space(m, [0.25, 0.25])


def test_point_outside_bounds_not_free():
    m = OccupancyMap.empty(1.0, 1.0, 0.05)
    for p in ([-0.01, 0.5], [0.5, 1.0], [1.2, 0.2], [0.5, -3]):
        assert not point_in_free_space(m, p)


def test_point_in_strip_not_free():
    m = strip_map()
    assert not point_in_free_space(m, [2.5, 1.0])
    # direct cell lookup oracle
    r, c = int(1.0 // 0.05), int(2.5 // 0.05)
    assert m.grid[r, c]
    assert point_in_free_space(m, [1.5, 1.0])


def test_row_zero_is_lowest_y():
    m = OccupancyMap.empty(1.0, 1.0, 0.1)
    m.grid[0, :] = True
    assert not point_in_free_space(m, [0.5, 0.05])
    assert point_in_free_space(m, [0.5, 0.95])


# polygon collision ----------------------------------------------------------

def test_square_in_empty_map_is_free():
    m = OccupancyMap.empty(4.0, 4.0)
    assert not polygon_collides(m, unit_square(), Pose2(2, 2, 0.3))


def test_square_overlapping_wall_collides():
    m = strip_map()
    pose = Pose2(1.6, 2.0, 0.0)  # right edge at x = 2.1, inside the strip
    assert polygon_collides(m, unit_square(), pose)
    # brute force dense sampling oracle
    s = np.linspace(-0.5, 0.5, 201)
    gx, gy = np.meshgrid(s, s)
    pts = np.stack([gx.ravel() + 1.6, gy.ravel() + 2.0], axis=1)
    assert not points_free(m, pts).all()


def test_square_straddling_edge_collides():
    m = OccupancyMap.empty(4.0, 4.0)
    assert polygon_collides(m, unit_square(), Pose2(0.2, 2.0, 0.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_collision_monotone_under_obstacle_addition(seed):
    rng = np.random.default_rng(seed)
    m = OccupancyMap.empty(3.0, 3.0, 0.1)
    m.grid[rng.random(m.grid.shape) < 0.02] = True
    pose = Pose2(*rng.uniform(0.8, 2.2, 2), rng.uniform(-math.pi, math.pi))
    before = polygon_collides(m, unit_square(), pose)
    m2 = m.copy()
    m2.grid[rng.random(m.grid.shape) < 0.05] = True
    after = polygon_collides(m2, unit_square(), pose)
    assert after or not before


def test_collision_agrees_with_dense_oracle_on_random_maps():
    rng = np.random.default_rng(3)
    sq = unit_square()
    s = np.linspace(-0.5, 0.5, 401)
    gx, gy = np.meshgrid(s, s)
    local = np.stack([gx.ravel(), gy.ravel()], axis=1)
    for _ in range(30):
        m = OccupancyMap.empty(3.0, 3.0, 0.1)
        m.grid[rng.random(m.grid.shape) < 0.01] = True
        pose = Pose2(*rng.uniform(0.8, 2.2, 2), rng.uniform(-math.pi, math.pi))
        c, s_ = math.cos(pose.yaw), math.sin(pose.yaw)
        world = local @ np.array([[c, s_], [-s_, c]]) + pose.position
        oracle = not points_free(m, world).all()
        # sampling at res/2 may miss sub-cell slivers the dense oracle sees, never the reverse
        if polygon_collides(m, sq, pose):
            assert oracle
        if not oracle:
            assert not polygon_collides(m, sq, pose)


def test_object_shape_validation():
    with pytest.raises(GeometryError):
        ObjectShape([[0, 0], [1, 0]], [])
    with pytest.raises(GeometryError):
        ObjectShape([[0, 0], [1, 1], [1, 0], [0, 1]], [])  # bow tie
    with pytest.raises(GeometryError):
        ObjectShape([[0, 0], [1, 0], [1, 1], [0, 1]], [[0.5, 0.5]])  # interior grasp point
    ObjectShape([[0, 0], [1, 0], [1, 1], [0, 1]], [[0.5, 1e-7]])


# segment_clear ----------------------------------------------------------------

def test_segment_degenerate_in_free_cell():
    m = strip_map()
    assert segment_clear(m, [1.0, 1.0], [1.0, 1.0])


def test_segment_crossing_strip_blocked():
    m = strip_map()
    assert not segment_clear(m, [1.0, 1.0], [4.0, 1.0])
    t = np.linspace(0, 1, 10_001)
    pts = np.array([1.0, 1.0]) + t[:, None] * np.array([3.0, 0.0])
    assert not points_free(m, pts).all()


def test_segment_inside_one_cell():
    m = strip_map()
    assert segment_clear(m, [1.01, 1.01], [1.04, 1.03])


def test_segment_into_thin_wall_detected():
    m = OccupancyMap.empty(2.0, 2.0, 0.05)
    m.grid[:, 20] = True  # one-cell wall at x in [1.0, 1.05)
    assert not segment_clear(m, [0.5, 0.5], [1.5, 1.7])


# rasterize_scene -----------------------------------------------------------------

def test_raster_all_free():
    m = OccupancyMap.empty(3.2, 3.2)
    assert np.all(rasterize_scene(m, None, None, 8) == 0.0)


def test_raster_all_obstacle():
    m = OccupancyMap(np.ones((64, 64), bool))
    assert np.all(rasterize_scene(m, None, None, 8) == 1.0)


def test_raster_left_half_obstacle():
    g = np.zeros((64, 64), bool)
    g[:, :32] = True
    out = rasterize_scene(OccupancyMap(g), None, None, 2)
    np.testing.assert_array_equal(out, [[1.0, 0.0], [1.0, 0.0]])


def test_raster_marks_object_half():
    m = OccupancyMap.empty(3.2, 3.2)
    out = rasterize_scene(m, unit_square(), Pose2(1.6, 1.6, 0.0), 64)
    assert set(np.unique(out)) == {0.0, 0.5}
    # square covers a third of the side, so about a ninth of the cells
    frac = float(np.mean(out == 0.5))
    assert 0.08 < frac < 0.13


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_raster_consistent_with_free_space(seed):
    rng = np.random.default_rng(seed)
    m = OccupancyMap(rng.random((16, 16)) < 0.3, 0.1)
    out = rasterize_scene(m, None, None, 16)
    for r in range(16):
        for c in range(16):
            p = m.cell_center(r, c)
            assert (out[r, c] == 0.0) == point_in_free_space(m, p)
