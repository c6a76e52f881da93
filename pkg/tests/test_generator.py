import math

import numpy as np
import pytest

from cograsp.generator import (SHAPES, GenerationFailed, TemplateConfig, generate_benchmark, generate_site,
                               make_shape, orientation_sweep)
from cograsp.geometry import polygon_collides
from cograsp.scenario import load_scenario, save_scenario


def test_orientation_sweep_examples():
    assert orientation_sweep(1) == [-math.pi]
    np.testing.assert_allclose(orientation_sweep(4), [-math.pi, -math.pi / 2, 0.0, math.pi / 2])
    s = orientation_sweep(24)
    assert len(s) == 24 and max(s) < math.pi
    np.testing.assert_allclose(np.diff(s), 2 * math.pi / 24)


@pytest.mark.parametrize("name", sorted(SHAPES))
def test_shapes_are_valid_polygons_with_grasp_points(name):
    obj = make_shape(name)
    assert obj.name == name
    assert len(obj.vertices) >= 3 and len(obj.grasp_points) >= 2
    v = obj.canonical_vertices()
    area = 0.5 * (np.dot(v[:, 0], np.roll(v[:, 1], -1)) - np.dot(v[:, 1], np.roll(v[:, 0], -1)))
    assert area > 0


def test_unknown_shape():
    with pytest.raises(ValueError, match="unknown shape"):
        make_shape("sphere")


def test_template_rejects_bad_geometry():
    with pytest.raises(ValueError):
        TemplateConfig(passage_width=0.0)


@pytest.fixture(scope="module")
def site():
    return generate_site(TemplateConfig(), "bar", 3, np.random.default_rng(7), "bar-x")


def test_site_scenarios_share_map_and_sweep_yaw(site, tmp_path):
    assert len(site) == 3
    yaws = [sc.start_pose.yaw for sc in site]
    np.testing.assert_allclose(yaws, orientation_sweep(3))
    cfg = TemplateConfig()
    for k, sc in enumerate(site):
        assert np.array_equal(sc.map.grid, site[0].map.grid)
        assert (sc.start_pose.x, sc.start_pose.y) == (site[0].start_pose.x, site[0].start_pose.y)
        assert sc.start_pose.x < cfg.wall_x[0] < cfg.wall_x[1] < sc.goal_pose.x
        assert not polygon_collides(sc.map, sc.object, sc.start_pose)
        assert not polygon_collides(sc.map, sc.object, sc.goal_pose)
        assert sc.m > 0
        assert sc.meta["orientation_index"] == k and sc.meta["site_id"] == "bar-x"
        assert sc.meta["table_id"].startswith("bar-x/t")
        save_scenario(sc, tmp_path / f"{k}.json")
        back = load_scenario(tmp_path / f"{k}.json", validate_schema=True)
        assert back.to_json() == sc.to_json()


def test_generation_is_deterministic():
    cfg = TemplateConfig()
    a = generate_benchmark(cfg, ["triangle"], 1, 2, seed=3)
    b = generate_benchmark(cfg, ["triangle"], 1, 2, seed=3)
    assert [s.to_json() for s in a] == [s.to_json() for s in b]


def test_narrow_passage_still_writes_scenarios():
    cfg = TemplateConfig(passage_width=0.10)
    scs = generate_site(cfg, "bar", 2, np.random.default_rng(0), "narrow")
    assert len(scs) == 2
    assert not any(sc.meta["corridor_ok"] for sc in scs)


def test_impossible_template_fails_loudly():
    cfg = TemplateConfig(width=3.0, height=2.0, max_retries=3)
    with pytest.raises(GenerationFailed):
        generate_site(cfg, "rectangle", 1, np.random.default_rng(0))
