"""Random shelf generation: determinism, clearances, and the blocked-reach layout."""

import json
import math

import numpy as np
import pytest

from contraplan.scenegen import (
    SceneGenerationError,
    SceneGenParams,
    _footprints_overlap,
    count_blockers_on_ray,
    generate_random_scene,
    segment_hits_footprint,
)
from contraplan.world import (
    ObjectSpec,
    check_static_collision,
    initial_state,
    scene_to_dict,
)


def make_scene(seed, **kwargs):
    params = SceneGenParams(**kwargs)
    return generate_random_scene(params, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# segment vs footprint predicate
# ---------------------------------------------------------------------------


def disc_at(x, y, r):
    return ObjectSpec("disc", (r,), 0.5, 0.3, (x, y, 0.0))


def box_at(x, y, hx, hy, th=0.0):
    return ObjectSpec("box", (hx, hy), 0.5, 0.3, (x, y, th))


def test_segment_hits_disc_on_line():
    assert segment_hits_footprint(0.0, 0.0, 1.0, 0.0, disc_at(0.5, 0.0, 0.1))


def test_segment_misses_offset_disc():
    assert not segment_hits_footprint(0.0, 0.0, 1.0, 0.0, disc_at(0.5, 0.2, 0.1))
    assert segment_hits_footprint(0.0, 0.0, 1.0, 0.0, disc_at(0.5, 0.09, 0.1))


def test_segment_stops_short_of_disc():
    # the disc lies beyond the segment's far endpoint
    assert not segment_hits_footprint(0.0, 0.0, 0.3, 0.0, disc_at(0.5, 0.0, 0.1))


def test_segment_hits_box():
    assert segment_hits_footprint(0.0, 0.0, 1.0, 0.0, box_at(0.5, 0.0, 0.05, 0.05))
    assert segment_hits_footprint(0.0, 0.0, 1.0, 0.0, box_at(0.5, 0.0, 0.05, 0.05, math.pi / 4))
    assert not segment_hits_footprint(0.0, 0.0, 1.0, 0.0, box_at(0.5, 0.2, 0.05, 0.05))


def test_segment_endpoint_inside_box():
    assert segment_hits_footprint(0.5, 0.0, 2.0, 2.0, box_at(0.5, 0.0, 0.05, 0.05))


def test_vertical_segment_through_box():
    assert segment_hits_footprint(0.5, -1.0, 0.5, 1.0, box_at(0.5, 0.0, 0.05, 0.05))


# ---------------------------------------------------------------------------
# generator postconditions
# ---------------------------------------------------------------------------


def test_fixed_seed_is_deterministic():
    a = make_scene(3, n_objects=3)
    b = make_scene(3, n_objects=3)
    assert scene_to_dict(a) == scene_to_dict(b)
    assert a.n_objects == 3


def test_object_counts_and_target_shape():
    for n in (3, 6, 10):
        scene = make_scene(11, n_objects=n)
        assert scene.n_objects == n
        assert scene.target_index == 0
        assert scene.objects[0].shape == "disc"


def test_no_initial_overlaps():
    for seed in range(6):
        scene = make_scene(seed)
        objs = scene.objects
        for i in range(len(objs)):
            for j in range(i + 1, len(objs)):
                assert not _footprints_overlap(objs[i], objs[j], 0.0), (seed, i, j)


def test_robot_start_is_collision_free():
    for seed in range(6):
        scene = make_scene(seed)
        assert not check_static_collision(initial_state(scene), scene)


def test_objects_inside_shelf():
    scene = make_scene(2)
    xmin, ymin, xmax, ymax = scene.boundary
    for obj in scene.objects:
        assert xmin < obj.pose[0] < xmax
        assert ymin < obj.pose[1] < ymax
    assert len(scene.walls) == 3


def test_at_least_two_blockers_on_target_ray():
    for seed in range(8):
        scene = make_scene(seed)
        assert count_blockers_on_ray(scene) >= 2, seed


def test_target_sits_behind_the_blockers():
    # on the straight reach line, every planted blocker is nearer than the target
    for seed in range(8):
        scene = make_scene(seed)
        ax, ay = scene.robot_start[0], scene.robot_start[1]
        tx, ty, _ = scene.objects[scene.target_index].pose
        target_dist = math.hypot(tx - ax, ty - ay)
        nearer = sum(
            1
            for i, obj in enumerate(scene.objects)
            if i != scene.target_index
            and segment_hits_footprint(ax, ay, tx, ty, obj)
            and math.hypot(obj.pose[0] - ax, obj.pose[1] - ay) < target_dist
        )
        assert nearer >= 2, seed


def test_twenty_seeds_give_twenty_distinct_scenes():
    dumps = {
        json.dumps(scene_to_dict(make_scene(seed)), sort_keys=True)
        for seed in range(20)
    }
    assert len(dumps) == 20


def test_exhausted_attempt_budget_raises():
    # three objects cannot be placed with only two placement draws
    with pytest.raises(SceneGenerationError):
        make_scene(0, n_objects=3, max_attempts=2)


def test_param_validation():
    with pytest.raises(ValueError):
        SceneGenParams(n_objects=2)
    with pytest.raises(ValueError):
        SceneGenParams(n_objects=11)
    with pytest.raises(ValueError):
        SceneGenParams(disc_fraction=1.5)
    with pytest.raises(ValueError):
        SceneGenParams(max_attempts=0)
    with pytest.raises(ValueError):
        SceneGenParams(clearance=-0.01)
    with pytest.raises(ValueError):
        SceneGenParams(mass_range=(0.8, 0.5))
    with pytest.raises(ValueError):
        SceneGenParams(shelf_width=0.0)
