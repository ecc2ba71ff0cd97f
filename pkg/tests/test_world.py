"""Physics world: stepping, rollouts, randomization, collisions, serialization."""

import math

import numpy as np
import pytest

from contraplan.world import (
    ControlSequence,
    NoiseSpec,
    NumericDomainError,
    ObjectSpec,
    ParameterBounds,
    SceneDescription,
    check_static_collision,
    initial_state,
    load_scene,
    nominal_realization,
    rollout,
    sample_initial_states,
    sample_world_realization,
    save_scene,
    scene_from_dict,
    scene_to_dict,
    step,
)


def states_equal(a, b):
    return (
        np.array_equal(a.robot_pose, b.robot_pose)
        and np.array_equal(a.robot_velocity, b.robot_velocity)
        and np.array_equal(a.object_poses, b.object_poses)
        and np.array_equal(a.object_velocities, b.object_velocities)
        and np.array_equal(a.toppled, b.toppled)
    )


# ---------------------------------------------------------------------------
# step
# ---------------------------------------------------------------------------


def test_step_free_space_kinematics(empty_scene):
    x0 = initial_state(empty_scene)
    nom = nominal_realization(empty_scene)
    x1 = step(x0, np.array([0.1, 0.0, 0.0]), empty_scene, nom, 0.2)
    np.testing.assert_allclose(x1.robot_pose, [0.02, 0.0, 0.0], atol=1e-12)
    np.testing.assert_array_equal(x1.object_poses, x0.object_poses)
    assert not x1.toppled.any()


def test_step_zero_control_is_fixed_point(cluttered_scene):
    x0 = initial_state(cluttered_scene)
    nom = nominal_realization(cluttered_scene)
    x1 = step(x0, np.zeros(3), cluttered_scene, nom, 0.2)
    assert states_equal(x0, x1)


def test_step_head_on_push_matches_fine_substeps():
    # disc wider than the gripper mouth so both finger tips push it squarely;
    # 1 s at 0.05 m/s, displacement checked against a 10x finer integration
    scene = SceneDescription(
        boundary=(-0.5, -0.5, 1.0, 0.5),
        walls=(),
        objects=(ObjectSpec("disc", (0.06,), 0.6, 0.3, (0.20, 0.0, 0.0)),),
        robot_start=(0.0, 0.0, 0.0),
        target_index=0,
    )
    nom = nominal_realization(scene)
    u = np.array([0.05, 0.0, 0.0])
    coarse = initial_state(scene)
    fine = initial_state(scene)
    for _ in range(10):
        coarse = step(coarse, u, scene, nom, 0.1)
        fine = step(fine, u, scene, nom, 0.1, substeps=100)
    assert coarse.object_poses[0, 0] > 0.205
    assert abs(coarse.object_poses[0, 1]) < 1e-3
    assert abs(coarse.object_poses[0, 0] - fine.object_poses[0, 0]) < 1e-3


def test_step_rejects_non_finite_state(empty_scene):
    x0 = initial_state(empty_scene)
    x0.robot_pose[0] = math.nan
    nom = nominal_realization(empty_scene)
    with pytest.raises(NumericDomainError):
        step(x0, np.zeros(3), empty_scene, nom, 0.2)


def test_step_rejects_non_finite_control(empty_scene):
    x0 = initial_state(empty_scene)
    nom = nominal_realization(empty_scene)
    with pytest.raises(NumericDomainError):
        step(x0, np.array([math.inf, 0.0, 0.0]), empty_scene, nom, 0.2)


# ---------------------------------------------------------------------------
# rollout
# ---------------------------------------------------------------------------


def test_rollout_zero_controls_from_rest(cluttered_scene):
    x0 = initial_state(cluttered_scene)
    nom = nominal_realization(cluttered_scene)
    U = ControlSequence(np.zeros((5, 3)), 0.2)
    traj = rollout(x0, U, cluttered_scene, nom)
    assert len(traj) == 6
    for s in traj:
        assert states_equal(s, x0)


def test_rollout_deterministic(cluttered_scene, rng):
    x0 = initial_state(cluttered_scene)
    nom = nominal_realization(cluttered_scene)
    U = ControlSequence(rng.uniform(-0.1, 0.1, size=(8, 3)), 0.2)
    a = rollout(x0, U, cluttered_scene, nom)
    b = rollout(x0, U, cluttered_scene, nom)
    assert all(states_equal(s, t) for s, t in zip(a, b))


def test_rollout_free_space_advance(empty_scene):
    x0 = initial_state(empty_scene)
    nom = nominal_realization(empty_scene)
    U = ControlSequence(np.tile([0.1, 0.0, 0.0], (5, 1)), 0.2)
    traj = rollout(x0, U, empty_scene, nom)
    assert len(traj) == 6
    np.testing.assert_allclose(traj[-1].robot_pose, [0.1, 0.0, 0.0], atol=1e-12)


def test_rollout_translation_equivariance(empty_scene, rng):
    # same controls from a shifted start trace the same shape, shifted
    x0 = initial_state(empty_scene)
    nom = nominal_realization(empty_scene)
    U = ControlSequence(rng.uniform(-0.08, 0.08, size=(6, 3)), 0.2)
    base = rollout(x0, U, empty_scene, nom)
    shift = np.array([0.05, -0.07])
    x1 = x0.copy()
    x1.robot_pose[:2] += shift
    moved = rollout(x1, U, empty_scene, nom)
    for s, t in zip(base, moved):
        np.testing.assert_allclose(t.robot_pose[:2], s.robot_pose[:2] + shift, atol=1e-12)
        np.testing.assert_allclose(t.robot_pose[2], s.robot_pose[2], atol=1e-12)


def test_push_never_moves_object_against_contact_normal():
    # head-on +x push: the disc's x velocity may only be forward
    scene = SceneDescription(
        boundary=(-0.5, -0.5, 1.0, 0.5),
        walls=(),
        objects=(ObjectSpec("disc", (0.06,), 0.6, 0.3, (0.20, 0.0, 0.0)),),
        robot_start=(0.0, 0.0, 0.0),
        target_index=0,
    )
    nom = nominal_realization(scene)
    U = ControlSequence(np.tile([0.05, 0.0, 0.0], (20, 1)), 0.1)
    traj = rollout(x0=initial_state(scene), controls=U, scene=scene, realization=nom)
    for s in traj:
        assert s.object_velocities[0, 0] >= -1e-9


def test_toppled_flag_is_monotone_and_freezes_object():
    scene = SceneDescription(
        boundary=(-0.5, -0.5, 1.0, 0.5),
        walls=(),
        objects=(ObjectSpec("disc", (0.03,), 0.6, 0.3, (0.97, 0.0, 0.0)),),
        robot_start=(0.80, 0.0, 0.0),
        target_index=0,
    )
    nom = nominal_realization(scene)
    U = ControlSequence(np.tile([0.1, 0.0, 0.0], (10, 1)), 0.2)
    traj = rollout(initial_state(scene), U, scene, nom)
    flags = [bool(s.toppled[0]) for s in traj]
    assert flags[-1], "object pushed past the shelf edge should topple"
    first = flags.index(True)
    assert all(flags[first:]), "toppled flag must never reset"
    frozen = traj[first].object_poses[0]
    for s in traj[first:]:
        np.testing.assert_array_equal(s.object_poses[0], frozen)


# ---------------------------------------------------------------------------
# world randomization
# ---------------------------------------------------------------------------


def test_sampled_parameters_inside_bounds(cluttered_scene, default_bounds, rng):
    for _ in range(50):
        w = sample_world_realization(cluttered_scene, default_bounds, rng)
        assert all(0.5 <= m <= 0.8 for m in w.masses)
        assert all(0.2 <= f <= 0.4 for f in w.frictions)
        assert all(0.95 <= s <= 1.05 for s in w.size_scales)


def test_degenerate_bounds_give_exact_values(cluttered_scene, rng):
    bounds = ParameterBounds(mass=(0.6, 0.6), friction=(0.3, 0.3), size_scale=(1.0, 1.0))
    w = sample_world_realization(cluttered_scene, bounds, rng)
    assert w.masses == (0.6, 0.6, 0.6)
    assert w.frictions == (0.3, 0.3, 0.3)
    assert w.size_scales == (1.0, 1.0, 1.0)


def test_sampling_is_seed_deterministic(cluttered_scene, default_bounds):
    a = sample_world_realization(cluttered_scene, default_bounds, np.random.default_rng(3))
    b = sample_world_realization(cluttered_scene, default_bounds, np.random.default_rng(3))
    assert a == b


def test_nominal_identity_under_degenerate_bounds(cluttered_scene, rng):
    # bounds pinched at the nominal values reproduce realization 0's dynamics
    nom = nominal_realization(cluttered_scene)
    assert nom.realization_id == 0
    assert nom.masses == tuple(o.mass for o in cluttered_scene.objects)
    assert nom.size_scales == (1.0, 1.0, 1.0)


# ---------------------------------------------------------------------------
# initial-state sampling
# ---------------------------------------------------------------------------


def test_zero_variance_noise_copies_state(cluttered_scene, rng):
    x0 = initial_state(cluttered_scene)
    samples = sample_initial_states(x0, NoiseSpec(0.0, 0.0), 5, rng)
    assert len(samples) == 5
    for s in samples:
        assert states_equal(s, x0)


def test_default_noise_perturbs_objects_not_robot(cluttered_scene, rng):
    x0 = initial_state(cluttered_scene)
    samples = sample_initial_states(x0, NoiseSpec(), 4, rng)
    assert len(samples) == 4
    seen = set()
    for s in samples:
        np.testing.assert_array_equal(s.robot_pose, x0.robot_pose)
        np.testing.assert_array_equal(s.object_velocities, x0.object_velocities)
        assert not np.array_equal(s.object_poses, x0.object_poses)
        seen.add(s.object_poses.tobytes())
    assert len(seen) == 4


def test_noise_mean_converges_to_nominal(cluttered_scene):
    # law of large numbers: 10k draws of one object's x, 3 sigma / sqrt(n) band
    x0 = initial_state(cluttered_scene)
    noise = NoiseSpec(sigma_pos=0.01, sigma_theta=math.radians(5.0))
    samples = sample_initial_states(x0, noise, 10_000, np.random.default_rng(11))
    xs = np.array([s.object_poses[0, 0] for s in samples])
    assert abs(xs.mean() - x0.object_poses[0, 0]) < 3 * 0.01 / math.sqrt(10_000)


# ---------------------------------------------------------------------------
# static collision
# ---------------------------------------------------------------------------


def test_no_collision_in_open_shelf(empty_scene):
    assert not check_static_collision(initial_state(empty_scene), empty_scene)


def test_collision_with_wall(cluttered_scene):
    x = initial_state(cluttered_scene)
    x.robot_pose[:] = [0.9, 0.0, 0.0]  # astride the wall at x = 0.9
    assert check_static_collision(x, cluttered_scene)


def test_tangent_contact_is_not_collision():
    # finger tips exactly on the wall: zero clearance, strict overlap required;
    # robot x = -0.065 puts the finger centers at float-exact 0.0, tips at 0.05
    scene = SceneDescription(
        boundary=(-1.0, -1.0, 1.0, 1.0),
        walls=(((0.05, -1.0), (0.05, 1.0)),),
        objects=(ObjectSpec("disc", (0.03,), 0.6, 0.3, (-0.5, -0.5, 0.0)),),
        robot_start=(0.0, 0.0, 0.0),
        target_index=0,
    )
    x = initial_state(scene)
    x.robot_pose[:] = [-0.065, 0.0, 0.0]
    assert not check_static_collision(x, scene)
    x.robot_pose[0] += 1e-6
    assert check_static_collision(x, scene)


def test_outside_boundary_is_collision(empty_scene):
    x = initial_state(empty_scene)
    x.robot_pose[:] = [0.49, 0.0, 0.0]  # finger tips poke past x_max = 0.5
    assert check_static_collision(x, empty_scene)


# ---------------------------------------------------------------------------
# scene serialization
# ---------------------------------------------------------------------------


def test_scene_round_trip_dict(cluttered_scene):
    clone = scene_from_dict(scene_to_dict(cluttered_scene))
    assert clone == cluttered_scene


def test_scene_round_trip_file(tmp_path, cluttered_scene):
    path = tmp_path / "scene.json"
    save_scene(cluttered_scene, path)
    assert load_scene(path) == cluttered_scene


def test_scene_validation():
    with pytest.raises(ValueError):
        ObjectSpec("disc", (-0.1,), 0.6, 0.3, (0, 0, 0))
    with pytest.raises(ValueError):
        ObjectSpec("disc", (0.1,), -1.0, 0.3, (0, 0, 0))
    with pytest.raises(ValueError):
        SceneDescription(
            boundary=(0, 0, 1, 1),
            walls=(),
            objects=(ObjectSpec("disc", (0.1,), 0.6, 0.3, (0.5, 0.5, 0)),),
            robot_start=(0.5, 0.5, 0),
            target_index=3,
        )
