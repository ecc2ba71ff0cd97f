"""Finite-sample divergence metrics for planned trajectories.

A plan is scored by how a cloud of perturbed initial states evolves around
the nominal trajectory. The expected metric is the ratio of mean weighted
distances (final over initial); the maximal metric is the worst per-sample
ratio. Metrics below 1 mean the flow contracts the cloud, so the segment can
be trusted open loop. Worst-case ("real") variants take the max over the
nominal world and a set of randomized world realizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .world import (
    ControlSequence,
    NoiseSpec,
    DEFAULT_INITIAL_NOISE,
    ParameterBounds,
    SceneDescription,
    SystemState,
    nominal_realization,
    rollout,
    sample_initial_states,
    sample_world_realization,
    wrap_angle,
)


class DegenerateSamplesError(ValueError):
    """Sample distances were all zero, leaving the metric undefined."""


@dataclass(frozen=True)
class DistanceWeights:
    """Nonnegative component weights for the state distance.

    The distance is sqrt(sum_i w_i * delta_i^2) over every robot and object
    component; position/angle differences weigh 1.0 and velocities 0.1 by
    default, and angle differences are wrapped.
    """

    position: float = 1.0
    angle: float = 1.0
    velocity: float = 0.1

    def __post_init__(self):
        if min(self.position, self.angle, self.velocity) < 0.0:
            raise ValueError("weights must be nonnegative")
        if max(self.position, self.angle, self.velocity) <= 0.0:
            raise ValueError("at least one weight must be positive")


DEFAULT_WEIGHTS = DistanceWeights()


def state_distance(a: SystemState, b: SystemState, weights: DistanceWeights = DEFAULT_WEIGHTS) -> float:
    """Weighted Euclidean distance between two states of the same scene."""
    wp, wa, wv = weights.position, weights.angle, weights.velocity
    acc = 0.0
    dx = a.robot_pose[0] - b.robot_pose[0]
    dy = a.robot_pose[1] - b.robot_pose[1]
    dth = wrap_angle(float(a.robot_pose[2] - b.robot_pose[2]))
    acc += wp * (dx * dx + dy * dy) + wa * dth * dth
    dv = a.robot_velocity - b.robot_velocity
    acc += wv * float(dv @ dv)
    dpos = a.object_poses[:, :2] - b.object_poses[:, :2]
    acc += wp * float(np.sum(dpos * dpos))
    dang = np.pi - np.mod(np.pi - (a.object_poses[:, 2] - b.object_poses[:, 2]), 2 * np.pi)
    acc += wa * float(dang @ dang)
    dvel = a.object_velocities - b.object_velocities
    acc += wv * float(np.sum(dvel * dvel))
    return math.sqrt(acc)


def one_step_expected_metric(
    samples_before: list[SystemState],
    samples_after: list[SystemState],
    nominal_before: SystemState,
    nominal_after: SystemState,
    weights: DistanceWeights = DEFAULT_WEIGHTS,
) -> float:
    """Mean sample distance after the step divided by the mean before it."""
    if len(samples_before) != len(samples_after) or not samples_before:
        raise ValueError("need equally many samples before and after")
    before = np.array([state_distance(s, nominal_before, weights) for s in samples_before])
    after = np.array([state_distance(s, nominal_after, weights) for s in samples_after])
    mean_before = float(np.mean(before))
    if mean_before == 0.0:
        raise DegenerateSamplesError("mean initial sample distance is zero")
    return float(np.mean(after)) / mean_before


def path_metric_expected(
    samples_start: list[SystemState],
    samples_end: list[SystemState],
    nominal_start: SystemState,
    nominal_end: SystemState,
    weights: DistanceWeights = DEFAULT_WEIGHTS,
) -> float:
    """Expected divergence across a whole path: mean final over mean initial distance."""
    return one_step_expected_metric(
        samples_start, samples_end, nominal_start, nominal_end, weights
    )


def path_metric_maximal(
    samples_start: list[SystemState],
    samples_end: list[SystemState],
    nominal_start: SystemState,
    nominal_end: SystemState,
    weights: DistanceWeights = DEFAULT_WEIGHTS,
) -> float:
    """Worst per-sample ratio of final to initial distance.

    Samples that start at exactly zero distance carry no directional
    information and are excluded; if every sample is excluded the metric is
    undefined.
    """
    if len(samples_start) != len(samples_end) or not samples_start:
        raise ValueError("need equally many samples at start and end")
    worst = None
    for s0, s1 in zip(samples_start, samples_end):
        d0 = state_distance(s0, nominal_start, weights)
        if d0 == 0.0:
            continue
        ratio = state_distance(s1, nominal_end, weights) / d0
        if worst is None or ratio > worst:
            worst = ratio
    if worst is None:
        raise DegenerateSamplesError("every sample started at zero distance")
    return float(worst)


@dataclass
class DivergenceProfile:
    """Divergence summary of one candidate plan.

    per_step_expected[t] is the expected metric of step t in the world that
    attained the worst-case expected path metric; its product telescopes to
    path_expected_real. Nominal fields come from the undisturbed world; real
    fields are maxima over the nominal plus n_worlds randomized realizations.
    """

    per_step_expected: np.ndarray
    path_expected_nominal: float
    path_maximal_nominal: float
    path_expected_real: float
    path_maximal_real: float
    n_samples: int
    n_worlds: int

    def __post_init__(self):
        self.per_step_expected = np.asarray(self.per_step_expected, dtype=np.float64)


def _world_metrics(x0, samples0, controls, scene, realization, weights, rollout_fn):
    """Per-step ratios, expected and maximal path metrics in one realization."""
    nominal_traj = rollout_fn(x0, controls, scene, realization)
    sample_trajs = [rollout_fn(s, controls, scene, realization) for s in samples0]
    n_steps = len(controls)
    dists = np.empty((len(samples0), n_steps + 1))
    for i, traj in enumerate(sample_trajs):
        for t in range(n_steps + 1):
            dists[i, t] = state_distance(traj[t], nominal_traj[t], weights)
    means = dists.mean(axis=0)
    if np.any(means[:-1] == 0.0):
        raise DegenerateSamplesError("mean sample distance collapsed to zero mid-path")
    step_ratios = means[1:] / means[:-1]
    path_expected = means[-1] / means[0]
    start = dists[:, 0]
    keep = start > 0.0
    if not np.any(keep):
        raise DegenerateSamplesError("every sample started at zero distance")
    path_maximal = float(np.max(dists[keep, -1] / start[keep]))
    return step_ratios, float(path_expected), path_maximal


def compute_metrics(
    x0: SystemState,
    controls: ControlSequence,
    scene: SceneDescription,
    bounds: ParameterBounds,
    rng: np.random.Generator,
    n_samples: int = 4,
    n_worlds: int = 4,
    noise: NoiseSpec = DEFAULT_INITIAL_NOISE,
    weights: DistanceWeights = DEFAULT_WEIGHTS,
    rollout_fn=None,
) -> DivergenceProfile:
    """Estimate nominal and worst-case divergence metrics for one plan.

    Draws n_samples perturbed initial states once, rolls nominal plus samples
    out in the nominal world and in each of n_worlds randomized realizations,
    and takes worst-case ("real") metrics as the max over all those worlds
    (the nominal world included). rollout_fn may replace the physics rollout
    for testing; it must accept (x0, controls, scene, realization).

    Requires n_samples >= 2 and n_worlds >= 1.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    if n_worlds < 1:
        raise ValueError("n_worlds must be at least 1")
    if rollout_fn is None:
        rollout_fn = rollout
    samples0 = sample_initial_states(x0, noise, n_samples, rng)
    realizations = [nominal_realization(scene)]
    for j in range(n_worlds):
        realizations.append(sample_world_realization(scene, bounds, rng, realization_id=j + 1))
    step_ratio_rows = []
    path_expected = []
    path_maximal = []
    for realization in realizations:
        ratios, pe, pm = _world_metrics(
            x0, samples0, controls, scene, realization, weights, rollout_fn
        )
        step_ratio_rows.append(ratios)
        path_expected.append(pe)
        path_maximal.append(pm)
    worst = int(np.argmax(path_expected))
    return DivergenceProfile(
        per_step_expected=step_ratio_rows[worst],
        path_expected_nominal=path_expected[0],
        path_maximal_nominal=path_maximal[0],
        path_expected_real=float(path_expected[worst]),
        path_maximal_real=float(max(path_maximal)),
        n_samples=n_samples,
        n_worlds=n_worlds,
    )


def segment_metric(profile: DivergenceProfile, start: int, end: int) -> float:
    """Divergence metric of plan steps [start, end): product of per-step metrics.

    A segment is robust when this is strictly below 1.
    """
    n = len(profile.per_step_expected)
    if not (0 <= start < end <= n):
        raise IndexError(f"segment ({start}, {end}) out of range for {n} steps")
    return float(np.prod(profile.per_step_expected[start:end]))
