"""Running, terminal, and robustness objectives for candidate plans."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import DEFAULT_WEIGHTS, DistanceWeights, state_distance
from .world import (
    ControlSequence,
    SceneDescription,
    SystemState,
    check_static_collision,
    gripper_forward,
    gripper_point,
    wrap_angle,
)

_ANGLE_TERM_CUTOFF = 1e-6  # m; at the goal point the bearing is undefined


@dataclass(frozen=True)
class ObjectiveWeights:
    """Weights of the running/terminal costs and of the robust objective.

    terminal_threshold bounds the terminal cost of a feasible plan and
    cost_threshold bounds its total task cost.
    """

    acceleration: float = 0.001
    collision: float = 200.0
    disturbance: float = 1000.0
    toppling: float = 200.0
    goal_angle: float = 0.019
    terminal: float = 10.0
    expected_metric: float = 2.0
    maximal_metric: float = 0.5
    task: float = 1.0
    terminal_threshold: float = 10.0
    cost_threshold: float = 50.0

    def __post_init__(self):
        for name in (
            "acceleration", "collision", "disturbance", "toppling", "goal_angle",
            "terminal", "expected_metric", "maximal_metric", "task",
        ):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} weight must be nonnegative")
        if self.terminal_threshold <= 0.0 or self.cost_threshold <= 0.0:
            raise ValueError("feasibility thresholds must be positive")


def running_cost(
    x_t: SystemState,
    x_t1: SystemState,
    u_prev,
    u_t,
    scene: SceneDescription,
    weights: ObjectiveWeights,
) -> float:
    """Stage cost of taking u_t from x_t to x_t1.

    Penalizes control change, static collision at the new state, per-object
    scene disturbance (pose and velocity change), and toppled objects.
    """
    du = np.asarray(u_t, dtype=np.float64) - np.asarray(u_prev, dtype=np.float64)
    cost = weights.acceleration * float(du @ du)
    if weights.collision and check_static_collision(x_t1, scene):
        cost += weights.collision
    dpos = x_t1.object_poses[:, :2] - x_t.object_poses[:, :2]
    dang = np.pi - np.mod(np.pi - (x_t1.object_poses[:, 2] - x_t.object_poses[:, 2]), 2 * np.pi)
    dvel = x_t1.object_velocities - x_t.object_velocities
    disturbance = float(np.sum(dpos * dpos)) + float(dang @ dang) + float(np.sum(dvel * dvel))
    cost += weights.disturbance * disturbance
    cost += weights.toppling * float(np.count_nonzero(x_t1.toppled))
    return cost


def goal_cost(x: SystemState, scene: SceneDescription, weights: ObjectiveWeights) -> float:
    """Squared distance from the grasp point to the target plus bearing error.

    The bearing term vanishes within 1e-6 m of the target, where it is
    undefined.
    """
    gx, gy = gripper_point(scene, x.robot_pose)
    ox, oy = x.object_poses[scene.target_index, :2]
    rx, ry = ox - gx, oy - gy
    dist2 = rx * rx + ry * ry
    dist = math.sqrt(dist2)
    if dist < _ANGLE_TERM_CUTOFF:
        return dist2
    fx, fy = gripper_forward(x.robot_pose)
    dot = max(-1.0, min(1.0, (fx * rx + fy * ry) / dist))
    phi = math.acos(dot)
    return dist2 + weights.goal_angle * phi * phi


def terminal_cost(
    x: SystemState,
    scene: SceneDescription,
    weights: ObjectiveWeights,
    desired: SystemState | None = None,
    distance_weights: DistanceWeights = DEFAULT_WEIGHTS,
) -> float:
    """Squared distance to a desired state if one is given, else the goal cost."""
    if desired is not None:
        d = state_distance(desired, x, distance_weights)
        return d * d
    return goal_cost(x, scene, weights)


def trajectory_cost(
    states: list[SystemState],
    controls: ControlSequence,
    scene: SceneDescription,
    weights: ObjectiveWeights,
    desired: SystemState | None = None,
    distance_weights: DistanceWeights = DEFAULT_WEIGHTS,
) -> float:
    """Total task cost: weighted terminal cost plus summed running costs.

    The control preceding the first step is taken to be zero.
    """
    if len(states) != len(controls) + 1:
        raise ValueError("need N+1 states for N controls")
    total = weights.terminal * terminal_cost(
        states[-1], scene, weights, desired, distance_weights
    )
    u_prev = np.zeros(3)
    for t in range(len(controls)):
        u_t = controls.commands[t]
        total += running_cost(states[t], states[t + 1], u_prev, u_t, scene, weights)
        u_prev = u_t
    return total


def robust_cost(
    task_cost: float,
    expected_metric: float,
    maximal_metric: float,
    weights: ObjectiveWeights,
) -> float:
    """Robust objective: squared divergence metrics plus the task cost."""
    return (
        weights.expected_metric * expected_metric * expected_metric
        + weights.maximal_metric * maximal_metric * maximal_metric
        + weights.task * task_cost
    )


def is_feasible(
    states: list[SystemState],
    controls: ControlSequence,
    scene: SceneDescription,
    weights: ObjectiveWeights,
    desired: SystemState | None = None,
    control_lower: float = -math.pi,
    control_upper: float = math.pi,
    distance_weights: DistanceWeights = DEFAULT_WEIGHTS,
) -> tuple[bool, list[str]]:
    """Feasibility of a rolled-out plan, with the violated constraint names.

    Feasible means: controls within bounds, terminal cost within its
    threshold, task cost strictly below its threshold, nothing toppled, and
    no static collision anywhere along the trajectory.
    """
    reasons = []
    if np.any(controls.commands < control_lower) or np.any(controls.commands > control_upper):
        reasons.append("control bounds")
    if terminal_cost(states[-1], scene, weights, desired, distance_weights) > weights.terminal_threshold:
        reasons.append("terminal threshold")
    if trajectory_cost(states, controls, scene, weights, desired, distance_weights) >= weights.cost_threshold:
        reasons.append("cost threshold")
    if any(np.any(s.toppled) for s in states):
        reasons.append("toppled object")
    if any(check_static_collision(s, scene) for s in states):
        reasons.append("static collision")
    return (not reasons, reasons)
