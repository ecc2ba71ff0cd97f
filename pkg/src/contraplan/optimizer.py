"""Greedy sampling-based trajectory optimization.

Both entry points share one loop: evaluate the incumbent control sequence,
then repeatedly draw Gaussian perturbations, clamp them to the control
bounds, evaluate every candidate, and keep the best candidate only if it
strictly improves the incumbent. robust_sto scores candidates with the
robust objective (squared divergence metrics plus task cost) and keeps
iterating until the plan is feasible and its worst-case expected metric is
at most 1; deterministic_sto scores with the task cost alone and stops at
feasibility.

Candidate evaluations are pure functions of (candidate, seed), and all seeds
are drawn from the master generator in a fixed serial order before dispatch,
so serial and process-parallel runs return bit-identical results.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .costs import ObjectiveWeights, is_feasible, robust_cost, trajectory_cost
from .metrics import DivergenceProfile, compute_metrics
from .world import (
    ControlSequence,
    DEFAULT_INITIAL_NOISE,
    NoiseSpec,
    ParameterBounds,
    SceneDescription,
    SystemState,
    nominal_realization,
    rollout,
)


@dataclass(frozen=True)
class OptimizerParams:
    """Knobs of the sampling optimizer.

    samples perturbations are drawn per iteration with per-dimension variance
    `variance`; horizon and control_dt fix the plan length; metric_samples and
    metric_worlds size the divergence estimation; require_robust keeps the
    robust variant iterating until the worst-case expected metric is <= 1.
    """

    samples: int = 4
    variance: float | tuple[float, float, float] = 0.4
    max_iterations: int = 10
    horizon: int = 5
    control_dt: float = 0.2
    require_robust: bool = True
    bound_lower: float = -math.pi
    bound_upper: float = math.pi
    metric_samples: int = 4
    metric_worlds: int = 4
    initial_noise: NoiseSpec = DEFAULT_INITIAL_NOISE
    jobs: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.control_dt <= 0.0:
            raise ValueError("control_dt must be positive")
        if not self.bound_lower < self.bound_upper:
            raise ValueError("control bounds must satisfy lower < upper")
        if np.any(np.asarray(self.variance) < 0.0):
            raise ValueError("variance must be nonnegative")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")


@dataclass
class OptimizationResult:
    """Best plan found, with its rollout, metrics, and bookkeeping counters.

    cost_history starts with the initial incumbent objective and appends the
    incumbent objective after each iteration, so it is non-increasing.
    robust is None for the deterministic variant (no metrics computed).
    """

    controls: ControlSequence
    states: list[SystemState]
    profile: DivergenceProfile | None
    cost_history: list[float]
    feasible: bool
    infeasible_reasons: list[str]
    robust: bool | None
    iterations_used: int
    rollouts_evaluated: int
    task_cost: float
    objective: float


def sample_control_perturbation(
    variance: float | tuple[float, float, float],
    n_steps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """n_steps i.i.d. zero-mean Gaussian control perturbations with the given variance."""
    std = np.sqrt(np.broadcast_to(np.asarray(variance, dtype=np.float64), (3,)))
    return rng.standard_normal((n_steps, 3)) * std


def clamp_controls(controls: ControlSequence, lower: float, upper: float) -> ControlSequence:
    """Clamp every control component into [lower, upper]; idempotent."""
    return ControlSequence(np.clip(controls.commands, lower, upper), controls.dt)


def _segment_clearance(px, py, qx, qy, ox, oy) -> float:
    """Distance from point (ox, oy) to segment (p, q)."""
    dx, dy = qx - px, qy - py
    denom = dx * dx + dy * dy
    if denom <= 0.0:
        return math.hypot(ox - px, oy - py)
    t = max(0.0, min(1.0, ((ox - px) * dx + (oy - py) * dy) / denom))
    return math.hypot(ox - (px + t * dx), oy - (py + t * dy))


def reach_guess(
    x0: SystemState,
    scene: SceneDescription,
    params: OptimizerParams,
    press_depth: float = 0.05,
    standoff: float = 0.10,
) -> ControlSequence:
    """Two-phase incumbent: swing to a pre-press waypoint facing the observed
    target from the clearest nearby bearing, then press straight through it.

    The press carries the grasp point press_depth meters past the target
    center, so the palm contacts the target before the horizon ends and
    seats it in the capture mouth. Bearings are scanned outward from the
    direct one and scored by the clearance of the press corridor to the
    other observed objects; a clear corridor avoids chain-pushing a blocker
    into the mouth ahead of the target. Speeds are capped at 80% of the
    control bound so the optimizer has slack to perturb in both directions.
    A guess of this shape matters: an all-zeros incumbent strands the greedy
    loop in standoff plans that never touch anything.
    """
    ax, ay, th0 = (float(v) for v in x0.robot_pose)
    tx, ty = (float(v) for v in x0.object_poses[scene.target_index][:2])
    gx, gy = scene.grasp_offset
    goff = math.hypot(gx, gy)
    cap = 0.8 * min(abs(params.bound_lower), abs(params.bound_upper))
    dt = params.control_dt
    xmin, ymin, xmax, ymax = scene.boundary
    # lateral half-extent of the gripper, for corridor and boundary margins
    mouth = max(abs(oy_) + hy for _, oy_, _, hy in scene.gripper.parts)

    direct = math.atan2(ty - ay, tx - ax)
    best_bearing, best_clear = direct, -math.inf
    for offset_deg in (0, 15, -15, 30, -30, 45, -45, 60, -60):
        bearing = direct + math.radians(offset_deg)
        bx, by = math.cos(bearing), math.sin(bearing)
        # gripper origin at press start and press end
        sx, sy = tx - bx * (goff + standoff), ty - by * (goff + standoff)
        ex, ey = tx - bx * goff + bx * press_depth, ty - by * goff + by * press_depth
        if not (xmin + mouth < sx < xmax - mouth and ymin + mouth < sy < ymax - mouth):
            continue
        clear = math.inf
        for i in range(x0.n_objects):
            if i == scene.target_index:
                continue
            spec = scene.objects[i]
            r = spec.dims[0] if spec.shape == "disc" else math.hypot(*spec.dims)
            ox_, oy_ = float(x0.object_poses[i, 0]), float(x0.object_poses[i, 1])
            clear = min(clear, _segment_clearance(sx, sy, ex, ey, ox_, oy_) - r)
        if clear > best_clear:
            best_bearing, best_clear = bearing, clear
        if clear >= mouth + 0.01:
            break

    bx, by = math.cos(best_bearing), math.sin(best_bearing)
    wx, wy = tx - bx * (goff + standoff), ty - by * (goff + standoff)
    press = standoff + press_depth
    n1 = max(1, int(round(params.horizon * 0.6)))
    n2 = params.horizon - n1
    if n2 < 1:
        # too short for two phases: single-phase press through the target
        ox = tx - (math.cos(th0) * gx - math.sin(th0) * gy)
        oy = ty - (math.sin(th0) * gx + math.cos(th0) * gy)
        dx, dy = ox - ax, oy - ay
        span = math.hypot(dx, dy)
        if span > 1e-9:
            dx, dy = dx * (span + press_depth) / span, dy * (span + press_depth) / span
        total_t = params.horizon * dt
        vx = min(cap, max(-cap, dx / total_t))
        vy = min(cap, max(-cap, dy / total_t))
        return ControlSequence(np.tile(np.array([vx, vy, 0.0]), (params.horizon, 1)), dt)

    dtheta = math.atan2(math.sin(best_bearing - th0), math.cos(best_bearing - th0))
    t1, t2 = n1 * dt, n2 * dt
    v1 = (
        min(cap, max(-cap, (wx - ax) / t1)),
        min(cap, max(-cap, (wy - ay) / t1)),
        min(cap, max(-cap, dtheta / t1)),
    )
    v2 = (
        min(cap, max(-cap, bx * press / t2)),
        min(cap, max(-cap, by * press / t2)),
        0.0,
    )
    commands = np.vstack([np.tile(v1, (n1, 1)), np.tile(v2, (n2, 1))])
    return ControlSequence(commands, dt)


@dataclass
class _Candidate:
    commands: np.ndarray
    states: list[SystemState]
    profile: DivergenceProfile | None
    task_cost: float
    objective: float
    metric_expected: float | None
    feasible: bool
    reasons: list[str]
    rollouts: int


def _evaluate_robust(ctx, commands_and_seed) -> _Candidate:
    (x0, scene, bounds, weights, params, use_real) = ctx
    commands, seed = commands_and_seed
    controls = ControlSequence(commands, params.control_dt)
    states = rollout(x0, controls, scene, nominal_realization(scene))
    profile = compute_metrics(
        x0,
        controls,
        scene,
        bounds,
        np.random.default_rng(seed),
        n_samples=params.metric_samples,
        n_worlds=params.metric_worlds,
        noise=params.initial_noise,
    )
    task = trajectory_cost(states, controls, scene, weights)
    if use_real:
        expected, maximal = profile.path_expected_real, profile.path_maximal_real
    else:
        expected, maximal = profile.path_expected_nominal, profile.path_maximal_nominal
    objective = robust_cost(task, expected, maximal, weights)
    feasible, reasons = is_feasible(
        states, controls, scene, weights,
        control_lower=params.bound_lower, control_upper=params.bound_upper,
    )
    n_rollouts = 1 + (params.metric_worlds + 1) * (params.metric_samples + 1)
    return _Candidate(
        commands, states, profile, task, objective, expected, feasible, reasons, n_rollouts
    )


def _evaluate_deterministic(ctx, commands_and_seed) -> _Candidate:
    (x0, scene, weights, params, desired) = ctx
    commands, _seed = commands_and_seed
    controls = ControlSequence(commands, params.control_dt)
    states = rollout(x0, controls, scene, nominal_realization(scene))
    task = trajectory_cost(states, controls, scene, weights, desired)
    feasible, reasons = is_feasible(
        states, controls, scene, weights, desired,
        control_lower=params.bound_lower, control_upper=params.bound_upper,
    )
    return _Candidate(commands, states, None, task, task, None, feasible, reasons, 1)


def _greedy_loop(evaluate, u_init: ControlSequence, params: OptimizerParams,
                 rng: np.random.Generator, converged):
    incumbent = evaluate((u_init.commands.copy(), int(rng.integers(0, 2**63 - 1))))
    history = [incumbent.objective]
    total_rollouts = incumbent.rollouts
    iterations = 0
    pool = None
    try:
        if params.jobs > 1:
            pool = ProcessPoolExecutor(max_workers=min(params.jobs, params.samples))
        while iterations < params.max_iterations and not converged(incumbent):
            batch = []
            for _ in range(params.samples):
                delta = sample_control_perturbation(params.variance, params.horizon, rng)
                seed = int(rng.integers(0, 2**63 - 1))
                commands = np.clip(
                    incumbent.commands + delta, params.bound_lower, params.bound_upper
                )
                batch.append((commands, seed))
            if pool is not None:
                candidates = list(pool.map(evaluate, batch))
            else:
                candidates = [evaluate(b) for b in batch]
            best = candidates[0]
            for cand in candidates[1:]:
                if cand.objective < best.objective:
                    best = cand
            if best.objective < incumbent.objective:
                incumbent = best
            history.append(incumbent.objective)
            total_rollouts += sum(c.rollouts for c in candidates)
            iterations += 1
    finally:
        if pool is not None:
            pool.shutdown()
    return incumbent, history, iterations, total_rollouts


def robust_sto(
    x0: SystemState,
    u_init: ControlSequence | None,
    scene: SceneDescription,
    bounds: ParameterBounds,
    weights: ObjectiveWeights,
    params: OptimizerParams,
    rng: np.random.Generator,
    use_real_metrics: bool = True,
) -> OptimizationResult:
    """Optimize the robust objective until the plan is feasible and contracting.

    Every candidate evaluation rolls out the nominal world and recomputes the
    divergence profile with freshly sampled worlds; the accepted incumbent
    keeps the profile it was evaluated with. With use_real_metrics False the
    nominal-world metric fields feed the objective instead of the worst-case
    ones (the profile itself is computed identically).
    """
    if u_init is None:
        u_init = ControlSequence(np.zeros((params.horizon, 3)), params.control_dt)
    if len(u_init) != params.horizon:
        raise ValueError("u_init length must match the horizon")
    ctx = (x0, scene, bounds, weights, params, use_real_metrics)
    evaluate = partial(_evaluate_robust, ctx)

    def converged(cand: _Candidate) -> bool:
        if not cand.feasible:
            return False
        return not params.require_robust or cand.metric_expected <= 1.0

    incumbent, history, iterations, total_rollouts = _greedy_loop(
        evaluate, u_init, params, rng, converged
    )
    return OptimizationResult(
        controls=ControlSequence(incumbent.commands, params.control_dt),
        states=incumbent.states,
        profile=incumbent.profile,
        cost_history=history,
        feasible=incumbent.feasible,
        infeasible_reasons=incumbent.reasons,
        robust=incumbent.metric_expected <= 1.0,
        iterations_used=iterations,
        rollouts_evaluated=total_rollouts,
        task_cost=incumbent.task_cost,
        objective=incumbent.objective,
    )


def deterministic_sto(
    x0: SystemState,
    u_init: ControlSequence | None,
    scene: SceneDescription,
    weights: ObjectiveWeights,
    params: OptimizerParams,
    rng: np.random.Generator,
    desired: SystemState | None = None,
) -> OptimizationResult:
    """Optimize the task cost alone; used for replanning inside MPC.

    No divergence metrics are computed, so each candidate costs exactly one
    physics rollout and the loop stops as soon as the incumbent is feasible.
    """
    if u_init is None:
        u_init = ControlSequence(np.zeros((params.horizon, 3)), params.control_dt)
    if len(u_init) != params.horizon:
        raise ValueError("u_init length must match the horizon")
    ctx = (x0, scene, weights, params, desired)
    evaluate = partial(_evaluate_deterministic, ctx)
    incumbent, history, iterations, total_rollouts = _greedy_loop(
        evaluate, u_init, params, rng, lambda cand: cand.feasible
    )
    return OptimizationResult(
        controls=ControlSequence(incumbent.commands, params.control_dt),
        states=incumbent.states,
        profile=None,
        cost_history=history,
        feasible=incumbent.feasible,
        infeasible_reasons=incumbent.reasons,
        robust=None,
        iterations_used=iterations,
        rollouts_evaluated=total_rollouts,
        task_cost=incumbent.task_cost,
        objective=incumbent.objective,
    )
