"""Execution of plans against a hidden, perturbed real world.

The harness owns a world realization and a true state the planner never
sees; planners interact only through noisy observations and applied
controls. Robust plan segments are streamed open loop; non-robust segments
run shrinking-horizon MPC that replans from each observation over exactly
the steps left in the segment, so every replan's terminal state is the
segment (or episode) end state.

Two clocks are kept. Wall clocks time the actual computation. Virtual clocks
are deterministic: each executed step costs the control interval, upfront
planning costs a fixed charge per simulated physics step, and every MPC
replanning pause during execution costs a budget derived from the optimizer
configuration and the remaining horizon, so timing comparisons are
hardware-independent and reports reproduce bit-identically.
"""

from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from .costs import ObjectiveWeights
from .graph import NON_ROBUST, ROBUST, SegmentPlan, build_robustness_graph, min_cost_path
from .metrics import DivergenceProfile
from .optimizer import (
    OptimizationResult,
    OptimizerParams,
    deterministic_sto,
    reach_guess,
    robust_sto,
)
from .world import (
    ControlSequence,
    DEFAULT_INITIAL_NOISE,
    DEFAULT_OBSERVATION_NOISE,
    NoiseSpec,
    ParameterBounds,
    SceneDescription,
    SystemState,
    check_static_collision,
    initial_state,
    point_in_capture_region,
    sample_initial_states,
    sample_world_realization,
    step,
)

OPEN_LOOP = "open_loop"
MPC = "mpc"

DEFAULT_VIRTUAL_STEP_COST = 0.001  # virtual seconds per simulated control step

METHODS = ("ol", "rol", "cp", "cc", "ocl")


class ConfigurationError(ValueError):
    """A run was configured with an unknown method or inconsistent options."""


class _HiddenRealization:
    """Wraps the harness's private world parameters and counts foreign reads.

    Reads made inside the harness's own stepping context are trusted; any
    other read increments foreign_reads, which the hygiene audit requires to
    stay at zero.
    """

    def __init__(self, realization):
        self._realization = realization
        self._trusted_depth = 0
        self.foreign_reads = 0

    @contextmanager
    def trusted(self):
        self._trusted_depth += 1
        try:
            yield self._realization
        finally:
            self._trusted_depth -= 1

    @property
    def value(self):
        if self._trusted_depth == 0:
            self.foreign_reads += 1
        return self._realization


class RealWorldHarness:
    """Stands in for the real robot: hidden dynamics, noisy object observations.

    The hidden realization and true state are private; planners must go
    through observe() and apply(). Robot pose is observed exactly, object
    poses with Gaussian noise.
    """

    def __init__(
        self,
        scene: SceneDescription,
        realization,
        control_dt: float,
        observation_noise: NoiseSpec = DEFAULT_OBSERVATION_NOISE,
        initial_true_state: SystemState | None = None,
        rng: np.random.Generator | None = None,
    ):
        self.scene = scene
        self._hidden = _HiddenRealization(realization)
        self.control_dt = float(control_dt)
        self.observation_noise = observation_noise
        self._rng = rng if rng is not None else np.random.default_rng(0)
        self.true_state = (
            initial_true_state.copy() if initial_true_state is not None else initial_state(scene)
        )
        self.steps_applied = 0

    @classmethod
    def sample(
        cls,
        scene: SceneDescription,
        bounds: ParameterBounds,
        control_dt: float,
        rng: np.random.Generator,
        observation_noise: NoiseSpec = DEFAULT_OBSERVATION_NOISE,
        initial_noise: NoiseSpec = DEFAULT_INITIAL_NOISE,
    ) -> "RealWorldHarness":
        """Draw a hidden realization and a perturbed true initial state."""
        realization = sample_world_realization(scene, bounds, rng, realization_id=1)
        true0 = sample_initial_states(initial_state(scene), initial_noise, 1, rng)[0]
        return cls(scene, realization, control_dt, observation_noise, true0, rng)

    @property
    def foreign_reads(self) -> int:
        return self._hidden.foreign_reads

    def observe(self) -> SystemState:
        """Noisy snapshot: exact robot state, Gaussian noise on object poses."""
        s = self.true_state
        noise = self._rng.normal(size=(s.n_objects, 3))
        noise[:, 0] *= self.observation_noise.sigma_pos
        noise[:, 1] *= self.observation_noise.sigma_pos
        noise[:, 2] *= self.observation_noise.sigma_theta
        return SystemState(
            s.robot_pose,
            s.robot_velocity,
            s.object_poses + noise,
            s.object_velocities,
            s.toppled,
        )

    def apply(self, control) -> SystemState:
        """Execute one control on the hidden world; returns the new true state."""
        with self._hidden.trusted() as realization:
            self.true_state = step(
                self.true_state, control, self.scene, realization, self.control_dt
            )
        self.steps_applied += 1
        return self.true_state


@dataclass
class StepRecord:
    """One executed control: what was commanded, what truly happened, what was seen."""

    index: int
    mode: str
    control: np.ndarray
    true_state: SystemState
    observed_state: SystemState
    plan_wall_s: float = 0.0
    plan_virtual_s: float = 0.0


@dataclass
class ExecutionLog:
    """Complete record of one run: per-step trace plus timing and outcome totals.

    optimizer_invocations counts planning episodes: 1 for the upfront plan
    (even when it chains a deterministic polish into the robust pass) plus 1
    per closed-loop replan.
    """

    method: str
    seed: int
    initial_true_state: SystemState
    initial_observed_state: SystemState
    steps: list[StepRecord]
    planned_states: list[SystemState] | None
    planned_controls: ControlSequence | None
    segments: SegmentPlan | None
    profile: DivergenceProfile | None
    planning_time_wall_s: float
    planning_time_virtual_s: float
    execution_time_wall_s: float
    execution_time_virtual_s: float
    optimizer_invocations: int
    percent_open_loop: float
    success: bool
    hidden_realization_reads: int = 0

    def to_jsonl(self, path) -> None:
        with open(path, "w") as f:
            meta = {
                "type": "meta",
                "method": self.method,
                "seed": self.seed,
                "planning_time_wall_s": self.planning_time_wall_s,
                "planning_time_virtual_s": self.planning_time_virtual_s,
                "execution_time_wall_s": self.execution_time_wall_s,
                "execution_time_virtual_s": self.execution_time_virtual_s,
                "optimizer_invocations": self.optimizer_invocations,
                "percent_open_loop": self.percent_open_loop,
                "success": self.success,
                "hidden_realization_reads": self.hidden_realization_reads,
                "initial_true_state": _state_to_dict(self.initial_true_state),
                "initial_observed_state": _state_to_dict(self.initial_observed_state),
                "planned_states": (
                    [_state_to_dict(s) for s in self.planned_states]
                    if self.planned_states is not None
                    else None
                ),
                "planned_controls": (
                    {
                        "commands": self.planned_controls.commands.tolist(),
                        "dt": self.planned_controls.dt,
                    }
                    if self.planned_controls is not None
                    else None
                ),
                "segments": self.segments.to_dict() if self.segments is not None else None,
                "profile": _profile_to_dict(self.profile) if self.profile is not None else None,
            }
            f.write(json.dumps(meta, sort_keys=True) + "\n")
            for rec in self.steps:
                f.write(
                    json.dumps(
                        {
                            "type": "step",
                            "index": rec.index,
                            "mode": rec.mode,
                            "control": [float(v) for v in rec.control],
                            "plan_wall_s": rec.plan_wall_s,
                            "plan_virtual_s": rec.plan_virtual_s,
                            "true_state": _state_to_dict(rec.true_state),
                            "observed_state": _state_to_dict(rec.observed_state),
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )

    @classmethod
    def from_jsonl(cls, path) -> "ExecutionLog":
        meta = None
        steps = []
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if rec["type"] == "meta":
                    meta = rec
                else:
                    steps.append(
                        StepRecord(
                            index=rec["index"],
                            mode=rec["mode"],
                            control=np.array(rec["control"]),
                            true_state=_state_from_dict(rec["true_state"]),
                            observed_state=_state_from_dict(rec["observed_state"]),
                            plan_wall_s=rec["plan_wall_s"],
                            plan_virtual_s=rec["plan_virtual_s"],
                        )
                    )
        if meta is None:
            raise ValueError(f"no meta record in {path}")
        return cls(
            method=meta["method"],
            seed=meta["seed"],
            initial_true_state=_state_from_dict(meta["initial_true_state"]),
            initial_observed_state=_state_from_dict(meta["initial_observed_state"]),
            steps=steps,
            planned_states=(
                [_state_from_dict(d) for d in meta["planned_states"]]
                if meta["planned_states"] is not None
                else None
            ),
            planned_controls=(
                ControlSequence(
                    np.array(meta["planned_controls"]["commands"]),
                    meta["planned_controls"]["dt"],
                )
                if meta["planned_controls"] is not None
                else None
            ),
            segments=(
                SegmentPlan.from_dict(meta["segments"]) if meta["segments"] is not None else None
            ),
            profile=(
                _profile_from_dict(meta["profile"]) if meta["profile"] is not None else None
            ),
            planning_time_wall_s=meta["planning_time_wall_s"],
            planning_time_virtual_s=meta["planning_time_virtual_s"],
            execution_time_wall_s=meta["execution_time_wall_s"],
            execution_time_virtual_s=meta["execution_time_virtual_s"],
            optimizer_invocations=meta["optimizer_invocations"],
            percent_open_loop=meta["percent_open_loop"],
            success=meta["success"],
            hidden_realization_reads=meta["hidden_realization_reads"],
        )


def _state_to_dict(s: SystemState) -> dict:
    return {
        "robot_pose": s.robot_pose.tolist(),
        "robot_velocity": s.robot_velocity.tolist(),
        "object_poses": s.object_poses.tolist(),
        "object_velocities": s.object_velocities.tolist(),
        "toppled": [bool(t) for t in s.toppled],
    }


def _state_from_dict(d: dict) -> SystemState:
    return SystemState(
        np.array(d["robot_pose"]),
        np.array(d["robot_velocity"]),
        np.array(d["object_poses"]),
        np.array(d["object_velocities"]),
        np.array(d["toppled"], dtype=bool),
    )


def _profile_to_dict(p: DivergenceProfile) -> dict:
    return {
        "per_step_expected": p.per_step_expected.tolist(),
        "path_expected_nominal": p.path_expected_nominal,
        "path_maximal_nominal": p.path_maximal_nominal,
        "path_expected_real": p.path_expected_real,
        "path_maximal_real": p.path_maximal_real,
        "n_samples": p.n_samples,
        "n_worlds": p.n_worlds,
    }


def _profile_from_dict(d: dict) -> DivergenceProfile:
    return DivergenceProfile(
        per_step_expected=np.array(d["per_step_expected"]),
        path_expected_nominal=d["path_expected_nominal"],
        path_maximal_nominal=d["path_maximal_nominal"],
        path_expected_real=d["path_expected_real"],
        path_maximal_real=d["path_maximal_real"],
        n_samples=d["n_samples"],
        n_worlds=d["n_worlds"],
    )


def evaluate_success(state: SystemState, scene: SceneDescription) -> bool:
    """Pre-grasp success test on a final state.

    The target center must sit inside the gripper capture region, with no
    other object center inside it, nothing toppled, and no static collision.
    """
    if np.any(state.toppled):
        return False
    if check_static_collision(state, scene):
        return False
    for i in range(state.n_objects):
        px, py = float(state.object_poses[i, 0]), float(state.object_poses[i, 1])
        inside = point_in_capture_region(scene, state.robot_pose, px, py)
        if i == scene.target_index and not inside:
            return False
        if i != scene.target_index and inside:
            return False
    return True


def replan_virtual_charge(params: OptimizerParams, virtual_step_cost: float) -> float:
    """Virtual budget for one MPC replanning pause during execution.

    Sized as the configured worst case of the deterministic optimizer over
    params.horizon remaining steps (one initial evaluation plus samples per
    iteration, each costing horizon simulated steps). Deterministic in the
    configuration, so timing comparisons are hardware independent.
    """
    return params.horizon * (params.samples * params.max_iterations + 1) * virtual_step_cost


def _open_loop_fragment(controls: ControlSequence, harness: RealWorldHarness, start_index: int):
    records = []
    for t in range(len(controls)):
        u = controls.commands[t].copy()
        true_after = harness.apply(u)
        obs = harness.observe()
        records.append(StepRecord(start_index + t, OPEN_LOOP, u, true_after.copy(), obs))
    return records


def _mpc_fragment(
    observation: SystemState,
    scene: SceneDescription,
    weights: ObjectiveWeights,
    params: OptimizerParams,
    harness: RealWorldHarness,
    rng: np.random.Generator,
    n_steps: int,
    desired: SystemState | None,
    u_warm: ControlSequence | None,
    start_index: int,
    virtual_step_cost: float,
):
    # Shrinking horizon: each replan covers exactly the steps left in the
    # fragment, so its terminal state is the fragment end state. A fixed
    # receding horizon would leave the controller perpetually mid-plan when
    # the fragment ends.
    warm = u_warm.commands if u_warm is not None else None
    obs = observation
    records = []
    for k in range(n_steps):
        remaining = n_steps - k
        p_k = replace(params, horizon=remaining)
        w_k = ControlSequence(warm[:remaining], params.control_dt) if warm is not None else None
        t0 = time.perf_counter()
        result = deterministic_sto(obs, w_k, scene, weights, p_k, rng, desired)
        wall = time.perf_counter() - t0
        charge = replan_virtual_charge(p_k, virtual_step_cost)
        u0 = result.controls.commands[0].copy()
        true_after = harness.apply(u0)
        obs = harness.observe()
        records.append(
            StepRecord(start_index + k, MPC, u0, true_after.copy(), obs, wall, charge)
        )
        # warm start the next replan with the tail of this one
        warm = result.controls.commands[1:]
    return records, obs


def _build_log(
    method: str,
    seed: int,
    harness: RealWorldHarness,
    initial_true: SystemState,
    initial_obs: SystemState,
    records: list[StepRecord],
    planning_wall: float,
    planning_virtual: float,
    run_wall: float,
    invocations: int,
    planned_states,
    planned_controls,
    segments,
    profile,
) -> ExecutionLog:
    n = len(records)
    n_open = sum(1 for r in records if r.mode == OPEN_LOOP)
    exec_virtual = n * harness.control_dt + sum(r.plan_virtual_s for r in records)
    return ExecutionLog(
        method=method,
        seed=seed,
        initial_true_state=initial_true,
        initial_observed_state=initial_obs,
        steps=records,
        planned_states=planned_states,
        planned_controls=planned_controls,
        segments=segments,
        profile=profile,
        planning_time_wall_s=planning_wall,
        planning_time_virtual_s=planning_virtual,
        execution_time_wall_s=max(0.0, run_wall - planning_wall),
        execution_time_virtual_s=exec_virtual,
        optimizer_invocations=invocations,
        percent_open_loop=100.0 * n_open / n if n else 0.0,
        success=evaluate_success(harness.true_state, harness.scene),
        hidden_realization_reads=harness.foreign_reads,
    )


def execute_open_loop(
    controls: ControlSequence,
    harness: RealWorldHarness,
    method: str = "ol",
    seed: int = 0,
    initial_observation: SystemState | None = None,
    planned_states=None,
    profile=None,
    planning_wall: float = 0.0,
    planning_virtual: float = 0.0,
    invocations: int = 1,
) -> ExecutionLog:
    """Stream a control sequence with no feedback and log the outcome.

    Pass initial_observation when the run already observed once to feed the
    planner; otherwise one is taken here. Exactly one initial observation is
    drawn per run so observation streams align across methods.
    """
    t0 = time.perf_counter()
    initial_true = harness.true_state.copy()
    initial_obs = initial_observation if initial_observation is not None else harness.observe()
    records = _open_loop_fragment(controls, harness, 0)
    run_wall = planning_wall + (time.perf_counter() - t0)
    return _build_log(
        method, seed, harness, initial_true, initial_obs, records,
        planning_wall, planning_virtual, run_wall, invocations,
        planned_states, controls, None, profile,
    )


def execute_mpc(
    observation: SystemState,
    scene: SceneDescription,
    weights: ObjectiveWeights,
    params: OptimizerParams,
    harness: RealWorldHarness,
    rng: np.random.Generator,
    n_steps: int | None = None,
    desired: SystemState | None = None,
    u_warm: ControlSequence | None = None,
    method: str = "cc",
    seed: int = 0,
    virtual_step_cost: float = DEFAULT_VIRTUAL_STEP_COST,
) -> ExecutionLog:
    """Closed-loop execution: replan from every observation, apply the first control.

    Replanning pauses are charged to execution time (the plan is produced
    inside the control loop), so planning totals stay zero.
    """
    if n_steps is None:
        n_steps = params.horizon
    t0 = time.perf_counter()
    initial_true = harness.true_state.copy()
    records, _ = _mpc_fragment(
        observation, scene, weights, params, harness, rng,
        n_steps, desired, u_warm, 0, virtual_step_cost,
    )
    run_wall = time.perf_counter() - t0
    return _build_log(
        method, seed, harness, initial_true, observation, records,
        0.0, 0.0, run_wall, n_steps, None, None, None, None,
    )


def execute_ocl(
    x0_observed: SystemState,
    scene: SceneDescription,
    bounds: ParameterBounds,
    weights: ObjectiveWeights,
    params: OptimizerParams,
    harness: RealWorldHarness,
    rng: np.random.Generator,
    robust_edge_cost: float = 1.0,
    non_robust_edge_cost: float = 1000.0,
    seed: int = 0,
    virtual_step_cost: float = DEFAULT_VIRTUAL_STEP_COST,
) -> ExecutionLog:
    """Plan robustly once, then execute robust segments open loop and the rest as MPC.

    Intermediate non-robust segments steer toward the planned segment-end
    state; a final segment ending at the horizon uses the task goal cost.
    """
    t0 = time.perf_counter()
    initial_true = harness.true_state.copy()
    guess = reach_guess(x0_observed, scene, params)
    pre = deterministic_sto(x0_observed, guess, scene, weights, params, rng)
    plan = robust_sto(x0_observed, pre.controls, scene, bounds, weights, params, rng)
    planning_wall = time.perf_counter() - t0
    rollouts = pre.rollouts_evaluated + plan.rollouts_evaluated
    planning_virtual = rollouts * params.horizon * virtual_step_cost
    graph = build_robustness_graph(plan.profile, robust_edge_cost, non_robust_edge_cost)
    segments = min_cost_path(graph)
    records: list[StepRecord] = []
    obs = x0_observed
    invocations = 1
    for seg in segments.segments:
        if seg.kind == ROBUST:
            frag = _open_loop_fragment(plan.controls.slice(seg.start, seg.end), harness, seg.start)
            records.extend(frag)
            obs = frag[-1].observed_state
        else:
            desired = plan.states[seg.end] if seg.end < params.horizon else None
            warm = plan.controls.slice(seg.start, seg.end)
            frag, obs = _mpc_fragment(
                obs, scene, weights, params, harness, rng,
                seg.length, desired, warm, seg.start, virtual_step_cost,
            )
            records.extend(frag)
            invocations += seg.length
    run_wall = time.perf_counter() - t0
    return _build_log(
        "ocl", seed, harness, initial_true, x0_observed, records,
        planning_wall, planning_virtual, run_wall, invocations,
        plan.states, plan.controls, segments, plan.profile,
    )


def run_baseline(
    method: str,
    scene: SceneDescription,
    bounds: ParameterBounds,
    weights: ObjectiveWeights,
    params: OptimizerParams,
    harness: RealWorldHarness,
    rng: np.random.Generator,
    robust_edge_cost: float = 1.0,
    non_robust_edge_cost: float = 1000.0,
    seed: int = 0,
    virtual_step_cost: float = DEFAULT_VIRTUAL_STEP_COST,
) -> ExecutionLog:
    """Run one episode with one of the benchmark methods.

    ol: deterministic plan, streamed open loop. rol: robust plan, open loop.
    cp: robust plan driven by nominal-world metrics, open loop. cc: MPC over
    the whole task. ocl: robust plan with open-loop robust segments and MPC
    elsewhere.
    """
    method = method.lower()
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; expected one of {METHODS}")
    initial_obs = harness.observe()
    if method in ("ol", "rol", "cp"):
        guess = reach_guess(initial_obs, scene, params)
        t0 = time.perf_counter()
        if method == "ol":
            result = deterministic_sto(initial_obs, guess, scene, weights, params, rng)
            rollouts = result.rollouts_evaluated
        else:
            # refine first, then robustify: the task-cost pass hands the
            # robust pass a precise incumbent to trade against the metrics
            pre = deterministic_sto(initial_obs, guess, scene, weights, params, rng)
            result = robust_sto(
                x0=initial_obs, u_init=pre.controls, scene=scene, bounds=bounds,
                weights=weights, params=params, rng=rng,
                use_real_metrics=(method == "rol"),
            )
            rollouts = pre.rollouts_evaluated + result.rollouts_evaluated
        planning_wall = time.perf_counter() - t0
        planning_virtual = rollouts * params.horizon * virtual_step_cost
        return execute_open_loop(
            result.controls, harness, method=method, seed=seed,
            initial_observation=initial_obs,
            planned_states=result.states, profile=result.profile,
            planning_wall=planning_wall, planning_virtual=planning_virtual,
        )
    if method == "cc":
        return execute_mpc(
            initial_obs, scene, weights, params, harness, rng,
            n_steps=params.horizon, method="cc", seed=seed,
            u_warm=reach_guess(initial_obs, scene, params),
            virtual_step_cost=virtual_step_cost,
        )
    return execute_ocl(
        initial_obs, scene, bounds, weights, params, harness, rng,
        robust_edge_cost, non_robust_edge_cost, seed, virtual_step_cost,
    )
