"""Robust shelf-manipulation planning toolkit.

Simulates a planar gripper in clutter, scores plans with finite-sample
divergence metrics over randomized worlds, optimizes control sequences with
a greedy sampling planner, splits plans into open-loop and MPC segments,
and benchmarks execution against a hidden perturbed world.
"""

from .world import (
    ControlSequence,
    GripperGeometry,
    NoiseSpec,
    NumericDomainError,
    ObjectSpec,
    ParameterBounds,
    SceneDescription,
    SystemState,
    WorldRealization,
    check_static_collision,
    initial_state,
    load_scene,
    nominal_realization,
    rollout,
    sample_initial_states,
    sample_world_realization,
    save_scene,
    step,
)
from .metrics import (
    DegenerateSamplesError,
    DistanceWeights,
    DivergenceProfile,
    compute_metrics,
    one_step_expected_metric,
    path_metric_expected,
    path_metric_maximal,
    segment_metric,
    state_distance,
)
from .costs import (
    ObjectiveWeights,
    goal_cost,
    is_feasible,
    robust_cost,
    running_cost,
    terminal_cost,
    trajectory_cost,
)
from .optimizer import (
    OptimizationResult,
    OptimizerParams,
    clamp_controls,
    deterministic_sto,
    reach_guess,
    robust_sto,
    sample_control_perturbation,
)
from .graph import (
    RobustnessGraph,
    Segment,
    SegmentPlan,
    build_robustness_graph,
    edge_cost,
    min_cost_path,
)
from .executor import (
    ExecutionLog,
    RealWorldHarness,
    StepRecord,
    evaluate_success,
    execute_mpc,
    execute_ocl,
    execute_open_loop,
    run_baseline,
)
from .scenegen import SceneGenerationError, SceneGenParams, generate_random_scene
from .bench import (
    BenchReport,
    BenchRow,
    ConfigurationError,
    RunConfig,
    emit_report,
    run_benchmark,
)
from .render import render_trace

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
