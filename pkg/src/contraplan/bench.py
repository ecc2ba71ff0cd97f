"""Benchmark protocol: scenes x methods x seeds, aggregated reports.

A RunConfig carries every knob of the pipeline with defaults matching the
reference experimental setup. The benchmark executes each (scene, method,
seed) cell against a freshly sampled hidden world, collects one row per
cell, aggregates per method, and emits CSV or JSON reports. Rows carry the
virtual clocks, so a rerun with an identical config reproduces the report
byte for byte.

Seeding is arranged so the hidden world is a function of (scene, seed) only:
every method faces the same hidden realization, the same perturbed initial
state, and the same observation noise stream, while each method gets its own
planner stream.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import stats

from .costs import ObjectiveWeights
from .executor import (
    DEFAULT_VIRTUAL_STEP_COST,
    ConfigurationError,
    ExecutionLog,
    METHODS,
    RealWorldHarness,
    run_baseline,
)
from .optimizer import OptimizerParams
from .scenegen import SceneGenParams, generate_random_scene
from .world import NoiseSpec, ParameterBounds, SceneDescription, load_scene

REPORT_COLUMNS = (
    "scene_id",
    "method",
    "seed",
    "success",
    "planning_time_s",
    "execution_time_s",
    "percent_open_loop",
    "e_real_expected",
    "e_nominal_expected",
)

_AGGREGATE_COLUMNS = REPORT_COLUMNS[3:]

_TUPLE_FIELDS = (
    "scene_paths",
    "methods",
    "seeds",
    "mass_bounds",
    "friction_bounds",
    "size_scale_bounds",
)


@dataclass(frozen=True)
class RunConfig:
    """Full benchmark configuration; defaults reproduce the reference setup."""

    # benchmark matrix
    n_scenes: int = 20
    scene_paths: tuple[str, ...] = ()
    methods: tuple[str, ...] = METHODS
    seeds: tuple[int, ...] = (0,)
    base_seed: int = 2024
    # scene generation
    n_objects: int = 10
    gen_max_attempts: int = 1000
    # robustness graph edge costs
    robust_edge_cost: float = 1.0
    non_robust_edge_cost: float = 1000.0
    # divergence metric sampling
    metric_samples: int = 4
    metric_worlds: int = 4
    # hidden-world parameter randomization
    mass_bounds: tuple[float, float] = (0.5, 0.8)
    friction_bounds: tuple[float, float] = (0.2, 0.4)
    size_scale_bounds: tuple[float, float] = (0.95, 1.05)
    # optimizer
    samples: int = 4
    variance: float = 0.4
    max_iterations: int = 10
    horizon: int = 5
    control_dt: float = 0.2
    control_lower: float = -math.pi
    control_upper: float = math.pi
    # objective weights and feasibility thresholds
    acceleration_weight: float = 0.001
    collision_weight: float = 200.0
    disturbance_weight: float = 1000.0
    toppling_weight: float = 200.0
    goal_angle_weight: float = 0.019
    terminal_weight: float = 10.0
    expected_metric_weight: float = 2.0
    maximal_metric_weight: float = 0.5
    task_weight: float = 1.0
    terminal_threshold: float = 10.0
    cost_threshold: float = 50.0
    # noise (angles in degrees for config readability)
    initial_sigma_pos: float = 0.01
    initial_sigma_theta_deg: float = 5.0
    observation_sigma_pos: float = 0.005
    observation_sigma_theta_deg: float = 2.0
    # timing and output
    virtual_step_cost: float = DEFAULT_VIRTUAL_STEP_COST
    out_dir: str = "bench_out"
    jobs: int = 1

    def __post_init__(self):
        for f in _TUPLE_FIELDS:
            object.__setattr__(self, f, tuple(getattr(self, f)))
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigurationError(f"unknown methods {unknown}; expected subset of {METHODS}")
        if not self.methods:
            raise ConfigurationError("methods must not be empty")
        if not self.seeds:
            raise ConfigurationError("seeds must not be empty")
        if not self.scene_paths and self.n_scenes < 1:
            raise ConfigurationError("n_scenes must be at least 1 when no scene paths are given")
        if self.jobs < 1:
            raise ConfigurationError("jobs must be at least 1")


def objective_weights(config: RunConfig) -> ObjectiveWeights:
    return ObjectiveWeights(
        acceleration=config.acceleration_weight,
        collision=config.collision_weight,
        disturbance=config.disturbance_weight,
        toppling=config.toppling_weight,
        goal_angle=config.goal_angle_weight,
        terminal=config.terminal_weight,
        expected_metric=config.expected_metric_weight,
        maximal_metric=config.maximal_metric_weight,
        task=config.task_weight,
        terminal_threshold=config.terminal_threshold,
        cost_threshold=config.cost_threshold,
    )


def optimizer_params(config: RunConfig, jobs: int = 1) -> OptimizerParams:
    return OptimizerParams(
        samples=config.samples,
        variance=config.variance,
        max_iterations=config.max_iterations,
        horizon=config.horizon,
        control_dt=config.control_dt,
        bound_lower=config.control_lower,
        bound_upper=config.control_upper,
        metric_samples=config.metric_samples,
        metric_worlds=config.metric_worlds,
        initial_noise=initial_noise(config),
        jobs=jobs,
    )


def parameter_bounds(config: RunConfig) -> ParameterBounds:
    return ParameterBounds(
        mass=config.mass_bounds,
        friction=config.friction_bounds,
        size_scale=config.size_scale_bounds,
    )


def scene_gen_params(config: RunConfig) -> SceneGenParams:
    return SceneGenParams(
        n_objects=config.n_objects,
        mass_range=config.mass_bounds,
        friction_range=config.friction_bounds,
        max_attempts=config.gen_max_attempts,
    )


def initial_noise(config: RunConfig) -> NoiseSpec:
    return NoiseSpec(config.initial_sigma_pos, math.radians(config.initial_sigma_theta_deg))


def observation_noise(config: RunConfig) -> NoiseSpec:
    return NoiseSpec(
        config.observation_sigma_pos, math.radians(config.observation_sigma_theta_deg)
    )


def config_to_dict(config: RunConfig) -> dict:
    d = asdict(config)
    for f in _TUPLE_FIELDS:
        d[f] = list(d[f])
    return d


def config_from_dict(data: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown config keys {unknown}")
    try:
        return RunConfig(**data)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigurationError):
            raise
        raise ConfigurationError(f"invalid config: {e}") from e


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} must hold a JSON object")
    return config_from_dict(data)


def save_config(config: RunConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(config_to_dict(config), f, indent=2, sort_keys=True)
        f.write("\n")


@dataclass(frozen=True)
class BenchRow:
    """One benchmark cell: identity, outcome, virtual clocks, final metrics.

    The metric fields hold the plan's final worst-case and nominal expected
    divergence; methods that plan without metrics leave them empty.
    """

    scene_id: int
    method: str
    seed: int
    success: bool
    planning_time_s: float
    execution_time_s: float
    percent_open_loop: float
    e_real_expected: float | None
    e_nominal_expected: float | None

    def to_dict(self) -> dict:
        return {col: getattr(self, col) for col in REPORT_COLUMNS}


@dataclass
class BenchReport:
    rows: list[BenchRow]
    aggregates: dict


def _scene_rng(config: RunConfig, scene_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(config.base_seed, spawn_key=(0, scene_id)))


def _harness_rng(config: RunConfig, scene_id: int, seed: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(config.base_seed, spawn_key=(1, scene_id, seed))
    )


def _planner_rng(config: RunConfig, scene_id: int, method: str, seed: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(config.base_seed, spawn_key=(2, scene_id, METHODS.index(method), seed))
    )


def build_scenes(config: RunConfig) -> list[SceneDescription]:
    """Load the configured scene files, or generate n_scenes deterministically."""
    if config.scene_paths:
        return [load_scene(p) for p in config.scene_paths]
    gp = scene_gen_params(config)
    return [generate_random_scene(gp, _scene_rng(config, i)) for i in range(config.n_scenes)]


def run_cell(
    scene: SceneDescription,
    scene_id: int,
    method: str,
    seed: int,
    config: RunConfig,
) -> tuple[BenchRow, ExecutionLog | None]:
    """Execute one benchmark cell; failures become unsuccessful rows, not errors."""
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; expected one of {METHODS}")
    bounds = parameter_bounds(config)
    harness = RealWorldHarness.sample(
        scene,
        bounds,
        config.control_dt,
        _harness_rng(config, scene_id, seed),
        observation_noise(config),
        initial_noise(config),
    )
    try:
        log = run_baseline(
            method,
            scene,
            bounds,
            objective_weights(config),
            optimizer_params(config),
            harness,
            _planner_rng(config, scene_id, method, seed),
            config.robust_edge_cost,
            config.non_robust_edge_cost,
            seed,
            config.virtual_step_cost,
        )
    except ConfigurationError:
        raise
    except Exception:
        row = BenchRow(scene_id, method, seed, False, 0.0, 0.0, 0.0, None, None)
        return row, None
    profile = log.profile
    row = BenchRow(
        scene_id=scene_id,
        method=method,
        seed=seed,
        success=log.success,
        planning_time_s=log.planning_time_virtual_s,
        execution_time_s=log.execution_time_virtual_s,
        percent_open_loop=log.percent_open_loop,
        e_real_expected=profile.path_expected_real if profile is not None else None,
        e_nominal_expected=profile.path_expected_nominal if profile is not None else None,
    )
    return row, log


def _cell_worker(args):
    scene, scene_id, method, seed, config, keep_log = args
    row, log = run_cell(scene, scene_id, method, seed, config)
    return row, (log if keep_log else None)


def run_benchmark(config: RunConfig, collect_logs: bool = False):
    """Run every (scene, method, seed) cell and aggregate.

    Cells run on a process pool when config.jobs > 1; rows always come back
    in (scene, method, seed) order. With collect_logs=True, returns
    (report, logs) where logs maps (scene_id, method, seed) to the run's
    ExecutionLog (None for cells that failed).
    """
    scenes = build_scenes(config)
    cells = [
        (scenes[scene_id], scene_id, method, seed, config, collect_logs)
        for scene_id in range(len(scenes))
        for method in config.methods
        for seed in config.seeds
    ]
    if config.jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(config.jobs, len(cells))) as pool:
            results = list(pool.map(_cell_worker, cells))
    else:
        results = [_cell_worker(c) for c in cells]
    rows = [row for row, _ in results]
    report = BenchReport(rows=rows, aggregates=compute_aggregates(rows))
    if collect_logs:
        logs = {
            (row.scene_id, row.method, row.seed): log for (row, log) in results
        }
        return report, logs
    return report


def compute_aggregates(rows: list[BenchRow]) -> dict:
    """Per-method mean and 95% t-interval half-width for every numeric column.

    Empty metric fields are skipped; a column with fewer than two values gets
    no interval.
    """
    out = {}
    for method in sorted({r.method for r in rows}):
        sub = [r for r in rows if r.method == method]
        cols = {}
        for col in _AGGREGATE_COLUMNS:
            vals = [float(getattr(r, col)) for r in sub if getattr(r, col) is not None]
            if not vals:
                cols[col] = {"n": 0, "mean": None, "ci95": None}
                continue
            n = len(vals)
            mean = float(np.mean(vals))
            ci = None
            if n >= 2:
                sd = float(np.std(vals, ddof=1))
                ci = float(stats.t.ppf(0.975, n - 1) * sd / math.sqrt(n))
            cols[col] = {"n": n, "mean": mean, "ci95": ci}
        out[method] = cols
    return out


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(report: BenchReport, path, format: str = "csv") -> None:
    """Write the report; CSV holds the rows, JSON mirrors rows plus aggregates."""
    if format not in ("csv", "json"):
        raise ConfigurationError(f"unknown report format {format!r}")
    try:
        with open(path, "w", newline="") as f:
            if format == "csv":
                f.write(",".join(REPORT_COLUMNS) + "\n")
                for row in report.rows:
                    f.write(
                        ",".join(_format_cell(getattr(row, col)) for col in REPORT_COLUMNS)
                        + "\n"
                    )
            else:
                payload = {
                    "rows": [row.to_dict() for row in report.rows],
                    "aggregates": report.aggregates,
                }
                json.dump(payload, f, indent=2, sort_keys=True)
                f.write("\n")
    except OSError as e:
        raise OSError(f"cannot write report {path}: {e}") from e


def _parse_row(parts: list[str]) -> BenchRow:
    return BenchRow(
        scene_id=int(parts[0]),
        method=parts[1],
        seed=int(parts[2]),
        success=parts[3] == "true",
        planning_time_s=float(parts[4]),
        execution_time_s=float(parts[5]),
        percent_open_loop=float(parts[6]),
        e_real_expected=float(parts[7]) if parts[7] else None,
        e_nominal_expected=float(parts[8]) if parts[8] else None,
    )


def read_report_csv(path) -> list[BenchRow]:
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not lines or lines[0] != ",".join(REPORT_COLUMNS):
        raise ValueError(f"{path} does not start with the expected report header")
    return [_parse_row(ln.split(",")) for ln in lines[1:]]


def read_report_json(path) -> BenchReport:
    with open(path) as f:
        payload = json.load(f)
    rows = [
        BenchRow(**{col: d[col] for col in REPORT_COLUMNS}) for d in payload["rows"]
    ]
    return BenchReport(rows=rows, aggregates=payload["aggregates"])
