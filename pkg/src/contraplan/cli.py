"""Command-line interface.

Subcommands: plan (one scene to a plan with segments and divergence
profile), execute (plan plus harness run to an execution log), bench (full
scenes x methods x seeds sweep to a report), render (execution log to SVG
frames), scene gen (random scene to a scene file).

Run failures are recorded as data; only configuration, generation, or I/O
errors exit nonzero. CONTRAPLAN_JOBS overrides --jobs when set.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .bench import (
    RunConfig,
    emit_report,
    load_config,
    objective_weights,
    optimizer_params,
    parameter_bounds,
    run_benchmark,
    run_cell,
    scene_gen_params,
)
from .executor import ConfigurationError, ExecutionLog, METHODS
from .graph import build_robustness_graph, min_cost_path
from .optimizer import deterministic_sto, reach_guess, robust_sto
from .scenegen import SceneGenerationError, count_blockers_on_ray, generate_random_scene
from .render import render_trace
from .world import initial_state, load_scene, save_scene


def _resolve_jobs(args_jobs: int | None, config: RunConfig) -> int:
    env = os.environ.get("CONTRAPLAN_JOBS")
    if env is not None:
        try:
            jobs = int(env)
        except ValueError as e:
            raise ConfigurationError(f"CONTRAPLAN_JOBS must be an integer, got {env!r}") from e
        if jobs < 1:
            raise ConfigurationError("CONTRAPLAN_JOBS must be at least 1")
        return jobs
    if args_jobs is not None:
        if args_jobs < 1:
            raise ConfigurationError("--jobs must be at least 1")
        return args_jobs
    return config.jobs


def _load_config_arg(path: str | None) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _cmd_plan(args) -> int:
    config = _load_config_arg(args.config)
    scene = load_scene(args.scene)
    if args.method not in METHODS:
        raise ConfigurationError(f"unknown method {args.method!r}; expected one of {METHODS}")
    jobs = _resolve_jobs(args.jobs, config)
    params = optimizer_params(config, jobs=jobs)
    weights = objective_weights(config)
    rng = np.random.default_rng(args.seed)
    x0 = initial_state(scene)
    guess = reach_guess(x0, scene, params)
    segments = None
    if args.method == "ol":
        result = deterministic_sto(x0, guess, scene, weights, params, rng)
    else:
        pre = deterministic_sto(x0, guess, scene, weights, params, rng)
        result = robust_sto(
            x0, pre.controls, scene, parameter_bounds(config), weights, params, rng,
            use_real_metrics=(args.method != "cp"),
        )
        graph = build_robustness_graph(
            result.profile, config.robust_edge_cost, config.non_robust_edge_cost
        )
        segments = min_cost_path(graph)
    payload = {
        "method": args.method,
        "seed": args.seed,
        "feasible": result.feasible,
        "infeasible_reasons": result.infeasible_reasons,
        "robust": result.robust,
        "objective": result.objective,
        "task_cost": result.task_cost,
        "iterations_used": result.iterations_used,
        "rollouts_evaluated": result.rollouts_evaluated,
        "cost_history": result.cost_history,
        "controls": {"commands": result.controls.commands.tolist(), "dt": result.controls.dt},
        "profile": (
            {
                "per_step_expected": result.profile.per_step_expected.tolist(),
                "path_expected_nominal": result.profile.path_expected_nominal,
                "path_maximal_nominal": result.profile.path_maximal_nominal,
                "path_expected_real": result.profile.path_expected_real,
                "path_maximal_real": result.profile.path_maximal_real,
            }
            if result.profile is not None
            else None
        ),
        "segments": segments.to_dict() if segments is not None else None,
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_execute(args) -> int:
    config = _load_config_arg(args.config)
    scene = load_scene(args.scene)
    row, log = run_cell(scene, 0, args.method, args.seed, config)
    if log is not None and args.out:
        log.to_jsonl(args.out)
    print(
        f"method={row.method} seed={row.seed} success={str(row.success).lower()} "
        f"planning_time_s={row.planning_time_s!r} execution_time_s={row.execution_time_s!r} "
        f"percent_open_loop={row.percent_open_loop!r}"
    )
    if log is None:
        print("run failed; no log written", file=sys.stderr)
    return 0


def _cmd_bench(args) -> int:
    config = _load_config_arg(args.config)
    jobs = _resolve_jobs(args.jobs, config)
    if jobs != config.jobs:
        config = dataclasses.replace(config, jobs=jobs)
    report = run_benchmark(config)
    out = args.out
    if not out:
        os.makedirs(config.out_dir, exist_ok=True)
        out = os.path.join(config.out_dir, f"report.{args.format}")
    emit_report(report, out, args.format)
    for method, cols in report.aggregates.items():
        succ = cols["success"]["mean"]
        print(f"{method}: success={succ!r} n={cols['success']['n']}")
    print(f"report written to {out}")
    return 0


def _cmd_render(args) -> int:
    scene = load_scene(args.scene)
    log = ExecutionLog.from_jsonl(args.log)
    written = render_trace(log, scene, args.out)
    print(f"wrote {len(written)} SVG files to {args.out}")
    return 0


def _cmd_scene_gen(args) -> int:
    config = _load_config_arg(args.config)
    rng = np.random.default_rng(args.seed)
    scene = generate_random_scene(scene_gen_params(config), rng)
    save_scene(scene, args.out)
    print(
        f"scene with {scene.n_objects} objects written to {args.out} "
        f"({count_blockers_on_ray(scene)} blockers on the target line)"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contraplan",
        description="Divergence-aware planning and execution on a cluttered shelf.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="optimize one plan and report segments and metrics")
    p.add_argument("--scene", required=True, help="scene JSON file")
    p.add_argument("--method", default="ocl", choices=METHODS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="RunConfig JSON file")
    p.add_argument("--out", default=None, help="output JSON path (default: stdout)")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("execute", help="plan and run against a sampled hidden world")
    p.add_argument("--scene", required=True)
    p.add_argument("--method", default="ocl", choices=METHODS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="execution log JSONL path")
    p.set_defaults(func=_cmd_execute)

    p = sub.add_parser("bench", help="run the full benchmark matrix")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="report path (default: <out_dir>/report.<format>)")
    p.add_argument("--format", default="csv", choices=("csv", "json"))
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("render", help="render an execution log to SVG frames")
    p.add_argument("log", help="execution log JSONL file")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("scene", help="scene utilities")
    scene_sub = p.add_subparsers(dest="scene_command", required=True)
    g = scene_sub.add_parser("gen", help="generate a random scene file")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--config", default=None)
    g.add_argument("--out", required=True, help="scene JSON path")
    g.set_defaults(func=_cmd_scene_gen)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, SceneGenerationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
