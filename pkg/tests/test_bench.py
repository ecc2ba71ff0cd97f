"""Benchmark sweep: row accounting, aggregation, report emission, reproducibility."""

import dataclasses
import json
import statistics

import numpy as np
import pytest
from scipy import stats

import contraplan.bench as bench
from contraplan.bench import (
    REPORT_COLUMNS,
    BenchReport,
    BenchRow,
    RunConfig,
    build_scenes,
    compute_aggregates,
    config_from_dict,
    config_to_dict,
    emit_report,
    load_config,
    read_report_csv,
    read_report_json,
    run_benchmark,
    run_cell,
    save_config,
)
from contraplan.executor import ConfigurationError
from contraplan.world import scene_to_dict

FAST = RunConfig(
    n_scenes=2, n_objects=3, seeds=(0,), base_seed=7,
    horizon=3, samples=2, variance=0.3, max_iterations=1,
    metric_samples=2, metric_worlds=1,
)


@pytest.fixture(scope="module")
def sweep():
    return run_benchmark(FAST)


def test_row_count_and_order(sweep):
    assert len(sweep.rows) == FAST.n_scenes * len(FAST.methods) * len(FAST.seeds)
    keys = [(r.scene_id, r.method, r.seed) for r in sweep.rows]
    expected = [
        (sid, m, s)
        for sid in range(FAST.n_scenes)
        for m in FAST.methods
        for s in FAST.seeds
    ]
    assert keys == expected


def test_rerun_reproduces_report_bytes(tmp_path, sweep):
    again = run_benchmark(FAST)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_report(sweep, a)
    emit_report(again, b)
    assert a.read_bytes() == b.read_bytes()


def test_parallel_sweep_matches_serial(sweep):
    par = run_benchmark(dataclasses.replace(FAST, jobs=2))
    assert par.rows == sweep.rows


def test_hidden_world_is_shared_across_methods():
    # the harness stream depends on (scene, seed) only, so every method
    # faces the same perturbed start
    scene = build_scenes(FAST)[0]
    _, log_ol = run_cell(scene, 0, "ol", 0, FAST)
    _, log_cc = run_cell(scene, 0, "cc", 0, FAST)
    np.testing.assert_array_equal(
        log_ol.initial_true_state.object_poses, log_cc.initial_true_state.object_poses
    )
    np.testing.assert_array_equal(
        log_ol.initial_observed_state.object_poses,
        log_cc.initial_observed_state.object_poses,
    )


def test_scene_stream_independent_of_scene_count():
    few = build_scenes(FAST)
    more = build_scenes(dataclasses.replace(FAST, n_scenes=4))
    for a, b in zip(few, more):
        assert scene_to_dict(a) == scene_to_dict(b)


def test_metric_fields_present_only_for_metric_methods(sweep):
    for row in sweep.rows:
        if row.method in ("rol", "cp", "ocl"):
            assert row.e_real_expected is not None
            assert row.e_nominal_expected is not None
        else:
            assert row.e_real_expected is None
            assert row.e_nominal_expected is None


def test_single_cell_aggregates_equal_the_row():
    cfg = dataclasses.replace(FAST, n_scenes=1, methods=("ol",))
    report = run_benchmark(cfg)
    (row,) = report.rows
    agg = report.aggregates["ol"]
    assert agg["success"] == {"n": 1, "mean": float(row.success), "ci95": None}
    assert agg["execution_time_s"]["mean"] == pytest.approx(row.execution_time_s)
    assert agg["execution_time_s"]["ci95"] is None
    assert agg["e_real_expected"] == {"n": 0, "mean": None, "ci95": None}


def test_aggregates_match_independent_recomputation(sweep):
    for method, cols in sweep.aggregates.items():
        rows = [r for r in sweep.rows if r.method == method]
        for col, summary in cols.items():
            vals = [float(getattr(r, col)) for r in rows if getattr(r, col) is not None]
            assert summary["n"] == len(vals)
            if not vals:
                continue
            assert summary["mean"] == pytest.approx(statistics.fmean(vals), abs=1e-9)
            if len(vals) >= 2:
                sem = statistics.stdev(vals) / len(vals) ** 0.5
                if sem == 0.0:
                    assert summary["ci95"] == 0.0
                else:
                    lo, hi = stats.t.interval(0.95, len(vals) - 1,
                                              loc=statistics.fmean(vals), scale=sem)
                    assert summary["ci95"] == pytest.approx((hi - lo) / 2, abs=1e-9)
            else:
                assert summary["ci95"] is None


def test_failed_cell_becomes_row_not_error(monkeypatch):
    def explode(*args, **kwargs):
        raise RuntimeError("harness blew up")

    monkeypatch.setattr(bench, "run_baseline", explode)
    scene = build_scenes(FAST)[0]
    row, log = run_cell(scene, 0, "ol", 0, FAST)
    assert log is None
    assert row == BenchRow(0, "ol", 0, False, 0.0, 0.0, 0.0, None, None)
    report = run_benchmark(dataclasses.replace(FAST, n_scenes=1))
    assert len(report.rows) == len(FAST.methods)
    assert not any(r.success for r in report.rows)


def test_unknown_method_is_a_configuration_error():
    scene = build_scenes(FAST)[0]
    with pytest.raises(ConfigurationError):
        run_cell(scene, 0, "bogus", 0, FAST)
    with pytest.raises(ConfigurationError):
        RunConfig(methods=("ol", "bogus"))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        RunConfig(methods=())
    with pytest.raises(ConfigurationError):
        RunConfig(seeds=())
    with pytest.raises(ConfigurationError):
        RunConfig(n_scenes=0)
    with pytest.raises(ConfigurationError):
        RunConfig(jobs=0)


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "config.json"
    save_config(FAST, path)
    assert load_config(path) == FAST
    with pytest.raises(ConfigurationError):
        config_from_dict({**config_to_dict(FAST), "warp_speed": 9})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_config(bad)
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.json")


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def test_empty_report_is_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    emit_report(BenchReport(rows=[], aggregates={}), path)
    assert path.read_text() == ",".join(REPORT_COLUMNS) + "\n"


def test_csv_round_trip_preserves_values(tmp_path, sweep):
    path = tmp_path / "report.csv"
    emit_report(sweep, path)
    rows = read_report_csv(path)
    assert rows == sweep.rows


def test_json_report_mirrors_rows_and_aggregates(tmp_path, sweep):
    path = tmp_path / "report.json"
    emit_report(sweep, path, format="json")
    clone = read_report_json(path)
    assert clone.rows == sweep.rows
    payload = json.loads(path.read_text())
    assert payload["aggregates"].keys() == sweep.aggregates.keys()
    for method, cols in sweep.aggregates.items():
        for col, summary in cols.items():
            emitted = payload["aggregates"][method][col]
            assert emitted["n"] == summary["n"]
            if summary["mean"] is not None:
                assert emitted["mean"] == pytest.approx(summary["mean"], abs=1e-12)


def test_emit_report_rejects_unknown_format(tmp_path, sweep):
    with pytest.raises(ConfigurationError):
        emit_report(sweep, tmp_path / "x.xml", format="xml")


def test_emit_report_surfaces_path_in_io_error(tmp_path, sweep):
    target = tmp_path / "no_such_dir" / "report.csv"
    with pytest.raises(OSError, match="report"):
        emit_report(sweep, target)
