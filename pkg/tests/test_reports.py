from __future__ import annotations

import json
import math

import pandas as pd
import pytest

from scripts import harness, metrics, reports
from scripts.classifier import GbdtConfig
from scripts.harness import CellResult, ExperimentConfig, ExperimentResult

CONFIG = ExperimentConfig(folds=3, repeats=1, base_seed=2, strategies=("class", "class-ratio"),
                          generators=("cart",), classifier=GbdtConfig(rounds=8, max_depth=3), n_jobs=2)


@pytest.mark.parametrize("value, text", [
    (0.0000005, "0.000000"),
    (0.0000015, "0.000002"),
    (0.0000025, "0.000002"),
    (1, "1.000000"),
    (1 / 3, "0.333333"),
    (-0.25, "-0.250000"),
])
def test_fmt_rounds_half_even(value: float, text: str) -> None:
    assert reports.fmt(value) == text


def test_fmt_missing() -> None:
    assert reports.fmt(float("nan")) == ""
    assert reports.fmt(None) == ""


def _cell(strategy: str, generator: str, accuracy: float, eq_odds: float, note: str = "") -> CellResult:
    mean = {m: 0.5 for m in metrics.METRIC_NAMES}
    mean.update(accuracy=accuracy, eq_odds=eq_odds)
    if note:
        mean = {m: float("nan") for m in metrics.METRIC_NAMES}
    return CellResult(strategy=strategy, generator=generator, runs=(), mean=mean,
                      std={m: 0.0 for m in metrics.METRIC_NAMES}, view_mean={}, view_std={},
                      r_aug=0.0 if strategy == "real" else 0.2, note=note)


def _fake_result() -> ExperimentResult:
    cells = (
        _cell("real", "none", accuracy=0.80, eq_odds=0.2),
        _cell("class", "cart", accuracy=0.82, eq_odds=0.1),
        _cell("class-ratio", "cart", accuracy=0.85, eq_odds=0.3),
        _cell("protected", "smote-nc", accuracy=0.0, eq_odds=0.0, note="NotApplicable: x"),
    )
    return ExperimentResult(config=CONFIG, cells=cells, view_names=("sex",))


def test_compare_to_baseline() -> None:
    comparison = reports.compare_to_baseline(_fake_result())
    assert comparison["accuracy"]["best"] == "class-ratio/cart"
    assert comparison["accuracy"]["second"] == "class/cart"
    assert comparison["accuracy"]["beats_baseline"] == ["class/cart", "class-ratio/cart"]
    assert comparison["accuracy"]["baseline"] == "0.800000"
    assert comparison["eq_odds"]["best"] == "class/cart"
    assert comparison["eq_odds"]["beats_baseline"] == ["class/cart"]
    assert comparison["f1"]["beats_baseline"] == []


def test_results_table_markers() -> None:
    table = reports.format_results_table(_fake_result())
    lines = table.splitlines()
    class_line = next(line for line in lines if "class/cart" in line and "ratio" not in line)
    ratio_line = next(line for line in lines if "class-ratio/cart" in line)
    assert "0.820000±0.000000†*" in class_line
    assert "0.100000±0.000000**" in class_line
    assert "0.850000±0.000000**" in ratio_line
    assert "0.300000±0.000000†" in ratio_line
    assert "0.300000±0.000000†*" not in ratio_line
    assert "NotApplicable" in table


def test_results_frame_layout() -> None:
    frame = reports.results_frame(_fake_result())
    assert list(frame.columns) == reports.RESULT_COLUMNS
    assert frame.iloc[0]["strategy"] == "real"
    failed = frame.iloc[3]
    assert failed["accuracy_mean"] == ""
    assert failed["note"].startswith("NotApplicable")


def test_distribution_frame(small_dataset) -> None:
    table = reports.distribution_frame(small_dataset, ["class", "protected"])
    assert list(table["strategy"].unique()) == ["class", "protected"]
    assert len(table) == 8
    for _, part in table.groupby("strategy"):
        assert abs(part["real_pct"].sum() - 100.0) <= 0.01


@pytest.fixture(scope="module")
def benchmark_dirs(small_dataset, tmp_path_factory):
    dirs = []
    for name in ("first", "second"):
        out = tmp_path_factory.mktemp(name)
        result = harness.run_grid(small_dataset, CONFIG)
        reports.write_benchmark(result, small_dataset, out)
        dirs.append(out)
    return dirs


def test_benchmark_files_are_byte_identical(benchmark_dirs) -> None:
    first, second = benchmark_dirs
    for name in ("results.csv", "runs.jsonl", "fairness_views.csv", "distribution.csv", "summary.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_benchmark_file_contents(benchmark_dirs) -> None:
    out = benchmark_dirs[0]
    results = pd.read_csv(out / "results.csv", dtype=str, keep_default_na=False)
    assert list(results.columns) == reports.RESULT_COLUMNS
    assert results["strategy"].tolist() == ["real", "class", "class-ratio"]
    assert all(len(v.split(".")[1]) == 6 for v in results["accuracy_mean"])

    runs = [json.loads(line) for line in (out / "runs.jsonl").read_text(encoding="utf-8").splitlines()]
    assert len(runs) == 3 * 3
    assert all(not math.isnan(r["metrics"]["accuracy"]) for r in runs)

    views = pd.read_csv(out / "fairness_views.csv", dtype=str, keep_default_na=False)
    assert list(views.columns) == reports.VIEW_COLUMNS
    assert set(views["view"]) == {"sex"}

    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert set(summary) == set(metrics.METRIC_NAMES)
