"""报告输出模块。

所有数据文件中的实数保留 6 位小数（银行家舍入），不含时间戳和耗时，
相同输入得到逐字节相同的文件。

输出文件：
- results.csv: 每个单元的均值/标准差
- runs.jsonl: 每次运行一行
- fairness_views.csv: 每个单元在各公平性视角下的指标
- distribution.csv: 各策略在整个数据集上的子组分布
- summary.json: 每个指标的最优/次优单元及优于基线的单元
- profile.csv: 生成器耗时
"""

import json
import logging
import math
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Any, Iterable

import pandas as pd

from . import errors, metrics, strategies
from .dataset import Dataset, partition
from .harness import CellResult, ExperimentResult, RuntimeProfile
from .strategies import GroupClassCounts, StrategyKind

logger = logging.getLogger(__name__)

_QUANTUM = Decimal("0.000001")

RESULT_COLUMNS = [
    "strategy", "generator",
    "accuracy_mean", "accuracy_std", "roc_auc_mean", "roc_auc_std", "f1_mean", "f1_std",
    "eq_odds_mean", "eq_odds_std", "sp_mean", "sp_std", "eq_opp_mean", "eq_opp_std",
    "r_aug", "note",
]
VIEW_COLUMNS = [
    "strategy", "generator", "view",
    "eq_odds_mean", "eq_odds_std", "sp_mean", "sp_std", "eq_opp_mean", "eq_opp_std",
]
DISTRIBUTION_COLUMNS = ["strategy", "group", "class", "real_count", "synthetic_count", "real_pct", "r_aug"]
PROFILE_COLUMNS = [
    "generator", "fit_s_mean", "fit_s_std", "sample_s_mean", "sample_s_std",
    "overall_s_mean", "overall_s_std", "note",
]


def fmt(value: float | None) -> str:
    """6 位小数、round-half-even；NaN/None 输出空串。"""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return str(Decimal(repr(float(value))).quantize(_QUANTUM, rounding=ROUND_HALF_EVEN))


def _write_csv(frame: pd.DataFrame, path: str | Path) -> None:
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    logger.debug(f"写出 {path}: {len(frame)} 行")


def results_frame(result: ExperimentResult) -> pd.DataFrame:
    rows = []
    for cell in result.cells:
        row: dict[str, Any] = {"strategy": cell.strategy, "generator": cell.generator}
        for m in metrics.METRIC_NAMES:
            prefix = metrics.COLUMN_PREFIX[m]
            row[f"{prefix}_mean"] = fmt(cell.mean[m])
            row[f"{prefix}_std"] = fmt(cell.std[m])
        row["r_aug"] = fmt(cell.r_aug)
        row["note"] = cell.note
        rows.append(row)
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def views_frame(result: ExperimentResult) -> pd.DataFrame:
    rows = []
    for cell in result.cells:
        for view in result.view_names:
            row: dict[str, Any] = {"strategy": cell.strategy, "generator": cell.generator, "view": view}
            for m in metrics.FAIRNESS_METRICS:
                prefix = metrics.COLUMN_PREFIX[m]
                row[f"{prefix}_mean"] = fmt(cell.view_mean.get(view, {}).get(m))
                row[f"{prefix}_std"] = fmt(cell.view_std.get(view, {}).get(m))
            rows.append(row)
    return pd.DataFrame(rows, columns=VIEW_COLUMNS)


def distribution_frame(d: Dataset, strategy_kinds: Iterable[StrategyKind | str]) -> pd.DataFrame:
    """
    各策略在整个数据集上的子组分布表（只计算计划，不采样）。

    无法计算计划的策略（例如 class-ratio 的退化比例）记录警告后跳过。
    """
    counts = GroupClassCounts.from_partition(partition(d))
    parts = []
    for kind in strategy_kinds:
        kind = StrategyKind(kind)
        try:
            plan = strategies.plan(kind, counts)
        except errors.FairSynthError as e:
            logger.warning(f"策略 {kind.value} 无法计算计划: {e}")
            continue
        table = strategies.summarize_distribution(counts, plan, d.describe_key)
        table.insert(0, "strategy", kind.value)
        parts.append(table)
    if not parts:
        return pd.DataFrame(columns=DISTRIBUTION_COLUMNS + ["synthetic_pct"])
    return pd.concat(parts, ignore_index=True)


def _format_distribution(table: pd.DataFrame) -> pd.DataFrame:
    out = table[DISTRIBUTION_COLUMNS].copy()
    for column in ("real_pct", "r_aug"):
        out[column] = [fmt(v) for v in out[column]]
    return out


def profile_frame(profile: RuntimeProfile) -> pd.DataFrame:
    rows = []
    for row in profile.rows:
        summary = row.summary()
        rows.append({
            "generator": row.generator,
            **{k: fmt(v) for k, v in summary.items()},
            "note": row.note,
        })
    return pd.DataFrame(rows, columns=PROFILE_COLUMNS)


def cell_label(cell: CellResult) -> str:
    return f"{cell.strategy}/{cell.generator}"


def _beats(metric: str, value: float, reference: float) -> bool:
    if math.isnan(value) or math.isnan(reference):
        return False
    return value > reference if metrics.higher_is_better(metric) else value < reference


def compare_to_baseline(result: ExperimentResult) -> dict[str, dict[str, Any]]:
    """
    每个指标：最优、次优单元及优于真实数据基线的单元。

    排名只包含成功的合成单元，按 (均值, 单元顺序) 决定先后。
    """
    baseline = result.baseline
    candidates = [c for c in result.cells if not c.is_baseline and not c.failed]
    out = {}
    for m in metrics.METRIC_NAMES:
        sign = -1.0 if metrics.higher_is_better(m) else 1.0
        ranked = sorted(enumerate(candidates), key=lambda ic: (sign * ic[1].mean[m], ic[0]))
        names = [cell_label(c) for _, c in ranked]
        beating = []
        if baseline is not None and not baseline.failed:
            beating = [cell_label(c) for c in candidates
                       if _beats(m, c.mean[m], baseline.mean[m])]
        out[m] = {
            "best": names[0] if names else None,
            "second": names[1] if len(names) > 1 else None,
            "baseline": None if baseline is None else fmt(baseline.mean[m]),
            "beats_baseline": beating,
        }
    return out


def format_results_table(result: ExperimentResult) -> str:
    """
    人类可读的结果表：均值±标准差，每列最优标 **，次优标 †，优于基线再加 *。
    """
    comparison = compare_to_baseline(result)
    rows = []
    for cell in result.cells:
        name = cell_label(cell)
        row = {"cell": name, "r_aug": fmt(cell.r_aug)}
        for m in metrics.METRIC_NAMES:
            if cell.failed:
                row[m] = "-"
                continue
            text = f"{fmt(cell.mean[m])}±{fmt(cell.std[m])}"
            if comparison[m]["best"] == name:
                text += "**"
            else:
                if comparison[m]["second"] == name:
                    text += "†"
                if name in comparison[m]["beats_baseline"]:
                    text += "*"
            row[m] = text
        row["note"] = cell.note
        rows.append(row)
    frame = pd.DataFrame(rows, columns=["cell", *metrics.METRIC_NAMES, "r_aug", "note"])
    return frame.to_string(index=False)


def _rounded(value: Any) -> Any:
    """递归地把实数按 fmt 规则取整，NaN 写为 null。"""
    if isinstance(value, float):
        text = fmt(value)
        return float(text) if text else None
    if isinstance(value, dict):
        return {k: _rounded(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_rounded(v) for v in value]
    return value


def write_runs(result: ExperimentResult, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in result.records:
            f.write(json.dumps(_rounded(record.as_dict()), ensure_ascii=False, sort_keys=True) + "\n")


def write_benchmark(result: ExperimentResult, d: Dataset, out_dir: str | Path) -> dict[str, Path]:
    """
    写出 benchmark 的全部结果文件。

    @param result: run_grid 的结果
    @param d: 输入数据集（用于分布表）
    @param out_dir: 输出目录，不存在时创建
    @returns: 文件名 → 路径
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "results": out / "results.csv",
        "runs": out / "runs.jsonl",
        "views": out / "fairness_views.csv",
        "distribution": out / "distribution.csv",
        "summary": out / "summary.json",
    }
    _write_csv(results_frame(result), paths["results"])
    write_runs(result, paths["runs"])
    _write_csv(views_frame(result), paths["views"])
    _write_csv(_format_distribution(distribution_frame(d, result.config.strategies)), paths["distribution"])
    with open(paths["summary"], "w", encoding="utf-8") as f:
        json.dump(compare_to_baseline(result), f, ensure_ascii=False, indent=2, sort_keys=True)
    logger.info(f"结果已写入 {out}")
    return paths


def write_distribution(table: pd.DataFrame, path: str | Path) -> None:
    _write_csv(_format_distribution(table), path)


def write_profile(profile: RuntimeProfile, path: str | Path) -> None:
    _write_csv(profile_frame(profile), path)
