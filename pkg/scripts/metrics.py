"""效用与群体公平性指标。

效用（越大越好）：accuracy、f1（正类）、roc_auc
公平性（越小越好）：
- eq_odds: TPR 组间差 + FPR 组间差，范围 [0, 2]
- stat_parity: 正类预测率组间差
- eq_opp: TPR 组间差

多组（交叉）时组间差取 max − min，两组时即为绝对差。
条件比率在某组没有样本支撑时跳过该组，并在 flags 中记录 (指标, 组)。
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Hashable, Sequence

import numpy as np
from scipy import stats

from . import errors

logger = logging.getLogger(__name__)

UTILITY_METRICS = ("accuracy", "roc_auc", "f1")
FAIRNESS_METRICS = ("eq_odds", "stat_parity", "eq_opp")
METRIC_NAMES = UTILITY_METRICS + FAIRNESS_METRICS

# 结果文件中的列名前缀
COLUMN_PREFIX = {
    "accuracy": "accuracy",
    "roc_auc": "roc_auc",
    "f1": "f1",
    "eq_odds": "eq_odds",
    "stat_parity": "sp",
    "eq_opp": "eq_opp",
}

ALL_ROWS = "all"


def higher_is_better(metric: str) -> bool:
    return metric in UTILITY_METRICS


def group_name(group: Hashable) -> str:
    if isinstance(group, tuple):
        return "(" + ",".join(str(v) for v in group) + ")"
    return str(group)


@dataclass(frozen=True)
class EvalFrame:
    """
    评估输入：真实标签、分数、预测标签和每行所属的组。

    universe 为应当出现的全部组；缺省时取 group_of_row 中出现的组。
    在 universe 中但没有行的组会被标记为空组。
    """

    y_true: np.ndarray
    y_score: np.ndarray
    y_pred: np.ndarray
    group_of_row: Sequence[Hashable]
    universe: tuple = ()

    def __post_init__(self):
        n = len(self.y_true)
        if n < 1:
            raise errors.UsageError("EvalFrame 至少需要 1 行")
        if not (len(self.y_score) == len(self.y_pred) == len(self.group_of_row) == n):
            raise errors.UsageError("EvalFrame 各列长度不一致")
        for name in ("y_true", "y_pred"):
            values = np.asarray(getattr(self, name))
            if not np.all((values == 0) | (values == 1)):
                raise errors.UsageError(f"{name} 只能取 0/1")

    @classmethod
    def build(cls, y_true, y_score, y_pred, group_of_row, universe=()) -> "EvalFrame":
        return cls(
            y_true=np.asarray(y_true, dtype=np.int64),
            y_score=np.asarray(y_score, dtype=np.float64),
            y_pred=np.asarray(y_pred, dtype=np.int64),
            group_of_row=list(group_of_row),
            universe=tuple(universe),
        )

    def groups(self) -> list[Hashable]:
        seen = list(self.universe)
        known = set(seen)
        for g in self.group_of_row:
            if g not in known:
                known.add(g)
                seen.append(g)
        return sorted(seen, key=group_name) if not self.universe else seen

    def group_masks(self) -> dict[Hashable, np.ndarray]:
        index = {g: i for i, g in enumerate(self.groups())}
        codes = np.fromiter((index[g] for g in self.group_of_row), dtype=np.int64,
                            count=len(self.group_of_row))
        return {g: codes == i for g, i in index.items()}


@dataclass(frozen=True)
class FairnessReport:
    eq_odds: float
    stat_parity: float
    eq_opp: float
    undefined_flags: frozenset = field(default_factory=frozenset)


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    f1: float
    roc_auc: float
    eq_odds: float
    stat_parity: float
    eq_opp: float
    undefined_flags: frozenset = field(default_factory=frozenset)

    def as_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {name: getattr(self, name) for name in METRIC_NAMES}
        out["undefined_flags"] = sorted(f"{m}@{g}" for m, g in self.undefined_flags)
        return out


def _flag(flags: set | None, metric: str, group: str) -> None:
    if flags is not None:
        flags.add((metric, group))


def accuracy(frame: EvalFrame) -> float:
    return float(np.mean(frame.y_true == frame.y_pred))


def f1(frame: EvalFrame, flags: set | None = None) -> float:
    """
    正类 F1 = 2TP / (2TP + FP + FN)。

    没有预测正类或没有真实正类时，精确率或召回率无定义，记录标记；
    两者都没有时结果为 0。
    """
    y, p = frame.y_true, frame.y_pred
    tp = int(np.sum((y == 1) & (p == 1)))
    fp = int(np.sum((y == 0) & (p == 1)))
    fn = int(np.sum((y == 1) & (p == 0)))
    if tp + fp == 0 or tp + fn == 0:
        _flag(flags, "f1", ALL_ROWS)
    denominator = 2 * tp + fp + fn
    return 2.0 * tp / denominator if denominator else 0.0


def roc_auc(frame: EvalFrame) -> float:
    """
    ROC AUC，等于 Mann–Whitney 统计量（并列记 0.5）。

    @raises: AucUndefined
    """
    y = frame.y_true
    n_pos = int(np.sum(y == 1))
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise errors.AucUndefined()
    ranks = stats.rankdata(frame.y_score, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _group_rates(frame: EvalFrame, condition: np.ndarray | None, metric: str,
                 flags: set | None) -> list[float]:
    """各组的 P[ŷ=1 | 条件, 组]，无支撑的组跳过并标记。"""
    rates = []
    for g, mask in frame.group_masks().items():
        support = mask if condition is None else mask & condition
        n = int(support.sum())
        if n == 0:
            _flag(flags, metric, group_name(g))
            continue
        rates.append(float(np.sum(frame.y_pred[support] == 1)) / n)
    return rates


def _gap(rates: list[float], metric: str) -> float:
    if not rates:
        raise errors.AllRatesUndefined(metric)
    return max(rates) - min(rates)


def equalized_odds(frame: EvalFrame, flags: set | None = None) -> float:
    """(max TPR − min TPR) + (max FPR − min FPR)。"""
    tpr = _group_rates(frame, frame.y_true == 1, "eq_odds", flags)
    fpr = _group_rates(frame, frame.y_true == 0, "eq_odds", flags)
    return _gap(tpr, "eq_odds") + _gap(fpr, "eq_odds")


def statistical_parity(frame: EvalFrame, flags: set | None = None) -> float:
    """正类预测率的 max − min。"""
    return _gap(_group_rates(frame, None, "stat_parity", flags), "stat_parity")


def equal_opportunity(frame: EvalFrame, flags: set | None = None) -> float:
    """TPR 的 max − min。"""
    return _gap(_group_rates(frame, frame.y_true == 1, "eq_opp", flags), "eq_opp")


def fairness(frame: EvalFrame) -> FairnessReport:
    flags: set = set()
    return FairnessReport(
        eq_odds=equalized_odds(frame, flags),
        stat_parity=statistical_parity(frame, flags),
        eq_opp=equal_opportunity(frame, flags),
        undefined_flags=frozenset(flags),
    )


def evaluate(frame: EvalFrame) -> MetricReport:
    """
    计算全部指标。

    @param frame: 评估输入
    @returns: MetricReport
    @raises: AucUndefined / AllRatesUndefined
    """
    flags: set = set()
    report = MetricReport(
        accuracy=accuracy(frame),
        f1=f1(frame, flags),
        roc_auc=roc_auc(frame),
        eq_odds=equalized_odds(frame, flags),
        stat_parity=statistical_parity(frame, flags),
        eq_opp=equal_opportunity(frame, flags),
        undefined_flags=frozenset(flags),
    )
    if flags:
        logger.debug(f"无定义的条件比率: {sorted(flags)}")
    return report
