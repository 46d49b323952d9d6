"""采样策略模块。

根据真实子组计数计算每个子组要生成的合成样本数，以及增广比例 r_aug。

四种策略：
- class: 每个组内把少数类补到多数类数量（组内 50/50）
- class-protected: 所有子组补到同一数量 M
- protected: 非最大组按组内类别比例补到最大组的总数
- class-ratio: 非最大组补到与最大组相同的正类比例
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Mapping

import pandas as pd

from . import errors
from .dataset import SubgroupKey, SubgroupPartition

logger = logging.getLogger(__name__)


class StrategyKind(str, Enum):
    CLASS = "class"
    CLASS_AND_PROTECTED = "class-protected"
    PROTECTED = "protected"
    CLASS_RATIO = "class-ratio"


@dataclass(frozen=True)
class GroupClassCounts:
    """子组 → 真实行数。"""

    counts: Mapping[SubgroupKey, int]

    @classmethod
    def from_partition(cls, partition: SubgroupPartition) -> "GroupClassCounts":
        return cls(counts=partition.counts())

    @classmethod
    def from_mapping(cls, counts: Mapping[tuple[tuple[int, ...], int], int]) -> "GroupClassCounts":
        """从 {(受保护元组, 类别): 数量} 构造，缺失的子组按 0 计。"""
        groups = {g for g, _ in counts}
        return cls(counts={
            SubgroupKey(g, c): int(counts.get((g, c), 0)) for g in groups for c in (0, 1)
        })

    def keys(self) -> list[SubgroupKey]:
        return sorted(self.counts)

    def groups(self) -> list[tuple[int, ...]]:
        return sorted({k.protected_values for k in self.counts})

    def count(self, group: tuple[int, ...], label: int) -> int:
        return int(self.counts.get(SubgroupKey(group, label), 0))

    def group_total(self, group: tuple[int, ...]) -> int:
        return self.count(group, 0) + self.count(group, 1)

    @property
    def total(self) -> int:
        return int(sum(self.counts.values()))

    def largest_group(self) -> tuple[int, ...]:
        """总数最多的组；并列时取字典序最小的元组。"""
        return min(self.groups(), key=lambda g: (-self.group_total(g), g))


@dataclass(frozen=True)
class SamplingPlan:
    strategy: StrategyKind
    to_sample: Mapping[SubgroupKey, int]
    r_aug: float

    @property
    def total_synthetic(self) -> int:
        return int(sum(self.to_sample.values()))

    def is_empty(self) -> bool:
        return self.total_synthetic == 0

    def as_dict(self, describe: Callable[[SubgroupKey], str] | None = None) -> dict:
        """便于 JSON 输出的字典，只列出计数为正的子组。"""
        describe = describe or str
        return {
            "strategy": self.strategy.value,
            "to_sample": {describe(k): n for k, n in sorted(self.to_sample.items()) if n > 0},
            "total_synthetic": self.total_synthetic,
            "r_aug": self.r_aug,
        }


def _round_half_up(value: Fraction) -> int:
    return math.floor(value + Fraction(1, 2))


def _split_proportionally(total: int, p: int, q: int) -> tuple[int, int]:
    """按 (p, q) 比例拆分 total，最大余数法取整；余数并列时给正类。"""
    if p + q == 0:
        return 0, 0
    share_p = Fraction(total * p, p + q)
    share_q = Fraction(total * q, p + q)
    base_p, base_q = math.floor(share_p), math.floor(share_q)
    left = total - base_p - base_q
    if left:
        if share_p - base_p >= share_q - base_q:
            base_p += left
        else:
            base_q += left
    return base_p, base_q


def _class_plan(counts: GroupClassCounts) -> dict[SubgroupKey, int]:
    out = {}
    for g in counts.groups():
        p, q = counts.count(g, 1), counts.count(g, 0)
        out[SubgroupKey(g, 1)] = max(q - p, 0)
        out[SubgroupKey(g, 0)] = max(p - q, 0)
    return out


def _class_and_protected_plan(counts: GroupClassCounts) -> dict[SubgroupKey, int]:
    # 最大组多数类数量；若其它子组更大则取其最大值，保证不出现负数
    largest = counts.largest_group()
    target = max(counts.count(largest, 0), counts.count(largest, 1), *counts.counts.values())
    return {key: target - n for key, n in counts.counts.items()}


def _protected_plan(counts: GroupClassCounts) -> dict[SubgroupKey, int]:
    largest = counts.largest_group()
    goal = counts.group_total(largest)
    out = {key: 0 for key in counts.counts}
    for g in counts.groups():
        if g == largest:
            continue
        p, q = counts.count(g, 1), counts.count(g, 0)
        deficit = goal - (p + q)
        if deficit > 0 and p + q == 0:
            raise errors.EmptyRequiredSubgroup(SubgroupKey(g, 1))
        add_p, add_q = _split_proportionally(deficit, p, q)
        out[SubgroupKey(g, 1)] = add_p
        out[SubgroupKey(g, 0)] = add_q
    return out


def _class_ratio_plan(counts: GroupClassCounts) -> dict[SubgroupKey, int]:
    largest = counts.largest_group()
    p_l, n_l = counts.count(largest, 1), counts.group_total(largest)
    rho = Fraction(p_l, n_l) if n_l else Fraction(0)
    if rho in (0, 1):
        raise errors.DegenerateRatio(float(rho))

    out = {key: 0 for key in counts.counts}
    for g in counts.groups():
        if g == largest:
            continue
        p, n = counts.count(g, 1), counts.group_total(g)
        if p < rho * n:
            out[SubgroupKey(g, 1)] = _round_half_up((rho * n - p) / (1 - rho))
        elif p > rho * n:
            out[SubgroupKey(g, 0)] = _round_half_up((p - rho * n) / rho)
    return out


_PLANNERS = {
    StrategyKind.CLASS: _class_plan,
    StrategyKind.CLASS_AND_PROTECTED: _class_and_protected_plan,
    StrategyKind.PROTECTED: _protected_plan,
    StrategyKind.CLASS_RATIO: _class_ratio_plan,
}


def plan(strategy: StrategyKind | str, counts: GroupClassCounts) -> SamplingPlan:
    """
    计算采样计划。

    @param strategy: 策略
    @param counts: 真实子组计数
    @returns: SamplingPlan，r_aug = Σ合成 / (Σ合成 + Σ真实)
    @raises: EmptyRequiredSubgroup / DegenerateRatio
    """
    strategy = StrategyKind(strategy)
    if not counts.counts or counts.total == 0:
        raise errors.EmptyRequiredSubgroup("<全部>")

    to_sample = _PLANNERS[strategy](counts)
    for key in sorted(to_sample):
        if to_sample[key] > 0 and counts.counts.get(key, 0) == 0:
            raise errors.EmptyRequiredSubgroup(key)

    synthetic = sum(to_sample.values())
    r_aug = synthetic / (synthetic + counts.total)
    logger.debug(f"策略 {strategy.value}: 合成 {synthetic} 行, r_aug={r_aug:.4f}")
    return SamplingPlan(strategy=strategy, to_sample=dict(sorted(to_sample.items())), r_aug=r_aug)


def summarize_distribution(
    counts: GroupClassCounts,
    plan: SamplingPlan,
    describe: Callable[[SubgroupKey], tuple[str, str]] | None = None,
) -> pd.DataFrame:
    """
    子组分布表（真实/合成计数与百分比），按子组键排序。

    @param counts: 真实子组计数
    @param plan: 由 counts 得到的计划
    @param describe: 子组 → (组名, 类别名)；缺省使用索引
    @returns: 列 group, class, real_count, synthetic_count, real_pct, synthetic_pct, r_aug
    """
    describe = describe or (lambda k: (",".join(map(str, k.protected_values)), str(k.class_label)))
    total_real = counts.total
    total_aug = total_real + plan.total_synthetic
    rows = []
    for key in counts.keys():
        group, label = describe(key)
        real = counts.counts[key]
        synthetic = int(plan.to_sample.get(key, 0))
        rows.append({
            "group": group,
            "class": label,
            "real_count": real,
            "synthetic_count": synthetic,
            "real_pct": 100.0 * real / total_real if total_real else 0.0,
            "synthetic_pct": 100.0 * synthetic / total_aug if total_aug else 0.0,
            "r_aug": plan.r_aug,
        })
    return pd.DataFrame(rows, columns=[
        "group", "class", "real_count", "synthetic_count", "real_pct", "synthetic_pct", "r_aug",
    ])
