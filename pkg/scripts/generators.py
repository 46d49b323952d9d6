"""生成器统一接口。

三种按子组拟合的生成器：
- copula: 高斯 Copula（copula.py）
- cart: CART 逐列合成（cart.py）
- smote-nc: SMOTE-NC 插值（smote.py）

fit_and_sample_plan 按采样计划对每个子组分别拟合并采样，
拟合种子只由 (seed, 生成器, 子组) 决定，因此同一折内不同策略可以共享模型。
"""

import logging
from enum import Enum
from typing import Any, Callable, Mapping

import numpy as np
import pandas as pd

from . import cart, copula, errors, smote
from .dataset import ColumnKind, Dataset, DatasetSchema, SubgroupKey, SubgroupPartition, augment
from .runtime import ModelCache, derive_seed
from .strategies import SamplingPlan

logger = logging.getLogger(__name__)


class GeneratorKind(str, Enum):
    GAUSSIAN_COPULA = "copula"
    CART_CHAIN = "cart"
    SMOTE_NC = "smote-nc"


GeneratorModel = copula.CopulaModel | cart.CartChainModel | smote.SmoteModel

_FITTERS: dict[GeneratorKind, Callable[..., Any]] = {
    GeneratorKind.GAUSSIAN_COPULA: copula.fit,
    GeneratorKind.CART_CHAIN: cart.fit,
    GeneratorKind.SMOTE_NC: smote.fit,
}


def parse_kinds(names: str | list[str]) -> list[GeneratorKind]:
    """解析逗号分隔的生成器名称。"""
    if isinstance(names, str):
        names = names.split(",")
    return [GeneratorKind(n.strip()) for n in names if n.strip()]


def _as_matrix(rows: pd.DataFrame | np.ndarray, schema: DatasetSchema) -> np.ndarray:
    if isinstance(rows, pd.DataFrame):
        if list(rows.columns) != list(schema.names):
            raise errors.SchemaMismatch(
                f"列不一致: 期望 {list(schema.names)}，实际 {list(rows.columns)}"
            )
        return rows.to_numpy(dtype=np.float64)
    matrix = np.asarray(rows, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != len(schema.columns):
        raise errors.SchemaMismatch(f"行矩阵形状 {matrix.shape} 与 {len(schema.columns)} 列不符")
    return matrix


def empty_batch(schema: DatasetSchema) -> pd.DataFrame:
    """按 schema 列序与 dtype 构造 0 行的批次。"""
    return pd.DataFrame({
        c.name: np.empty(0, dtype=np.int64 if c.kind is ColumnKind.DISCRETE else np.float64)
        for c in schema.columns
    }, columns=list(schema.names))


def fit(kind: GeneratorKind | str, rows: pd.DataFrame | np.ndarray,
        schema: DatasetSchema, seed: int) -> GeneratorModel:
    """
    在一个子组的行上拟合生成器。

    @param kind: 生成器类型
    @param rows: 已编码的行（DataFrame 或 n × 列数 矩阵）
    @param schema: 列定义
    @param seed: 随机种子
    @returns: 不可变的拟合模型
    @raises: TooFewRows / NotApplicable / SchemaMismatch
    """
    kind = GeneratorKind(kind)
    matrix = _as_matrix(rows, schema)
    return _FITTERS[kind](matrix, schema, seed)


def sample(model: GeneratorModel, n: int, seed: int) -> pd.DataFrame:
    """
    从拟合模型采样 n 行。

    @param model: fit 的返回值
    @param n: 行数，≥ 0
    @param seed: 随机种子
    @returns: 按 schema 列序的已编码批次
    """
    if n < 0:
        raise errors.UsageError(f"采样行数必须 ≥ 0，实际 {n}")
    if n == 0:
        return empty_batch(model.schema)
    return model.sample(int(n), seed)


def fit_and_sample_plan(
    kind: GeneratorKind | str,
    dataset: Dataset,
    partition: SubgroupPartition,
    plan: SamplingPlan,
    seed: int,
    cache: ModelCache | None = None,
    on_fit: Callable[[SubgroupKey, np.ndarray], None] | None = None,
) -> dict[SubgroupKey, pd.DataFrame]:
    """
    按采样计划逐子组拟合并采样。

    @param kind: 生成器类型
    @param dataset: 拟合用的真实数据（训练折）
    @param partition: dataset 的子组划分
    @param plan: 由 partition 计数得到的采样计划
    @param seed: 运行种子，各子组的拟合/采样种子由它派生
    @param cache: 模型缓存，跨策略复用同一子组的拟合结果
    @param on_fit: 拟合前回调 (子组, 拟合集原始行号)，用于泄漏检查
    @returns: 子组 → 批次；计数为 0 的子组给出空批次
    @raises: 子组拟合错误，附带子组标注
    """
    kind = GeneratorKind(kind)
    schema = dataset.schema
    protected = list(schema.protected)
    target = schema.target
    matrix = dataset.matrix()

    batches: dict[SubgroupKey, pd.DataFrame] = {}
    for key in partition.keys():
        n = int(plan.to_sample.get(key, 0))
        if n == 0:
            batches[key] = empty_batch(schema)
            continue

        rows = partition.rows(key)
        if on_fit is not None:
            on_fit(key, dataset.row_ids[rows])
        fit_seed = derive_seed(seed, "fit", kind.value, key)

        def _fit(rows=rows, fit_seed=fit_seed):
            logger.debug(f"拟合 {kind.value} [{dataset.key_label(key)}]: {len(rows)} 行")
            return fit(kind, matrix[rows], schema, fit_seed)

        try:
            if cache is not None:
                model = cache.get_or_fit("fit", (seed, kind.value, str(key), len(rows)), _fit)
            else:
                model = _fit()
            batch = sample(model, n, derive_seed(seed, "sample", kind.value, plan.strategy.value, key))
        except errors.FairSynthError as e:
            raise e.with_key(key, dataset.key_label(key))

        for name, value in zip(protected, key.protected_values):
            batch[name] = np.int64(value)
        batch[target] = np.int64(key.class_label)
        batches[key] = batch

    return batches


def synthesize(
    kind: GeneratorKind | str,
    dataset: Dataset,
    plan: SamplingPlan,
    partition: SubgroupPartition,
    seed: int,
    **kwargs,
) -> Dataset:
    """拟合、采样并增广：返回 T ∪ T_syn。"""
    batches: Mapping[SubgroupKey, pd.DataFrame] = fit_and_sample_plan(
        kind, dataset, partition, plan, seed, **kwargs
    )
    return augment(dataset, batches)
