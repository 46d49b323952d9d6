"""内置测试数据。

make_fixture 生成带类别不平衡和群体差异的混合型表：
- 受保护列（sex / race / age_band），每列有一个少数组
- 目标 income：正类先验随所属少数组个数降低
- 连续特征 x0..：给定标签后的相关高斯特征；多数组正类在 x0 上偏移，
  少数组正类主要在 x1 上偏移（组别特有的信号）
- 离散特征 d0..：由连续特征分桶加噪得到（已知依赖关系）；
  有 2 个及以上离散特征时，最后一个离散列是受保护组的代理特征

make_discrete_fixture 生成全离散表（SMOTE-NC 不适用的情形）。
"""

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit

from . import errors
from .dataset import ColumnKind, ColumnRole, ColumnSchema, DatasetSchema

logger = logging.getLogger(__name__)

TARGET = "income"
TARGET_VALUES = ("<=50K", ">50K")

# (列名, (多数组, 少数组), 少数组比例)
PROTECTED_SPECS = (
    ("sex", ("Male", "Female"), 0.33),
    ("race", ("White", "Other"), 0.15),
    ("age_band", ("prime", "senior"), 0.25),
)
_LEVELS = ("a", "b", "c")


def _protected_columns(rng: np.random.Generator, n_rows: int, n_protected: int):
    if not 1 <= n_protected <= len(PROTECTED_SPECS):
        raise errors.UsageError(f"受保护列数必须在 1..{len(PROTECTED_SPECS)} 内，实际 {n_protected}")
    data, minority = {}, np.zeros(n_rows)
    for name, (major, minor), share in PROTECTED_SPECS[:n_protected]:
        flag = rng.uniform(size=n_rows) < share
        data[name] = np.where(flag, minor, major)
        minority += flag
    return data, minority


def _bucket(x: np.ndarray, rng: np.random.Generator, noise: float) -> np.ndarray:
    codes = np.digitize(x, [-0.5, 0.5])
    flip = rng.uniform(size=len(x)) < noise
    codes = np.where(flip, rng.integers(len(_LEVELS), size=len(x)), codes)
    return np.asarray(_LEVELS, dtype=object)[codes]


def _proxy(flag: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # 少数组 85% 取 "c"，多数组 10% 取 "c"
    hit = rng.uniform(size=len(flag)) < np.where(flag, 0.85, 0.10)
    other = np.asarray(_LEVELS[:2], dtype=object)[rng.integers(2, size=len(flag))]
    return np.where(hit, _LEVELS[2], other)


def make_fixture(
    n_rows: int = 5000,
    n_continuous: int = 3,
    n_discrete: int = 3,
    n_protected: int = 1,
    seed: int = 0,
    disparity: float = 1.0,
) -> tuple[pd.DataFrame, DatasetSchema]:
    """
    生成混合型测试表。

    @param n_rows: 行数
    @param n_continuous: 连续特征数，≥ 1
    @param n_discrete: 离散特征数（不含受保护列和目标列）
    @param n_protected: 受保护列数，1..3
    @param seed: 随机种子
    @param disparity: 群体差异强度，0 表示各组正类先验相同
    @returns: (字符串表, 模式)
    """
    if n_continuous < 1 or n_discrete < 0 or n_rows < 1:
        raise errors.UsageError(
            f"参数非法: rows={n_rows}, continuous={n_continuous}, discrete={n_discrete}"
        )
    rng = np.random.default_rng(seed)
    data, minority = _protected_columns(rng, n_rows, n_protected)
    label = rng.uniform(size=n_rows) < expit(-1.1 - 0.9 * disparity * minority)

    mixing = np.full((n_continuous, n_continuous), 0.4) + 0.6 * np.eye(n_continuous)
    z = rng.standard_normal((n_rows, n_continuous)) @ np.linalg.cholesky(mixing).T
    # 多数组的正类靠 x0 区分，少数组的正类靠 x1 区分
    shift = np.zeros((n_rows, n_continuous))
    shift[:, 0] = np.where(minority > 0, 0.3, 1.2)
    if n_continuous > 1:
        shift[:, 1] = np.where(minority > 0, 1.2, 0.3)
    z += label[:, None] * shift
    for j in range(n_continuous):
        data[f"x{j}"] = z[:, j]
    for j in range(n_discrete):
        data[f"d{j}"] = _bucket(z[:, j % n_continuous], rng, noise=0.1)
    if n_discrete > 1:
        data[f"d{n_discrete - 1}"] = _proxy(minority > 0, rng)
    data[TARGET] = np.where(label, TARGET_VALUES[1], TARGET_VALUES[0])

    columns = [ColumnSchema(name, ColumnKind.DISCRETE, ColumnRole.PROTECTED)
               for name, _, _ in PROTECTED_SPECS[:n_protected]]
    columns += [ColumnSchema(f"x{j}", ColumnKind.CONTINUOUS) for j in range(n_continuous)]
    columns += [ColumnSchema(f"d{j}", ColumnKind.DISCRETE) for j in range(n_discrete)]
    columns.append(ColumnSchema(TARGET, ColumnKind.DISCRETE, ColumnRole.TARGET))
    schema = DatasetSchema(columns=tuple(columns))

    frame = pd.DataFrame({
        c.name: [f"{v:.4f}" for v in data[c.name]] if c.kind is ColumnKind.CONTINUOUS
        else list(data[c.name])
        for c in schema.columns
    }, columns=list(schema.names))
    logger.debug(f"生成测试表: {n_rows} 行, 正类比例 {label.mean():.3f}")
    return frame, schema


def make_discrete_fixture(
    n_rows: int = 2000,
    n_discrete: int = 4,
    n_protected: int = 1,
    seed: int = 0,
) -> tuple[pd.DataFrame, DatasetSchema]:
    """生成全离散测试表（除受保护列和目标列外，特征都是 3 个取值的类别列）。"""
    frame, schema = make_fixture(n_rows, 1, n_discrete, n_protected, seed)
    frame = frame.drop(columns=["x0"])
    columns = tuple(c for c in schema.columns if c.name != "x0")
    return frame, DatasetSchema(columns=columns)


def write_fixture(out_dir: str | Path, frame: pd.DataFrame, schema: DatasetSchema) -> tuple[Path, Path]:
    """写出 data.csv 与 schema.json。"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_path, schema_path = out / "data.csv", out / "schema.json"
    frame.to_csv(data_path, index=False, lineterminator="\n", encoding="utf-8")
    with open(schema_path, "w", encoding="utf-8") as f:
        json.dump(schema.to_dict(), f, ensure_ascii=False, indent=2)
    return data_path, schema_path
