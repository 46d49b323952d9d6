"""SMOTE-NC 生成器（混合连续/离散特征空间的插值过采样）。

采样步骤：
1. 均匀选取基准行
2. 在拟合集中找基准行的 k 个最近邻（scikit-learn NearestNeighbors）：
   特征为 [标准化连续列 | 离散列 one-hot × median_std/√2]，
   欧氏距离下每个离散列不一致时平方距离恰好加 median_std²
3. 均匀选取一个近邻，连续列取 base + u·(neighbor − base)，u ~ U[0, 1]
4. 离散列取 k 个近邻的多数票，并列时优先基准行的取值，否则取最小索引

只有离散列时不适用。
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.neighbors import NearestNeighbors

from . import errors
from .dataset import ColumnKind, DatasetSchema

logger = logging.getLogger(__name__)

DEFAULT_K = 5


@dataclass(frozen=True)
class SmoteModel:
    schema: DatasetSchema
    continuous_idx: tuple[int, ...]
    discrete_idx: tuple[int, ...]
    continuous: np.ndarray
    standardized: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    categorical: np.ndarray
    n_categories: tuple[int, ...]
    k: int
    median_std: float
    knn: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.continuous.shape[0]

    def neighbors(self, base: np.ndarray) -> np.ndarray:
        """
        基准行的 k 个最近邻（不含自身），按距离升序。

        @param base: 拟合集行号
        @returns: len(base) × k 的行号矩阵
        """
        return self.knn[np.asarray(base, dtype=np.int64)]

    def sample(self, n: int, seed: int) -> pd.DataFrame:
        rng = np.random.default_rng(seed)
        base = rng.integers(self.n_rows, size=n)
        choice = rng.integers(self.k, size=n)
        u = rng.uniform(size=n)

        unique_base, inverse = np.unique(base, return_inverse=True)
        knn = self.neighbors(unique_base)[inverse]
        picked = knn[np.arange(n), choice]

        # 直接在原始尺度插值，与标准化空间插值后再还原等价
        xb, xn = self.continuous[base], self.continuous[picked]
        continuous = xb + u[:, None] * (xn - xb)

        categorical = np.empty((n, len(self.discrete_idx)), dtype=np.int64)
        rows = np.arange(n)
        for j, count in enumerate(self.n_categories):
            codes = self.categorical[knn, j]
            votes = (codes[..., None] == np.arange(count)).sum(axis=1)
            tied = votes == votes.max(axis=1, keepdims=True)
            base_code = self.categorical[base, j]
            keep_base = tied[rows, base_code]
            categorical[:, j] = np.where(keep_base, base_code, np.argmax(votes, axis=1))

        data = {}
        for j, column in enumerate(self.continuous_idx):
            data[self.schema.columns[column].name] = continuous[:, j]
        for j, column in enumerate(self.discrete_idx):
            data[self.schema.columns[column].name] = categorical[:, j]
        return pd.DataFrame(data, columns=list(self.schema.names))


def fit(rows: np.ndarray, schema: DatasetSchema, seed: int, k: int = DEFAULT_K) -> SmoteModel:
    """
    拟合 SMOTE-NC：标准化连续列并一次性算出每行的 k 个近邻。

    @param rows: n × 列数 的编码矩阵
    @param schema: 列定义
    @param seed: 未使用，拟合是确定性的
    @param k: 近邻数；n ≤ k 时降为 n − 1
    @raises: NotApplicable / TooFewRows
    """
    continuous_idx = tuple(j for j, c in enumerate(schema.columns) if c.kind is ColumnKind.CONTINUOUS)
    discrete_idx = tuple(j for j, c in enumerate(schema.columns) if c.kind is ColumnKind.DISCRETE)
    if not continuous_idx:
        raise errors.NotApplicable("SMOTE-NC 需要至少一个连续列（不支持纯离散特征空间）")
    n = rows.shape[0]
    if n < 2:
        raise errors.TooFewRows(n)

    continuous = np.array(rows[:, list(continuous_idx)], dtype=np.float64, copy=True)
    mean = continuous.mean(axis=0)
    std = continuous.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    standardized = (continuous - mean) / scale
    categorical = rows[:, list(discrete_idx)].astype(np.int64)
    n_categories = tuple(int(categorical[:, j].max()) + 1 for j in range(len(discrete_idx)))
    median_std = float(np.median(standardized.std(axis=0)))
    k = min(k, n - 1)

    onehot = [np.eye(count)[categorical[:, j]] for j, count in enumerate(n_categories)]
    features = np.hstack([standardized, *onehot])
    features[:, standardized.shape[1]:] *= median_std / np.sqrt(2.0)
    index = NearestNeighbors(n_neighbors=k, algorithm="brute").fit(features)
    # X=None 时 kneighbors 排除每行自身
    knn = index.kneighbors(return_distance=False)
    logger.debug(f"SMOTE-NC 拟合 {n} 行, k={k}, median_std={median_std:.4f}")

    return SmoteModel(
        schema=schema,
        continuous_idx=continuous_idx,
        discrete_idx=discrete_idx,
        continuous=continuous,
        standardized=standardized,
        mean=mean,
        std=std,
        categorical=categorical,
        n_categories=n_categories,
        k=k,
        median_std=median_std,
        knn=knn.astype(np.int64),
    )
