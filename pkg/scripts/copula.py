"""高斯 Copula 生成器。

拟合：
- 连续列：中位秩经验 CDF，高斯分数 z = Φ⁻¹((rank − 0.5) / n)
- 离散列：按类别索引排序，在各类别的 CDF 区间内均匀抖动后取高斯分数
- 相关矩阵：高斯分数的样本相关 + ridge·I，ridge 从 1e-6 起每次 ×10 直到 Cholesky 分解成功

采样：多元标准正态 → Φ → 逆边缘分布（连续列线性插值经验分位函数，离散列 CDF 分箱查找）。
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import linalg, stats

from . import errors
from .dataset import ColumnKind, DatasetSchema

logger = logging.getLogger(__name__)

INITIAL_RIDGE = 1e-6
_EPS = 1e-12


@dataclass(frozen=True)
class ContinuousMarginal:
    sorted_values: np.ndarray
    probabilities: np.ndarray  # (i − 0.5) / n

    def invert(self, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self.probabilities, self.sorted_values)


@dataclass(frozen=True)
class DiscreteMarginal:
    categories: np.ndarray  # 拟合集中出现过的类别索引
    cumulative: np.ndarray  # 累积频率，最后一项为 1

    def invert(self, u: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.cumulative, u, side="right")
        return self.categories[np.minimum(idx, len(self.categories) - 1)]


@dataclass(frozen=True)
class CopulaModel:
    schema: DatasetSchema
    marginals: tuple
    correlation: np.ndarray
    ridge: float
    factor: np.ndarray  # (correlation + ridge·I) / (1 + ridge) 的下三角 Cholesky 因子

    def sample(self, n: int, seed: int) -> pd.DataFrame:
        rng = np.random.default_rng(seed)
        m = len(self.marginals)
        z = rng.standard_normal((n, m)) @ self.factor.T
        u = stats.norm.cdf(z)
        out = {}
        for j, (col, marginal) in enumerate(zip(self.schema.columns, self.marginals)):
            values = marginal.invert(u[:, j])
            if col.kind is ColumnKind.DISCRETE:
                out[col.name] = values.astype(np.int64)
            else:
                out[col.name] = values.astype(np.float64)
        return pd.DataFrame(out, columns=list(self.schema.names))


def _scores(column: np.ndarray, kind: ColumnKind, rng: np.random.Generator):
    n = len(column)
    if kind is ColumnKind.CONTINUOUS:
        ranks = stats.rankdata(column, method="average")
        u = (ranks - 0.5) / n
        marginal = ContinuousMarginal(
            sorted_values=np.sort(column),
            probabilities=(np.arange(1, n + 1) - 0.5) / n,
        )
    else:
        codes = column.astype(np.int64)
        categories, counts = np.unique(codes, return_counts=True)
        freq = counts / n
        cumulative = np.cumsum(freq)
        cumulative[-1] = 1.0
        lower = cumulative - freq
        pos = np.searchsorted(categories, codes)
        u = lower[pos] + rng.uniform(size=n) * freq[pos]
        marginal = DiscreteMarginal(categories=categories, cumulative=cumulative)
    u = np.clip(u, _EPS, 1.0 - _EPS)
    return stats.norm.ppf(u), marginal


def _correlation(scores: np.ndarray) -> np.ndarray:
    m = scores.shape[1]
    std = scores.std(axis=0)
    corr = np.eye(m)
    live = std > 0
    if live.sum() > 1:
        corr[np.ix_(live, live)] = np.atleast_2d(np.corrcoef(scores[:, live], rowvar=False))
    corr = np.nan_to_num((corr + corr.T) / 2.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def fit(rows: np.ndarray, schema: DatasetSchema, seed: int) -> CopulaModel:
    """
    拟合高斯 Copula。

    @param rows: n × 列数 的编码矩阵
    @param schema: 列定义
    @param seed: 抖动使用的随机种子
    @raises: TooFewRows
    """
    n = rows.shape[0]
    if n < 2:
        raise errors.TooFewRows(n)
    rng = np.random.default_rng(seed)

    scores = np.empty_like(rows, dtype=np.float64)
    marginals = []
    for j, col in enumerate(schema.columns):
        scores[:, j], marginal = _scores(rows[:, j], col.kind, rng)
        marginals.append(marginal)

    corr = _correlation(scores)
    m = corr.shape[0]
    ridge = INITIAL_RIDGE
    while True:
        try:
            factor = linalg.cholesky((corr + ridge * np.eye(m)) / (1.0 + ridge), lower=True)
            break
        except linalg.LinAlgError:
            ridge *= 10.0
            logger.debug(f"相关矩阵非正定，ridge 增大到 {ridge:g}")

    return CopulaModel(
        schema=schema,
        marginals=tuple(marginals),
        correlation=corr,
        ridge=ridge,
        factor=factor,
    )
