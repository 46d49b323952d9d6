"""梯度提升决策树（GBDT）二分类器。

用于下游评估：在（增广后的）训练集上训练，在真实测试折上预测。
受保护列和目标列不作为特征。

训练：
- 初始分数 base_score = 训练集正类比例的对数几率
- 每轮按逻辑损失的一阶/二阶导数 g = p − y, h = p(1 − p) 生长一棵回归树
- 叶子权重 w = −Σg / (Σh + λ)，分裂增益为标准二阶增益，增益 ≥ 0 即接受
- 连续特征按分位点分箱（不同取值不超过 max_bins 时为精确中点）
- 离散特征每棵树按类别的平均梯度排序后当作有序变量
- 不做行/列采样，不做早停，训练是确定性的
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from scipy.special import expit

from . import errors
from .dataset import ColumnKind, Dataset

logger = logging.getLogger(__name__)

_GAIN_TOL = 1e-12


@dataclass(frozen=True)
class GbdtConfig:
    rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    min_leaf: int = 10
    seed: int = 0  # 无随机成分，仅随配置回显
    reg_lambda: float = 1.0
    max_bins: int = 256

    def __post_init__(self):
        if self.rounds < 1:
            raise errors.UsageError(f"rounds 必须 ≥ 1，实际 {self.rounds}")
        if not 0 < self.learning_rate <= 1:
            raise errors.UsageError(f"learning_rate 必须在 (0, 1] 内，实际 {self.learning_rate}")
        if self.max_depth < 1:
            raise errors.UsageError(f"max_depth 必须 ≥ 1，实际 {self.max_depth}")
        if self.min_leaf < 1 or self.reg_lambda < 0 or self.max_bins < 2:
            raise errors.UsageError(f"GBDT 参数非法: {self}")


@dataclass(frozen=True)
class RegressionTree:
    """节点以数组存储；feature < 0 表示叶子，value 为叶子权重（未乘学习率）。"""

    feature: np.ndarray
    threshold: np.ndarray
    category_key: tuple
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        """返回每行落入的叶子节点编号。"""
        leaf_of = np.zeros(x.shape[0], dtype=np.int64)
        stack = [(0, np.arange(x.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if len(rows) == 0:
                continue
            f = self.feature[node]
            if f < 0:
                leaf_of[rows] = node
                continue
            values = x[rows, f]
            key = self.category_key[node]
            if key is not None:
                values = key[values.astype(np.int64)]
            go_left = values <= self.threshold[node]
            stack.append((int(self.right[node]), rows[~go_left]))
            stack.append((int(self.left[node]), rows[go_left]))
        return leaf_of

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.value[self.apply(x)]


@dataclass(frozen=True)
class GbdtModel:
    base_score: float
    trees: tuple[RegressionTree, ...]
    features: tuple[str, ...]
    discrete: tuple[bool, ...]
    n_categories: tuple[int, ...]
    loss_history: tuple[float, ...]
    config: GbdtConfig


def logistic_grad_hess(y: np.ndarray, margin: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """逻辑损失对分数（对数几率）的一阶、二阶导数。"""
    p = expit(margin)
    return p - y, p * (1.0 - p)


def log_loss(y: np.ndarray, margin: np.ndarray) -> float:
    """平均逻辑损失，以对数几率为输入：log(1 + e^m) − y·m。"""
    y = np.asarray(y, dtype=np.float64)
    margin = np.asarray(margin, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def _continuous_cuts(x: np.ndarray, max_bins: int) -> np.ndarray:
    unique = np.unique(x)
    if len(unique) <= 1:
        return np.empty(0)
    if len(unique) <= max_bins:
        return (unique[:-1] + unique[1:]) / 2.0
    qs = np.quantile(x, np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
    return np.unique(qs)


def _category_rank(codes: np.ndarray, g: np.ndarray, count: int) -> np.ndarray:
    """类别 → 按平均梯度排序后的位置（并列按类别索引）。"""
    counts = np.bincount(codes, minlength=count)
    sums = np.bincount(codes, weights=g, minlength=count)
    mean = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    order = np.lexsort((np.arange(count), mean))
    rank = np.empty(count, dtype=np.float64)
    rank[order] = np.arange(count)
    return rank


def _best_split(bins: np.ndarray, n_bins: list[int], g: np.ndarray, h: np.ndarray,
                config: GbdtConfig):
    """返回 (特征, 分箱位置 j, 增益)，左子树为 bin ≤ j；没有合法分裂时返回 None。"""
    if not n_bins:
        return None
    lam = config.reg_lambda
    G, H = g.sum(), h.sum()
    parent = G * G / (H + lam)
    best, best_gain = None, -_GAIN_TOL
    for f, nb in enumerate(n_bins):
        if nb < 2:
            continue
        column = bins[:, f]
        gl = np.cumsum(np.bincount(column, weights=g, minlength=nb))[:-1]
        hl = np.cumsum(np.bincount(column, weights=h, minlength=nb))[:-1]
        nl = np.cumsum(np.bincount(column, minlength=nb))[:-1]
        nr = len(column) - nl
        valid = (nl >= config.min_leaf) & (nr >= config.min_leaf)
        if not valid.any():
            continue
        gr, hr = G - gl, H - hl
        gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent)
        gain = np.where(valid, gain, -np.inf)
        j = int(np.argmax(gain))
        if gain[j] > best_gain:
            best, best_gain = (f, j, float(gain[j])), gain[j]
    return best


def _grow_tree(bins: np.ndarray, n_bins: list[int], split_value, g: np.ndarray,
               h: np.ndarray, config: GbdtConfig) -> tuple[RegressionTree, list]:
    feature, threshold, keys, left, right, value = [], [], [], [], [], []
    leaves = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(np.nan)
        keys.append(None)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    stack = [(new_node(), np.arange(len(g)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        gi, hi = g[idx], h[idx]
        split = None
        if depth < config.max_depth and len(idx) >= 2 * config.min_leaf:
            split = _best_split(bins[idx], n_bins, gi, hi, config)
        if split is None:
            value[node] = float(-gi.sum() / (hi.sum() + config.reg_lambda))
            leaves.append((node, idx))
            continue
        f, j, _ = split
        go_left = bins[idx, f] <= j
        feature[node] = f
        threshold[node], keys[node] = split_value(f, j)
        left[node], right[node] = new_node(), new_node()
        stack.append((right[node], idx[~go_left], depth + 1))
        stack.append((left[node], idx[go_left], depth + 1))

    tree = RegressionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        category_key=tuple(keys),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
    )
    return tree, leaves


def _feature_matrix(rows: Dataset | pd.DataFrame, features: tuple[str, ...],
                    discrete: tuple[bool, ...], n_categories: tuple[int, ...]) -> np.ndarray:
    frame = rows.frame if isinstance(rows, Dataset) else rows
    missing = [name for name in features if name not in frame.columns]
    if missing:
        raise errors.SchemaMismatch(f"缺少特征列: {missing}")
    x = frame[list(features)].to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise errors.SchemaMismatch("特征含非有限值")
    for f, (is_discrete, count) in enumerate(zip(discrete, n_categories)):
        if not is_discrete:
            continue
        codes = x[:, f]
        if np.any(codes != np.round(codes)) or np.any((codes < 0) | (codes >= count)):
            raise errors.SchemaMismatch(f"特征 {features[f]} 含训练时未见的类别索引")
    return x


def train(d: Dataset, config: GbdtConfig | None = None) -> GbdtModel:
    """
    训练 GBDT。

    @param d: 训练数据（可含合成行）
    @param config: 超参数
    @returns: GbdtModel，loss_history[0] 为常数模型的训练损失
    @raises: SingleClassTraining
    """
    config = config or GbdtConfig()
    y = d.labels.astype(np.float64)
    if len(y) < 2 or np.all(y == y[0]):
        raise errors.SingleClassTraining()

    schema = d.schema
    features = schema.features
    discrete = tuple(schema.column(n).kind is ColumnKind.DISCRETE for n in features)
    n_categories = tuple(d.category_count(n) if disc else 0 for n, disc in zip(features, discrete))
    x = _feature_matrix(d, features, discrete, n_categories)

    cuts: dict[int, np.ndarray] = {}
    bins = np.zeros(x.shape, dtype=np.int64)
    n_bins = []
    for f, is_discrete in enumerate(discrete):
        if is_discrete:
            n_bins.append(n_categories[f])
            continue
        cuts[f] = _continuous_cuts(x[:, f], config.max_bins)
        bins[:, f] = np.searchsorted(cuts[f], x[:, f], side="left")
        n_bins.append(len(cuts[f]) + 1)

    rate = y.mean()
    base_score = float(np.log(rate / (1.0 - rate)))
    margin = np.full(len(y), base_score)
    history = [log_loss(y, margin)]
    trees = []
    for _ in range(config.rounds):
        g, h = logistic_grad_hess(y, margin)
        ranks = {}
        for f, is_discrete in enumerate(discrete):
            if is_discrete:
                codes = x[:, f].astype(np.int64)
                ranks[f] = _category_rank(codes, g, n_categories[f])
                bins[:, f] = ranks[f][codes].astype(np.int64)

        def split_value(f: int, j: int, ranks=ranks):
            if f in ranks:
                return j + 0.5, ranks[f]
            return float(cuts[f][j]), None

        tree, leaves = _grow_tree(bins, n_bins, split_value, g, h, config)
        for node, idx in leaves:
            margin[idx] += config.learning_rate * tree.value[node]
        trees.append(tree)
        history.append(log_loss(y, margin))

    logger.debug(
        f"GBDT 训练完成: {len(y)} 行, {len(features)} 个特征, "
        f"损失 {history[0]:.4f} → {history[-1]:.4f}"
    )
    return GbdtModel(
        base_score=base_score,
        trees=tuple(trees),
        features=features,
        discrete=discrete,
        n_categories=n_categories,
        loss_history=tuple(history),
        config=config,
    )


def decision_function(model: GbdtModel, rows: Dataset | pd.DataFrame,
                      rounds: int | None = None) -> np.ndarray:
    """对数几率分数 base_score + lr·Σ 树输出；rounds 限制使用的树数。"""
    x = _feature_matrix(rows, model.features, model.discrete, model.n_categories)
    margin = np.full(x.shape[0], model.base_score)
    for tree in model.trees[:rounds]:
        margin += model.config.learning_rate * tree.predict(x)
    return margin


def predict_proba(model: GbdtModel, rows: Dataset | pd.DataFrame,
                  rounds: int | None = None) -> np.ndarray:
    """
    预测正类概率。

    @param model: 训练好的模型
    @param rows: Dataset 或已编码的 DataFrame（需包含模型的特征列）
    @param rounds: 只使用前 rounds 棵树；0 表示只用 base_score
    @raises: SchemaMismatch
    """
    return expit(decision_function(model, rows, rounds))


def predict(model: GbdtModel, rows: Dataset | pd.DataFrame, threshold: float = 0.5) -> np.ndarray:
    """分数 ≥ threshold 判为 1。"""
    return (predict_proba(model, rows) >= threshold).astype(np.int64)


def model_to_dict(model: GbdtModel) -> dict[str, Any]:
    trees = []
    for tree in model.trees:
        nodes = []
        for i in range(len(tree.feature)):
            is_leaf = tree.feature[i] < 0
            key = tree.category_key[i]
            nodes.append({
                "id": i,
                "feature": None if is_leaf else model.features[tree.feature[i]],
                "threshold": None if is_leaf else float(tree.threshold[i]),
                "category_key": None if key is None else [float(v) for v in key],
                "left": None if is_leaf else int(tree.left[i]),
                "right": None if is_leaf else int(tree.right[i]),
                "leaf": float(tree.value[i]) if is_leaf else None,
            })
        trees.append({"nodes": nodes})
    return {
        "base_score": model.base_score,
        "learning_rate": model.config.learning_rate,
        "features": list(model.features),
        "trees": trees,
    }


def dump_model(model: GbdtModel, path: str | Path) -> None:
    """
    以 JSON 写出树列表，仅供调试，格式不保证稳定。

    离散特征节点的 category_key[类别索引] 与 threshold 比较，≤ 走左子树。
    """
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f, ensure_ascii=False, indent=2)
