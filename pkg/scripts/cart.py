"""CART 逐列合成生成器。

按 schema 列序逐列生成：
- 第一列：从经验分布自助抽样
- 第 j 列：在拟合集上用前 j−1 列训练一棵二叉树预测第 j 列，
  合成行沿树落到叶子后，从叶子的供体行中均匀抽取该列取值（不做平滑）

分裂准则：连续目标用方差下降，离散目标用 Gini 下降。
连续预测列在相邻不同取值的中点切分；离散预测列按节点内目标均值排序后当作有序变量。
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import errors
from .dataset import ColumnKind, DatasetSchema

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CartParams:
    max_depth: int = 16
    min_leaf: int = 5

    def __post_init__(self):
        if self.max_depth < 0 or self.min_leaf < 1:
            raise errors.UsageError(f"CART 参数非法: {self}")


@dataclass(frozen=True)
class ColumnTree:
    """预测单列的树，节点以数组存储；feature < 0 表示叶子。"""

    feature: np.ndarray
    threshold: np.ndarray
    category_key: tuple
    left: np.ndarray
    right: np.ndarray
    donors: tuple

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def route(self, partial: np.ndarray) -> np.ndarray:
        """把部分合成行（已生成的前几列）路由到叶子节点。"""
        leaf_of = np.empty(partial.shape[0], dtype=np.int64)
        stack = [(0, np.arange(partial.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if len(rows) == 0:
                continue
            f = self.feature[node]
            if f < 0:
                leaf_of[rows] = node
                continue
            x = partial[rows, f]
            key = self.category_key[node]
            if key is not None:
                x = key[x.astype(np.int64)]
            go_left = x <= self.threshold[node]
            stack.append((int(self.right[node]), rows[~go_left]))
            stack.append((int(self.left[node]), rows[go_left]))
        return leaf_of


@dataclass(frozen=True)
class CartChainModel:
    schema: DatasetSchema
    visit_order: tuple[int, ...]
    fit_rows: np.ndarray
    trees: tuple[ColumnTree, ...]
    params: CartParams

    def sample(self, n: int, seed: int) -> pd.DataFrame:
        rng = np.random.default_rng(seed)
        m = len(self.visit_order)
        out = np.empty((n, m), dtype=np.float64)
        if n:
            first = self.visit_order[0]
            out[:, 0] = self.fit_rows[rng.integers(len(self.fit_rows), size=n), first]
            for pos, tree in enumerate(self.trees, start=1):
                column = self.visit_order[pos]
                leaf_of = tree.route(out[:, :pos])
                for leaf in np.unique(leaf_of):
                    rows = np.flatnonzero(leaf_of == leaf)
                    donors = tree.donors[leaf]
                    picked = donors[rng.integers(len(donors), size=len(rows))]
                    out[rows, pos] = self.fit_rows[picked, column]

        data = {}
        for pos, column in enumerate(self.visit_order):
            col = self.schema.columns[column]
            values = out[:, pos]
            data[col.name] = values.astype(np.int64) if col.kind is ColumnKind.DISCRETE else values
        return pd.DataFrame(data, columns=list(self.schema.names))


def _variance_gain(ys: np.ndarray, cut: np.ndarray) -> np.ndarray:
    n = len(ys)
    cs = np.cumsum(ys)
    cs2 = np.cumsum(ys * ys)
    total, total2 = cs[-1], cs2[-1]
    n_left = cut.astype(np.float64)
    n_right = n - n_left
    left, left2 = cs[cut - 1], cs2[cut - 1]
    right, right2 = total - left, total2 - left2
    sse_parent = total2 - total * total / n
    sse_children = (left2 - left * left / n_left) + (right2 - right * right / n_right)
    return sse_parent - sse_children


def _gini_gain(ys: np.ndarray, cut: np.ndarray) -> np.ndarray:
    n = len(ys)
    _, inverse = np.unique(ys, return_inverse=True)
    onehot = np.zeros((n, inverse.max() + 1))
    onehot[np.arange(n), inverse] = 1.0
    cum = np.cumsum(onehot, axis=0)
    totals = cum[-1]
    left = cum[cut - 1]
    right = totals - left
    n_left = cut.astype(np.float64)
    n_right = n - n_left
    purity = (left ** 2).sum(axis=1) / n_left + (right ** 2).sum(axis=1) / n_right
    return purity - (totals ** 2).sum() / n


def _best_split(xn: np.ndarray, yn: np.ndarray, target_kind: ColumnKind,
                predictor_kinds: list[ColumnKind], n_categories: list[int], min_leaf: int):
    n = len(yn)
    if np.all(yn == yn[0]):
        return None
    gain_fn = _gini_gain if target_kind is ColumnKind.DISCRETE else _variance_gain
    best = None
    best_gain = 1e-12
    for c, kind in enumerate(predictor_kinds):
        x = xn[:, c]
        key = None
        if kind is ColumnKind.DISCRETE:
            codes = x.astype(np.int64)
            counts = np.bincount(codes, minlength=n_categories[c])
            sums = np.bincount(codes, weights=yn, minlength=n_categories[c])
            key = np.where(counts > 0, sums / np.maximum(counts, 1), yn.mean())
            x = key[codes]
        order = np.argsort(x, kind="stable")
        xs, ys = x[order], yn[order]
        # cut = 左子树行数，两侧都至少 min_leaf 行，且只在取值变化处切分
        cut = np.arange(min_leaf, n - min_leaf + 1)
        cut = cut[xs[cut - 1] < xs[cut]]
        if len(cut) == 0:
            continue
        gains = gain_fn(ys, cut)
        i = int(np.argmax(gains))
        if gains[i] > best_gain:
            best_gain = gains[i]
            threshold = (xs[cut[i] - 1] + xs[cut[i]]) / 2.0
            best = (c, threshold, key)
    return best


def _fit_tree(predictors: np.ndarray, target: np.ndarray, target_kind: ColumnKind,
              predictor_kinds: list[ColumnKind], n_categories: list[int],
              params: CartParams) -> ColumnTree:
    feature, threshold, keys, left, right, donors = [], [], [], [], [], []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(np.nan)
        keys.append(None)
        left.append(-1)
        right.append(-1)
        donors.append(np.empty(0, dtype=np.int64))
        return len(feature) - 1

    stack = [(new_node(), np.arange(len(target)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        split = None
        if depth < params.max_depth and len(idx) >= 2 * params.min_leaf:
            split = _best_split(predictors[idx], target[idx], target_kind,
                                predictor_kinds, n_categories, params.min_leaf)
        if split is None:
            donors[node] = idx
            continue
        c, thr, key = split
        x = predictors[idx, c]
        if key is not None:
            x = key[x.astype(np.int64)]
        go_left = x <= thr
        feature[node], threshold[node], keys[node] = c, thr, key
        left[node], right[node] = new_node(), new_node()
        stack.append((right[node], idx[~go_left], depth + 1))
        stack.append((left[node], idx[go_left], depth + 1))

    return ColumnTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        category_key=tuple(keys),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        donors=tuple(donors),
    )


def fit(rows: np.ndarray, schema: DatasetSchema, seed: int,
        params: CartParams | None = None) -> CartChainModel:
    """
    拟合 CART 逐列模型。

    树的构建是确定性的，seed 仅为接口一致而保留。

    @param rows: n × 列数 的编码矩阵
    @param schema: 列定义（访问顺序 = schema 列序）
    @param params: 树深度与叶子大小
    @raises: TooFewRows
    """
    params = params or CartParams()
    n = rows.shape[0]
    if n < 2:
        raise errors.TooFewRows(n)

    fit_rows = np.array(rows, dtype=np.float64, copy=True)
    order = tuple(range(len(schema.columns)))
    kinds = [schema.columns[j].kind for j in order]
    n_categories = [
        int(fit_rows[:, j].max()) + 1 if kinds[pos] is ColumnKind.DISCRETE else 0
        for pos, j in enumerate(order)
    ]

    trees = []
    for pos in range(1, len(order)):
        tree = _fit_tree(
            predictors=fit_rows[:, list(order[:pos])],
            target=fit_rows[:, order[pos]],
            target_kind=kinds[pos],
            predictor_kinds=kinds[:pos],
            n_categories=n_categories[:pos],
            params=params,
        )
        logger.debug(f"CART 列 {schema.columns[order[pos]].name}: {tree.n_leaves} 个叶子")
        trees.append(tree)

    return CartChainModel(
        schema=schema,
        visit_order=order,
        fit_rows=fit_rows,
        trees=tuple(trees),
        params=params,
    )
