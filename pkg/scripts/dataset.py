"""数据核心模块。

数据集的表示、CSV 读取、子组划分、分层 K 折以及真实+合成数据的拼接（增广）。

编码约定：
- 连续列保存为有限实数（float64）
- 离散列保存为类别索引（int64），类别字典按原始字符串字典序排列
- 目标列的类别 1 即字典序中的第二个类别
"""

import itertools
import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterator, Mapping

import numpy as np
import pandas as pd
from sklearn.model_selection import StratifiedKFold

from . import errors

logger = logging.getLogger(__name__)

# 视为缺失值的单元格（去除首尾空白后）
MISSING_TOKENS = frozenset({"", "NA", "N/A", "NaN", "nan", "null", "?"})
ORIGIN_COLUMN = "origin"


class ColumnKind(str, Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"


class ColumnRole(str, Enum):
    FEATURE = "feature"
    PROTECTED = "protected"
    TARGET = "target"


class Origin(str, Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: ColumnKind
    role: ColumnRole = ColumnRole.FEATURE

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ColumnSchema":
        """从 {"name", "kind", "role"} 字典构造，role 缺省为 feature。"""
        try:
            name = str(raw["name"]).strip()
            kind = ColumnKind(str(raw["kind"]).strip().lower())
            role = ColumnRole(str(raw.get("role", "feature")).strip().lower())
        except KeyError as e:
            raise errors.SchemaError(f"列定义缺少字段 {e}: {dict(raw)}") from e
        except ValueError as e:
            raise errors.SchemaError(f"列定义取值非法: {dict(raw)}") from e
        return cls(name=name, kind=kind, role=role)

    def to_dict(self) -> dict[str, str]:
        return {"name": self.name, "kind": self.kind.value, "role": self.role.value}


@dataclass(frozen=True)
class DatasetSchema:
    """有序的列定义集合。"""

    columns: tuple[ColumnSchema, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if any(not n for n in names):
            raise errors.SchemaError("列名不能为空")
        duplicated = sorted({n for n in names if names.count(n) > 1})
        if duplicated:
            raise errors.SchemaError(f"列名重复: {duplicated}")

        targets = [c for c in self.columns if c.role is ColumnRole.TARGET]
        if len(targets) != 1:
            raise errors.SchemaError(f"必须恰好有一个目标列，实际 {len(targets)} 个")
        if targets[0].kind is not ColumnKind.DISCRETE:
            raise errors.SchemaError(f"目标列 {targets[0].name} 必须是离散列")

        protected = [c for c in self.columns if c.role is ColumnRole.PROTECTED]
        if not protected:
            raise errors.SchemaError("至少需要一个受保护列")
        for c in protected:
            if c.kind is not ColumnKind.DISCRETE:
                raise errors.SchemaError(f"受保护列 {c.name} 必须是离散列")

    @classmethod
    def from_dict(cls, raw: Any) -> "DatasetSchema":
        """接受 {"columns": [...]} 或直接的列定义列表。"""
        items = raw.get("columns") if isinstance(raw, Mapping) else raw
        if not isinstance(items, list):
            raise errors.SchemaError("模式文件必须包含 columns 列表")
        return cls(columns=tuple(ColumnSchema.from_dict(item) for item in items))

    def to_dict(self) -> dict[str, Any]:
        return {"columns": [c.to_dict() for c in self.columns]}

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def target(self) -> str:
        return next(c.name for c in self.columns if c.role is ColumnRole.TARGET)

    @property
    def protected(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns if c.role is ColumnRole.PROTECTED)

    @property
    def features(self) -> tuple[str, ...]:
        """分类器可用的特征列：排除受保护列和目标列。"""
        return tuple(c.name for c in self.columns if c.role is ColumnRole.FEATURE)

    @property
    def continuous(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns if c.kind is ColumnKind.CONTINUOUS)

    @property
    def discrete(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns if c.kind is ColumnKind.DISCRETE)

    def column(self, name: str) -> ColumnSchema:
        for c in self.columns:
            if c.name == name:
                return c
        raise errors.SchemaError(f"模式中没有列 {name}")

    def index_of(self, name: str) -> int:
        return self.names.index(self.column(name).name)

    def with_protected(self, names: list[str] | tuple[str, ...]) -> "DatasetSchema":
        """
        重新指定受保护列。

        @param names: 新的受保护列名，原受保护列中未列出的降为 feature
        @returns: 新的 DatasetSchema
        """
        wanted = [n.strip() for n in names if n.strip()]
        for n in wanted:
            col = self.column(n)
            if col.role is ColumnRole.TARGET:
                raise errors.SchemaError(f"目标列 {n} 不能作为受保护列")
        columns = []
        for c in self.columns:
            if c.name in wanted:
                columns.append(ColumnSchema(c.name, c.kind, ColumnRole.PROTECTED))
            elif c.role is ColumnRole.PROTECTED:
                columns.append(ColumnSchema(c.name, c.kind, ColumnRole.FEATURE))
            else:
                columns.append(c)
        return DatasetSchema(columns=tuple(columns))


def load_schema(path: str | Path) -> DatasetSchema:
    """读取 JSON 模式文件。"""
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise errors.SchemaError(f"模式文件不是合法 JSON: {e}") from e
    return DatasetSchema.from_dict(raw)


@dataclass(frozen=True, order=True)
class SubgroupKey:
    """受保护取值元组 × 类别标签。"""

    protected_values: tuple[int, ...]
    class_label: int

    def __str__(self) -> str:
        values = ",".join(str(v) for v in self.protected_values)
        return f"({values})|{self.class_label}"


@dataclass(frozen=True)
class Dataset:
    """
    已编码的表格数据，构造后不可变。

    frame 的列顺序与 schema 一致；origin 标记每行来源（real/synthetic）；
    row_ids 为原始数据中的行号，合成行为 -1；
    source 为读入时的原始文本表（含模式外的列），按 row_ids 索引。
    """

    schema: DatasetSchema
    categories: Mapping[str, tuple[str, ...]]
    frame: pd.DataFrame
    origin: np.ndarray
    row_ids: np.ndarray
    source: pd.DataFrame | None = None

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def n_continuous(self) -> int:
        return len(self.schema.continuous)

    @property
    def n_discrete(self) -> int:
        return len(self.schema.discrete)

    @property
    def labels(self) -> np.ndarray:
        return self.frame[self.schema.target].to_numpy(dtype=np.int64)

    @property
    def protected_codes(self) -> np.ndarray:
        """n × 受保护列数 的类别索引矩阵。"""
        return self.frame[list(self.schema.protected)].to_numpy(dtype=np.int64)

    @property
    def protected_cardinalities(self) -> tuple[int, ...]:
        return tuple(len(self.categories[n]) for n in self.schema.protected)

    @property
    def is_synthetic(self) -> np.ndarray:
        return self.origin == Origin.SYNTHETIC.value

    def category_count(self, name: str) -> int:
        return len(self.categories[name])

    def matrix(self) -> np.ndarray:
        return self.frame.to_numpy(dtype=np.float64)

    def take(self, indices: np.ndarray) -> "Dataset":
        """按行号取子集，保留来源与原始行号。"""
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            schema=self.schema,
            categories=self.categories,
            frame=self.frame.iloc[indices].reset_index(drop=True),
            origin=self.origin[indices],
            row_ids=self.row_ids[indices],
            source=self.source,
        )

    def group_label(self, protected_values: tuple[int, ...]) -> str:
        return "&".join(
            f"{name}={self.categories[name][v]}"
            for name, v in zip(self.schema.protected, protected_values)
        )

    def class_label(self, label: int) -> str:
        return self.categories[self.schema.target][label]

    def describe_key(self, key: SubgroupKey) -> tuple[str, str]:
        """返回 (组名, 类别名)，如 ("sex=Female", ">50K")。"""
        return self.group_label(key.protected_values), self.class_label(key.class_label)

    def key_label(self, key: SubgroupKey) -> str:
        group, label = self.describe_key(key)
        return f"{group}|{self.schema.target}={label}"

    def validate_batch(self, batch: pd.DataFrame) -> pd.DataFrame:
        """
        检查一批行是否符合本数据集的模式与类别字典。

        @param batch: 已编码的行（列名与 schema 一致）
        @returns: 按 schema 列序、规范 dtype 的副本
        @raises: SchemaMismatch
        """
        if list(batch.columns) != list(self.schema.names):
            raise errors.SchemaMismatch(
                f"列不一致: 期望 {list(self.schema.names)}，实际 {list(batch.columns)}"
            )
        out = {}
        for col in self.schema.columns:
            values = batch[col.name].to_numpy(dtype=np.float64)
            if not np.all(np.isfinite(values)):
                raise errors.SchemaMismatch(f"列 {col.name} 含非有限值")
            if col.kind is ColumnKind.DISCRETE:
                count = self.category_count(col.name)
                if np.any(values != np.round(values)) or np.any((values < 0) | (values >= count)):
                    raise errors.SchemaMismatch(f"列 {col.name} 的类别索引超出 [0, {count})")
                out[col.name] = values.astype(np.int64)
            else:
                out[col.name] = values
        return pd.DataFrame(out, columns=list(self.schema.names))

    def to_frame(self, decoded: bool = True, with_origin: bool = True) -> pd.DataFrame:
        """
        导出为 DataFrame。

        @param decoded: 是否把类别索引还原为原始字符串
        @param with_origin: 是否附加 origin 列
        """
        out = self.frame.copy()
        if decoded:
            for name in self.schema.discrete:
                lookup = np.asarray(self.categories[name], dtype=object)
                out[name] = lookup[out[name].to_numpy(dtype=np.int64)]
        if with_origin:
            out[ORIGIN_COLUMN] = self.origin
        return out

    def to_text_frame(self, with_origin: bool = True) -> pd.DataFrame:
        """
        按输入 CSV 的文本布局导出。

        真实行原样写回读入时的单元格（包括模式外的列）；
        合成行的连续值用 repr 精度，离散值还原为类别字符串，模式外的列留空。
        """
        columns = list(self.schema.names) if self.source is None else [
            c for c in self.source.columns if c != ORIGIN_COLUMN
        ]
        decoded = self.to_frame(decoded=True, with_origin=False)
        out = pd.DataFrame({c: np.full(len(self), "", dtype=object) for c in columns}, columns=columns)
        for col in self.schema.columns:
            if col.kind is ColumnKind.CONTINUOUS:
                out[col.name] = [repr(float(v)) for v in decoded[col.name]]
            else:
                out[col.name] = decoded[col.name].astype(str).to_numpy(dtype=object)
        real = np.flatnonzero(~self.is_synthetic)
        if self.source is not None and len(real):
            out.iloc[real, :] = self.source.iloc[self.row_ids[real]][columns].astype(str).to_numpy(dtype=object)
        if with_origin:
            out[ORIGIN_COLUMN] = self.origin
        return out

    def write_csv(self, path: str | Path, with_origin: bool = True) -> None:
        """写出与输入 CSV 同布局的文件（可附加 origin 列）。"""
        self.to_text_frame(with_origin=with_origin).to_csv(path, index=False, lineterminator="\n")


def _first_row(mask: np.ndarray) -> int:
    """返回第一个为真的数据行号（从 1 开始，不含表头）。"""
    return int(np.flatnonzero(mask)[0]) + 1


def from_frame(
    raw: pd.DataFrame,
    schema: DatasetSchema,
    categories: Mapping[str, tuple[str, ...]] | None = None,
) -> Dataset:
    """
    把字符串表编码为 Dataset。

    @param raw: 原始表，列名需包含 schema 中的所有列
    @param schema: 列定义
    @param categories: 冻结的类别字典；缺省时由数据学习（字典序）
    @returns: Dataset，所有行 origin=real
    @raises: MissingColumn / MissingValue / UnparseableCell / UnseenCategory / TargetNotBinary
    """
    for name in schema.names:
        if name not in raw.columns:
            raise errors.MissingColumn(name)

    encoded: dict[str, np.ndarray] = {}
    learned: dict[str, tuple[str, ...]] = {}
    for col in schema.columns:
        values = raw[col.name].astype(str).str.strip()
        missing = values.isin(MISSING_TOKENS).to_numpy()
        if missing.any():
            raise errors.MissingValue(_first_row(missing), col.name)

        if col.kind is ColumnKind.CONTINUOUS:
            parsed = pd.to_numeric(values, errors="coerce").to_numpy(dtype=np.float64)
            bad = ~np.isfinite(parsed)
            if bad.any():
                row = _first_row(bad)
                raise errors.UnparseableCell(row, col.name, values.iloc[row - 1])
            encoded[col.name] = parsed
            continue

        if categories is not None and col.name in categories:
            cats = tuple(categories[col.name])
        else:
            cats = tuple(sorted(values.unique()))
        codes = pd.Categorical(values, categories=list(cats)).codes.astype(np.int64)
        unseen = codes < 0
        if unseen.any():
            row = _first_row(unseen)
            raise errors.UnseenCategory(row, col.name, values.iloc[row - 1])
        if col.role is ColumnRole.TARGET and len(cats) != 2:
            raise errors.TargetNotBinary(col.name, len(cats))
        if col.role is ColumnRole.PROTECTED and len(cats) < 2:
            raise errors.SchemaError(f"受保护列 {col.name} 至少需要 2 个类别，实际 {len(cats)} 个")
        encoded[col.name] = codes
        learned[col.name] = cats

    n = len(raw)
    return Dataset(
        schema=schema,
        categories=learned,
        frame=pd.DataFrame(encoded, columns=list(schema.names)),
        origin=np.full(n, Origin.REAL.value, dtype=object),
        row_ids=np.arange(n, dtype=np.int64),
        source=raw.reset_index(drop=True),
    )


def _first_undecodable_row(path: str | Path) -> int:
    """返回第一条无法按 UTF-8 解码的数据行号（表头为第 0 行）。"""
    with open(path, "rb") as f:
        for line_no, line in enumerate(f):
            try:
                line.decode("utf-8")
            except UnicodeDecodeError:
                return line_no
    return 0


def load_csv(
    path: str | Path,
    schema: DatasetSchema,
    categories: Mapping[str, tuple[str, ...]] | None = None,
) -> Dataset:
    """
    读取 CSV 文件（逗号分隔、首行为表头、UTF-8，支持 RFC 4180 引号）。

    @param path: 文件路径
    @param schema: 列定义，表头须为其超集
    @param categories: 冻结的类别字典（例如来自训练文件）
    @returns: 按文件行序的 Dataset
    @raises: MalformedCsv（列数不齐、非 UTF-8）及 from_frame 的各类数据错误
    """
    try:
        raw = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            na_filter=False,
            encoding="utf-8",
            skipinitialspace=True,
        )
    except pd.errors.ParserError as e:
        logger.error(f"解析 {path} 失败: {e}")
        match = re.search(r"line (\d+)", str(e))
        row = int(match.group(1)) - 1 if match else 0
        raise errors.MalformedCsv(row, str(e).strip()) from e
    except UnicodeDecodeError as e:
        logger.error(f"解码 {path} 失败: {e}")
        raise errors.MalformedCsv(_first_undecodable_row(path), "不是合法的 UTF-8 文本") from e
    raw.columns = [str(c).strip() for c in raw.columns]
    dataset = from_frame(raw, schema, categories)
    logger.debug(
        f"读取 {path}: {len(dataset)} 行, 连续列 {dataset.n_continuous}, 离散列 {dataset.n_discrete}"
    )
    return dataset


@dataclass(frozen=True)
class SubgroupPartition:
    """子组 → 升序行号列表；所有子组（含空子组）都有键。"""

    groups: Mapping[SubgroupKey, np.ndarray]
    source_row_count: int

    def keys(self) -> list[SubgroupKey]:
        return sorted(self.groups)

    def rows(self, key: SubgroupKey) -> np.ndarray:
        return self.groups[key]

    def counts(self) -> dict[SubgroupKey, int]:
        return {key: int(len(self.groups[key])) for key in self.keys()}


def all_subgroup_keys(cardinalities: tuple[int, ...]) -> list[SubgroupKey]:
    """枚举 ∏(受保护列类别数) × 2 个子组键，按字典序。"""
    return [
        SubgroupKey(protected_values=tuple(combo[:-1]), class_label=combo[-1])
        for combo in itertools.product(*(range(c) for c in cardinalities), (0, 1))
    ]


def partition(d: Dataset) -> SubgroupPartition:
    """
    按 (受保护取值元组, 类别) 划分行。

    @param d: 数据集
    @returns: 覆盖全部行且互不相交的 SubgroupPartition
    """
    cards = d.protected_cardinalities
    codes = d.protected_codes
    flat = np.ravel_multi_index(
        tuple(codes[:, i] for i in range(codes.shape[1])) + (d.labels,),
        dims=cards + (2,),
    )
    order = np.argsort(flat, kind="stable")
    sorted_flat = flat[order]
    groups = {}
    for flat_id, key in enumerate(all_subgroup_keys(cards)):
        lo, hi = np.searchsorted(sorted_flat, [flat_id, flat_id + 1])
        groups[key] = order[lo:hi]
    return SubgroupPartition(groups=groups, source_row_count=len(d))


def augment(real: Dataset, synthetic_rows: Mapping[SubgroupKey, pd.DataFrame]) -> Dataset:
    """
    拼接真实行与各子组的合成行：T_aug = T ∪ T_syn。

    @param real: 真实数据
    @param synthetic_rows: 子组 → 已编码的合成行
    @returns: 真实行在前，合成行按子组键顺序追加
    @raises: SchemaMismatch / SubgroupLabelMismatch
    """
    parts = []
    protected = list(real.schema.protected)
    target = real.schema.target
    for key in sorted(synthetic_rows):
        batch = synthetic_rows[key]
        if len(batch) == 0:
            continue
        batch = real.validate_batch(batch)
        expected = np.asarray(key.protected_values, dtype=np.int64)
        ok_protected = np.all(batch[protected].to_numpy(dtype=np.int64) == expected)
        ok_target = np.all(batch[target].to_numpy(dtype=np.int64) == key.class_label)
        if not (ok_protected and ok_target):
            raise errors.SubgroupLabelMismatch(key)
        parts.append(batch)

    if not parts:
        return real

    synthetic = pd.concat(parts, ignore_index=True)
    n_syn = len(synthetic)
    return Dataset(
        schema=real.schema,
        categories=real.categories,
        frame=pd.concat([real.frame, synthetic], ignore_index=True),
        origin=np.concatenate([real.origin, np.full(n_syn, Origin.SYNTHETIC.value, dtype=object)]),
        row_ids=np.concatenate([real.row_ids, np.full(n_syn, -1, dtype=np.int64)]),
        source=real.source,
    )


@dataclass(frozen=True)
class FoldAssignment:
    fold_of_row: np.ndarray
    k: int
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row != fold)

    def splits(self) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
        for fold in range(self.k):
            yield fold, self.train_indices(fold), self.test_indices(fold)


def stratified_kfold(d: Dataset, k: int, seed: int) -> FoldAssignment:
    """
    按类别分层的 K 折划分。

    用 scikit-learn 的 StratifiedKFold（shuffle=True）：按类别轮流发到各折，
    因此各折之间每类行数与总行数相差至多 1。

    @param d: 数据集
    @param k: 折数，≥ 2
    @param seed: 随机种子
    @raises: TooFewRowsPerClass
    """
    if k < 2:
        raise errors.UsageError(f"折数必须 ≥ 2，实际 {k}")
    labels = d.labels
    counts = {c: int(np.sum(labels == c)) for c in (0, 1)}
    if min(counts.values()) < k:
        raise errors.TooFewRowsPerClass(k, counts)

    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed % 2**32)
    fold_of_row = np.empty(len(d), dtype=np.int64)
    for fold, (_, test) in enumerate(splitter.split(np.zeros((len(d), 1)), labels)):
        fold_of_row[test] = fold
    return FoldAssignment(fold_of_row=fold_of_row, k=k, seed=seed)
