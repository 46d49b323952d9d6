"""异常定义模块。

所有可预期的错误都继承自 FairSynthError，并携带 CLI 退出码：
- 1: 用法错误（参数、文件路径）
- 2: 数据错误（解析、模式、生成器不可用）
"""

from typing import Any


class FairSynthError(Exception):
    """库内所有可预期错误的基类。"""

    exit_code = 2

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message
        self.key: Any = None

    def with_key(self, key: Any, label: str | None = None) -> "FairSynthError":
        """
        标注出错的子组。

        @param key: SubgroupKey
        @param label: 子组的可读名称，缺省时使用 key 本身
        @returns: self，便于 raise err.with_key(...)
        """
        self.key = key
        self.message = f"{self.message} [子组 {label or key}]"
        self.args = (self.message,)
        return self

    def __str__(self) -> str:
        return self.message


class UsageError(FairSynthError):
    exit_code = 1


class SchemaError(FairSynthError):
    """模式文件本身不合法。"""


class MissingColumn(FairSynthError):
    def __init__(self, name: str):
        super().__init__(f"CSV 缺少列: {name}")
        self.name = name


class MalformedCsv(FairSynthError):
    """CSV 文本本身无法解析（列数不齐、编码非 UTF-8 等）。"""

    def __init__(self, row: int, detail: str):
        super().__init__(f"第 {row} 行 CSV 格式错误: {detail}")
        self.row = row


class UnparseableCell(FairSynthError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"第 {row} 行列 {column} 无法解析为实数: {value!r}")
        self.row = row
        self.column = column


class MissingValue(FairSynthError):
    def __init__(self, row: int, column: str):
        super().__init__(f"第 {row} 行列 {column} 缺失")
        self.row = row
        self.column = column


class TargetNotBinary(FairSynthError):
    def __init__(self, column: str, categories: int):
        super().__init__(f"目标列 {column} 必须恰好有 2 个类别，实际 {categories} 个")
        self.column = column


class UnseenCategory(FairSynthError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"第 {row} 行列 {column} 出现未知类别: {value!r}")
        self.row = row
        self.column = column


class SchemaMismatch(FairSynthError):
    pass


class SubgroupLabelMismatch(FairSynthError):
    def __init__(self, key: Any):
        super().__init__(f"合成批次的受保护/目标取值与子组不一致: {key}")
        self.key = key


class TooFewRowsPerClass(FairSynthError):
    def __init__(self, k: int, counts: dict[int, int]):
        super().__init__(f"分 {k} 折要求每个类别至少 {k} 行，实际 {counts}")
        self.k = k


class EmptyRequiredSubgroup(FairSynthError):
    def __init__(self, key: Any):
        super().__init__(f"需要从空子组采样: {key}")
        self.key = key


class DegenerateRatio(FairSynthError):
    def __init__(self, ratio: float):
        super().__init__(f"最大组的正类比例为 {ratio}，class-ratio 策略无定义")
        self.ratio = ratio


class TooFewRows(FairSynthError):
    def __init__(self, n: int):
        super().__init__(f"拟合至少需要 2 行，实际 {n} 行")
        self.n = n


class NotApplicable(FairSynthError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class SingleClassTraining(FairSynthError):
    def __init__(self):
        super().__init__("训练集只包含一个类别")


class AucUndefined(FairSynthError):
    def __init__(self):
        super().__init__("y_true 只包含一个类别，ROC AUC 无定义")


class AllRatesUndefined(FairSynthError):
    def __init__(self, metric: str):
        super().__init__(f"{metric}: 所有组的条件比率都无定义")
        self.metric = metric


class LeakageError(FairSynthError):
    """测试折的行进入了拟合或训练集合。"""
