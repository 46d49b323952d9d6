"""运行时支撑模块。

提供以下功能：
- 确定性种子派生（由任意参数组合得到 64 位种子）
- 模型缓存（同一折内不同策略共享子组生成器）
- 计时器（运行时间剖析）
- 并行度配置（FAIRSYNTH_THREADS 环境变量）
"""

import hashlib
import logging
import os
import threading
import time
from typing import Any, Callable, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")

THREADS_ENV = "FAIRSYNTH_THREADS"


def derive_seed(*parts: Any) -> int:
    """
    由参数组合派生种子。

    @param parts: 任意可 repr 的值（整数、字符串、SubgroupKey 等）
    @returns: [0, 2**63) 内的整数
    """
    key_data = ":".join(repr(p) for p in parts)
    digest = hashlib.md5(key_data.encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


class ModelCache:
    """线程安全的拟合模型缓存。"""

    def __init__(self):
        self._cache: dict[str, Any] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _make_key(self, prefix: str, *args) -> str:
        """生成缓存键。"""
        key_data = f"{prefix}:{args}"
        return hashlib.md5(key_data.encode()).hexdigest()

    def get(self, key: str) -> Any | None:
        """获取缓存值。"""
        with self._lock:
            if key in self._cache:
                self.hits += 1
                logger.debug(f"缓存命中: {key[:16]}...")
                return self._cache[key]
            self.misses += 1
        return None

    def set(self, key: str, value: Any) -> None:
        """设置缓存值。"""
        with self._lock:
            self._cache[key] = value

    def get_or_fit(self, prefix: str, args: tuple, factory: Callable[[], T]) -> T:
        """
        取缓存，不存在则调用 factory 拟合后写入。

        并发下同一键可能被拟合两次；拟合是确定性的，结果一致。
        """
        key = self._make_key(prefix, *args)
        cached = self.get(key)
        if cached is not None:
            return cached
        value = factory()
        self.set(key, value)
        return value

    def clear(self) -> None:
        """清空缓存。"""
        with self._lock:
            self._cache.clear()
            logger.debug("模型缓存已清空")

    def __len__(self) -> int:
        with self._lock:
            return len(self._cache)


class Stopwatch:
    """墙钟计时器，用作上下文管理器。"""

    def __init__(self):
        self.seconds = 0.0
        self._start = 0.0

    def __enter__(self) -> "Stopwatch":
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self.seconds = time.perf_counter() - self._start


# 全局单例
_parallelism: int | None = None


def get_parallelism() -> int:
    """获取网格并发上限（FAIRSYNTH_THREADS，默认 CPU 数）。"""
    global _parallelism
    if _parallelism is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        default = os.cpu_count() or 1
        try:
            _parallelism = max(1, int(raw)) if raw else default
        except ValueError:
            logger.warning(f"{THREADS_ENV}={raw!r} 不是整数，使用默认值 {default}")
            _parallelism = default
    return _parallelism


def configure_parallelism(n_threads: int | None) -> None:
    """配置全局并发上限；None 表示重新读取环境变量。"""
    global _parallelism
    _parallelism = None if n_threads is None else max(1, int(n_threads))
