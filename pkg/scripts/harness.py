"""实验编排模块。

网格 = 采样策略 × 生成器，另加只用真实数据训练的基线单元。
每个单元执行 repeats 次重复 × folds 折：
1. 第 r 次重复的折由 seed = h(base_seed, r) 划分
2. 采样计划只用训练折的计数计算，生成器只在训练折的行上拟合
3. 分类器在增广后的训练折上训练
4. 全部指标在未经改动的真实测试折上计算

同一 (重复, 折, 生成器) 内各策略共享子组模型，作为一个任务并发执行；
结果按单元键合并，与完成顺序无关。
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from joblib import Parallel, delayed

from . import classifier, errors, generators, metrics, strategies
from .classifier import GbdtConfig
from .dataset import Dataset, SubgroupKey, augment, partition, stratified_kfold
from .generators import GeneratorKind
from .runtime import ModelCache, Stopwatch, derive_seed, get_parallelism
from .strategies import GroupClassCounts, StrategyKind

logger = logging.getLogger(__name__)

BASELINE_STRATEGY = "real"
BASELINE_GENERATOR = "none"

FitObserver = Callable[[int, int, SubgroupKey, np.ndarray], None]


@dataclass(frozen=True)
class ExperimentConfig:
    folds: int = 3
    repeats: int = 2
    base_seed: int = 0
    strategies: tuple[StrategyKind, ...] = tuple(StrategyKind)
    generators: tuple[GeneratorKind, ...] = tuple(GeneratorKind)
    classifier: GbdtConfig = field(default_factory=GbdtConfig)
    include_real_baseline: bool = True
    n_jobs: int | None = None  # None 表示使用 FAIRSYNTH_THREADS

    def __post_init__(self):
        if self.folds < 2:
            raise errors.UsageError(f"folds 必须 ≥ 2，实际 {self.folds}")
        if self.repeats < 1:
            raise errors.UsageError(f"repeats 必须 ≥ 1，实际 {self.repeats}")
        object.__setattr__(self, "strategies", tuple(StrategyKind(s) for s in self.strategies))
        object.__setattr__(self, "generators", tuple(GeneratorKind(g) for g in self.generators))

    def cells(self) -> list[tuple[str, str]]:
        """单元键列表，基线在最前。"""
        out = [(BASELINE_STRATEGY, BASELINE_GENERATOR)] if self.include_real_baseline else []
        out += [(s.value, g.value) for s in self.strategies for g in self.generators]
        return out

    @property
    def runs_per_cell(self) -> int:
        return self.folds * self.repeats


@dataclass(frozen=True)
class RunRecord:
    """单次 (单元, 重复, 折) 运行的结果；失败时 metrics 为 None 且 note 非空。"""

    strategy: str
    generator: str
    repeat: int
    fold: int
    seed: int
    n_train: int
    n_synthetic: int
    r_aug: float
    metrics: dict[str, Any] | None
    views: dict[str, dict[str, float]]
    note: str = ""
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.metrics is not None

    def as_dict(self) -> dict[str, Any]:
        """便于写入运行日志；不含耗时。"""
        return {
            "strategy": self.strategy,
            "generator": self.generator,
            "repeat": self.repeat,
            "fold": self.fold,
            "seed": self.seed,
            "n_train": self.n_train,
            "n_synthetic": self.n_synthetic,
            "r_aug": self.r_aug,
            "metrics": self.metrics,
            "views": self.views,
            "note": self.note,
        }


@dataclass(frozen=True)
class CellResult:
    strategy: str
    generator: str
    runs: tuple[RunRecord, ...]
    mean: dict[str, float]
    std: dict[str, float]
    view_mean: dict[str, dict[str, float]]
    view_std: dict[str, dict[str, float]]
    r_aug: float
    note: str = ""

    @property
    def key(self) -> tuple[str, str]:
        return self.strategy, self.generator

    @property
    def failed(self) -> bool:
        return bool(self.note)

    @property
    def is_baseline(self) -> bool:
        return self.strategy == BASELINE_STRATEGY


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    cells: tuple[CellResult, ...]
    view_names: tuple[str, ...]

    @property
    def records(self) -> list[RunRecord]:
        return [run for cell in self.cells for run in cell.runs]

    def cell(self, strategy: str, generator: str) -> CellResult:
        for c in self.cells:
            if c.key == (strategy, generator):
                return c
        raise KeyError((strategy, generator))

    @property
    def baseline(self) -> CellResult | None:
        return next((c for c in self.cells if c.is_baseline), None)

    @property
    def partial_failure(self) -> bool:
        failed = sum(c.failed for c in self.cells)
        return 0 < failed < len(self.cells)

    @property
    def all_failed(self) -> bool:
        return all(c.failed for c in self.cells)


class LeakageGuard:
    """测试折的原始行号不得出现在任何拟合集或训练集中。"""

    def __init__(self, test_row_ids: np.ndarray):
        self._test = np.asarray(test_row_ids, dtype=np.int64)
        self.checks = 0

    def check(self, row_ids: np.ndarray, where: str) -> None:
        self.checks += 1
        ids = np.asarray(row_ids, dtype=np.int64)
        leaked = np.intersect1d(ids[ids >= 0], self._test)
        if len(leaked):
            raise errors.LeakageError(f"{where}: 测试折行 {leaked[:5].tolist()} 进入了训练数据")


def view_names(d: Dataset) -> tuple[str, ...]:
    """公平性视角：每个受保护列单独一个，多列时再加交叉视角。"""
    names = list(d.schema.protected)
    if len(names) > 1:
        names.append("&".join(names))
    return tuple(names)


def _eval_frames(d: Dataset, test: Dataset, y_score: np.ndarray, y_pred: np.ndarray):
    """(完整交叉分组的 EvalFrame, 视角名 → EvalFrame)。"""
    present = sorted({tuple(int(v) for v in row) for row in d.protected_codes})
    codes = test.protected_codes
    rows = [tuple(int(v) for v in row) for row in codes]
    full = metrics.EvalFrame.build(test.labels, y_score, y_pred, rows, present)

    views = {}
    protected = d.schema.protected
    for i, name in enumerate(protected):
        universe = sorted({g[i] for g in present})
        views[name] = metrics.EvalFrame.build(
            test.labels, y_score, y_pred, codes[:, i].tolist(), universe
        )
    if len(protected) > 1:
        views["&".join(protected)] = full
    return full, views


def _train_and_evaluate(d: Dataset, train: Dataset, test: Dataset,
                        config: ExperimentConfig) -> tuple[dict, dict]:
    model = classifier.train(train, config.classifier)
    y_score = classifier.predict_proba(model, test)
    y_pred = (y_score >= 0.5).astype(np.int64)
    full, views = _eval_frames(d, test, y_score, y_pred)
    report = metrics.evaluate(full)
    view_reports = {}
    for name, frame in views.items():
        fr = metrics.fairness(frame)
        view_reports[name] = {"eq_odds": fr.eq_odds, "stat_parity": fr.stat_parity, "eq_opp": fr.eq_opp}
    return report.as_dict(), view_reports


def _failed_record(strategy: str, generator: str, repeat: int, fold: int, seed: int,
                   n_train: int, err: errors.FairSynthError) -> RunRecord:
    logger.warning(f"[{strategy}/{generator}] 重复 {repeat} 折 {fold} 失败: {err}")
    return RunRecord(
        strategy=strategy, generator=generator, repeat=repeat, fold=fold, seed=seed,
        n_train=n_train, n_synthetic=0, r_aug=0.0, metrics=None, views={},
        note=f"{type(err).__name__}: {err}",
    )


def _run_unit(d: Dataset, config: ExperimentConfig, repeat: int, fold: int,
              train_idx: np.ndarray, test_idx: np.ndarray, generator: GeneratorKind | None,
              observer: FitObserver | None) -> list[RunRecord]:
    """
    一个 (重复, 折, 生成器) 任务；generator 为 None 时跑真实数据基线。
    """
    train, test = d.take(train_idx), d.take(test_idx)
    guard = LeakageGuard(test.row_ids)
    guard.check(train.row_ids, "训练折")
    seed = derive_seed(config.base_seed, "run", repeat, fold)
    records = []

    if generator is None:
        with Stopwatch() as sw:
            try:
                result, views = _train_and_evaluate(d, train, test, config)
            except errors.LeakageError:
                raise
            except errors.FairSynthError as e:
                return [_failed_record(BASELINE_STRATEGY, BASELINE_GENERATOR, repeat, fold,
                                       seed, len(train), e)]
        return [RunRecord(
            strategy=BASELINE_STRATEGY, generator=BASELINE_GENERATOR, repeat=repeat, fold=fold,
            seed=seed, n_train=len(train), n_synthetic=0, r_aug=0.0, metrics=result,
            views=views, seconds=sw.seconds,
        )]

    part = partition(train)
    counts = GroupClassCounts.from_partition(part)
    cache = ModelCache()

    def on_fit(key: SubgroupKey, row_ids: np.ndarray) -> None:
        guard.check(row_ids, f"拟合集 {key}")
        if observer is not None:
            observer(repeat, fold, key, row_ids)

    for strategy in config.strategies:
        with Stopwatch() as sw:
            try:
                plan = strategies.plan(strategy, counts)
                batches = generators.fit_and_sample_plan(
                    generator, train, part, plan, seed, cache=cache, on_fit=on_fit
                )
                augmented = augment(train, batches)
                guard.check(augmented.row_ids, "增广训练集")
                result, views = _train_and_evaluate(d, augmented, test, config)
            except errors.LeakageError:
                raise
            except errors.FairSynthError as e:
                records.append(_failed_record(strategy.value, generator.value, repeat, fold,
                                              seed, len(train), e))
                continue
        records.append(RunRecord(
            strategy=strategy.value, generator=generator.value, repeat=repeat, fold=fold,
            seed=seed, n_train=len(train), n_synthetic=plan.total_synthetic, r_aug=plan.r_aug,
            metrics=result, views=views, seconds=sw.seconds,
        ))

    logger.info(
        f"重复 {repeat} 折 {fold} 生成器 {generator.value}: "
        f"{sum(r.ok for r in records)}/{len(records)} 个策略完成, 模型缓存命中 {cache.hits}"
    )
    return records


def _aggregate(strategy: str, generator: str, runs: list[RunRecord],
               views: tuple[str, ...]) -> CellResult:
    runs = sorted(runs, key=lambda r: (r.repeat, r.fold))
    notes = sorted({r.note for r in runs if r.note})
    if notes:
        nan = {m: float("nan") for m in metrics.METRIC_NAMES}
        return CellResult(
            strategy=strategy, generator=generator, runs=tuple(runs), mean=nan, std=dict(nan),
            view_mean={}, view_std={}, r_aug=float("nan"), note="; ".join(notes),
        )

    mean, std = {}, {}
    for m in metrics.METRIC_NAMES:
        values = np.array([r.metrics[m] for r in runs], dtype=np.float64)
        mean[m], std[m] = float(values.mean()), float(values.std(ddof=0))
    view_mean, view_std = {}, {}
    for view in views:
        view_mean[view], view_std[view] = {}, {}
        for m in metrics.FAIRNESS_METRICS:
            values = np.array([r.views[view][m] for r in runs], dtype=np.float64)
            view_mean[view][m], view_std[view][m] = float(values.mean()), float(values.std(ddof=0))
    r_aug = float(np.mean([r.r_aug for r in runs]))
    return CellResult(
        strategy=strategy, generator=generator, runs=tuple(runs), mean=mean, std=std,
        view_mean=view_mean, view_std=view_std, r_aug=r_aug,
    )


def run_grid(d: Dataset, config: ExperimentConfig | None = None,
             observer: FitObserver | None = None) -> ExperimentResult:
    """
    运行完整的实验网格。

    @param d: 真实数据集
    @param config: 实验配置
    @param observer: 每次子组拟合前的回调 (重复, 折, 子组, 拟合集原始行号)
    @returns: ExperimentResult，单元顺序与 config.cells() 一致
    @raises: TooFewRowsPerClass（无法分折）/ LeakageError
    """
    config = config or ExperimentConfig()
    units = []
    for repeat in range(config.repeats):
        folds = stratified_kfold(d, config.folds, derive_seed(config.base_seed, "folds", repeat))
        for fold, train_idx, test_idx in folds.splits():
            kinds: list[GeneratorKind | None] = [None] if config.include_real_baseline else []
            kinds += list(config.generators) if config.strategies else []
            for kind in kinds:
                units.append((repeat, fold, train_idx, test_idx, kind))

    n_jobs = config.n_jobs or get_parallelism()
    logger.info(
        f"实验网格: {len(config.cells())} 个单元, 每单元 {config.runs_per_cell} 次运行, "
        f"{len(units)} 个任务, 并发 {n_jobs}"
    )
    outputs = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_run_unit)(d, config, repeat, fold, train_idx, test_idx, kind, observer)
        for repeat, fold, train_idx, test_idx, kind in units
    )

    by_cell: dict[tuple[str, str], list[RunRecord]] = {key: [] for key in config.cells()}
    for record in itertools.chain.from_iterable(outputs):
        by_cell[(record.strategy, record.generator)].append(record)

    views = view_names(d)
    cells = tuple(_aggregate(s, g, by_cell[(s, g)], views) for s, g in config.cells())
    for cell in cells:
        if cell.failed:
            logger.warning(f"单元 {cell.strategy}/{cell.generator} 失败: {cell.note}")
    return ExperimentResult(config=config, cells=cells, view_names=views)


@dataclass(frozen=True)
class ProfileRow:
    generator: str
    trials: int
    fit_s: tuple[float, ...]
    sample_s: tuple[float, ...]
    note: str = ""

    @property
    def overall_s(self) -> tuple[float, ...]:
        return tuple(f + s for f, s in zip(self.fit_s, self.sample_s))

    def summary(self) -> dict[str, float]:
        out = {}
        for name, values in (("fit_s", self.fit_s), ("sample_s", self.sample_s),
                             ("overall_s", self.overall_s)):
            arr = np.asarray(values, dtype=np.float64)
            out[f"{name}_mean"] = float(arr.mean()) if len(arr) else float("nan")
            out[f"{name}_std"] = float(arr.std(ddof=0)) if len(arr) else float("nan")
        return out


@dataclass(frozen=True)
class RuntimeProfile:
    rows: tuple[ProfileRow, ...]
    n_sample: int
    n_rows: int


def profile_runtime(d: Dataset, generator_kinds: list[GeneratorKind | str],
                    n_sample: int = 10000, trials: int = 3, seed: int = 0) -> RuntimeProfile:
    """
    测量生成器在整个数据集上的拟合与采样耗时（单线程，不含 I/O）。

    @param d: 数据集，整体作为拟合集
    @param generator_kinds: 要测量的生成器
    @param n_sample: 每次采样的行数
    @param trials: 重复次数
    @returns: 每个生成器一行；失败的生成器带 note
    """
    if trials < 1 or n_sample < 0:
        raise errors.UsageError(f"trials 必须 ≥ 1 且 n ≥ 0，实际 trials={trials}, n={n_sample}")
    rows = []
    matrix = d.matrix()
    for kind in generator_kinds:
        kind = GeneratorKind(kind)
        fit_s, sample_s = [], []
        note = ""
        for trial in range(trials):
            try:
                with Stopwatch() as fit_sw:
                    model = generators.fit(kind, matrix, d.schema, derive_seed(seed, "profile", trial))
                with Stopwatch() as sample_sw:
                    generators.sample(model, n_sample, derive_seed(seed, "profile-sample", trial))
            except errors.FairSynthError as e:
                note = f"{type(e).__name__}: {e}"
                logger.warning(f"生成器 {kind.value} 无法剖析: {e}")
                fit_s, sample_s = [], []
                break
            fit_s.append(fit_sw.seconds)
            sample_s.append(sample_sw.seconds)
            logger.info(
                f"{kind.value} 第 {trial + 1}/{trials} 次: 拟合 {fit_sw.seconds:.3f}s, "
                f"采样 {n_sample} 行 {sample_sw.seconds:.3f}s"
            )
        rows.append(ProfileRow(
            generator=kind.value, trials=len(fit_s), fit_s=tuple(fit_s),
            sample_s=tuple(sample_s), note=note,
        ))
    return RuntimeProfile(rows=tuple(rows), n_sample=n_sample, n_rows=len(d))
