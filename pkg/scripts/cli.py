"""公平性感知合成过采样 CLI"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataset, errors, fixtures, generators, harness, reports, runtime, strategies
from .classifier import GbdtConfig
from .generators import GeneratorKind
from .strategies import StrategyKind

logging.basicConfig(
    level=logging.INFO,
    format="%(message)s",
    handlers=[logging.StreamHandler(sys.stdout)],
)
logger = logging.getLogger(__name__)

EXIT_PARTIAL_FAILURE = 3


class CliParser(argparse.ArgumentParser):
    """用法错误以退出码 1 结束（argparse 默认为 2，与数据错误冲突）。"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(errors.UsageError.exit_code, f"{self.prog}: 错误: {message}\n")


def _names(kind_cls):
    valid = [k.value for k in kind_cls]

    def parse(text: str):
        out = []
        for name in (n.strip() for n in text.split(",")):
            if not name:
                continue
            if name not in valid:
                raise argparse.ArgumentTypeError(f"未知名称 {name!r}，可选: {', '.join(valid)}")
            out.append(kind_cls(name))
        if not out:
            raise argparse.ArgumentTypeError(f"至少指定一个，可选: {', '.join(valid)}")
        return out

    return parse


def _load(args) -> dataset.Dataset:
    for flag, path in (("--data", args.data), ("--schema", args.schema)):
        if not Path(path).is_file():
            raise errors.UsageError(f"{flag} 文件不存在: {path}")
    schema = dataset.load_schema(args.schema)
    if args.protected:
        schema = schema.with_protected(args.protected.split(","))
    return dataset.load_csv(args.data, schema)


def cmd_inspect(args):
    """子组分布（各策略的计划与 r_aug，不采样）"""
    d = _load(args)
    table = reports.distribution_frame(d, args.strategies)
    counts = strategies.GroupClassCounts.from_partition(dataset.partition(d))
    for kind in args.strategies:
        part = table[table["strategy"] == kind.value]
        if len(part):
            logger.info(f"\n[{kind.value}] r_aug={reports.fmt(part['r_aug'].iloc[0])}")
            logger.info(part.drop(columns=["strategy", "r_aug"]).to_string(index=False))
    if args.out:
        reports.write_distribution(table, args.out)
    return {
        "rows": len(d),
        "protected": list(d.schema.protected),
        "subgroups": len(counts.counts),
        "counts": {d.key_label(k): n for k, n in sorted(counts.counts.items())},
        "r_aug": {s: reports.fmt(float(r)) for s, r in
                  table.groupby("strategy", sort=False)["r_aug"].first().items()},
    }


def cmd_augment(args):
    """生成合成行并写出增广后的 CSV"""
    d = _load(args)
    part = dataset.partition(d)
    plan = strategies.plan(args.strategy, strategies.GroupClassCounts.from_partition(part))
    augmented = generators.synthesize(args.generator, d, plan, part, args.seed)
    augmented.write_csv(args.out)
    logger.info(f"已写出 {args.out}: 真实 {len(d)} 行 + 合成 {plan.total_synthetic} 行")
    return plan.as_dict(d.key_label)


def cmd_benchmark(args):
    """运行策略 × 生成器网格"""
    d = _load(args)
    if args.threads:
        runtime.configure_parallelism(args.threads)
    config = harness.ExperimentConfig(
        folds=args.folds,
        repeats=args.repeats,
        base_seed=args.seed,
        strategies=tuple(args.strategies),
        generators=tuple(args.generators),
        classifier=GbdtConfig(
            rounds=args.rounds,
            learning_rate=args.learning_rate,
            max_depth=args.max_depth,
            min_leaf=args.min_leaf,
            seed=args.seed,
        ),
        include_real_baseline=not args.no_baseline,
    )
    result = harness.run_grid(d, config)
    paths = reports.write_benchmark(result, d, args.out_dir)
    logger.info("\n" + reports.format_results_table(result))

    if result.all_failed:
        raise errors.FairSynthError("所有单元都失败了")
    if result.partial_failure:
        args.exit_code = EXIT_PARTIAL_FAILURE
    return {
        "cells": len(result.cells),
        "runs_per_cell": config.runs_per_cell,
        "failed": [reports.cell_label(c) for c in result.cells if c.failed],
        "files": {name: str(path) for name, path in paths.items()},
    }


def cmd_profile(args):
    """生成器拟合/采样耗时"""
    d = _load(args)
    profile = harness.profile_runtime(d, args.generators, n_sample=args.n, trials=args.trials,
                                      seed=args.seed)
    if args.out:
        reports.write_profile(profile, args.out)
    return reports.profile_frame(profile).to_dict(orient="records")


def cmd_fixture(args):
    """写出内置测试数据"""
    if args.discrete_only:
        frame, schema = fixtures.make_discrete_fixture(
            n_rows=args.rows, n_protected=args.protected_count, seed=args.seed
        )
    else:
        frame, schema = fixtures.make_fixture(
            n_rows=args.rows, n_protected=args.protected_count, seed=args.seed,
            disparity=args.disparity,
        )
    data_path, schema_path = fixtures.write_fixture(args.out_dir, frame, schema)
    return {"data": str(data_path), "schema": str(schema_path), "rows": len(frame)}


def _add_data_args(p):
    p.add_argument("--data", required=True, help="CSV 数据文件")
    p.add_argument("--schema", required=True, help="JSON 模式文件")
    p.add_argument("--protected", help="覆盖受保护列，逗号分隔，如 sex,race")
    p.set_defaults(print_usage=p.print_usage)


def build_parser() -> CliParser:
    parser = CliParser(prog="fairsynth", description="公平性感知的合成过采样与评估")
    parser.add_argument("--verbose", action="store_true", help="输出调试日志")
    subparsers = parser.add_subparsers(dest="command", help="命令")
    all_strategies = ",".join(k.value for k in StrategyKind)
    all_generators = ",".join(k.value for k in GeneratorKind)

    # inspect 命令
    inspect_parser = subparsers.add_parser("inspect", help="子组分布")
    _add_data_args(inspect_parser)
    inspect_parser.add_argument("--strategies", type=_names(StrategyKind), default=list(StrategyKind),
                                help=f"策略，逗号分隔: {all_strategies}")
    inspect_parser.add_argument("--out", help="分布表 CSV 输出路径")
    inspect_parser.set_defaults(func=cmd_inspect)

    # augment 命令
    augment_parser = subparsers.add_parser("augment", help="一次性增广")
    _add_data_args(augment_parser)
    augment_parser.add_argument("--strategy", required=True, choices=[k.value for k in StrategyKind],
                                help="采样策略")
    augment_parser.add_argument("--generator", required=True, choices=[k.value for k in GeneratorKind],
                                help="生成器")
    augment_parser.add_argument("--seed", type=int, default=0, help="随机种子")
    augment_parser.add_argument("--out", required=True, help="增广 CSV 输出路径")
    augment_parser.set_defaults(func=cmd_augment)

    # benchmark 命令
    bench_parser = subparsers.add_parser("benchmark", help="完整评估网格")
    _add_data_args(bench_parser)
    bench_parser.add_argument("--strategies", type=_names(StrategyKind), default=list(StrategyKind),
                              help=f"策略，逗号分隔: {all_strategies}")
    bench_parser.add_argument("--generators", type=_names(GeneratorKind), default=list(GeneratorKind),
                              help=f"生成器，逗号分隔: {all_generators}")
    bench_parser.add_argument("--folds", type=int, default=3, help="折数")
    bench_parser.add_argument("--repeats", type=int, default=2, help="重复次数")
    bench_parser.add_argument("--seed", type=int, default=0, help="基础随机种子")
    bench_parser.add_argument("--out-dir", required=True, help="结果目录")
    bench_parser.add_argument("--rounds", type=int, default=100, help="GBDT 轮数")
    bench_parser.add_argument("--learning-rate", type=float, default=0.1, help="GBDT 学习率")
    bench_parser.add_argument("--max-depth", type=int, default=6, help="GBDT 树深")
    bench_parser.add_argument("--min-leaf", type=int, default=10, help="GBDT 叶子最少行数")
    bench_parser.add_argument("--no-baseline", action="store_true", help="不运行真实数据基线")
    bench_parser.add_argument("--threads", type=int, help=f"并发上限，缺省读取 {runtime.THREADS_ENV}")
    bench_parser.set_defaults(func=cmd_benchmark)

    # profile 命令
    profile_parser = subparsers.add_parser("profile", help="生成器耗时")
    _add_data_args(profile_parser)
    profile_parser.add_argument("--generators", type=_names(GeneratorKind), default=list(GeneratorKind),
                                help=f"生成器，逗号分隔: {all_generators}")
    profile_parser.add_argument("--n", type=int, default=10000, help="每次采样行数")
    profile_parser.add_argument("--trials", type=int, default=3, help="重复次数")
    profile_parser.add_argument("--seed", type=int, default=0, help="随机种子")
    profile_parser.add_argument("--out", help="耗时 CSV 输出路径")
    profile_parser.set_defaults(func=cmd_profile)

    # fixture 命令
    fixture_parser = subparsers.add_parser("fixture", help="写出内置测试数据")
    fixture_parser.add_argument("--out-dir", required=True, help="输出目录")
    fixture_parser.add_argument("--rows", type=int, default=5000, help="行数")
    fixture_parser.add_argument("--protected-count", type=int, default=1, help="受保护列数 1..3")
    fixture_parser.add_argument("--discrete-only", action="store_true", help="全离散表")
    fixture_parser.add_argument("--disparity", type=float, default=1.0, help="群体差异强度")
    fixture_parser.add_argument("--seed", type=int, default=0, help="随机种子")
    fixture_parser.set_defaults(func=cmd_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 0
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    args.exit_code = 0
    try:
        result = args.func(args)
        print(json.dumps(result, ensure_ascii=False, indent=2))
    except errors.UsageError as e:
        getattr(args, "print_usage", parser.print_usage)(sys.stderr)
        logger.error(f"错误: {e}")
        return e.exit_code
    except errors.FairSynthError as e:
        logger.error(f"错误: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"错误: {e}")
        return errors.UsageError.exit_code
    return args.exit_code


if __name__ == "__main__":
    sys.exit(main())
