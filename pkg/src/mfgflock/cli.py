#!/usr/bin/env python3
"""mfgflock CLI 入口.

UAV 机群平均场博弈集群仿真: 求解 → 蒙特卡洛回放 → 统计 → 导出。

支持两种使用方式:
1. pip install: mfgflock ...
2. 直接运行: python3 cli.py ...

用法:
    mfgflock [-v | -q] <command> --config CONFIG [options]

命令:
    run       执行完整流程（γ 扫描 × 控制器 × 种子），写出运行目录
    validate  仅校验配置，不做计算
    oracle    执行独立校验（Hamiltonian 网格搜索、FPK 守恒与矩、动力学精确性）

退出码:
    0 成功；1 配置/IO 错误；2 --strict 下有求解未收敛；3 oracle 未通过
"""

import argparse
import logging
import os
import sys
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

# ── 导入逻辑: 支持 pip 安装和本地开发模式 ────────────────────────────────

try:
    from mfgflock.core import metrics, oracles
    from mfgflock.core.agent_sim import run_replay
    from mfgflock.core.config import ScenarioConfig, config_hash, dump_config, load_config
    from mfgflock.core.errors import MfgFlockError
    from mfgflock.core.exporter import RunExporter, gamma_label
    from mfgflock.core.mfg_solver import picard_solve, rate_field
    from mfgflock.core.model import ControllerTag
    from mfgflock.core.paths import get_output_root, make_run_dir
    from mfgflock.core.terminal import C, badge, c, converged_badge, rule
except ImportError:
    # 本地开发模式: 添加 src 到路径后导入
    SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
    SRC_DIR = os.path.dirname(SCRIPT_DIR)
    if SRC_DIR not in sys.path:
        sys.path.insert(0, SRC_DIR)
    from mfgflock.core import metrics, oracles
    from mfgflock.core.agent_sim import run_replay
    from mfgflock.core.config import ScenarioConfig, config_hash, dump_config, load_config
    from mfgflock.core.errors import MfgFlockError
    from mfgflock.core.exporter import RunExporter, gamma_label
    from mfgflock.core.mfg_solver import picard_solve, rate_field
    from mfgflock.core.model import ControllerTag
    from mfgflock.core.paths import get_output_root, make_run_dir
    from mfgflock.core.terminal import C, badge, c, converged_badge, rule

logger = logging.getLogger("mfgflock")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2
EXIT_ORACLE_FAILED = 3

SOLVED_TAGS = (ControllerTag.MFG.value, ControllerTag.MFG_WE0.value)


# ── 参数解析辅助 ─────────────────────────────────────────────────────────────


def parse_gammas(text: str) -> list[float]:
    """'0.1,1,10' → [0.1, 1.0, 10.0]."""
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"无法解析 γ 列表: {text!r}")
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError(f"γ 必须为正数列表: {text!r}")
    return values


def parse_seeds(text: str) -> list[int]:
    """'100' → 0..99；'0,1,2' → [0, 1, 2]."""
    try:
        if "," in text:
            return [int(part) for part in text.split(",") if part.strip()]
        count = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"无法解析种子: {text!r}")
    if count < 1:
        raise argparse.ArgumentTypeError(f"种子数必须 ≥ 1: {text!r}")
    return list(range(count))


# ── 流程作业 ─────────────────────────────────────────────────────────────────


def _solve_job(config: ScenarioConfig, rate: np.ndarray):
    return picard_solve(config, rate=rate)


def _replay_job(config: ScenarioConfig, solution, seed: int, tag: str, keep_trajectory: bool) -> dict:
    """单个 (γ, tag, seed) 回放，返回紧凑的统计结果."""
    traj = run_replay(config, solution, seed, tag)
    return {
        "seed": seed,
        "collision": metrics.collision_fraction_series(traj, config.safety.safe_distance),
        "epr": metrics.energy_per_rate_series(traj),
        "histogram": metrics.trajectory_histogram(traj.positions, config.grid),
        "flocking_time": metrics.flocking_time(traj, config.flocking_threshold),
        "trajectory": traj if keep_trajectory else None,
    }


def _summarize_replays(config: ScenarioConfig, results: list[dict], field) -> dict:
    grid = config.grid
    collision = np.array([r["collision"] for r in results])
    epr = np.array([r["epr"] for r in results])
    histogram = np.mean([r["histogram"] for r in results], axis=0)
    collision_mean = collision.mean(axis=0)
    epr_mean = epr.mean(axis=0)

    heatmap = field.density if field is not None else histogram
    l1 = None
    if field is not None:
        l1 = float(np.max(metrics.l1_density_distance(field.density, histogram, grid)))
    prob = float(collision_mean.mean())
    return {
        "collision_mean": collision_mean,
        "collision_std": collision.std(axis=0),
        "collision_single": collision[0],
        "epr_mean": epr_mean,
        "epr_std": epr.std(axis=0),
        "epr_single": epr[0],
        "heatmap": heatmap,
        "stats": {
            "mean_energy_per_rate": float(epr_mean.mean()),
            "steady_state_energy_per_rate": metrics.steady_state_mean(epr_mean),
            "empirical_collision_probability": prob,
            "meets_collision_target": prob <= config.safety.target_collision_prob,
            "collision_free_onset": metrics.collision_free_onset(
                collision_mean, grid.times, config.collision_tolerance
            ),
            "flocking_time": (
                metrics.flocking_time(field, config.flocking_threshold)
                if field is not None else results[0]["flocking_time"]
            ),
            "flocking_time_single_replay": results[0]["flocking_time"],
            "spreading_onset_time": metrics.spreading_onset_time(heatmap, grid),
            "max_l1_density_distance": l1,
            "mean_field_collision_probability": (
                float(metrics.mean_field_collision_series(field, config.safety.safe_distance).mean())
                if field is not None else None
            ),
        },
    }


def run_pipeline(
    config: ScenarioConfig,
    seeds: list[int],
    out_root: str,
    jobs: int = 1,
) -> tuple[dict, str]:
    """对每个 γ 与控制器标签: 求解 → 多种子回放 → 统计，写出全部产物.

    Returns:
        (summary, run_dir)
    """
    digest = config_hash(config)
    run_dir = make_run_dir(out_root, digest)
    exporter = RunExporter(run_dir, config, digest, seeds)
    exporter.write_config_echo()

    grid = config.grid
    tags = list(config.fleet.controller_tags)
    rate = rate_field(grid, config.channel, config.hotspot)
    combos = [(g, t) for g in config.gammas for t in tags]
    run_configs = {(g, t): config.for_run(g, t) for g, t in combos}

    # 求解（各 γ / 标签之间相互独立）
    to_solve = [(g, t) for g, t in combos if t in SOLVED_TAGS]
    solved = Parallel(n_jobs=jobs)(delayed(_solve_job)(run_configs[k], rate) for k in to_solve)
    solutions = dict(zip(to_solve, solved))

    summary: dict = {
        "config_hash": digest,
        "seeds": seeds,
        "gammas": config.gammas,
        "controller_tags": tags,
        "t_horizon": grid.t_horizon,
        "v_max": config.solver.v_max,
        "initial_spread_kind": config.fleet.initial_spread_kind,
        "initial_std": config.fleet.initial_std,
        "shadow_fading": config.fleet.shadow_fading,
        "safe_distance": config.safety.safe_distance,
        "target_collision_prob": config.safety.target_collision_prob,
        "solves": {},
        "runs": {},
        "saving_percent": {},
    }
    for (g, t), (field, value, report) in solutions.items():
        exporter.write_solution(g, t, field, value, report)
        summary["solves"].setdefault(t, {})[gamma_label(g)] = report.to_dict()
    summary["all_converged"] = all(rep.converged for _, _, rep in solutions.values())

    # 回放（γ × 标签 × 种子）
    jobs_list = [
        (k, seed)
        for k in combos
        for seed in seeds
    ]
    replayed = Parallel(n_jobs=jobs)(
        delayed(_replay_job)(
            run_configs[k],
            solutions[k][0] if k in solutions else None,
            seed,
            k[1],
            seed == seeds[0],
        )
        for k, seed in jobs_list
    )
    by_combo: dict = {k: [] for k in combos}
    for (k, _), result in zip(jobs_list, replayed):
        by_combo[k].append(result)

    collision_cols: dict = {}
    epr_cols: dict = {}
    for (g, t), results in by_combo.items():
        field = solutions[(g, t)][0] if (g, t) in solutions else None
        agg = _summarize_replays(run_configs[(g, t)], results, field)
        label = f"{t}_g{gamma_label(g)}"
        collision_cols[f"{label}_mean"] = agg["collision_mean"]
        collision_cols[f"{label}_std"] = agg["collision_std"]
        collision_cols[f"{label}_seed{seeds[0]}"] = agg["collision_single"]
        epr_cols[f"{label}_mean"] = agg["epr_mean"]
        epr_cols[f"{label}_std"] = agg["epr_std"]
        epr_cols[f"{label}_seed{seeds[0]}"] = agg["epr_single"]
        summary["runs"].setdefault(t, {})[gamma_label(g)] = agg["stats"]
        if t == ControllerTag.MFG.value:
            exporter.write_heatmap(g, agg["heatmap"], grid)
        exporter.write_trajectory(results[0]["trajectory"], g)

    exporter.write_series("collision_fraction", grid.times, collision_cols)
    exporter.write_series("energy_per_rate", grid.times, epr_cols)

    runs = summary["runs"]
    if ControllerTag.MFG.value in runs and ControllerTag.MFG_WE0.value in runs:
        for g_label, stats in runs[ControllerTag.MFG.value].items():
            base = runs[ControllerTag.MFG_WE0.value][g_label]
            summary["saving_percent"][g_label] = metrics.saving_percent(
                stats["mean_energy_per_rate"], base["mean_energy_per_rate"]
            )

    exporter.write_summary(summary)
    exporter.write_report(summary)
    logger.info("已写出 %d 个文件至 %s", len(exporter.written), run_dir)
    return summary, run_dir


# ── 命令处理 ─────────────────────────────────────────────────────────────────


def _apply_overrides(args, config: ScenarioConfig) -> ScenarioConfig:
    if getattr(args, "gammas", None):
        config.gammas = args.gammas
    if getattr(args, "seeds", None):
        config.fleet.seed_list = list(args.seeds)
        config.fleet.n_seeds = len(args.seeds)
    if getattr(args, "jobs", None):
        config.jobs = args.jobs
    if getattr(args, "strict", False):
        config.strict = True
    return config


def cmd_validate(args, config: ScenarioConfig) -> int:
    """仅校验配置，打印展开后的参数."""
    print(f"{badge(True)} 配置合法: {args.config}")
    print(f"  配置摘要: {config_hash(config)[:12]}")
    for section, values in dump_config(config).items():
        print(f"  [{section}]")
        for key, value in values.items():
            print(f"    {key:<22} {value}")
    return EXIT_OK


def cmd_run(args, config: ScenarioConfig) -> int:
    """执行完整流程."""
    seeds = config.fleet.seeds
    out_root = get_output_root(args.out, config.output_dir)
    try:
        summary, run_dir = run_pipeline(config, seeds, out_root, config.jobs)
    except OSError as e:
        print(f"写出结果失败: {e}", file=sys.stderr)
        return EXIT_INVALID

    print(rule())
    print(f"  运行目录: {run_dir}")
    print(rule())
    for tag, by_gamma in summary["solves"].items():
        for g, rep in by_gamma.items():
            print(
                f"  {tag:<10} γ={g:<6} {converged_badge(rep['converged'])}  "
                f"{rep['picard_iterations']:>4} 轮  残差 {rep['final_residual']:.2e}"
            )
    for g, pct in summary["saving_percent"].items():
        print(f"  γ={g:<6} 能耗节省 {c(f'{pct:.1f}%', C.CYAN)}")
    print(rule())

    if config.strict and not summary["all_converged"]:
        print("存在未收敛的求解 (--strict)", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_oracle(args, config: ScenarioConfig) -> int:
    """执行独立校验并逐项打印 PASS/FAIL."""
    results = oracles.run_all(config)
    print(rule())
    for r in results:
        print(f"  {badge(r.passed)}  {r.name:<26} {r.detail}")
    print(rule())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"未通过: {', '.join(failed)}", file=sys.stderr)
        return EXIT_ORACLE_FAILED
    return EXIT_OK


# ── 参数解析器 ───────────────────────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfgflock",
        description="UAV 机群平均场博弈集群仿真",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="输出调试日志")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="仅输出警告与错误")

    subparsers = parser.add_subparsers(dest="command", help="可用命令")

    # ── run ──
    p_run = subparsers.add_parser("run", help="执行完整流程")
    p_run.add_argument("--config", required=True, help="场景配置文件 (YAML)")
    p_run.add_argument("--gammas", type=parse_gammas, help="γ 列表，逗号分隔（覆盖 cli.gammas）")
    p_run.add_argument("--seeds", type=parse_seeds, help="种子数（如 100）或逗号分隔的种子列表")
    p_run.add_argument("--jobs", type=int, help="并行作业数（覆盖 cli.jobs，-1 表示全部核心）")
    p_run.add_argument("--strict", action="store_true", help="有求解未收敛时以退出码 2 结束")
    p_run.add_argument("--out", help="输出根目录（覆盖 cli.output_dir 与环境变量）")

    # ── validate ──
    p_val = subparsers.add_parser("validate", help="仅校验配置")
    p_val.add_argument("--config", required=True, help="场景配置文件 (YAML)")

    # ── oracle ──
    p_orc = subparsers.add_parser("oracle", help="执行独立校验")
    p_orc.add_argument("--config", required=True, help="场景配置文件 (YAML，建议用小规模实例)")

    return parser


# ── 主入口 ───────────────────────────────────────────────────────────────────


def _setup_logging(args) -> None:
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_INVALID

    _setup_logging(args)

    try:
        config = load_config(args.config)
    except (FileNotFoundError, ValueError) as e:
        print(f"配置加载失败: {e}", file=sys.stderr)
        return EXIT_INVALID
    config = _apply_overrides(args, config)

    # 分发到对应的命令处理函数
    command_map = {
        "run": cmd_run,
        "validate": cmd_validate,
        "oracle": cmd_oracle,
    }

    try:
        return command_map[args.command](args, config)
    except MfgFlockError as e:
        print(f"运行失败: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
