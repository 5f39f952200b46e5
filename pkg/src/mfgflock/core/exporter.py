"""运行结果导出: CSV / JSON 数据文件与 Markdown 报告."""

import json
import logging
import os
from datetime import datetime, timezone
from typing import Any, Optional

import numpy as np
import pandas as pd

from .config import ScenarioConfig, save_config
from .model import FleetTrajectory, Grid, MeanField, SolveReport, ValueFunction

logger = logging.getLogger(__name__)

# 控制器标签的报告显示名
TAG_LABELS = {
    "mfg": "平均场博弈控制",
    "mfg_we0": "集群基线 (w_e = 0)",
    "cs_classic": "经典 Cucker-Smale",
}


def gamma_label(gamma: float) -> str:
    return f"{gamma:g}"


def _to_json(value: Any) -> Any:
    """numpy 标量/数组转为可 JSON 序列化的类型."""
    if isinstance(value, dict):
        return {str(k): _to_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_json(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def field_frame(matrix: np.ndarray, grid: Grid) -> pd.DataFrame:
    """场矩阵 → DataFrame: 行为时间，列为空间节点."""
    frame = pd.DataFrame(matrix, columns=[f"{z:.6g}" for z in grid.nodes])
    frame.insert(0, "t", grid.times)
    return frame


def trajectory_frame(traj: FleetTrajectory) -> pd.DataFrame:
    """长格式轨迹表: t, uav_id, z, v, rate, epr."""
    n, levels = traj.positions.shape
    return pd.DataFrame({
        "t": np.tile(traj.times, n),
        "uav_id": np.repeat(np.arange(n), levels),
        "z": traj.positions.ravel(),
        "v": traj.velocities.ravel(),
        "rate": traj.rates.ravel(),
        "epr": traj.energy_per_rate.ravel(),
    })


class RunExporter:
    """把一次运行的全部产物写入运行目录.

    每个文件都带有配置摘要，运行目录因此可自描述。
    """

    def __init__(self, run_dir: str, config: ScenarioConfig, config_digest: str, seeds: list[int]):
        self.run_dir = run_dir
        self._config = config
        self._digest = config_digest
        self._seeds = list(seeds)
        self.written: list[str] = []
        os.makedirs(run_dir, exist_ok=True)

    # ── 基础写入 ─────────────────────────────────────────────────────────────

    def _path(self, *parts: str) -> str:
        path = os.path.join(self.run_dir, *parts)
        dir_name = os.path.dirname(path)
        if dir_name:
            os.makedirs(dir_name, exist_ok=True)
        return path

    def _write_csv(self, frame: pd.DataFrame, *parts: str) -> str:
        path = self._path(*parts)
        frame.to_csv(path, index=False, encoding="utf-8")
        self.written.append(path)
        return path

    def _write_json(self, payload: dict, *parts: str) -> str:
        path = self._path(*parts)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(_to_json(payload), f, ensure_ascii=False, indent=2)
        self.written.append(path)
        return path

    def metadata(self, **extra: Any) -> dict:
        meta = {
            "config_hash": self._digest,
            "seeds": self._seeds,
            "t_horizon": self._config.grid.t_horizon,
            "v_max": self._config.solver.v_max,
            "initial_spread_kind": self._config.fleet.initial_spread_kind,
            "initial_std": self._config.fleet.initial_std,
            "shadow_fading": self._config.fleet.shadow_fading,
        }
        meta.update(extra)
        return meta

    # ── 各类产物 ─────────────────────────────────────────────────────────────

    def write_config_echo(self) -> str:
        path = self._path("config.yaml")
        save_config(path, self._config)
        self.written.append(path)
        return path

    def write_solution(
        self,
        gamma: float,
        tag: str,
        field: MeanField,
        value: ValueFunction,
        report: SolveReport,
    ) -> str:
        """写出 m、v*、ψ 矩阵与求解报告，返回子目录."""
        sub = f"solve_{tag}_gamma{gamma_label(gamma)}"
        grid = field.grid
        self._write_csv(field_frame(field.density, grid), sub, "density.csv")
        self._write_csv(field_frame(field.velocity, grid), sub, "velocity.csv")
        self._write_csv(field_frame(value.values, grid), sub, "psi.csv")
        self._write_json(
            self.metadata(gamma=gamma, controller_tag=tag, **report.to_dict()),
            sub, "solve_report.json",
        )
        return os.path.join(self.run_dir, sub)

    def write_heatmap(self, gamma: float, heatmap: np.ndarray, grid: Grid) -> str:
        return self._write_csv(field_frame(heatmap, grid), f"heatmap_{gamma_label(gamma)}.csv")

    def write_trajectory(self, traj: FleetTrajectory, gamma: float) -> str:
        stem = f"{traj.controller_tag}_gamma{gamma_label(gamma)}_seed{traj.seed}"
        path = self._write_csv(trajectory_frame(traj), "trajectories", f"{stem}.csv")
        self._write_json(
            self.metadata(**{**traj.metadata, "seed": traj.seed, "controller_tag": traj.controller_tag, "gamma": gamma}),
            "trajectories", f"{stem}.json",
        )
        return path

    def write_series(self, name: str, times: np.ndarray, columns: dict[str, np.ndarray]) -> str:
        """时间序列表（collision_fraction.csv / energy_per_rate.csv）."""
        frame = pd.DataFrame({"t": times, **columns})
        return self._write_csv(frame, f"{name}.csv")

    def write_summary(self, summary: dict) -> str:
        return self._write_json(summary, "summary.json")

    def write_report(self, summary: dict) -> str:
        path = self._path("report.md")
        with open(path, "w", encoding="utf-8") as f:
            f.write(self._generate_report(summary))
        self.written.append(path)
        return path

    # ── Markdown 报告 ────────────────────────────────────────────────────────

    def _generate_report(self, summary: dict) -> str:
        sections = [
            self._header(summary),
            self._solve_table(summary),
            self._run_table(summary),
            self._saving_table(summary),
            self._footer(),
        ]
        return "\n".join(s for s in sections if s)

    def _header(self, summary: dict) -> str:
        now = datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M UTC")
        cfg = self._config
        lines = [
            "# UAV 平均场集群仿真报告",
            "",
            f"> 生成时间: {now}",
            f"> 配置摘要: `{self._digest[:12]}` | 种子数: {len(self._seeds)} | N = {cfg.fleet.n_uavs}",
            f"> 网格: n_z = {cfg.grid.n_z}, n_t = {cfg.grid.n_t}, T = {cfg.grid.t_horizon:g} s | "
            f"v_max = {cfg.solver.v_max:g} m/s",
            f"> 初始分布: N({cfg.fleet.initial_mean:g}, σ = {cfg.fleet.initial_std:.4g}) "
            f"[initial_spread_kind = {cfg.fleet.initial_spread_kind}]",
            "",
            "---",
            "",
        ]
        return "\n".join(lines)

    def _solve_table(self, summary: dict) -> str:
        solves = summary.get("solves", {})
        if not solves:
            return ""
        lines = [
            "## 求解",
            "",
            "| 控制器 | γ | 迭代次数 | 最终残差 | 状态 | 用时 (s) |",
            "|--------|---|----------|----------|------|----------|",
        ]
        for tag, by_gamma in solves.items():
            for g, rep in by_gamma.items():
                state = "✅ 收敛" if rep["converged"] else "❌ 未收敛"
                lines.append(
                    f"| {TAG_LABELS.get(tag, tag)} | {g} | {rep['picard_iterations']} | "
                    f"{rep['final_residual']:.2e} | {state} | {rep['elapsed_s']:.2f} |"
                )
        lines.extend(["", "---", ""])
        return "\n".join(lines)

    @staticmethod
    def _fmt_time(value: Optional[float]) -> str:
        return "—" if value is None else f"{value:.2f}"

    def _run_table(self, summary: dict) -> str:
        runs = summary.get("runs", {})
        eps = self._config.safety.target_collision_prob
        lines = [
            "## 回放统计",
            "",
            f"| 控制器 | γ | 平均能耗/比特 (J/bit) | 稳态能耗/比特 | 碰撞概率 (ε = {eps:g}) | "
            "无碰撞起始 (s) | 集群时间 (s) | 扩散起始 (s) | 最大 L1 |",
            "|--------|---|------|------|------|------|------|------|------|",
        ]
        for tag, by_gamma in runs.items():
            for g, r in by_gamma.items():
                ok = "✅" if r["meets_collision_target"] else "❌"
                lines.append(
                    f"| {TAG_LABELS.get(tag, tag)} | {g} | {r['mean_energy_per_rate']:.3e} | "
                    f"{r['steady_state_energy_per_rate']:.3e} | "
                    f"{r['empirical_collision_probability']:.4f} {ok} | "
                    f"{self._fmt_time(r['collision_free_onset'])} | "
                    f"{self._fmt_time(r['flocking_time'])} | "
                    f"{self._fmt_time(r['spreading_onset_time'])} | "
                    f"{self._fmt_l1(r.get('max_l1_density_distance'))} |"
                )
        lines.extend(["", "---", ""])
        return "\n".join(lines)

    @staticmethod
    def _fmt_l1(value: Optional[float]) -> str:
        return "—" if value is None else f"{value:.3f}"

    def _saving_table(self, summary: dict) -> str:
        saving = summary.get("saving_percent", {})
        if not saving:
            return ""
        lines = [
            "## 能耗节省（相对 w_e = 0 基线）",
            "",
            "| γ | 节省 (%) |",
            "|---|----------|",
        ]
        for g, pct in saving.items():
            lines.append(f"| {g} | {pct:.1f} |")
        lines.extend(["", "---", ""])
        return "\n".join(lines)

    def _footer(self) -> str:
        return "*本报告由 mfgflock 自动生成，数值明细见同目录下的 CSV / JSON 文件。*\n"
