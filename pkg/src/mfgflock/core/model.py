"""领域数据模型定义.

所有记录均为 dataclass。带约束的记录提供 validate()，返回以键路径开头的
错误信息列表（空列表表示合法），由 config.load_config 汇总后统一报错。
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np


# ── 枚举 ─────────────────────────────────────────────────────────────────────


class LinkState(str, Enum):
    """空地链路状态."""

    LOS = "LOS"
    NLOS = "NLOS"


class ControllerTag(str, Enum):
    """回放所用控制器."""

    MFG = "mfg"                # 平均场博弈控制（本方法）
    MFG_WE0 = "mfg_we0"        # 同一流程，w_e = 0（不考虑能耗的集群基线）
    CS_CLASSIC = "cs_classic"  # 经典 Cucker-Smale 更新（非博弈基线）

    @classmethod
    def values(cls) -> list[str]:
        return [t.value for t in cls]


# ── 信道 ─────────────────────────────────────────────────────────────────────

ALTITUDE_MIN_M = 22.5   # 3GPP UAV 模型高度下限
ALTITUDE_MAX_M = 300.0  # 3GPP UAV 模型高度上限


@dataclass
class ChannelParams:
    """3GPP 城区微蜂窝空地信道参数."""

    carrier_freq_ghz: float = 2.0         # f_c (GHz)
    tx_power_dbm: float = 23.0            # P_u (dBm)
    noise_density_dbm_hz: float = -173.0  # N_o (dBm/Hz)
    bandwidth_hz: float = 2.0e5           # 每用户带宽 B (Hz)
    shadow_std_db: float = 8.0            # 阴影衰落标准差 (dB)
    altitude_m: float = 300.0             # UAV 高度 h (m)

    @property
    def tx_power_w(self) -> float:
        from .channel import dbm_to_watt
        return float(dbm_to_watt(self.tx_power_dbm))

    @property
    def noise_density_w_hz(self) -> float:
        from .channel import dbm_to_watt
        return float(dbm_to_watt(self.noise_density_dbm_hz))

    def validate(self, prefix: str = "channel") -> list[str]:
        errors = []
        if not self.carrier_freq_ghz > 0:
            errors.append(f"{prefix}.carrier_freq_ghz: 必须 > 0 (当前 {self.carrier_freq_ghz})")
        if not self.bandwidth_hz > 0:
            errors.append(f"{prefix}.bandwidth_hz: 必须 > 0 (当前 {self.bandwidth_hz})")
        if not self.shadow_std_db >= 0:
            errors.append(f"{prefix}.shadow_std_db: 必须 ≥ 0 (当前 {self.shadow_std_db})")
        if not ALTITUDE_MIN_M <= self.altitude_m <= ALTITUDE_MAX_M:
            errors.append(
                f"{prefix}.altitude_m: 3GPP 模型要求 {ALTITUDE_MIN_M} ≤ h ≤ {ALTITUDE_MAX_M} m "
                f"(当前 {self.altitude_m})"
            )
        return errors


@dataclass
class LinkGeometry:
    """UAV 与其服务用户之间的几何关系."""

    d3d_m: float  # 三维距离 d_z
    d2d_m: float  # 地面投影距离 sqrt(d_z² - h²)

    @classmethod
    def from_positions(cls, z: float, y: float, altitude_m: float) -> "LinkGeometry":
        """由 UAV 水平坐标 z、用户坐标 y 和高度 h 构造."""
        d2d = abs(z - y)
        return cls(d3d_m=float(np.hypot(d2d, altitude_m)), d2d_m=float(d2d))


# ── 动力学 ───────────────────────────────────────────────────────────────────


@dataclass
class WindModel:
    """风扰模型: 常值平均风速 + Wiener 噪声."""

    mean_velocity: float = -3.0  # A (m/s，带符号)
    volatility: float = 0.1      # η_A

    def validate(self, prefix: str = "dynamics") -> list[str]:
        errors = []
        if not np.isfinite(self.mean_velocity):
            errors.append(f"{prefix}.mean_velocity: 必须为有限值")
        if not self.volatility >= 0:
            errors.append(f"{prefix}.volatility: 必须 ≥ 0 (当前 {self.volatility})")
        return errors


@dataclass
class UAVState:
    """单架（或一组，字段可为数组）UAV 的状态."""

    position: float | np.ndarray  # z_i (m)
    velocity: float | np.ndarray  # v_i (m/s)，由控制器给定


# ── 代价 ─────────────────────────────────────────────────────────────────────


@dataclass
class CostWeights:
    """能耗与集群代价的权重及物理参数.

    rate_unit 把速率换算为代价中的计量单位: 求解器内能耗项为 J/(rate_unit·s⁻¹)，
    默认 1e6 即 J/Mbit，使能耗项与集群项同一量级。回放与指标中的能耗/比特仍为 J/bit。
    w_separation > 0 时运行代价附加 w_s·∫m·K dz'（与 v 无关的拥挤势），默认关闭。
    """

    w_energy: float = 1.0     # w_e
    w_flock: float = 1.0      # w_f
    gamma: float = 1.0        # 碰撞规避因子 γ
    beta: float = 0.5         # 核指数 β
    mass: float = 1.0         # a_m (kg)
    fixed_power: float = 0.0  # a_e (W)
    rate_floor: float = 1.0   # 速率下限 (bit/s)，防止死链路处除零
    rate_unit: float = 1.0e6  # 代价中的速率单位 (bit/s)
    w_separation: float = 0.0  # w_s

    def validate(self, prefix: str = "cost") -> list[str]:
        errors = []
        if not self.w_energy >= 0:
            errors.append(f"{prefix}.w_energy: 必须 ≥ 0 (当前 {self.w_energy})")
        if not self.w_flock >= 0:
            errors.append(f"{prefix}.w_flock: 必须 ≥ 0 (当前 {self.w_flock})")
        if not self.gamma > 0:
            errors.append(f"{prefix}.gamma: 必须 > 0 (当前 {self.gamma})")
        if not 0 < self.beta <= 0.5:
            errors.append(f"{prefix}.beta: 必须满足 0 < β ≤ 0.5 (当前 {self.beta})")
        if not self.mass > 0:
            errors.append(f"{prefix}.mass: 必须 > 0 (当前 {self.mass})")
        if not self.fixed_power >= 0:
            errors.append(f"{prefix}.fixed_power: 必须 ≥ 0 (当前 {self.fixed_power})")
        if not self.rate_floor > 0:
            errors.append(f"{prefix}.rate_floor: 必须 > 0 (当前 {self.rate_floor})")
        if not self.rate_unit > 0:
            errors.append(f"{prefix}.rate_unit: 必须 > 0 (当前 {self.rate_unit})")
        if not self.w_separation >= 0:
            errors.append(f"{prefix}.w_separation: 必须 ≥ 0 (当前 {self.w_separation})")
        return errors


# ── 指标 ─────────────────────────────────────────────────────────────────────


@dataclass
class SafetyParams:
    """碰撞约束参数."""

    safe_distance: float = 2.5          # d_s (m)
    target_collision_prob: float = 0.05  # ε

    def validate(self, prefix: str = "metrics") -> list[str]:
        errors = []
        if not self.safe_distance > 0:
            errors.append(f"{prefix}.safe_distance: 必须 > 0 (当前 {self.safe_distance})")
        if not 0 <= self.target_collision_prob <= 1:
            errors.append(
                f"{prefix}.target_collision_prob: 必须在 [0, 1] 内 (当前 {self.target_collision_prob})"
            )
        return errors


# ── 网格与平均场 ──────────────────────────────────────────────────────────────


@dataclass
class Grid:
    """一维空间 × 时间均匀网格（HJB 与 FPK 共用）.

    n_t 为时间步数，时间层数为 n_t + 1；所有场矩阵形状为 (n_t + 1, n_z)。
    """

    z_min: float = 0.0
    z_max: float = 300.0
    n_z: int = 128
    t_horizon: float = 20.0
    n_t: int = 200

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / (self.n_z - 1)

    @property
    def dt(self) -> float:
        return self.t_horizon / self.n_t

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.z_min, self.z_max, self.n_z)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_horizon, self.n_t + 1)

    @property
    def length(self) -> float:
        return self.z_max - self.z_min

    def quadrature_weights(self) -> np.ndarray:
        """梯形公式权重: 端点 dz/2，其余 dz."""
        w = np.full(self.n_z, self.dz)
        w[0] = w[-1] = self.dz / 2
        return w

    def cfl_number(self, speed: float) -> float:
        return abs(speed) * self.dt / self.dz

    def validate(self, prefix: str = "mfg_solver") -> list[str]:
        errors = []
        if not self.z_max > self.z_min:
            errors.append(f"{prefix}.z_max: 必须 > z_min (当前 {self.z_min} .. {self.z_max})")
        if not self.n_z >= 3:
            errors.append(f"{prefix}.n_z: 必须 ≥ 3 (当前 {self.n_z})")
        if not self.n_t >= 2:
            errors.append(f"{prefix}.n_t: 必须 ≥ 2 (当前 {self.n_t})")
        if not self.t_horizon > 0:
            errors.append(f"{prefix}.t_horizon: 必须 > 0 (当前 {self.t_horizon})")
        return errors


@dataclass
class ValueFunction:
    """值函数 ψ(z, t)，形状 (n_t + 1, n_z).

    求解器内部使用未归一化的剩余代价 ∫_t^T L ds，其梯度进入最优速度闭式解。
    """

    values: np.ndarray
    grid: Grid

    def lra_cost(self) -> np.ndarray:
        """按 1/T 归一化后的长期平均代价."""
        return self.values / self.grid.t_horizon

    def terminal(self) -> np.ndarray:
        return self.values[-1]


@dataclass
class MeanField:
    """平均场解: 密度 m(z, t) 与速度场 v*(z, t)."""

    density: np.ndarray   # (n_t + 1, n_z)
    velocity: np.ndarray  # (n_t + 1, n_z)
    grid: Grid

    def mass(self, t_index: int) -> float:
        from scipy.integrate import trapezoid
        return float(trapezoid(self.density[t_index], self.grid.nodes))

    def masses(self) -> np.ndarray:
        return self.density @ self.grid.quadrature_weights()


FPK_SCHEMES = ("tvd", "upwind")


@dataclass
class SolverSettings:
    """Picard 迭代、FPK 格式与速度约束设置."""

    damping: float = 0.5         # δ
    tol: float = 1.0e-4          # 密度 sup 范数残差阈值
    max_iters: int = 200
    v_max: float = 30.0          # 速度钳位 (m/s)
    terminal_value: float = 0.0  # ψ(·, T)
    initial_velocity: float = 0.0  # Picard 起点的常数速度场 (m/s)
    fpk_scheme: str = "tvd"        # tvd | upwind

    def validate(self, prefix: str = "mfg_solver") -> list[str]:
        errors = []
        if not abs(self.initial_velocity) <= self.v_max:
            errors.append(
                f"{prefix}.initial_velocity: 必须满足 |v0| ≤ v_max (当前 {self.initial_velocity})"
            )
        if self.fpk_scheme not in FPK_SCHEMES:
            errors.append(f"{prefix}.fpk_scheme: 必须为 {' 或 '.join(FPK_SCHEMES)} (当前 {self.fpk_scheme!r})")
        if not 0 < self.damping <= 1:
            errors.append(f"{prefix}.damping: 必须满足 0 < δ ≤ 1 (当前 {self.damping})")
        if not self.tol > 0:
            errors.append(f"{prefix}.tol: 必须 > 0 (当前 {self.tol})")
        if not self.max_iters >= 1:
            errors.append(f"{prefix}.max_iters: 必须 ≥ 1 (当前 {self.max_iters})")
        if not self.v_max > 0:
            errors.append(f"{prefix}.v_max: 必须 > 0 (当前 {self.v_max})")
        if not np.isfinite(self.terminal_value):
            errors.append(f"{prefix}.terminal_value: 必须为有限值")
        return errors


@dataclass
class SolveReport:
    """Picard 求解报告."""

    picard_iterations: int
    final_residual: float
    converged: bool
    tol: float
    residuals: list[float] = field(default_factory=list)
    elapsed_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "picard_iterations": self.picard_iterations,
            "final_residual": self.final_residual,
            "converged": self.converged,
            "tol": self.tol,
            "residuals": list(self.residuals),
            "elapsed_s": self.elapsed_s,
        }


# ── 机群回放 ─────────────────────────────────────────────────────────────────


@dataclass
class FleetSpec:
    """机群、热点用户与初始分布设置."""

    n_uavs: int = 100
    hotspot_center: float = 150.0      # 用户区间中心 (m)
    hotspot_width: float = 60.0        # 用户区间长度 (m)
    initial_mean: float = 210.0        # 初始分布均值 (m)
    initial_spread: float = 30.0 ** 0.5
    initial_spread_kind: str = "std"   # std | variance
    shadow_fading: bool = False        # 回放时是否采样 LOS/NLOS 与阴影衰落
    initial_velocity_std: float = 1.0  # 初始速度标准差 (m/s)，仅 cs_classic 使用
    seed_start: int = 0
    n_seeds: int = 100
    seed_list: Optional[list[int]] = None  # 显式种子列表，给出时覆盖 seed_start / n_seeds
    controller_tags: list[str] = field(
        default_factory=lambda: [ControllerTag.MFG.value, ControllerTag.MFG_WE0.value]
    )

    @property
    def initial_std(self) -> float:
        if self.initial_spread_kind == "variance":
            return float(np.sqrt(self.initial_spread))
        return float(self.initial_spread)

    @property
    def hotspot_interval(self) -> tuple[float, float]:
        half = self.hotspot_width / 2
        return (self.hotspot_center - half, self.hotspot_center + half)

    @property
    def seeds(self) -> list[int]:
        if self.seed_list is not None:
            return list(self.seed_list)
        return list(range(self.seed_start, self.seed_start + self.n_seeds))

    def validate(self, grid: Optional[Grid] = None, prefix: str = "agent_sim") -> list[str]:
        errors = []
        if not self.n_uavs >= 1:
            errors.append(f"{prefix}.n_uavs: 必须 ≥ 1 (当前 {self.n_uavs})")
        if not self.hotspot_width >= 0:
            errors.append(f"{prefix}.hotspot_width: 必须 ≥ 0 (当前 {self.hotspot_width})")
        if not self.initial_spread > 0:
            errors.append(f"{prefix}.initial_spread: 必须 > 0 (当前 {self.initial_spread})")
        if self.initial_spread_kind not in ("std", "variance"):
            errors.append(
                f"{prefix}.initial_spread_kind: 必须为 std 或 variance (当前 {self.initial_spread_kind!r})"
            )
        if not self.n_seeds >= 1:
            errors.append(f"{prefix}.n_seeds: 必须 ≥ 1 (当前 {self.n_seeds})")
        if self.seed_list is not None:
            if not self.seed_list:
                errors.append(f"{prefix}.seeds: 不能为空列表")
            elif len(set(self.seed_list)) != len(self.seed_list):
                errors.append(f"{prefix}.seeds: 存在重复种子 (当前 {self.seed_list})")
        if not self.initial_velocity_std >= 0:
            errors.append(f"{prefix}.initial_velocity_std: 必须 ≥ 0 (当前 {self.initial_velocity_std})")
        unknown = [t for t in self.controller_tags if t not in ControllerTag.values()]
        if unknown or not self.controller_tags:
            errors.append(
                f"{prefix}.controller_tags: 合法值 {ControllerTag.values()} (当前 {self.controller_tags})"
            )
        if grid is not None:
            lo, hi = self.hotspot_interval
            if lo < grid.z_min or hi > grid.z_max:
                errors.append(
                    f"{prefix}.hotspot_center: 用户区间 [{lo}, {hi}] 超出空间域 "
                    f"[{grid.z_min}, {grid.z_max}]"
                )
            if not grid.z_min <= self.initial_mean <= grid.z_max:
                errors.append(f"{prefix}.initial_mean: 必须位于空间域内 (当前 {self.initial_mean})")
        return errors


@dataclass
class UserAssignment:
    """用户位置与 UAV→用户 配对（双射）."""

    user_positions: np.ndarray  # (N,)
    pairing: np.ndarray         # pairing[i] = UAV i 服务的用户下标

    def is_bijection(self) -> bool:
        n = len(self.user_positions)
        return len(self.pairing) == n and np.array_equal(np.sort(self.pairing), np.arange(n))

    def served_positions(self) -> np.ndarray:
        """按 UAV 顺序返回各自服务用户的位置."""
        return self.user_positions[self.pairing]


@dataclass
class FleetTrajectory:
    """蒙特卡洛回放结果，矩阵形状均为 (N, n_t + 1)."""

    positions: np.ndarray
    velocities: np.ndarray
    rates: np.ndarray
    energy_per_rate: np.ndarray
    times: np.ndarray
    seed: int
    controller_tag: str
    metadata: dict = field(default_factory=dict)

    @property
    def n_uavs(self) -> int:
        return self.positions.shape[0]

    @property
    def n_levels(self) -> int:
        return self.positions.shape[1]

    def shapes_consistent(self) -> bool:
        shape = self.positions.shape
        return (
            self.velocities.shape == shape
            and self.rates.shape == shape
            and self.energy_per_rate.shape == shape
            and len(self.times) == shape[1]
        )
