"""N 架 UAV 的蒙特卡洛回放.

控制器:
- mfg / mfg_we0: 在求解得到的 v*(z, t) 上插值（闭环平均场控制）；
- cs_classic: 经典 Cucker-Smale 速度一致性更新（非博弈基线）。

同一 (config, seed) 的回放逐位可复现: 初始机群与过程噪声各自使用
由 SeedSequence 派生的独立子生成器。
"""

import logging
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.stats import truncnorm

from .channel import downlink_rate, expected_path_loss_linear, sample_channel_gain
from .config import ScenarioConfig
from .cost import energy_cost, kernel
from .dynamics import em_step
from .model import ControllerTag, CostWeights, FleetTrajectory, MeanField, UAVState, UserAssignment

logger = logging.getLogger(__name__)


def _child_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """(初始化, 过程噪声, 信道) 三个互相独立的子生成器."""
    init_ss, noise_ss, channel_ss = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.default_rng(init_ss),
        np.random.default_rng(noise_ss),
        np.random.default_rng(channel_ss),
    )


# ── 初始化 ───────────────────────────────────────────────────────────────────


def init_fleet(config: ScenarioConfig, seed: int) -> tuple[UAVState, UserAssignment]:
    """采样初始机群与热点用户，并按排序秩配对.

    UAV 位置 i.i.d. 取自截断到空间域的初始高斯；用户 i.i.d. 均匀分布在热点区间；
    第 k 左的 UAV 服务第 k 左的用户。初始速度 i.i.d. 取自 N(0, initial_velocity_std²)，
    在用户之后采样，只有 cs_classic 使用；mfg 控制器在第 0 层即覆盖速度。
    """
    rng, _, _ = _child_rngs(seed)
    fleet, grid = config.fleet, config.grid
    n = fleet.n_uavs
    mean, std = fleet.initial_mean, fleet.initial_std
    a, b = (grid.z_min - mean) / std, (grid.z_max - mean) / std
    positions = truncnorm.rvs(a, b, loc=mean, scale=std, size=n, random_state=rng)
    lo, hi = fleet.hotspot_interval
    users = rng.uniform(lo, hi, size=n)
    velocity = rng.normal(0.0, fleet.initial_velocity_std, size=n)

    pairing = np.empty(n, dtype=int)
    pairing[np.argsort(positions, kind="stable")] = np.argsort(users, kind="stable")
    state = UAVState(position=np.asarray(positions, dtype=float), velocity=np.asarray(velocity, dtype=float))
    return state, UserAssignment(user_positions=users, pairing=pairing)


# ── 控制器 ───────────────────────────────────────────────────────────────────


class MfgController:
    """在 v*(z, t) 网格上做双线性插值的闭环控制器."""

    def __init__(self, solution: MeanField, v_max: float = 30.0):
        grid = solution.grid
        self.grid = grid
        self.v_max = v_max
        self._interp = RegularGridInterpolator(
            (grid.times, grid.nodes), solution.velocity, method="linear",
        )

    def __call__(self, z, t: float):
        grid = self.grid
        z = np.asarray(z, dtype=float)
        z_clipped = np.clip(z, grid.z_min, grid.z_max)
        t_clipped = min(max(t, 0.0), grid.t_horizon)
        if np.any(z_clipped != z) or t_clipped != t:
            logger.warning("控制器查询点超出网格 (t=%g)，已截断到最近节点", t)
        points = np.column_stack([np.full(z_clipped.size, t_clipped), z_clipped.ravel()])
        v = np.clip(self._interp(points), -self.v_max, self.v_max).reshape(z.shape)
        return float(v) if v.ndim == 0 else v


def mfg_controller(z, t: float, solution: MeanField, v_max: float = 30.0):
    """对单个（或一组）查询点求 v*(z, t) 的插值."""
    return MfgController(solution, v_max)(z, t)


def cs_controller(i: int, positions, velocities, dt: float, weights: CostWeights) -> float:
    """经典 Cucker-Smale 更新 v_i' = v_i + dt·(1/N)·Σ_j K(|z_j − z_i|)·(v_j − v_i)."""
    z = np.asarray(positions, dtype=float)
    v = np.asarray(velocities, dtype=float)
    k = kernel(np.abs(z - z[i]), weights.gamma, weights.beta)
    return float(v[i] + dt * np.sum(k * (v - v[i])) / len(z))


def cs_update(positions, velocities, dt: float, weights: CostWeights) -> np.ndarray:
    """整个机群的向量化 Cucker-Smale 更新（保持平均速度不变）."""
    z = np.asarray(positions, dtype=float)
    v = np.asarray(velocities, dtype=float)
    k = kernel(np.abs(z[:, None] - z[None, :]), weights.gamma, weights.beta)
    return v + dt * (k * (v[None, :] - v[:, None])).sum(axis=1) / len(z)


# ── 回放 ─────────────────────────────────────────────────────────────────────


def _step_rates(
    positions: np.ndarray,
    served: np.ndarray,
    config: ScenarioConfig,
    rng: Optional[np.random.Generator],
) -> np.ndarray:
    ch = config.channel
    d2d = np.abs(positions - served)
    d3d = np.hypot(d2d, ch.altitude_m)
    if rng is not None:
        gain = sample_channel_gain(ch.altitude_m, d3d, ch.carrier_freq_ghz, rng, ch.shadow_std_db, d2d=d2d)
    else:
        gain = expected_path_loss_linear(ch.altitude_m, d3d, ch.carrier_freq_ghz)
    rate = np.atleast_1d(downlink_rate(gain, ch))
    return np.maximum(rate, config.weights.rate_floor)


def run_replay(
    config: ScenarioConfig,
    solution: Optional[MeanField],
    seed: int,
    tag: str = ControllerTag.MFG.value,
) -> FleetTrajectory:
    """按所选控制器回放 N 架 UAV，记录全部 n_t + 1 个时间层.

    Args:
        config: 场景配置（应与求解时一致，mfg_we0 需传入 w_e = 0 的解）
        solution: mfg / mfg_we0 所用的平均场解；cs_classic 可为 None
        seed: 随机种子
        tag: 控制器标签

    Returns:
        FleetTrajectory；速度在 [t_n, t_{n+1}] 内零阶保持
    """
    tag = ControllerTag(tag).value
    grid, wind = config.grid, config.wind
    domain = (grid.z_min, grid.z_max)
    _, noise_rng, channel_rng = _child_rngs(seed)
    fading_rng = channel_rng if config.fleet.shadow_fading else None

    state, users = init_fleet(config, seed)
    served = users.served_positions()
    n, levels = config.fleet.n_uavs, grid.n_t + 1
    times = grid.times

    controller = None
    if tag in (ControllerTag.MFG.value, ControllerTag.MFG_WE0.value):
        if solution is None:
            raise ValueError(f"控制器 {tag} 需要平均场解")
        controller = MfgController(solution, config.solver.v_max)

    positions = np.empty((n, levels))
    velocities = np.empty((n, levels))
    rates = np.empty((n, levels))
    epr = np.empty((n, levels))

    z = state.position
    v = state.velocity
    tx_power_w = config.channel.tx_power_w
    for k in range(levels):
        if controller is not None:
            v = np.atleast_1d(controller(z, times[k]))
        elif k > 0:
            v = np.clip(cs_update(z, v, grid.dt, config.weights), -config.solver.v_max, config.solver.v_max)
        positions[:, k] = z
        velocities[:, k] = v
        rates[:, k] = _step_rates(z, served, config, fading_rng)
        epr[:, k] = energy_cost(v, rates[:, k], config.weights, tx_power_w)
        if k < levels - 1:
            z = np.atleast_1d(
                em_step(UAVState(z, v), wind, grid.dt, noise_rng.standard_normal(n), domain=domain).position
            )

    logger.debug("回放完成: tag=%s seed=%d N=%d", tag, seed, n)
    return FleetTrajectory(
        positions=positions,
        velocities=velocities,
        rates=rates,
        energy_per_rate=epr,
        times=times,
        seed=seed,
        controller_tag=tag,
        metadata={
            "shadow_fading": config.fleet.shadow_fading,
            "initial_spread_kind": config.fleet.initial_spread_kind,
            "gamma": config.weights.gamma,
            "w_energy": config.weights.w_energy,
        },
    )
