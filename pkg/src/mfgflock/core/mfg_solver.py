"""平均场博弈求解器: HJB 后向扫描 + FPK 前向扫描 + 阻尼 Picard 不动点迭代.

约定:
- 网格 n_t 为时间步数，所有场矩阵形状 (n_t + 1, n_z)，第 0 行为 t = 0；
- ψ 为未归一化的剩余代价 ∫_t^T L ds，终端 ψ(·, T) = terminal_value；
- ψ 取齐次 Neumann 边界，m 取零通量边界；
- 最优速度按闭式解逐节点计算并截断到 [−v_max, v_max]。
"""

import logging
import time
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import norm

from .channel import expected_rate_at
from .config import ScenarioConfig
from .cost import cost_rate, energy_cost, flocking_moments, kernel, kernel_matrix
from .errors import CFLError, DensityNormalizationError, SchemeError
from .model import (
    ChannelParams,
    CostWeights,
    Grid,
    MeanField,
    SolveReport,
    SolverSettings,
    ValueFunction,
    WindModel,
)

logger = logging.getLogger(__name__)

NEGATIVE_DENSITY_TOL = 1e-12
MASS_DRIFT_TOL = 1e-12
USER_QUADRATURE_POINTS = 61


# ── 初始密度 ─────────────────────────────────────────────────────────────────


def normalize_density(density: np.ndarray, grid: Grid) -> np.ndarray:
    mass = trapezoid(density, grid.nodes)
    if not mass > 0:
        raise DensityNormalizationError("密度积分为 0，无法归一化")
    return density / mass


def gaussian_density(grid: Grid, mean: float, std: float) -> np.ndarray:
    """截断到空间域并重新归一化的高斯密度."""
    return normalize_density(norm.pdf(grid.nodes, loc=mean, scale=std), grid)


def point_mass(grid: Grid, z: float) -> np.ndarray:
    """最近节点上的离散点质量（梯形积分为 1）."""
    k = int(np.argmin(np.abs(grid.nodes - z)))
    m = np.zeros(grid.n_z)
    m[k] = 1.0 / grid.quadrature_weights()[k]
    return m


def initial_density(config: ScenarioConfig) -> np.ndarray:
    fleet = config.fleet
    return gaussian_density(config.grid, fleet.initial_mean, fleet.initial_std)


# ── 速率场 ───────────────────────────────────────────────────────────────────


def rate_field(
    grid: Grid,
    channel: ChannelParams,
    hotspot: tuple[float, float],
    n_points: int = USER_QUADRATURE_POINTS,
) -> np.ndarray:
    """逐节点的平均下行速率 R̄(z)：对均匀分布在热点区间内的用户取平均.

    Args:
        grid: 空间网格
        channel: 信道参数（g = 1，期望增益）
        hotspot: 用户区间 (lo, hi)；lo == hi 表示单个用户点
        n_points: 用户区间上的积分点数

    Returns:
        形状 (n_z,) 的速率数组 (bit/s)
    """
    lo, hi = hotspot
    if lo > hi:
        raise ValueError(f"热点区间非法: [{lo}, {hi}]")
    if lo < grid.z_min or hi > grid.z_max:
        raise ValueError(f"热点区间 [{lo}, {hi}] 超出空间域 [{grid.z_min}, {grid.z_max}]")
    z = grid.nodes[:, None]
    if hi - lo <= 0:
        return np.asarray(expected_rate_at(z[:, 0], lo, channel), dtype=float)
    users = np.linspace(lo, hi, n_points)[None, :]
    rates = np.asarray(expected_rate_at(z, users, channel), dtype=float)
    return trapezoid(rates, users[0], axis=1) / (hi - lo)


# ── 差分算子 ─────────────────────────────────────────────────────────────────


def value_gradient(psi_row: np.ndarray, dz: float) -> np.ndarray:
    """中心差分梯度，镜像延拓（Neumann 边界处梯度为 0）."""
    p = np.pad(psi_row, 1, mode="reflect")
    return (p[2:] - p[:-2]) / (2.0 * dz)


def laplacian(psi_row: np.ndarray, dz: float) -> np.ndarray:
    """二阶中心差分，镜像延拓."""
    p = np.pad(psi_row, 1, mode="reflect")
    return (p[2:] - 2.0 * p[1:-1] + p[:-2]) / (dz * dz)


def upwind_derivative(psi_row: np.ndarray, speed: np.ndarray, dz: float) -> np.ndarray:
    """后向时间推进的迎风导数: speed > 0 取前向差分，否则取后向差分."""
    p = np.pad(psi_row, 1, mode="edge")
    forward = (p[2:] - p[1:-1]) / dz
    backward = (p[1:-1] - p[:-2]) / dz
    return np.where(speed > 0, forward, backward)


def _check_cfl(speed: np.ndarray, grid: Grid, where: str) -> None:
    max_speed = float(np.max(np.abs(speed)))
    if grid.cfl_number(max_speed) > 1.0:
        raise CFLError(grid.dt, grid.dz, max_speed, where=where)


# ── 最优速度（闭式解） ────────────────────────────────────────────────────────


def _closed_form(
    psi_gradient: np.ndarray,
    rate: np.ndarray,
    i0: np.ndarray,
    i1: np.ndarray,
    weights: CostWeights,
    v_max: float,
) -> np.ndarray:
    numerator = 2.0 * weights.w_flock * i1 - psi_gradient
    denominator = weights.mass * weights.w_energy / rate + 2.0 * weights.w_flock * i0
    if weights.w_energy == 0 and weights.w_flock == 0:
        # 括号项对 v 线性，极小值取在速度边界上
        return -v_max * np.sign(psi_gradient)
    assert np.all(denominator > 0), "最优速度分母必须为正"
    return np.clip(numerator / denominator, -v_max, v_max)


def optimal_velocity(
    psi_gradient: float,
    z: float,
    field: MeanField,
    t_index: int,
    rate_at_z: float,
    weights: CostWeights,
    v_max: float = 30.0,
) -> float:
    """单个节点处的最优速度 v*.

    v* = [w_f·∫2·m·v·K dz' − ∂_zψ] / [a_m·w_e/R(z) + w_f·∫2·m·K dz']，截断到 ±v_max。
    rate_at_z 以 bit/s 给出，R(z) = rate_at_z / rate_unit。
    """
    if rate_at_z < weights.rate_floor:
        raise ValueError(f"rate_at_z={rate_at_z:g} 低于 rate_floor={weights.rate_floor:g}")
    rate_at_z = cost_rate(rate_at_z, weights)
    nodes = field.grid.nodes
    k = kernel(np.abs(nodes - z), weights.gamma, weights.beta)
    m = field.density[t_index]
    i0 = trapezoid(m * k, nodes)
    i1 = trapezoid(m * field.velocity[t_index] * k, nodes)
    v = _closed_form(
        np.asarray(psi_gradient, dtype=float), np.asarray(rate_at_z, dtype=float),
        np.asarray(i0), np.asarray(i1), weights, v_max,
    )
    return float(v)


def _velocity_row(
    n: int,
    psi_next: np.ndarray,
    field: MeanField,
    rate: np.ndarray,
    weights: CostWeights,
    kmat: np.ndarray,
    quad_w: np.ndarray,
    v_max: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """第 n 层的 v* 及其所用的核加权矩."""
    grad = value_gradient(psi_next, field.grid.dz)
    i0, i1, i2 = flocking_moments(field.density[n], field.velocity[n], kmat, quad_w)
    v_star = _closed_form(grad, rate, i0, i1, weights, v_max)
    return v_star, grad, i0, i1, i2


def hamiltonian_bracket(
    v,
    psi_gradient,
    rate,
    moments: tuple[np.ndarray, np.ndarray, np.ndarray],
    weights: CostWeights,
    tx_power_w: float,
    wind: WindModel,
):
    """w_e·E(v) + w_f·F̄(v) + w_s·I0 + (v + A)·∂_zψ，F̄ 由核加权矩展开.

    rate 须已按 cost_rate 换算。
    """
    i0, i1, i2 = moments
    value = weights.w_flock * (i2 - 2.0 * v * i1 + v * v * i0) + (v + wind.mean_velocity) * psi_gradient
    if weights.w_energy > 0:
        value = value + weights.w_energy * energy_cost(v, rate, weights, tx_power_w)
    if weights.w_separation > 0:
        value = value + weights.w_separation * i0
    return value


# ── HJB 后向扫描 ─────────────────────────────────────────────────────────────


def hjb_backward(
    field: MeanField,
    rate: np.ndarray,
    weights: CostWeights,
    wind: WindModel,
    grid: Grid,
    terminal: float | np.ndarray = 0.0,
    *,
    tx_power_w: float,
    v_max: float = 30.0,
) -> ValueFunction:
    """显式后向推进修正 HJB 方程.

    ψ^n = ψ^{n+1} + dt·[L(v*) + (v* + A)·D_up ψ^{n+1} + (η²/2)·Δψ^{n+1}]

    Raises:
        CFLError: 实际漂移 max|v* + A|·dt/dz > 1
        SchemeError: 出现非有限值
    """
    rate = cost_rate(rate, weights)
    kmat = kernel_matrix(grid.nodes, weights.gamma, weights.beta)
    quad_w = grid.quadrature_weights()
    diffusion = 0.5 * wind.volatility ** 2

    psi = np.empty((grid.n_t + 1, grid.n_z))
    psi[-1] = np.broadcast_to(np.asarray(terminal, dtype=float), grid.n_z)
    for n in range(grid.n_t - 1, -1, -1):
        nxt = psi[n + 1]
        v_star, grad, i0, i1, i2 = _velocity_row(n, nxt, field, rate, weights, kmat, quad_w, v_max)
        speed = v_star + wind.mean_velocity
        _check_cfl(speed, grid, "hjb_backward")
        running = hamiltonian_bracket(v_star, 0.0, rate, (i0, i1, i2), weights, tx_power_w, wind)
        psi[n] = nxt + grid.dt * (
            running + speed * upwind_derivative(nxt, speed, grid.dz) + diffusion * laplacian(nxt, grid.dz)
        )
        if not np.all(np.isfinite(psi[n])):
            raise SchemeError(f"HJB 在第 {n} 层出现非有限值")
    return ValueFunction(values=psi, grid=grid)


def optimal_velocity_field(
    value: ValueFunction,
    field: MeanField,
    rate: np.ndarray,
    weights: CostWeights,
    v_max: float = 30.0,
) -> np.ndarray:
    """逐层重算 v*(z, t)；第 n 层用 ψ^{n+1} 的梯度，末层沿用第 n_t − 1 层."""
    grid = value.grid
    rate = cost_rate(rate, weights)
    kmat = kernel_matrix(grid.nodes, weights.gamma, weights.beta)
    quad_w = grid.quadrature_weights()
    velocity = np.empty((grid.n_t + 1, grid.n_z))
    for n in range(grid.n_t):
        velocity[n] = _velocity_row(n, value.values[n + 1], field, rate, weights, kmat, quad_w, v_max)[0]
    velocity[-1] = velocity[-2]
    return velocity


# ── FPK 前向扫描 ─────────────────────────────────────────────────────────────


def mc_limiter(theta: np.ndarray) -> np.ndarray:
    """单调中心 (MC) 限制器 φ(θ) = max(0, min(2θ, (1 + θ)/2, 2))."""
    return np.maximum(0.0, np.minimum(np.minimum(2.0 * theta, 0.5 * (1.0 + theta)), 2.0))


def _limited_correction(m: np.ndarray, b_face: np.ndarray, grid: Grid) -> np.ndarray:
    """Lax-Wendroff 二阶修正通量 ½·|b|·(1 − ν)·φ(θ)·Δm，θ 取迎风侧相邻差分之比.

    两端界面、以及迎风侧相邻界面速度反号（发散单元）的界面上 φ = 0；
    在 ν ≤ 1/2 时保持密度非负。
    """
    n = m.size
    delta = np.diff(m)
    phi = np.zeros_like(delta)
    f = np.arange(1, n - 2)
    if f.size:
        forward = b_face[f] >= 0
        upwind_delta = np.where(forward, delta[f - 1], delta[f + 1])
        same_sign = np.where(forward, b_face[f - 1] >= 0, b_face[f + 1] <= 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            theta = np.where(delta[f] != 0.0, upwind_delta / delta[f], 0.0)
        phi[f] = np.where(same_sign, mc_limiter(theta), 0.0)
    nu = np.abs(b_face) * grid.dt / grid.dz
    return 0.5 * np.abs(b_face) * (1.0 - nu) * phi * delta


def fpk_step(
    m: np.ndarray,
    speed: np.ndarray,
    diffusion: float,
    grid: Grid,
    scheme: str = "tvd",
) -> np.ndarray:
    """守恒型有限体积单步: 界面对流通量 + 中心扩散通量，两端零通量.

    scheme="upwind" 为一阶迎风（数值扩散约 |b|·dz·(1 − ν)/2）；
    scheme="tvd" 在迎风通量上叠加限制后的二阶修正。
    """
    cell = grid.quadrature_weights()
    b_face = 0.5 * (speed[:-1] + speed[1:])
    advective = np.maximum(b_face, 0.0) * m[:-1] + np.minimum(b_face, 0.0) * m[1:]
    if scheme == "tvd":
        advective = advective + _limited_correction(m, b_face, grid)
    elif scheme != "upwind":
        raise ValueError(f"未知 FPK 格式: {scheme!r}")
    diffusive = -diffusion * (m[1:] - m[:-1]) / grid.dz
    flux = np.concatenate(([0.0], advective + diffusive, [0.0]))
    return m - grid.dt * (flux[1:] - flux[:-1]) / cell


def fpk_forward(
    velocity_field: np.ndarray,
    wind: WindModel,
    grid: Grid,
    initial: np.ndarray,
    scheme: str = "tvd",
) -> np.ndarray:
    """前向推进 FPK 方程 ∂_t m = −∂_z[(v* + A)·m] + (η²/2)·∂²_z m.

    Raises:
        CFLError: 实际漂移违反 CFL 条件
        SchemeError: 密度低于 −1e−12 或出现非有限值
    """
    quad_w = grid.quadrature_weights()
    initial = np.asarray(initial, dtype=float)
    mass0 = float(initial @ quad_w)
    if abs(mass0 - 1.0) > 1e-6:
        raise DensityNormalizationError(f"初始密度未归一化: ∫m dz = {mass0:.8f}")

    diffusion = 0.5 * wind.volatility ** 2
    density = np.empty((grid.n_t + 1, grid.n_z))
    density[0] = initial
    for n in range(grid.n_t):
        speed = velocity_field[n] + wind.mean_velocity
        _check_cfl(speed, grid, "fpk_forward")
        m_new = fpk_step(density[n], speed, diffusion, grid, scheme)
        if not np.all(np.isfinite(m_new)):
            raise SchemeError(f"FPK 在第 {n + 1} 层出现非有限值")
        if m_new.min() < -NEGATIVE_DENSITY_TOL:
            raise SchemeError(f"FPK 在第 {n + 1} 层出现负密度 {m_new.min():.3e}")
        prev_mass = float(density[n] @ quad_w)
        mass = float(m_new @ quad_w)
        if abs(mass - prev_mass) > MASS_DRIFT_TOL:
            logger.warning("FPK 第 %d 层质量漂移 %.3e，已重新归一化", n + 1, mass - prev_mass)
            m_new = m_new * (prev_mass / mass)
        density[n + 1] = m_new
    return density


# ── Picard 迭代 ──────────────────────────────────────────────────────────────


def picard_solve(
    config: ScenarioConfig,
    rate: Optional[np.ndarray] = None,
) -> tuple[MeanField, ValueFunction, SolveReport]:
    """阻尼 Picard 不动点迭代求解耦合 HJB–FPK 系统.

    从常值速度场 initial_velocity（默认 0）及其 FPK 密度出发，每轮依次执行 HJB 后向扫描、v* 重算、
    FPK 前向扫描和阻尼更新 m ← (1 − δ)·m + δ·m_new。
    残差为密度的 sup 范数变化；残差 ≤ tol 且为最近三次残差的最小值时判定收敛。
    未收敛不抛异常，而是在报告中标记 converged=False。
    """
    grid, wind, weights = config.grid, config.wind, config.weights
    settings: SolverSettings = config.solver
    if rate is None:
        rate = rate_field(grid, config.channel, config.hotspot)
    tx_power_w = config.channel.tx_power_w
    m0 = initial_density(config)

    started = time.perf_counter()
    velocity = np.full((grid.n_t + 1, grid.n_z), settings.initial_velocity)
    field = MeanField(density=fpk_forward(velocity, wind, grid, m0, settings.fpk_scheme), velocity=velocity, grid=grid)
    value = ValueFunction(values=np.full((grid.n_t + 1, grid.n_z), settings.terminal_value), grid=grid)

    residuals: list[float] = []
    converged = False
    for it in range(1, settings.max_iters + 1):
        value = hjb_backward(
            field, rate, weights, wind, grid, settings.terminal_value,
            tx_power_w=tx_power_w, v_max=settings.v_max,
        )
        v_new = optimal_velocity_field(value, field, rate, weights, settings.v_max)
        m_new = fpk_forward(v_new, wind, grid, m0, settings.fpk_scheme)
        damped = (1.0 - settings.damping) * field.density + settings.damping * m_new
        residual = float(np.max(np.abs(damped - field.density)))
        residuals.append(residual)
        field = MeanField(density=damped, velocity=v_new, grid=grid)
        logger.info("Picard 第 %d 轮: 残差 %.3e", it, residual)
        if residual <= settings.tol and residual <= min(residuals[-3:]):
            converged = True
            break

    report = SolveReport(
        picard_iterations=len(residuals),
        final_residual=residuals[-1],
        converged=converged,
        tol=settings.tol,
        residuals=residuals,
        elapsed_s=time.perf_counter() - started,
    )
    if converged:
        logger.info(
            "求解收敛: γ=%g, w_e=%g, %d 轮, 残差 %.3e, 用时 %.2fs",
            weights.gamma, weights.w_energy, report.picard_iterations,
            report.final_residual, report.elapsed_s,
        )
    else:
        logger.warning(
            "求解未收敛: γ=%g, w_e=%g, %d 轮后残差 %.3e > tol=%g",
            weights.gamma, weights.w_energy, report.picard_iterations,
            report.final_residual, settings.tol,
        )
    return field, value, report
