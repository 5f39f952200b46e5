"""独立校验（oracle）: 用暴力或解析方法核对求解器各部分.

每个 oracle 返回 OracleResult，CLI 逐项打印 PASS/FAIL。
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import ScenarioConfig
from .cost import cost_rate, energy_cost, flocking_cost_finite, kernel, kernel_matrix
from .dynamics import simulate_paths
from .mfg_solver import (
    fpk_forward,
    gaussian_density,
    initial_density,
    optimal_velocity_field,
    picard_solve,
    rate_field,
    value_gradient,
)
from .model import CostWeights, Grid, MeanField, ValueFunction, WindModel

logger = logging.getLogger(__name__)

LATTICE_POINTS = 2001


@dataclass
class OracleResult:
    name: str
    passed: bool
    detail: str
    checked: int = 0


# ── Hamiltonian 网格搜索 ──────────────────────────────────────────────────────


def hamiltonian_grid_search(
    field: MeanField,
    value: ValueFunction,
    rate: np.ndarray,
    weights: CostWeights,
    wind: WindModel,
    tx_power_w: float,
    v_max: float = 30.0,
    levels: Optional[list[int]] = None,
    min_pass_fraction: float = 0.95,
) -> OracleResult:
    """在 2001 点速度格点上直接积分求括号项的 argmin，并与闭式解比较.

    括号项 w_e·E(v) + w_f·∫m·(v(z') − v)²·K dz' + (v + A)·∂_zψ 逐格点直接求积，
    不经过核加权矩展开（拥挤势与 v 无关，不影响 argmin）。
    levels 缺省为全部时间层；传入子集可加快大网格上的检查。
    匹配判据: |argmin − v*| ≤ 一个格点步长。
    """
    grid = field.grid
    lattice = np.linspace(-v_max, v_max, LATTICE_POINTS)
    step = lattice[1] - lattice[0]
    v_star = optimal_velocity_field(value, field, rate, weights, v_max)
    scaled_rate = cost_rate(rate, weights)
    quad_w = grid.quadrature_weights()
    kmat = kernel_matrix(grid.nodes, weights.gamma, weights.beta)
    if levels is None:
        levels = list(range(grid.n_t))
    if weights.w_energy > 0:
        energy = weights.w_energy * energy_cost(lattice[:, None], scaled_rate[None, :], weights, tx_power_w)
    else:
        energy = 0.0

    matched = total = 0
    for n in levels:
        grad = value_gradient(value.values[n + 1], grid.dz)
        wm = quad_w * field.density[n]
        rel = (field.velocity[n][None, :] - lattice[:, None]) ** 2  # (lattice, nodes)
        flock = rel @ (wm[:, None] * kmat)
        bracket = weights.w_flock * flock + (lattice[:, None] + wind.mean_velocity) * grad[None, :] + energy
        best = lattice[np.argmin(bracket, axis=0)]
        matched += int(np.sum(np.abs(best - v_star[n]) <= step + 1e-12))
        total += grid.n_z

    fraction = matched / total
    shown = levels if len(levels) <= 6 else f"{len(levels)} 层"
    return OracleResult(
        name="hamiltonian_grid_search",
        passed=fraction >= min_pass_fraction,
        detail=f"{matched}/{total} 个节点匹配 ({fraction:.1%})，格点步长 {step:.4f} m/s，层 {shown}",
        checked=total,
    )


# ── N 人博弈 ──────────────────────────────────────────────────────────────────


def n_player_hamiltonian(
    positions,
    velocities,
    psi_gradients,
    rates,
    weights: CostWeights,
    wind: WindModel,
    tx_power_w: float,
    v_max: float = 30.0,
) -> OracleResult:
    """小规模 N 人实例: 逐个 UAV 在格点上最小化有限 N 括号项，与闭式解比较.

    有限 N 版本的闭式解为在经验测度下的同一表达式（自身项恒为 0，不计入）:
    v_i* = [2w_f·(1/N)Σ_{j≠i} v_j K − ∂ψ_i] / [a_m·w_e/R_i + 2w_f·(1/N)Σ_{j≠i} K]。
    rates 以 bit/s 给出，与求解器一样按 cost_rate 换算。
    """
    z = np.asarray(positions, dtype=float)
    v = np.asarray(velocities, dtype=float)
    grads = np.asarray(psi_gradients, dtype=float)
    rates = np.atleast_1d(cost_rate(rates, weights))
    lattice = np.linspace(-v_max, v_max, LATTICE_POINTS)
    step = lattice[1] - lattice[0]
    n = len(z)

    worst = 0.0
    for i in range(n):
        k = kernel(np.abs(z - z[i]), weights.gamma, weights.beta)
        k[i] = 0.0
        i0, i1 = k.sum() / n, (k * v).sum() / n
        denom = weights.mass * weights.w_energy / rates[i] + 2.0 * weights.w_flock * i0
        if denom > 0:
            closed = float(np.clip((2.0 * weights.w_flock * i1 - grads[i]) / denom, -v_max, v_max))
        else:
            closed = float(-v_max * np.sign(grads[i]))

        bracket = np.empty(LATTICE_POINTS)
        for a, cand in enumerate(lattice):
            trial = v.copy()
            trial[i] = cand
            # 其余 UAV 速度固定时，第 i 项集群代价等价于把 v_i 换成候选值
            bracket[a] = (
                weights.w_flock * flocking_cost_finite(i, z, trial, weights)
                + (cand + wind.mean_velocity) * grads[i]
            )
        if weights.w_energy > 0:
            bracket = bracket + weights.w_energy * energy_cost(lattice, rates[i], weights, tx_power_w)
        worst = max(worst, abs(lattice[int(np.argmin(bracket))] - closed))

    return OracleResult(
        name="n_player_hamiltonian",
        passed=worst <= step + 1e-12,
        detail=f"N={n}，最大偏差 {worst:.4f} m/s（格点步长 {step:.4f}）",
    )


# ── FPK ──────────────────────────────────────────────────────────────────────


def fpk_conservation(
    velocity_field: np.ndarray,
    wind: WindModel,
    grid: Grid,
    initial: np.ndarray,
    mass_tol: float = 1e-6,
    negative_tol: float = 1e-12,
    scheme: str = "tvd",
) -> OracleResult:
    """逐层检查 |∫m dz − 1| ≤ mass_tol 与 min m ≥ −negative_tol."""
    density = fpk_forward(velocity_field, wind, grid, initial, scheme)
    mass_err = float(np.max(np.abs(density @ grid.quadrature_weights() - 1.0)))
    min_m = float(density.min())
    return OracleResult(
        name="fpk_conservation",
        passed=mass_err <= mass_tol and min_m >= -negative_tol,
        detail=f"最大质量误差 {mass_err:.2e}，最小密度 {min_m:.2e}",
    )


def _moments(density: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    w = grid.quadrature_weights()
    mass = density @ w
    mean = (density * grid.nodes) @ w / mass
    var = (density * (grid.nodes[None, :] - mean[:, None]) ** 2) @ w / mass
    return mean, var


def fpk_moments(
    speed: float = 2.0,
    volatility: float = 1.0,
    grid: Optional[Grid] = None,
    rel_tol: float = 0.05,
) -> OracleResult:
    """常速对流下均值按 c·t 平移（η = 0）；零漂移下方差按 η²·t 增长."""
    grid = grid or Grid(z_min=0.0, z_max=200.0, n_z=201, t_horizon=10.0, n_t=100)
    centre = 0.5 * (grid.z_min + grid.z_max)
    m0 = gaussian_density(grid, centre - 0.1 * grid.length, 0.02 * grid.length)
    zeros = np.zeros((grid.n_t + 1, grid.n_z))

    advected = fpk_forward(zeros, WindModel(mean_velocity=speed, volatility=0.0), grid, m0)
    mean, _ = _moments(advected, grid)
    shift_err = float(np.max(np.abs(mean - mean[0] - speed * grid.times)))

    diffused = fpk_forward(zeros, WindModel(mean_velocity=0.0, volatility=volatility), grid, m0)
    _, var = _moments(diffused, grid)
    growth = var[-1] - var[0]
    expected = volatility ** 2 * grid.t_horizon
    var_err = abs(growth - expected) / expected

    passed = shift_err <= grid.dz and var_err <= rel_tol
    return OracleResult(
        name="fpk_moments",
        passed=passed,
        detail=f"均值平移误差 {shift_err:.3f} m (≤ dz={grid.dz:.3f})，方差增长相对误差 {var_err:.2%}",
    )


# ── 动力学 ───────────────────────────────────────────────────────────────────


def dynamics_exactness(n_steps: int = 10_000, n_paths: int = 10_000, seed: int = 0) -> OracleResult:
    """η = 0 时与闭式漂移一致 (1e−12)；η > 0 且 v = −A 时集合方差 ≈ η²·t (5%)."""
    rng = np.random.default_rng(seed)
    # 二进制精确的步长与漂移，避免累加舍入
    calm = WindModel(mean_velocity=-3.0, volatility=0.0)
    deterministic = simulate_paths(0.0, 3.5, calm, 0.25, n_steps, 1, rng)[0]
    expected = np.arange(n_steps + 1) * 0.25 * 0.5
    drift_err = float(np.max(np.abs(deterministic - expected)))

    gusty = WindModel(mean_velocity=-3.0, volatility=0.1)
    dt, steps = 0.1, 100
    paths = simulate_paths(150.0, 3.0, gusty, dt, steps, n_paths, rng)
    var = paths[:, -1].var()
    target = gusty.volatility ** 2 * dt * steps
    var_err = abs(var - target) / target
    mean_err = abs(paths[:, -1].mean() - 150.0)

    return OracleResult(
        name="dynamics_exactness",
        passed=drift_err <= 1e-12 and var_err <= 0.05,
        detail=f"确定性漂移误差 {drift_err:.1e}，方差相对误差 {var_err:.2%}，均值偏差 {mean_err:.4f} m",
    )


# ── 汇总 ─────────────────────────────────────────────────────────────────────


def run_all(config: ScenarioConfig) -> list[OracleResult]:
    """对给定（小规模）场景执行全部 oracle."""
    results = []
    field, value, report = picard_solve(config)
    rate = rate_field(config.grid, config.channel, config.hotspot)
    results.append(
        hamiltonian_grid_search(
            field, value, rate, config.weights, config.wind,
            config.channel.tx_power_w, config.solver.v_max,
        )
    )
    results.append(
        fpk_conservation(
            field.velocity, config.wind, config.grid, initial_density(config),
            scheme=config.solver.fpk_scheme,
        )
    )
    results.append(fpk_moments())
    results.append(dynamics_exactness())

    rng = np.random.default_rng(config.fleet.seed_start)
    n = 5
    results.append(
        n_player_hamiltonian(
            positions=rng.uniform(140.0, 160.0, n),
            velocities=rng.normal(0.0, 1.0, n),
            psi_gradients=rng.normal(0.0, 0.5, n),
            rates=np.full(n, 1.0e6),
            weights=config.weights,
            wind=config.wind,
            tx_power_w=config.channel.tx_power_w,
            v_max=config.solver.v_max,
        )
    )
    logger.info("oracle 完成: 求解 %d 轮，converged=%s", report.picard_iterations, report.converged)
    return results
