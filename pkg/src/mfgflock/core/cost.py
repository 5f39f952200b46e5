"""代价函数: 能耗/比特、有限 N 集群代价、平均场期望集群代价、瞬时运行代价."""

import logging
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

from .errors import DeadLinkError, DensityNormalizationError
from .model import CostWeights, MeanField

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-6


# ── 核函数 ───────────────────────────────────────────────────────────────────


def kernel(distance, gamma: float, beta: float):
    """碰撞规避核 1 / (1/γ + d²)^β."""
    if not gamma > 0:
        raise ValueError(f"gamma 必须 > 0 (当前 {gamma})")
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ValueError(f"距离必须 ≥ 0 (当前 {distance})")
    k = np.power(1.0 / gamma + d * d, -beta)
    return float(k) if k.ndim == 0 else k


def kernel_matrix(nodes: np.ndarray, gamma: float, beta: float) -> np.ndarray:
    """网格节点两两之间的核矩阵 K[k, j] = kernel(|z_k − z_j|)."""
    nodes = np.asarray(nodes, dtype=float)
    return kernel(np.abs(nodes[:, None] - nodes[None, :]), gamma, beta)


# ── 能耗 ─────────────────────────────────────────────────────────────────────


def cost_rate(rate, weights: CostWeights):
    """bit/s 速率 → 代价单位: max(R, rate_floor) / rate_unit."""
    r = np.maximum(np.asarray(rate, dtype=float), weights.rate_floor) / weights.rate_unit
    return float(r) if r.ndim == 0 else r


def energy_cost(velocity, rate, weights: CostWeights, tx_power_w: float):
    """单位速率能耗 (0.5·a_m·v² + P_u + a_e) / R，单位随 R 而定（R 取 bit/s 时为 J/bit）.

    Raises:
        DeadLinkError: 速率 ≤ 0（调用方应先按 rate_floor 截断）
    """
    rate = np.asarray(rate, dtype=float)
    if np.any(rate <= 0):
        raise DeadLinkError(f"下行速率必须 > 0 (当前最小值 {np.min(rate):g} bit/s)")
    v = np.asarray(velocity, dtype=float)
    e = (0.5 * weights.mass * v * v + tx_power_w + weights.fixed_power) / rate
    return float(e) if e.ndim == 0 else e


# ── 集群代价 ─────────────────────────────────────────────────────────────────


def flocking_cost_finite(i: int, positions, velocities, weights: CostWeights) -> float:
    """第 i 架 UAV 的有限 N 集群代价 (1/N)·Σ_j (v_j − v_i)²·K(|z_j − z_i|)."""
    z = np.asarray(positions, dtype=float)
    v = np.asarray(velocities, dtype=float)
    if z.shape != v.shape or z.ndim != 1 or len(z) == 0:
        raise ValueError("positions 与 velocities 必须为等长的一维序列")
    if not 0 <= i < len(z):
        raise IndexError(f"UAV 下标越界: {i} (N={len(z)})")
    k = kernel(np.abs(z - z[i]), weights.gamma, weights.beta)
    return float(np.sum((v - v[i]) ** 2 * k) / len(z))


def _check_normalized(field: MeanField, t_index: int) -> None:
    mass = field.mass(t_index)
    if abs(mass - 1.0) > MASS_TOLERANCE:
        raise DensityNormalizationError(
            f"第 {t_index} 层密度未归一化: ∫m dz = {mass:.8f}"
        )


def expected_flocking_cost(
    v_candidate: float,
    z: float,
    field: MeanField,
    t_index: int,
    weights: CostWeights,
) -> float:
    """平均场期望集群代价 ∫ m(z')·(v(z') − v)²·K(|z' − z|) dz'（梯形积分）."""
    _check_normalized(field, t_index)
    nodes = field.grid.nodes
    k = kernel(np.abs(nodes - z), weights.gamma, weights.beta)
    integrand = field.density[t_index] * (field.velocity[t_index] - v_candidate) ** 2 * k
    return float(trapezoid(integrand, nodes))


def flocking_moments(
    density_row: np.ndarray,
    velocity_row: np.ndarray,
    kernel_mat: np.ndarray,
    quad_weights: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """逐节点的核加权矩 (I0, I1, I2).

    I_p(z_k) = ∫ m(z')·v(z')^p·K(|z_k − z'|) dz'，于是
    F̄(v, z_k) = I2 − 2·v·I1 + v²·I0。
    """
    wm = quad_weights * density_row
    i0 = kernel_mat @ wm
    i1 = kernel_mat @ (wm * velocity_row)
    i2 = kernel_mat @ (wm * velocity_row ** 2)
    return i0, i1, i2


def crowding_potential(z: float, field: MeanField, t_index: int, weights: CostWeights) -> float:
    """拥挤势 ∫ m(z')·K(|z' − z|) dz'，即 I0(z)；γ 越大，核越尖锐，密度梯度处的势梯度越陡."""
    nodes = field.grid.nodes
    k = kernel(np.abs(nodes - z), weights.gamma, weights.beta)
    return float(trapezoid(field.density[t_index] * k, nodes))


# ── 运行代价 ─────────────────────────────────────────────────────────────────


def running_cost(
    v: float,
    z: float,
    field: MeanField,
    t_index: int,
    weights: CostWeights,
    rate_field: Callable[[float], float],
    tx_power_w: float,
) -> float:
    """瞬时运行代价 w_e·E(v, R(z)) + w_f·F̄(v, z) + w_s·I0(z).

    rate_field 返回 bit/s，能耗项按 rate_unit 换算。
    """
    total = 0.0
    if weights.w_energy > 0:
        rate = cost_rate(rate_field(z), weights)
        total += weights.w_energy * energy_cost(v, rate, weights, tx_power_w)
    if weights.w_flock > 0:
        total += weights.w_flock * expected_flocking_cost(v, z, field, t_index, weights)
    if weights.w_separation > 0:
        total += weights.w_separation * crowding_potential(z, field, t_index, weights)
    return total
