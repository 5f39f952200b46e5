"""面向实验结果的统计量.

碰撞比例不计自身配对并按 N − 1 归一化，因此完全无碰撞的机群报告恰为 0。
"""

import logging
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.spatial.distance import cdist

from .model import FleetTrajectory, Grid, MeanField

logger = logging.getLogger(__name__)


# ── 碰撞 ─────────────────────────────────────────────────────────────────────


def collision_fraction(positions, safe_distance: float) -> float:
    """瞬时碰撞比例: 对 i 取平均的 (1/(N−1))·Σ_{j≠i} 1(|z_i − z_j| < d_s)."""
    z = np.asarray(positions, dtype=float).reshape(-1, 1)
    n = len(z)
    if n < 2:
        return 0.0
    close = cdist(z, z) < safe_distance
    np.fill_diagonal(close, False)
    return float(close.sum() / (n * (n - 1)))


def collision_fraction_series(traj: FleetTrajectory, safe_distance: float) -> np.ndarray:
    return np.array([collision_fraction(traj.positions[:, k], safe_distance) for k in range(traj.n_levels)])


def empirical_collision_probability(traj: FleetTrajectory, safe_distance: float) -> float:
    """各记录时刻碰撞比例的时间平均."""
    return float(np.mean(collision_fraction_series(traj, safe_distance)))


def collision_free_onset(series: np.ndarray, times: np.ndarray, tolerance: float = 0.0) -> Optional[float]:
    """碰撞比例此后一直 ≤ tolerance 的最早时刻；从未满足返回 None."""
    return _hold_onset(np.asarray(series) <= tolerance, times)


def mean_field_collision_probability(density_row: np.ndarray, grid: Grid, safe_distance: float) -> float:
    """两架独立地按 m 分布的 UAV 距离小于 d_s 的概率 ∫∫ m(z)·m(z')·1(|z − z'| < d_s) dz dz'.

    这是大 N 下碰撞比例的极限；即便密度已均匀铺满整个空间域，它也不低于约 2·d_s/L。
    """
    wm = grid.quadrature_weights() * np.asarray(density_row, dtype=float)
    close = np.abs(grid.nodes[:, None] - grid.nodes[None, :]) < safe_distance
    return float(wm @ close @ wm)


def mean_field_collision_series(field: MeanField, safe_distance: float) -> np.ndarray:
    return np.array([
        mean_field_collision_probability(row, field.grid, safe_distance) for row in field.density
    ])


# ── 能耗 ─────────────────────────────────────────────────────────────────────


def energy_per_rate_series(traj: FleetTrajectory) -> np.ndarray:
    """逐时刻的机群平均能耗/比特 (J/bit)."""
    return traj.energy_per_rate.mean(axis=0)


def steady_state_mean(series) -> float:
    """最后四分之一时间段的平均值."""
    series = np.asarray(series, dtype=float)
    start = (3 * len(series)) // 4
    return float(np.mean(series[start:]))


def saving_percent(proposed: float, baseline: float) -> float:
    """相对基线节省的百分比."""
    if baseline == 0:
        return 0.0
    return float(100.0 * (baseline - proposed) / baseline)


# ── 集群 ─────────────────────────────────────────────────────────────────────


def _hold_onset(ok: np.ndarray, times: np.ndarray) -> Optional[float]:
    """ok 从某时刻起保持为 True 直到结束，返回该时刻."""
    if len(ok) == 0 or not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    first = 0 if len(bad) == 0 else bad[-1] + 1
    return float(times[first])


def velocity_spread(source: FleetTrajectory | MeanField) -> np.ndarray:
    """逐时刻的速度离散度.

    轨迹: 机群速度标准差；平均场: 以密度为权重的 v*(·, t) 标准差。
    """
    if isinstance(source, MeanField):
        w = source.grid.quadrature_weights()[None, :] * source.density
        w = w / w.sum(axis=1, keepdims=True)
        mean = (w * source.velocity).sum(axis=1)
        var = (w * (source.velocity - mean[:, None]) ** 2).sum(axis=1)
        return np.sqrt(np.maximum(var, 0.0))
    return source.velocities.std(axis=0)


def flocking_time(source: FleetTrajectory | MeanField, threshold: float = 0.1) -> Optional[float]:
    """速度离散度此后一直低于阈值的最早时刻 (s)；从未满足返回 None."""
    times = source.grid.times if isinstance(source, MeanField) else source.times
    return _hold_onset(velocity_spread(source) < threshold, times)


# ── 密度 ─────────────────────────────────────────────────────────────────────


def trajectory_histogram(positions: np.ndarray, grid: Grid) -> np.ndarray:
    """最近节点沉积后除以梯形权重，使每行积分恰为 1.

    Args:
        positions: (N, L) 位置矩阵
        grid: 空间网格

    Returns:
        (L, n_z) 密度矩阵
    """
    positions = np.asarray(positions, dtype=float)
    idx = np.clip(np.rint((positions - grid.z_min) / grid.dz).astype(int), 0, grid.n_z - 1)
    n, levels = positions.shape
    counts = np.zeros((levels, grid.n_z))
    for k in range(levels):
        counts[k] = np.bincount(idx[:, k], minlength=grid.n_z)
    return counts / n / grid.quadrature_weights()[None, :]


def density_heatmap(source: FleetTrajectory | MeanField, grid: Optional[Grid] = None) -> np.ndarray:
    """时间 × 空间的密度矩阵: 平均场原样返回，轨迹按网格直方图化."""
    if isinstance(source, MeanField):
        return source.density
    if grid is None:
        raise ValueError("轨迹热力图需要提供空间网格")
    return trajectory_histogram(source.positions, grid)


def heatmap_row_masses(heatmap: np.ndarray, grid: Grid) -> np.ndarray:
    return trapezoid(heatmap, grid.nodes, axis=1)


def _row_quantile(row: np.ndarray, nodes: np.ndarray, weights: np.ndarray, q: float) -> float:
    cdf = np.cumsum(row * weights)
    cdf = cdf / cdf[-1]
    return float(np.interp(q, cdf, nodes))


def interquartile_width(heatmap: np.ndarray, grid: Grid) -> np.ndarray:
    """逐行四分位距 (m)."""
    w = grid.quadrature_weights()
    nodes = grid.nodes
    return np.array([
        _row_quantile(row, nodes, w, 0.75) - _row_quantile(row, nodes, w, 0.25)
        for row in heatmap
    ])


def spreading_onset_time(heatmap: np.ndarray, grid: Grid, factor: float = 2.0) -> Optional[float]:
    """四分位距首次超过初始值 factor 倍的时刻；从未超过返回 None."""
    iqr = interquartile_width(heatmap, grid)
    hit = np.flatnonzero(iqr > factor * iqr[0])
    return None if len(hit) == 0 else float(grid.times[hit[0]])


def l1_density_distance(a: np.ndarray, b: np.ndarray, grid: Grid) -> np.ndarray:
    """两密度矩阵逐行 L1 距离 ∫|a − b| dz."""
    return trapezoid(np.abs(np.asarray(a) - np.asarray(b)), grid.nodes, axis=-1)
