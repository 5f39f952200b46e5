"""受风扰的 UAV 随机动力学 dz = (v + A)dt + η_A dW.

采用 Euler-Maruyama 离散，空间域边界做镜像反射，与 FPK 的零通量边界一致。
"""

import logging
from typing import Optional

import numpy as np

from .errors import SchemeError
from .model import UAVState, WindModel

logger = logging.getLogger(__name__)


def drift(velocity, wind: WindModel):
    """漂移项 v + A."""
    return velocity + wind.mean_velocity


def reflect(x, lo: float, hi: float):
    """把位置镜像反射回 [lo, hi]，支持跨越多个区间长度的越界."""
    x = np.asarray(x, dtype=float)
    length = hi - lo
    if length <= 0:
        return np.full_like(x, lo)
    # 以 2L 为周期折叠
    y = np.mod(x - lo, 2.0 * length)
    y = np.where(y > length, 2.0 * length - y, y)
    out = lo + y
    return float(out) if out.ndim == 0 else out


def em_step(
    state: UAVState,
    wind: WindModel,
    dt: float,
    noise_increment,
    domain: Optional[tuple[float, float]] = (0.0, 300.0),
) -> UAVState:
    """Euler-Maruyama 单步.

    Args:
        state: 当前状态（位置与速度可为数组）
        wind: 风扰模型
        dt: 时间步长 (s)
        noise_increment: 标准正态样本，形状与位置一致
        domain: 反射边界 (lo, hi)；None 表示无界

    Returns:
        新状态；速度保持不变（由控制器给定）
    """
    if not dt > 0:
        raise ValueError(f"dt 必须 > 0 (当前 {dt})")
    z = np.asarray(state.position, dtype=float)
    v = np.asarray(state.velocity, dtype=float)
    n = np.asarray(noise_increment, dtype=float)
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(v)) and np.all(np.isfinite(n))):
        raise SchemeError("em_step 输入包含非有限值")

    z_new = z + drift(v, wind) * dt + wind.volatility * np.sqrt(dt) * n
    if domain is not None:
        z_new = reflect(z_new, *domain)
    if np.ndim(z_new) == 0:
        z_new = float(z_new)
    return UAVState(position=z_new, velocity=state.velocity)


def simulate_paths(
    z0,
    velocity: float,
    wind: WindModel,
    dt: float,
    n_steps: int,
    n_paths: int,
    rng: np.random.Generator,
    domain: Optional[tuple[float, float]] = None,
) -> np.ndarray:
    """常速控制下的集合路径模拟，返回形状 (n_paths, n_steps + 1) 的位置矩阵."""
    paths = np.empty((n_paths, n_steps + 1))
    state = UAVState(position=np.full(n_paths, z0, dtype=float), velocity=velocity)
    paths[:, 0] = state.position
    for k in range(n_steps):
        state = em_step(state, wind, dt, rng.standard_normal(n_paths), domain=domain)
        paths[:, k + 1] = state.position
    return paths
