"""3GPP 城区微蜂窝（UMi）空地信道模型.

所有函数均为纯函数，接受标量或 numpy 数组（逐元素广播）。
距离单位 m，频率单位 GHz，路径损耗单位 dB。
"""

import logging
from typing import Optional

import numpy as np

from .errors import ChannelDomainError
from .model import ALTITUDE_MAX_M, ALTITUDE_MIN_M, ChannelParams, LinkState

logger = logging.getLogger(__name__)


# ── 单位换算 ─────────────────────────────────────────────────────────────────


def dbm_to_watt(dbm):
    """dBm → W: 10^((x − 30) / 10)."""
    return np.power(10.0, (np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(watt):
    """W → dBm."""
    return 10.0 * np.log10(np.asarray(watt, dtype=float)) + 30.0


# ── 输入校验 ─────────────────────────────────────────────────────────────────


def _check_altitude(h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if np.any(~np.isfinite(h)) or np.any(h < ALTITUDE_MIN_M) or np.any(h > ALTITUDE_MAX_M):
        raise ChannelDomainError(
            f"高度 h={h} 超出 3GPP UAV 模型有效范围 "
            f"[{ALTITUDE_MIN_M}, {ALTITUDE_MAX_M}] m"
        )
    return h


def _check_distance(d3d) -> np.ndarray:
    d3d = np.asarray(d3d, dtype=float)
    if np.any(~np.isfinite(d3d)) or np.any(d3d <= 0):
        raise ChannelDomainError(f"三维距离必须 > 0 (当前 d3d={d3d})")
    return d3d


def _scalar_or_array(x: np.ndarray):
    return float(x) if np.ndim(x) == 0 else x


# ── LOS 概率与路径损耗 ────────────────────────────────────────────────────────


def los_breakpoints(h):
    """返回 (d_o, p1)."""
    h = _check_altitude(h)
    log_h = np.log10(h)
    d_o = np.maximum(294.05 * log_h - 432.94, 18.0)
    p1 = 233.98 * log_h - 0.95
    return d_o, p1


def los_probability(h, d2d):
    """LOS 概率 P_LOS(h, d2d)，d2d ≤ d_o 时为 1，结果截断到 [0, 1]."""
    d2d = np.asarray(d2d, dtype=float)
    if np.any(d2d < 0):
        raise ChannelDomainError(f"地面距离必须 ≥ 0 (当前 d2d={d2d})")
    d_o, p1 = los_breakpoints(h)
    # r ≤ d_o 的分支取 1；此处避免除零
    r = np.maximum(d2d, 1e-12)
    far = d_o / r + np.exp(-r / p1) * (1.0 - d_o / r)
    p = np.where(d2d <= d_o, 1.0, far)
    return _scalar_or_array(np.clip(p, 0.0, 1.0))


def path_loss_los(h, d3d, f_ghz):
    """LOS 路径损耗 (dB)."""
    h = _check_altitude(h)
    d3d = _check_distance(d3d)
    loss = 30.9 + (22.25 - 0.5 * np.log10(h)) * np.log10(d3d) + 20.0 * np.log10(f_ghz)
    return _scalar_or_array(loss)


def path_loss_nlos(h, d3d, f_ghz):
    """NLOS 路径损耗 (dB)，按模型定义取与 LOS 损耗的较大者."""
    h = _check_altitude(h)
    d3d = _check_distance(d3d)
    nlos = 32.4 + (43.2 - 7.6 * np.log10(h)) * np.log10(d3d) + 20.0 * np.log10(f_ghz)
    return _scalar_or_array(np.maximum(path_loss_los(h, d3d, f_ghz), nlos))


def _d2d_from_d3d(h, d3d) -> np.ndarray:
    return np.sqrt(np.maximum(np.asarray(d3d, dtype=float) ** 2 - np.asarray(h, dtype=float) ** 2, 0.0))


def expected_path_loss_linear(h, d3d, f_ghz):
    """按 LOS 概率加权的线性信道增益 ∈ (0, 1]."""
    p = los_probability(h, _d2d_from_d3d(h, d3d))
    g_los = np.power(10.0, -np.asarray(path_loss_los(h, d3d, f_ghz)) / 10.0)
    g_nlos = np.power(10.0, -np.asarray(path_loss_nlos(h, d3d, f_ghz)) / 10.0)
    return _scalar_or_array(np.asarray(p * g_los + (1.0 - p) * g_nlos))


# ── 速率 ─────────────────────────────────────────────────────────────────────


def snr(gain_linear, params: ChannelParams, fading_g=1.0):
    """接收信噪比（线性）."""
    gain_linear = np.asarray(gain_linear, dtype=float)
    noise_w = params.noise_density_w_hz * params.bandwidth_hz
    return fading_g * params.tx_power_w * gain_linear / noise_w


def downlink_rate(gain_linear, params: ChannelParams, fading_g=1.0):
    """下行速率 B·log2(1 + g·P_u·gain / (N_o·B)) (bit/s)."""
    gain_linear = np.asarray(gain_linear, dtype=float)
    fading_g = np.asarray(fading_g, dtype=float)
    if np.any(gain_linear < 0) or np.any(fading_g < 0):
        raise ChannelDomainError("信道增益与衰落系数必须 ≥ 0")
    rate = params.bandwidth_hz * np.log2(1.0 + snr(gain_linear, params, fading_g))
    return _scalar_or_array(rate)


# ── 随机信道状态 ──────────────────────────────────────────────────────────────


def sample_link_state(p_los: float, u: float) -> LinkState:
    """u < p_los 时为 LOS."""
    if not 0.0 <= p_los <= 1.0:
        raise ChannelDomainError(f"LOS 概率必须在 [0, 1] 内 (当前 {p_los})")
    return LinkState.LOS if u < p_los else LinkState.NLOS


def sample_channel_gain(
    h,
    d3d,
    f_ghz: float,
    rng: np.random.Generator,
    shadow_std_db: float = 8.0,
    d2d: Optional[np.ndarray] = None,
) -> np.ndarray:
    """采样一次信道实现: LOS/NLOS 状态 + 对数正态阴影衰落.

    Args:
        h: UAV 高度 (m)
        d3d: 三维距离 (m)，标量或数组
        f_ghz: 载频 (GHz)
        rng: numpy 随机数生成器
        shadow_std_db: 阴影衰落标准差 (dB)
        d2d: 地面距离；缺省时由 d3d 与 h 反推

    Returns:
        线性信道增益数组，形状与 d3d 相同
    """
    d3d = np.atleast_1d(np.asarray(d3d, dtype=float))
    if d2d is None:
        d2d = _d2d_from_d3d(h, d3d)
    p = np.atleast_1d(los_probability(h, d2d))
    is_los = rng.random(d3d.shape) < p
    loss_db = np.where(
        is_los,
        np.atleast_1d(path_loss_los(h, d3d, f_ghz)),
        np.atleast_1d(path_loss_nlos(h, d3d, f_ghz)),
    )
    if shadow_std_db > 0:
        loss_db = loss_db + rng.normal(0.0, shadow_std_db, size=d3d.shape)
    return np.power(10.0, -loss_db / 10.0)


def expected_rate_at(z, y, params: ChannelParams):
    """UAV 位于 z、用户位于 y 时的期望速率 (bit/s)，g = 1."""
    d3d = np.hypot(np.asarray(z, dtype=float) - np.asarray(y, dtype=float), params.altitude_m)
    gain = expected_path_loss_linear(params.altitude_m, d3d, params.carrier_freq_ghz)
    return downlink_rate(gain, params)
