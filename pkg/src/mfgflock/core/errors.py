"""异常类型定义.

所有异常均继承自内置异常（ValueError / ArithmeticError），
调用方可以只捕获内置类型，也可以按具体子类区分处理。
"""


class MfgFlockError(Exception):
    """mfgflock 所有异常的基类."""


class ConfigError(MfgFlockError, ValueError):
    """配置校验失败（键路径 + 约束说明）."""


class CFLError(ConfigError):
    """时间步长违反 CFL 条件."""

    def __init__(self, dt: float, dz: float, speed: float, where: str = ""):
        self.dt = dt
        self.dz = dz
        self.speed = speed
        cfl = speed * dt / dz if dz > 0 else float("inf")
        place = f" ({where})" if where else ""
        super().__init__(
            f"CFL 条件不满足{place}: dt={dt:g} s, dz={dz:g} m, "
            f"max|v+A|={speed:g} m/s, CFL={cfl:.3f} > 1。请减小 dt（增大 n_t）或减小 v_max"
        )


class ChannelDomainError(MfgFlockError, ValueError):
    """信道模型输入超出 3GPP 模型有效范围."""


class DeadLinkError(MfgFlockError, ValueError):
    """下行速率 ≤ 0，能耗/比特无定义."""


class DensityNormalizationError(MfgFlockError, ValueError):
    """密度未归一化."""


class SchemeError(MfgFlockError, ArithmeticError):
    """数值格式失效（负密度、非有限值等）."""
