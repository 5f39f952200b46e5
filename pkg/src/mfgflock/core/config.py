"""场景配置加载与校验.

配置文件为 YAML，顶层七个配置节与模块同名:
channel / dynamics / cost / mfg_solver / agent_sim / metrics / cli。
七个配置节都必须出现；节内各键均有默认值。未知的节或键一律拒绝。
"""

import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

try:
    import yaml
except ImportError:
    # PyYAML 未安装时提供友好提示
    print("错误: 需要 PyYAML。请执行: pip install pyyaml", file=sys.stderr)
    sys.exit(1)

from .errors import ConfigError
from .model import (
    ChannelParams,
    ControllerTag,
    CostWeights,
    FleetSpec,
    Grid,
    SafetyParams,
    SolverSettings,
    WindModel,
)

logger = logging.getLogger(__name__)


# ── 类型转换 ─────────────────────────────────────────────────────────────────
# PyYAML 遵循 YAML 1.1，`1e-4` 这类写法会被读成字符串，此处统一转换。


def _to_float(value: Any) -> float:
    if isinstance(value, bool):
        raise ValueError("应为数值，而不是布尔值")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        return float(value.strip())
    raise ValueError(f"应为数值 (当前 {value!r})")


def _to_int(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError("应为整数，而不是布尔值")
    if isinstance(value, int):
        return value
    number = _to_float(value)
    if not number.is_integer():
        raise ValueError(f"应为整数 (当前 {value!r})")
    return int(number)


def _to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("true", "false"):
        return value.strip().lower() == "true"
    raise ValueError(f"应为 true/false (当前 {value!r})")


def _to_str(value: Any) -> str:
    if not isinstance(value, str):
        raise ValueError(f"应为字符串 (当前 {value!r})")
    return value


def _to_optional_str(value: Any) -> Optional[str]:
    return None if value is None else _to_str(value)


def _to_optional_int_list(value: Any) -> Optional[list[int]]:
    if value is None:
        return None
    if not isinstance(value, list) or not value:
        raise ValueError(f"应为非空整数列表或 null (当前 {value!r})")
    return [_to_int(v) for v in value]


def _to_float_list(value: Any) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ValueError(f"应为非空数值列表 (当前 {value!r})")
    return [_to_float(v) for v in value]


def _to_str_list(value: Any) -> list[str]:
    if not isinstance(value, list) or not value:
        raise ValueError(f"应为非空字符串列表 (当前 {value!r})")
    return [_to_str(v) for v in value]


# ── Schema ───────────────────────────────────────────────────────────────────
# 配置节 → 键 → (转换函数, 默认值)

_DEFAULT_CHANNEL = ChannelParams()
_DEFAULT_WIND = WindModel()
_DEFAULT_WEIGHTS = CostWeights()
_DEFAULT_GRID = Grid()
_DEFAULT_SOLVER = SolverSettings()
_DEFAULT_FLEET = FleetSpec()
_DEFAULT_SAFETY = SafetyParams()

SCHEMA: dict[str, dict[str, tuple[Callable[[Any], Any], Any]]] = {
    "channel": {
        "carrier_freq_ghz": (_to_float, _DEFAULT_CHANNEL.carrier_freq_ghz),
        "tx_power_dbm": (_to_float, _DEFAULT_CHANNEL.tx_power_dbm),
        "noise_density_dbm_hz": (_to_float, _DEFAULT_CHANNEL.noise_density_dbm_hz),
        "total_bandwidth_hz": (_to_float, 20.0e6),
        "per_user_band": (_to_bool, True),
        "bandwidth_hz": (_to_float, _DEFAULT_CHANNEL.bandwidth_hz),
        "shadow_std_db": (_to_float, _DEFAULT_CHANNEL.shadow_std_db),
        "altitude_m": (_to_float, _DEFAULT_CHANNEL.altitude_m),
    },
    "dynamics": {
        "mean_velocity": (_to_float, _DEFAULT_WIND.mean_velocity),
        "volatility": (_to_float, _DEFAULT_WIND.volatility),
    },
    "cost": {
        "w_energy": (_to_float, _DEFAULT_WEIGHTS.w_energy),
        "w_flock": (_to_float, _DEFAULT_WEIGHTS.w_flock),
        "gamma": (_to_float, _DEFAULT_WEIGHTS.gamma),
        "beta": (_to_float, _DEFAULT_WEIGHTS.beta),
        "mass": (_to_float, _DEFAULT_WEIGHTS.mass),
        "fixed_power": (_to_float, _DEFAULT_WEIGHTS.fixed_power),
        "rate_floor": (_to_float, _DEFAULT_WEIGHTS.rate_floor),
        "rate_unit": (_to_float, _DEFAULT_WEIGHTS.rate_unit),
        "w_separation": (_to_float, _DEFAULT_WEIGHTS.w_separation),
    },
    "mfg_solver": {
        "z_min": (_to_float, _DEFAULT_GRID.z_min),
        "z_max": (_to_float, _DEFAULT_GRID.z_max),
        "n_z": (_to_int, _DEFAULT_GRID.n_z),
        "t_horizon": (_to_float, _DEFAULT_GRID.t_horizon),
        "n_t": (_to_int, _DEFAULT_GRID.n_t),
        "v_max": (_to_float, _DEFAULT_SOLVER.v_max),
        "damping": (_to_float, _DEFAULT_SOLVER.damping),
        "tol": (_to_float, _DEFAULT_SOLVER.tol),
        "max_iters": (_to_int, _DEFAULT_SOLVER.max_iters),
        "terminal_value": (_to_float, _DEFAULT_SOLVER.terminal_value),
        "initial_velocity": (_to_float, _DEFAULT_SOLVER.initial_velocity),
        "fpk_scheme": (_to_str, _DEFAULT_SOLVER.fpk_scheme),
    },
    "agent_sim": {
        "n_uavs": (_to_int, _DEFAULT_FLEET.n_uavs),
        "hotspot_center": (_to_float, _DEFAULT_FLEET.hotspot_center),
        "hotspot_width": (_to_float, _DEFAULT_FLEET.hotspot_width),
        "initial_mean": (_to_float, _DEFAULT_FLEET.initial_mean),
        "initial_spread": (_to_float, _DEFAULT_FLEET.initial_spread),
        "initial_spread_kind": (_to_str, _DEFAULT_FLEET.initial_spread_kind),
        "shadow_fading": (_to_bool, _DEFAULT_FLEET.shadow_fading),
        "initial_velocity_std": (_to_float, _DEFAULT_FLEET.initial_velocity_std),
        "seed_start": (_to_int, _DEFAULT_FLEET.seed_start),
        "n_seeds": (_to_int, _DEFAULT_FLEET.n_seeds),
        "seeds": (_to_optional_int_list, _DEFAULT_FLEET.seed_list),
        "controller_tags": (_to_str_list, list(_DEFAULT_FLEET.controller_tags)),
    },
    "metrics": {
        "safe_distance": (_to_float, _DEFAULT_SAFETY.safe_distance),
        "target_collision_prob": (_to_float, _DEFAULT_SAFETY.target_collision_prob),
        "flocking_threshold": (_to_float, 0.1),
        "collision_tolerance": (_to_float, 0.01),
    },
    "cli": {
        "gammas": (_to_float_list, [0.1, 1.0, 10.0]),
        "output_dir": (_to_optional_str, None),
        "jobs": (_to_int, 1),
        "strict": (_to_bool, False),
    },
}


# ── 场景配置 ─────────────────────────────────────────────────────────────────


@dataclass
class ScenarioConfig:
    """一次实验的完整参数集合（已校验、默认值已补全）."""

    channel: ChannelParams = field(default_factory=ChannelParams)
    wind: WindModel = field(default_factory=WindModel)
    weights: CostWeights = field(default_factory=CostWeights)
    grid: Grid = field(default_factory=Grid)
    solver: SolverSettings = field(default_factory=SolverSettings)
    fleet: FleetSpec = field(default_factory=FleetSpec)
    safety: SafetyParams = field(default_factory=SafetyParams)
    total_bandwidth_hz: float = 20.0e6
    per_user_band: bool = True
    flocking_threshold: float = 0.1
    collision_tolerance: float = 0.01
    gammas: list[float] = field(default_factory=lambda: [0.1, 1.0, 10.0])
    output_dir: Optional[str] = None
    jobs: int = 1
    strict: bool = False

    @property
    def hotspot(self) -> tuple[float, float]:
        return self.fleet.hotspot_interval

    def for_run(self, gamma: Optional[float] = None, tag: str = ControllerTag.MFG.value) -> "ScenarioConfig":
        """派生单次求解所用的配置: 覆盖 γ，mfg_we0 基线置 w_e = 0."""
        weights = self.weights
        if gamma is not None:
            weights = dataclasses.replace(weights, gamma=float(gamma))
        if tag == ControllerTag.MFG_WE0.value:
            weights = dataclasses.replace(weights, w_energy=0.0)
        return dataclasses.replace(self, weights=weights)

    def validate(self) -> list[str]:
        errors = []
        errors += self.channel.validate("channel")
        if self.per_user_band and not self.total_bandwidth_hz > 0:
            errors.append(f"channel.total_bandwidth_hz: 必须 > 0 (当前 {self.total_bandwidth_hz})")
        errors += self.wind.validate("dynamics")
        errors += self.weights.validate("cost")
        errors += self.grid.validate("mfg_solver")
        errors += self.solver.validate("mfg_solver")
        errors += self.fleet.validate(self.grid, "agent_sim")
        errors += self.safety.validate("metrics")
        if not self.flocking_threshold > 0:
            errors.append(f"metrics.flocking_threshold: 必须 > 0 (当前 {self.flocking_threshold})")
        if not 0 <= self.collision_tolerance <= 1:
            errors.append(f"metrics.collision_tolerance: 必须在 [0, 1] 内 (当前 {self.collision_tolerance})")
        for g in self.gammas:
            if not g > 0:
                errors.append(f"cli.gammas: 每个 γ 必须 > 0 (当前 {g})")
        if not self.jobs >= 1 and self.jobs != -1:
            errors.append(f"cli.jobs: 必须 ≥ 1 或为 -1 (当前 {self.jobs})")
        return errors


# ── 加载 / 导出 ──────────────────────────────────────────────────────────────


def _raise_if(errors: list[str]) -> None:
    if errors:
        raise ConfigError("配置校验失败:\n  " + "\n  ".join(errors))


def _resolve_section(name: str, raw: Any, errors: list[str]) -> dict[str, Any]:
    spec = SCHEMA[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        errors.append(f"{name}: 应为键值映射 (当前 {type(raw).__name__})")
        raw = {}
    for key in raw:
        if key not in spec:
            errors.append(f"{name}.{key}: 未知配置项 (合法项: {', '.join(spec)})")
    values = {}
    for key, (convert, default) in spec.items():
        if key not in raw:
            values[key] = list(default) if isinstance(default, list) else default
            continue
        try:
            values[key] = convert(raw[key])
        except ValueError as e:
            errors.append(f"{name}.{key}: {e}")
            values[key] = default
    return values


def config_from_dict(raw: Any) -> ScenarioConfig:
    """由已解析的 YAML 数据构造并校验 ScenarioConfig.

    Raises:
        ConfigError: 缺少配置节、未知键、类型错误或约束不满足
    """
    errors: list[str] = []
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        _raise_if([f"顶层应为配置节映射 (当前 {type(raw).__name__})"])

    for name in raw:
        if name not in SCHEMA:
            errors.append(f"{name}: 未知配置节 (合法节: {', '.join(SCHEMA)})")
    for name in SCHEMA:
        if name not in raw:
            errors.append(f"缺少必须的配置节: {name}")
    _raise_if(errors)

    s = {name: _resolve_section(name, raw[name], errors) for name in SCHEMA}
    _raise_if(errors)

    ch, dyn, cost, sol, sim, met, cli = (s[n] for n in SCHEMA)
    bandwidth = ch["bandwidth_hz"]
    if ch["per_user_band"] and sim["n_uavs"] >= 1:
        bandwidth = ch["total_bandwidth_hz"] / sim["n_uavs"]
        explicit = "bandwidth_hz" in (raw["channel"] or {})
        if explicit and not math.isclose(ch["bandwidth_hz"], bandwidth, rel_tol=1e-9):
            _raise_if([
                f"channel.bandwidth_hz: per_user_band 为 true 时每用户带宽由 "
                f"total_bandwidth_hz / n_uavs = {bandwidth:g} Hz 推导，与显式给出的 "
                f"{ch['bandwidth_hz']:g} Hz 冲突（删除该键或设 per_user_band: false）"
            ])
    sim["seed_list"] = sim.pop("seeds")

    config = ScenarioConfig(
        channel=ChannelParams(
            carrier_freq_ghz=ch["carrier_freq_ghz"],
            tx_power_dbm=ch["tx_power_dbm"],
            noise_density_dbm_hz=ch["noise_density_dbm_hz"],
            bandwidth_hz=bandwidth,
            shadow_std_db=ch["shadow_std_db"],
            altitude_m=ch["altitude_m"],
        ),
        wind=WindModel(mean_velocity=dyn["mean_velocity"], volatility=dyn["volatility"]),
        weights=CostWeights(**cost),
        grid=Grid(
            z_min=sol["z_min"], z_max=sol["z_max"], n_z=sol["n_z"],
            t_horizon=sol["t_horizon"], n_t=sol["n_t"],
        ),
        solver=SolverSettings(
            damping=sol["damping"], tol=sol["tol"], max_iters=sol["max_iters"],
            v_max=sol["v_max"], terminal_value=sol["terminal_value"],
            initial_velocity=sol["initial_velocity"], fpk_scheme=sol["fpk_scheme"],
        ),
        fleet=FleetSpec(**sim),
        safety=SafetyParams(
            safe_distance=met["safe_distance"],
            target_collision_prob=met["target_collision_prob"],
        ),
        total_bandwidth_hz=ch["total_bandwidth_hz"],
        per_user_band=ch["per_user_band"],
        flocking_threshold=met["flocking_threshold"],
        collision_tolerance=met["collision_tolerance"],
        gammas=cli["gammas"],
        output_dir=cli["output_dir"],
        jobs=cli["jobs"],
        strict=cli["strict"],
    )
    _raise_if(config.validate())
    _warn_cfl_margin(config)
    return config


def _warn_cfl_margin(config: ScenarioConfig) -> None:
    grid = config.grid
    worst = grid.cfl_number(config.solver.v_max + abs(config.wind.mean_velocity))
    if worst > 1.0:
        logger.warning(
            "最坏情况 CFL=(v_max+|A|)·dt/dz=%.3f > 1 (dt=%g, dz=%g)；"
            "求解时将按实际漂移检查，超限会报错",
            worst, grid.dt, grid.dz,
        )


def load_config(path: str) -> ScenarioConfig:
    """加载并校验场景配置文件.

    Args:
        path: YAML 配置文件路径

    Raises:
        FileNotFoundError: 配置文件不存在
        ConfigError: 配置内容校验失败
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"配置文件不存在: {path}")

    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"配置文件解析失败: {path}\n  {e}") from e

    config = config_from_dict(raw)
    logger.debug("已加载配置 %s (hash=%s)", path, config_hash(config)[:12])
    return config


def dump_config(config: ScenarioConfig) -> dict[str, dict[str, Any]]:
    """导出为与配置文件同结构的字典（所有默认值均已展开）."""
    ch, fl, gr, so = config.channel, config.fleet, config.grid, config.solver
    return {
        "channel": {
            "carrier_freq_ghz": ch.carrier_freq_ghz,
            "tx_power_dbm": ch.tx_power_dbm,
            "noise_density_dbm_hz": ch.noise_density_dbm_hz,
            "total_bandwidth_hz": config.total_bandwidth_hz,
            "per_user_band": config.per_user_band,
            "bandwidth_hz": ch.bandwidth_hz,
            "shadow_std_db": ch.shadow_std_db,
            "altitude_m": ch.altitude_m,
        },
        "dynamics": dataclasses.asdict(config.wind),
        "cost": dataclasses.asdict(config.weights),
        "mfg_solver": {
            "z_min": gr.z_min,
            "z_max": gr.z_max,
            "n_z": gr.n_z,
            "t_horizon": gr.t_horizon,
            "n_t": gr.n_t,
            "v_max": so.v_max,
            "damping": so.damping,
            "tol": so.tol,
            "max_iters": so.max_iters,
            "terminal_value": so.terminal_value,
            "initial_velocity": so.initial_velocity,
            "fpk_scheme": so.fpk_scheme,
        },
        "agent_sim": {
            "n_uavs": fl.n_uavs,
            "hotspot_center": fl.hotspot_center,
            "hotspot_width": fl.hotspot_width,
            "initial_mean": fl.initial_mean,
            "initial_spread": fl.initial_spread,
            "initial_spread_kind": fl.initial_spread_kind,
            "shadow_fading": fl.shadow_fading,
            "initial_velocity_std": fl.initial_velocity_std,
            "seed_start": fl.seed_start,
            "n_seeds": fl.n_seeds,
            "seeds": None if fl.seed_list is None else list(fl.seed_list),
            "controller_tags": list(fl.controller_tags),
        },
        "metrics": {
            "safe_distance": config.safety.safe_distance,
            "target_collision_prob": config.safety.target_collision_prob,
            "flocking_threshold": config.flocking_threshold,
            "collision_tolerance": config.collision_tolerance,
        },
        "cli": {
            "gammas": list(config.gammas),
            "output_dir": config.output_dir,
            "jobs": config.jobs,
            "strict": config.strict,
        },
    }


def save_config(path: str, config: ScenarioConfig) -> None:
    """写出配置回显文件（可被 load_config 原样重新加载）."""
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(dump_config(config), f, allow_unicode=True, sort_keys=False)


def config_hash(config: ScenarioConfig) -> str:
    """配置的 SHA-256 摘要（规范化 JSON）."""
    canonical = json.dumps(dump_config(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
