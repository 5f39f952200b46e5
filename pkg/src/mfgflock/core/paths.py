"""公共路径工具 — 输出根目录与运行目录的解析."""

import os
from datetime import datetime, timezone
from typing import Optional

# 覆盖默认输出根目录的环境变量
OUTPUT_ROOT_ENV = "MFGFLOCK_OUTPUT_ROOT"


def get_data_dir() -> str:
    """数据目录: $XDG_DATA_HOME/mfgflock (默认 ~/.local/share/mfgflock)."""
    base = os.environ.get("XDG_DATA_HOME", os.path.join(os.path.expanduser("~"), ".local", "share"))
    return os.path.join(base, "mfgflock")


def get_output_root(override: Optional[str] = None, configured: Optional[str] = None) -> str:
    """输出根目录.

    优先级: --out 参数 > 配置文件 cli.output_dir > $MFGFLOCK_OUTPUT_ROOT > $XDG_DATA_HOME/mfgflock/runs
    """
    for candidate in (override, configured, os.environ.get(OUTPUT_ROOT_ENV)):
        if candidate:
            return os.path.abspath(os.path.expanduser(candidate))
    return os.path.join(get_data_dir(), "runs")


def run_dir_name(config_digest: str, now: Optional[datetime] = None) -> str:
    """运行目录名: <UTC 时间戳>_<配置摘要前 12 位>."""
    now = now or datetime.now(timezone.utc)
    return f"{now.strftime('%Y%m%dT%H%M%SZ')}_{config_digest[:12]}"


def make_run_dir(root: str, config_digest: str, now: Optional[datetime] = None) -> str:
    """创建并返回本次运行的输出目录."""
    path = os.path.join(root, run_dir_name(config_digest, now))
    os.makedirs(path, exist_ok=True)
    return path
