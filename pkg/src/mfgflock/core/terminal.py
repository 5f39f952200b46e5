"""终端输出辅助: ANSI 配色与 PASS/FAIL 标记.

非 TTY（管道、重定向、CI 日志）时不输出转义序列。
"""

import sys


class C:
    """ANSI 转义序列常量."""
    RESET  = "\033[0m"
    BOLD   = "\033[1m"
    DIM    = "\033[2m"
    RED    = "\033[91m"
    GREEN  = "\033[92m"
    YELLOW = "\033[93m"
    CYAN   = "\033[96m"


def c(text: str, *styles: str) -> str:
    """对文本施加样式，非 TTY 时原样返回."""
    if not sys.stdout.isatty():
        return text
    return "".join(styles) + text + C.RESET


def badge(passed: bool) -> str:
    """PASS / FAIL 标记."""
    return c("PASS", C.BOLD, C.GREEN) if passed else c("FAIL", C.BOLD, C.RED)


def converged_badge(converged: bool) -> str:
    return c("收敛", C.GREEN) if converged else c("未收敛", C.YELLOW)


def rule(width: int = 60) -> str:
    return "=" * width
