"""版本信息."""

__version__ = "1.1.0"
__author__ = "lbwds"
__license__ = "MIT"
