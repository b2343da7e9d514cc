"""
Utilities: environment descriptors and dependency checks.
"""

from tyolo.utils.system_checker import SystemChecker

__all__ = ["SystemChecker"]
