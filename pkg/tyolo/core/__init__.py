"""
Core settings, logging and errors.
"""

from tyolo.core.config import Settings, get_config, reload_config
from tyolo.core.errors import (
    CheckpointError,
    DatasetValidationError,
    ShapeError,
    StateMismatchError,
    TrainingDivergedError,
    TYoloError,
    ValidationIssue,
)
from tyolo.core.logging import configure_logging, get_logger

__all__ = [
    "Settings",
    "get_config",
    "reload_config",
    "configure_logging",
    "get_logger",
    "TYoloError",
    "ShapeError",
    "StateMismatchError",
    "CheckpointError",
    "DatasetValidationError",
    "ValidationIssue",
    "TrainingDivergedError",
]
