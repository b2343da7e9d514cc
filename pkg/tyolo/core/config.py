"""
Process Settings for TYolo
Environment-driven settings shared by the CLI, the trainer and the benchmark.
"""

import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Optional

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

BLAS_THREAD_VARIABLES = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


class Environment(Enum):
    """Deployment environments"""
    DEVELOPMENT = "development"
    TESTING = "testing"
    PRODUCTION = "production"


class Precision(str, Enum):
    """Runtime element types supported by the tensor core"""
    SINGLE = "float32"
    DOUBLE = "float64"

    @classmethod
    def _missing_(cls, value):
        aliases = {"single": cls.SINGLE, "double": cls.DOUBLE}
        return aliases.get(str(value).lower())


@dataclass
class Settings:
    """Process-wide settings read from the environment"""
    environment: Environment = Environment.DEVELOPMENT
    debug: bool = False
    log_level: str = "INFO"
    log_json: bool = False
    threads: Optional[int] = None
    reference_mode: bool = False
    output_root: Path = field(default_factory=lambda: Path("runs"))
    precision: Precision = Precision.SINGLE

    def __post_init__(self):
        """Apply environment overrides"""
        self.environment = Environment(os.getenv("TYOLO_ENVIRONMENT", self.environment.value))
        self.debug = os.getenv("TYOLO_DEBUG", "false").lower() == "true"
        self.log_level = os.getenv("TYOLO_LOG_LEVEL", "DEBUG" if self.debug else self.log_level)
        self.log_json = os.getenv("TYOLO_LOG_JSON", "false").lower() == "true"
        self.reference_mode = os.getenv("TYOLO_REFERENCE_MODE", "false").lower() == "true"
        self.output_root = Path(os.getenv("TYOLO_OUTPUT_ROOT", str(self.output_root)))
        self.precision = Precision(os.getenv("TYOLO_PRECISION", self.precision.value))

        threads = os.getenv("TYOLO_THREADS")
        if threads:
            self.threads = int(threads)
        if self.reference_mode:
            # Reference mode pins BLAS to one thread so reductions are reproducible
            self.threads = 1

    @property
    def is_development(self) -> bool:
        """Check if running in development mode"""
        return self.environment == Environment.DEVELOPMENT

    @property
    def is_testing(self) -> bool:
        """Check if running under the test suite"""
        return self.environment == Environment.TESTING

    def thread_environment(self) -> Dict[str, str]:
        """BLAS thread variables implied by these settings"""
        if self.threads is None:
            return {}
        return {name: str(self.threads) for name in BLAS_THREAD_VARIABLES}

    def apply_thread_limits(self) -> None:
        """Export BLAS thread limits; only effective before numpy is first imported"""
        for name, value in self.thread_environment().items():
            os.environ.setdefault(name, value)


# Global settings instance
_config: Optional[Settings] = None


def get_config() -> Settings:
    """Get the global settings instance"""
    global _config
    if _config is None:
        _config = Settings()
    return _config


def reload_config() -> Settings:
    """Reload settings from the environment"""
    global _config
    load_dotenv(override=True)
    _config = Settings()
    return _config
