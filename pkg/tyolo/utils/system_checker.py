"""
System Checker for TYolo
Environment descriptors recorded in benchmark reports and run manifests, plus dependency checks.
"""

import importlib.metadata
import importlib.util
import os
import platform
import sys
from datetime import datetime
from typing import Any, Dict, List, Optional

import cpuinfo
import numpy as np
import psutil
from rich.console import Console

from tyolo import __version__
from tyolo.core.config import BLAS_THREAD_VARIABLES, Settings, get_config
from tyolo.tensor.tensor import get_default_dtype

REQUIRED_PACKAGES = {
    "numpy": "numpy",
    "scipy": "scipy",
    "sklearn": "scikit-learn",
    "pandas": "pandas",
    "cv2": "opencv-python-headless",
    "pydantic": "pydantic",
    "yaml": "pyyaml",
    "structlog": "structlog",
    "click": "click",
    "rich": "rich",
    "psutil": "psutil",
    "cpuinfo": "py-cpuinfo",
    "dotenv": "python-dotenv",
}

_CPU_BRAND: Optional[str] = None


def cpu_brand() -> str:
    """CPU model string; py-cpuinfo is slow, so the lookup is cached per process"""
    global _CPU_BRAND
    if _CPU_BRAND is None:
        try:
            _CPU_BRAND = cpuinfo.get_cpu_info().get("brand_raw") or platform.processor() or "unknown"
        except Exception:
            _CPU_BRAND = platform.processor() or "unknown"
    return _CPU_BRAND


class SystemChecker:
    """Environment descriptors and installation checks"""

    def __init__(self, config: Optional[Settings] = None):
        self.config = config or get_config()
        self.console = Console()
        self.check_results: Dict[str, Dict[str, Any]] = {}

    def blas_threads(self) -> Optional[int]:
        for name in BLAS_THREAD_VARIABLES:
            value = os.environ.get(name)
            if value:
                return int(value)
        return self.config.threads

    def environment(self) -> Dict[str, Any]:
        """Descriptors that identify the machine a timing or a run came from"""
        memory = psutil.virtual_memory()
        return {
            "cpu": cpu_brand(),
            "physical_cores": psutil.cpu_count(logical=False),
            "logical_cores": psutil.cpu_count(logical=True),
            "memory_total_gb": round(memory.total / (1024 ** 3), 2),
            "threads": self.blas_threads(),
            "precision": np.dtype(get_default_dtype()).name,
            "reference_mode": self.config.reference_mode,
            "platform": platform.platform(),
            "python_version": platform.python_version(),
            "numpy_version": np.__version__,
            "tyolo_version": __version__,
            "timestamp": datetime.now().isoformat(timespec="seconds"),
        }

    def check_python_version(self) -> Dict[str, Any]:
        major, minor, micro = sys.version_info[:3]
        current = f"{major}.{minor}.{micro}"
        if (major, minor) >= (3, 9):
            return {"status": "passed", "current": current, "message": f"Python {current} - Compatible"}
        return {"status": "failed", "current": current, "message": f"Python {current} - Unsupported (requires 3.9+)"}

    def check_dependencies(self) -> Dict[str, Any]:
        installed: Dict[str, str] = {}
        missing: List[str] = []
        for module, dist in REQUIRED_PACKAGES.items():
            if importlib.util.find_spec(module) is None:
                missing.append(dist)
                continue
            try:
                installed[dist] = importlib.metadata.version(dist)
            except importlib.metadata.PackageNotFoundError:
                installed[dist] = "unknown"
        if missing:
            return {
                "status": "failed",
                "installed": installed,
                "missing": missing,
                "message": f"Missing required packages: {', '.join(missing)}",
            }
        return {
            "status": "passed",
            "installed": installed,
            "missing": [],
            "message": f"All {len(installed)} required packages installed",
        }

    def check_threads(self) -> Dict[str, Any]:
        threads = self.blas_threads()
        if self.config.reference_mode and threads != 1:
            return {
                "status": "warning",
                "threads": threads,
                "message": "Reference mode requested but BLAS threads are not pinned to 1 "
                "(set TYOLO_THREADS before numpy is imported)",
            }
        return {"status": "passed", "threads": threads, "message": f"BLAS threads: {threads or 'library default'}"}

    def check_all(self) -> bool:
        results = {
            "python_version": self.check_python_version(),
            "dependencies": self.check_dependencies(),
            "threads": self.check_threads(),
        }
        self.check_results = results
        errors = 0
        for name, result in results.items():
            if result["status"] == "failed":
                self.console.print(f"[ERROR] {name}: {result['message']}", style="red")
                errors += 1
            elif result["status"] == "warning":
                self.console.print(f"[WARNING] {name}: {result['message']}", style="yellow")
            else:
                self.console.print(f"[PASSED] {name}: {result['message']}", style="green")
        return errors == 0
