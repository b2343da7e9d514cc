"""
Exception hierarchy shared across the package.
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional


class TYoloError(Exception):
    """Base class for all package errors"""

    def details(self) -> Dict[str, Any]:
        return {}

    def to_report(self) -> Dict[str, Any]:
        """Machine-readable error report"""
        return {"error": type(self).__name__, "message": str(self), "details": self.details()}


class ShapeError(TYoloError, ValueError):
    """Tensor dimensions do not line up"""


class StateMismatchError(TYoloError, ValueError):
    """A temporal state does not belong to this model or resolution"""


class CheckpointError(TYoloError):
    """Checkpoint container is malformed or incompatible"""


@dataclass
class ValidationIssue:
    """One problem found while validating a dataset"""
    path: str
    message: str
    line: Optional[int] = None

    def __str__(self) -> str:
        location = f"{self.path}:{self.line}" if self.line is not None else self.path
        return f"{location}: {self.message}"


class DatasetValidationError(TYoloError):
    """Dataset failed validation; carries every issue found"""

    def __init__(self, issues: List[ValidationIssue]):
        self.issues = list(issues)
        shown = "\n".join(f"  - {issue}" for issue in self.issues[:20])
        more = f"\n  ... and {len(self.issues) - 20} more" if len(self.issues) > 20 else ""
        super().__init__(f"{len(self.issues)} dataset validation error(s):\n{shown}{more}")

    def details(self) -> Dict[str, Any]:
        return {"issues": [asdict(issue) for issue in self.issues]}


class TrainingDivergedError(TYoloError):
    """Loss became non-finite during training"""

    def __init__(self, message: str, diagnostic: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}

    def details(self) -> Dict[str, Any]:
        return dict(self.diagnostic)
