"""
Evaluation report and its file forms.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, Field, model_validator

from tyolo.metrics.average_precision import RECALL_POINTS, APResult

FPS_TOLERANCE = 1e-6


class EvalReport(BaseModel):
    """Accuracy and timing of one model on one test split"""

    per_class_ap: Dict[str, List[float]] = Field(
        default_factory=dict, description="class name -> AP at each IoU threshold"
    )
    thresholds: List[float] = Field(default_factory=list)
    map50: float = Field(0.0, ge=0.0, le=1.0)
    map50_95: float = Field(0.0, ge=0.0, le=1.0)
    fps: Optional[float] = Field(None, gt=0)
    t_model_ms: Optional[float] = Field(None, ge=0)
    t_nms_ms: Optional[float] = Field(None, ge=0)
    num_images: int = 0
    environment: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_invariants(self) -> "EvalReport":
        for name, values in self.per_class_ap.items():
            if any(not 0.0 <= v <= 1.0 for v in values):
                raise ValueError(f"AP of class {name!r} leaves [0, 1]")
        if self.map50_95 > self.map50 + 1e-9:
            raise ValueError(f"map50_95 {self.map50_95} exceeds map50 {self.map50}")
        if self.fps is not None and self.t_model_ms is not None and self.t_nms_ms is not None:
            expected = 1000.0 / (self.t_model_ms + self.t_nms_ms)
            if abs(self.fps - expected) > max(FPS_TOLERANCE, 1e-3 * expected):
                raise ValueError(f"fps {self.fps} disagrees with latencies ({expected:.3f})")
        return self

    @classmethod
    def from_ap_result(cls, result: APResult, class_names: List[str], num_images: int = 0) -> "EvalReport":
        per_class = {
            class_names[c] if c < len(class_names) else str(c): values
            for c, values in result.per_class().items()
        }
        return cls(
            per_class_ap=per_class,
            thresholds=[float(t) for t in result.thresholds],
            map50=result.map50,
            map50_95=result.map50_95,
            num_images=num_images,
        )

    def with_timing(self, t_model_ms: float, t_nms_ms: float, environment: Optional[Dict[str, Any]] = None) -> "EvalReport":
        return self.model_copy(
            update={
                "t_model_ms": t_model_ms,
                "t_nms_ms": t_nms_ms,
                "fps": 1000.0 / (t_model_ms + t_nms_ms),
                "environment": environment or self.environment,
            }
        )

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.model_dump(mode="json"), indent=2))
        return path

    @classmethod
    def load(cls, path: Path) -> "EvalReport":
        return cls.model_validate_json(Path(path).read_text())


def pr_curves_frame(result: APResult, class_names: List[str]) -> pd.DataFrame:
    """Interpolated precision at each of the 101 recall points, one row per class, threshold and point"""
    rows = []
    for (cls, thr), curve in sorted(result.curves.items()):
        name = class_names[cls] if cls < len(class_names) else str(cls)
        for recall, precision in zip(RECALL_POINTS, curve.interpolated):
            rows.append(
                {"class": name, "iou_threshold": thr, "recall": round(float(recall), 2), "precision": float(precision)}
            )
    return pd.DataFrame(rows, columns=["class", "iou_threshold", "recall", "precision"])


def write_pr_curves(result: APResult, class_names: List[str], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pr_curves_frame(result, class_names).to_csv(path, index=False)
    return path
