"""
Detector configuration.
"""

import math
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from tyolo.temporal.state import TemporalKind


class Variant(str, Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


CHANNEL_PLANS: Dict[Variant, Tuple[int, int, int]] = {
    Variant.SMALL: (128, 256, 512),
    Variant.MEDIUM: (192, 384, 768),
    Variant.LARGE: (256, 512, 1024),
}

# (w, h) pixel anchors per scale at a 640 input
DEFAULT_ANCHORS_640: Tuple[Tuple[Tuple[float, float], ...], ...] = (
    ((10, 13), (16, 30), (33, 23)),
    ((30, 61), (62, 45), (59, 119)),
    ((116, 90), (156, 198), (373, 326)),
)

STRIDES = (8, 16, 32)
DEFAULT_CLASSES = ["hand", "gun", "phone"]


def make_divisible(value: float, divisor: int = 4) -> int:
    return max(divisor, int(math.ceil(value / divisor) * divisor))


class DetectorConfig(BaseModel):
    """Variant, input geometry, temporal module and anchor set of a detector"""

    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    variant: Variant = Variant.SMALL
    channels: Optional[Tuple[int, int, int]] = Field(
        None, description="(c3, c4, c5); defaults to the variant's channel plan"
    )
    input_size: int = Field(640, gt=0, description="Square input side in pixels")
    seq_len: int = Field(2, ge=1, description="Frames per training clip")
    temporal_kind: TemporalKind = TemporalKind.QRNN
    anchors: Optional[List[List[Tuple[float, float]]]] = Field(
        None, description="3 scales x 3 (w, h) anchors in pixels; defaults scale with input_size"
    )
    strides: Tuple[int, int, int] = STRIDES
    num_classes: int = Field(3, ge=1)
    class_names: Optional[List[str]] = None
    depth_multiple: float = Field(0.33, gt=0)
    width_multiple: float = Field(1.0, gt=0, le=1.0)
    candidate_activation: Literal["sigmoid", "tanh"] = "sigmoid"
    seed: int = 0

    @field_validator("input_size")
    @classmethod
    def _divisible_by_32(cls, value: int) -> int:
        if value % 32:
            raise ValueError(f"input_size must be divisible by 32, got {value}")
        return value

    @field_validator("strides")
    @classmethod
    def _fixed_strides(cls, value: Tuple[int, int, int]) -> Tuple[int, int, int]:
        if tuple(value) != STRIDES:
            raise ValueError(f"strides must be {STRIDES}")
        return value

    @model_validator(mode="after")
    def _fill_and_check(self) -> "DetectorConfig":
        if self.channels is None:
            self.channels = CHANNEL_PLANS[self.variant]
        c3, c4, c5 = self.channels
        if not c3 < c4 < c5:
            raise ValueError(f"channels must be strictly increasing across scales, got {self.channels}")
        if self.anchors is not None:
            if len(self.anchors) != 3 or any(len(scale) != 3 for scale in self.anchors):
                raise ValueError("anchors must hold exactly 3 (w, h) pairs for each of 3 scales")
            if any(w <= 0 or h <= 0 for scale in self.anchors for w, h in scale):
                raise ValueError("anchors must be positive")
        if self.class_names is None:
            self.class_names = (
                list(DEFAULT_CLASSES)
                if self.num_classes == len(DEFAULT_CLASSES)
                else [f"class{i}" for i in range(self.num_classes)]
            )
        if len(self.class_names) != self.num_classes:
            raise ValueError(
                f"class_names has {len(self.class_names)} entries for num_classes={self.num_classes}"
            )
        return self

    @property
    def is_temporal(self) -> bool:
        return self.temporal_kind != TemporalKind.NONE

    @property
    def outputs_per_anchor(self) -> int:
        return 5 + self.num_classes

    @property
    def effective_channels(self) -> Tuple[int, int, int]:
        """Channel plan after width scaling (identical to channels at width 1.0)"""
        if self.width_multiple == 1.0:
            return tuple(self.channels)  # type: ignore[return-value]
        return tuple(make_divisible(c * self.width_multiple) for c in self.channels)  # type: ignore

    @property
    def grid_sizes(self) -> Tuple[int, int, int]:
        return tuple(self.input_size // s for s in self.strides)  # type: ignore[return-value]

    def repeats(self, base: int) -> int:
        return max(int(round(base * self.depth_multiple)), 1)

    def anchor_array(self) -> np.ndarray:
        """(3, 3, 2) pixel anchors"""
        if self.anchors is not None:
            return np.asarray(self.anchors, dtype=np.float64)
        return np.asarray(DEFAULT_ANCHORS_640, dtype=np.float64) * (self.input_size / 640.0)

    def predictions_per_frame(self) -> int:
        return 3 * sum(g * g for g in self.grid_sizes)

    def signature(self) -> Dict[str, Any]:
        """Fields that must agree between a model and a carried stream state"""
        return {
            "variant": self.variant.value,
            "channels": list(self.effective_channels),
            "input_size": self.input_size,
            "temporal_kind": self.temporal_kind.value,
        }
