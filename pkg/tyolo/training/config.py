"""
Training and evaluation settings.
"""

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field

from tyolo.augment.pipeline import AugmentSpec
from tyolo.metrics.nms import EVAL_CONF_THRESHOLD, IOU_THRESHOLD, MAX_DETECTIONS


class FreezePolicy(str, Enum):
    NONE = "none"
    THROUGH_NECK = "through_neck"


class LossWeights(BaseModel):
    box: float = Field(0.05, ge=0)
    obj: float = Field(1.0, ge=0)
    cls: float = Field(0.5, ge=0)
    anchor_ratio: float = Field(4.0, gt=1, description="max target/anchor side ratio for a match")
    balance: List[float] = Field(default_factory=lambda: [4.0, 1.0, 0.4], description="obj weight per scale")


class TrainConfig(BaseModel):
    """One training stage. Defaults are the desk-scale recipe."""

    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(300, ge=1)
    batch_size: int = Field(8, ge=1)
    seq_len: int = Field(2, ge=1)
    steps_per_epoch: Optional[int] = Field(None, ge=1, description="defaults to one pass over all windows")
    lr0: float = Field(0.01, ge=0)
    lrf: float = Field(0.01, ge=0, description="final lr as a fraction of lr0")
    momentum: float = Field(0.937, ge=0, lt=1)
    nesterov: bool = True
    weight_decay: float = Field(5e-4, ge=0)
    warmup_epochs: float = Field(3.0, ge=0)
    bn_momentum: float = Field(0.03, ge=0, le=1)
    freeze_policy: FreezePolicy = FreezePolicy.NONE
    passthrough_init: bool = Field(False, description="start temporal cells as pass-through")
    augment: List[AugmentSpec] = Field(default_factory=list)
    loss: LossWeights = Field(default_factory=LossWeights)
    eval_every: int = Field(1, ge=1)
    eval_limit: Optional[int] = Field(None, ge=1, description="evaluate on the first N test sequences only")
    mixed: bool = Field(False, description="merge a static image pool with all temporal frames")
    seed: int = 0


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    conf_thresh: float = Field(EVAL_CONF_THRESHOLD, ge=0, le=1)
    iou_thresh: float = Field(IOU_THRESHOLD, ge=0, le=1)
    max_det: int = Field(MAX_DETECTIONS, ge=1)
    batch_size: int = Field(16, ge=1)
