"""
Detector graph, configuration and box decoding.
"""

from tyolo.models.config import DEFAULT_ANCHORS_640, STRIDES, DetectorConfig, Variant
from tyolo.models.detector import (
    DetectorModel,
    StreamState,
    backbone_forward,
    detect_clip,
    detect_stream,
    head_forward,
    neck_forward,
    new_stream,
    stream_step,
    temporal_forward,
)
from tyolo.models.head import decode, decode_scale, encode_scale
from tyolo.models.pyramid import FeaturePyramid

__all__ = [
    "DetectorConfig",
    "Variant",
    "STRIDES",
    "DEFAULT_ANCHORS_640",
    "DetectorModel",
    "FeaturePyramid",
    "StreamState",
    "backbone_forward",
    "neck_forward",
    "temporal_forward",
    "head_forward",
    "decode",
    "decode_scale",
    "encode_scale",
    "stream_step",
    "new_stream",
    "detect_stream",
    "detect_clip",
]
