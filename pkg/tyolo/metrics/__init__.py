"""
Post-processing and evaluation: IoU, NMS and average precision.
"""

from tyolo.metrics.average_precision import (
    IOU_THRESHOLDS,
    APResult,
    GroundTruth,
    average_precision,
    evaluate_detections,
    map_50_95,
)
from tyolo.metrics.boxes import Detection, DetectionSet, cxcywh_to_xyxy, iou, iou_matrix, xyxy_to_cxcywh
from tyolo.metrics.nms import DEPLOY_CONF_THRESHOLD, EVAL_CONF_THRESHOLD, IOU_THRESHOLD, nms
from tyolo.metrics.report import EvalReport, write_pr_curves

__all__ = [
    "IOU_THRESHOLDS",
    "APResult",
    "GroundTruth",
    "average_precision",
    "evaluate_detections",
    "map_50_95",
    "Detection",
    "DetectionSet",
    "cxcywh_to_xyxy",
    "xyxy_to_cxcywh",
    "iou",
    "iou_matrix",
    "nms",
    "DEPLOY_CONF_THRESHOLD",
    "EVAL_CONF_THRESHOLD",
    "IOU_THRESHOLD",
    "EvalReport",
    "write_pr_curves",
]
