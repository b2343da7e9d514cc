"""
Average precision with greedy matching and 101-point interpolation.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from tyolo.metrics.boxes import DetectionSet, iou_matrix
from tyolo.metrics.nms import ranking_order

logger = structlog.get_logger(__name__)

IOU_THRESHOLDS = np.round(0.5 + 0.05 * np.arange(10), 2)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


@dataclass
class GroundTruth:
    """Ground-truth boxes (cx, cy, w, h) of one image"""
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    class_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64).reshape(-1)
        if len(self.boxes) != len(self.class_ids):
            raise ValueError("boxes and class_ids must have equal length")

    def __len__(self) -> int:
        return len(self.class_ids)


@dataclass
class PrecisionRecall:
    """Raw and 101-point interpolated precision/recall of one class at one threshold"""
    ap: float
    recall: np.ndarray
    precision: np.ndarray
    interpolated: np.ndarray


def match_image(
    preds: DetectionSet, gt: GroundTruth, thresholds: Sequence[float]
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Greedy matching of one image's predictions, best confidence first.

    Each prediction claims the unmatched same-class ground truth with the highest IoU,
    provided that IoU reaches the threshold. Returns (order, tp) where order ranks the
    predictions and tp[k, j] says whether the k-th ranked prediction is a true positive
    at thresholds[j].
    """
    order = ranking_order(preds) if len(preds) else np.zeros(0, dtype=np.int64)
    tp = np.zeros((len(order), len(thresholds)), dtype=bool)
    if len(order) == 0 or len(gt) == 0:
        return order, tp
    overlaps = iou_matrix(preds.boxes[order], gt.boxes)
    same_class = preds.class_ids[order][:, None] == gt.class_ids[None, :]
    overlaps = np.where(same_class, overlaps, -1.0)
    for j, thr in enumerate(thresholds):
        taken = np.zeros(len(gt), dtype=bool)
        for k in range(len(order)):
            candidates = np.where(taken, -1.0, overlaps[k])
            best = int(np.argmax(candidates))
            if candidates[best] >= thr:
                taken[best] = True
                tp[k, j] = True
    return order, tp


def interpolated_ap(tp: np.ndarray, scores: np.ndarray, n_gt: int) -> PrecisionRecall:
    """101-point interpolated AP of one class from per-prediction TP flags"""
    if n_gt == 0:
        raise ValueError("AP is undefined without ground truth")
    order = np.argsort(-scores, kind="stable")
    hits = tp[order].astype(np.float64)
    tp_cum = np.cumsum(hits)
    fp_cum = np.cumsum(1.0 - hits)
    recall = tp_cum / n_gt
    precision = tp_cum / np.maximum(tp_cum + fp_cum, np.finfo(np.float64).eps)
    envelope = np.maximum.accumulate(precision[::-1])[::-1] if len(precision) else precision
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    interpolated = np.zeros_like(RECALL_POINTS)
    valid = idx < len(envelope)
    interpolated[valid] = envelope[idx[valid]]
    return PrecisionRecall(float(interpolated.mean()), recall, precision, interpolated)


@dataclass
class APResult:
    """AP per class (rows) and IoU threshold (columns) plus PR curves at each threshold"""
    classes: List[int]
    thresholds: np.ndarray
    ap: np.ndarray
    curves: Dict[Tuple[int, float], PrecisionRecall]

    @property
    def map50(self) -> float:
        if not self.classes:
            return 0.0
        return float(self.ap[:, 0].mean())

    @property
    def map50_95(self) -> float:
        if not self.classes:
            return 0.0
        return float(self.ap.mean())

    def per_class(self) -> Dict[int, List[float]]:
        return {c: [float(v) for v in row] for c, row in zip(self.classes, self.ap)}


def evaluate_detections(
    preds: Sequence[DetectionSet],
    gts: Sequence[GroundTruth],
    thresholds: Optional[Sequence[float]] = None,
) -> APResult:
    """AP for every class that has ground truth, at every threshold"""
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} prediction sets for {len(gts)} ground-truth images")
    thresholds = IOU_THRESHOLDS if thresholds is None else np.asarray(thresholds, dtype=np.float64)

    scores: List[np.ndarray] = []
    classes: List[np.ndarray] = []
    flags: List[np.ndarray] = []
    for pred, gt in zip(preds, gts):
        order, tp = match_image(pred, gt, thresholds)
        scores.append(pred.scores[order])
        classes.append(pred.class_ids[order])
        flags.append(tp)
    all_scores = np.concatenate(scores) if scores else np.zeros(0)
    all_classes = np.concatenate(classes) if classes else np.zeros(0, dtype=np.int64)
    all_tp = np.concatenate(flags) if flags else np.zeros((0, len(thresholds)), dtype=bool)
    gt_classes = np.concatenate([gt.class_ids for gt in gts]) if gts else np.zeros(0, dtype=np.int64)

    present = sorted(int(c) for c in np.unique(gt_classes))
    ap = np.zeros((len(present), len(thresholds)))
    curves: Dict[Tuple[int, float], PrecisionRecall] = {}
    for row, cls in enumerate(present):
        n_gt = int((gt_classes == cls).sum())
        mask = all_classes == cls
        for j, thr in enumerate(thresholds):
            pr = interpolated_ap(all_tp[mask, j], all_scores[mask], n_gt)
            ap[row, j] = pr.ap
            curves[(cls, float(thr))] = pr
    skipped = sorted(set(int(c) for c in np.unique(all_classes)) - set(present))
    if skipped:
        logger.debug("classes without ground truth excluded from mAP", classes=skipped)
    return APResult(present, np.asarray(thresholds), ap, curves)


def average_precision(
    preds: Sequence[DetectionSet], gts: Sequence[GroundTruth], iou_thresh: float = 0.5
) -> Dict[int, float]:
    """AP per class at one IoU threshold; classes without ground truth are omitted"""
    result = evaluate_detections(preds, gts, [iou_thresh])
    return {cls: float(result.ap[i, 0]) for i, cls in enumerate(result.classes)}


def map_50_95(preds: Sequence[DetectionSet], gts: Sequence[GroundTruth]) -> Tuple[float, float]:
    result = evaluate_detections(preds, gts)
    return result.map50, result.map50_95
