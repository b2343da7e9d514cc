"""
Class-wise greedy non-maximum suppression.
"""

from typing import List, Sequence, Union

import numpy as np

from tyolo.metrics.boxes import Detection, DetectionSet, as_detection_set, cxcywh_to_xyxy, iou_matrix

DEPLOY_CONF_THRESHOLD = 0.25
EVAL_CONF_THRESHOLD = 0.001
IOU_THRESHOLD = 0.45
MAX_DETECTIONS = 300


def ranking_order(dets: DetectionSet) -> np.ndarray:
    """Confidence descending; ties broken by (x1, y1, x2, y2) ascending, then class"""
    xyxy = cxcywh_to_xyxy(dets.boxes)
    keys = (dets.class_ids, xyxy[:, 3], xyxy[:, 2], xyxy[:, 1], xyxy[:, 0], -dets.scores)
    return np.lexsort(keys)


def nms_indices(
    dets: DetectionSet,
    conf_thresh: float = DEPLOY_CONF_THRESHOLD,
    iou_thresh: float = IOU_THRESHOLD,
    max_det: int = MAX_DETECTIONS,
) -> np.ndarray:
    """Indices of survivors in output order"""
    if len(dets) == 0:
        return np.zeros(0, dtype=np.int64)
    order = ranking_order(dets)
    order = order[dets.scores[order] >= conf_thresh]
    keep: List[int] = []
    for cls in np.unique(dets.class_ids[order]):
        members = order[dets.class_ids[order] == cls]
        overlaps = iou_matrix(dets.boxes[members], dets.boxes[members])
        suppressed = np.zeros(len(members), dtype=bool)
        for i in range(len(members)):
            if suppressed[i]:
                continue
            keep.append(int(members[i]))
            suppressed[i + 1:] |= overlaps[i, i + 1:] > iou_thresh
    keep_array = np.asarray(keep, dtype=np.int64)
    # restore the global ranking across classes
    rank = np.empty(len(dets), dtype=np.int64)
    rank[ranking_order(dets)] = np.arange(len(dets))
    keep_array = keep_array[np.argsort(rank[keep_array], kind="stable")]
    return keep_array[:max_det]


def nms(
    dets: Union[DetectionSet, Sequence[Detection]],
    conf_thresh: float = DEPLOY_CONF_THRESHOLD,
    iou_thresh: float = IOU_THRESHOLD,
    max_det: int = MAX_DETECTIONS,
) -> Union[DetectionSet, List[Detection]]:
    """
    Drop detections below conf_thresh, then per class keep the best box and suppress
    every other box of that class whose IoU with it exceeds iou_thresh.

    Returns the same container type it was given.
    """
    det_set = as_detection_set(dets)
    survivors = det_set.select(nms_indices(det_set, conf_thresh, iou_thresh, max_det))
    return survivors if isinstance(dets, DetectionSet) else survivors.to_list()
