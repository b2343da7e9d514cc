"""
Boxes, detections and intersection-over-union.

Boxes are (cx, cy, w, h) unless a function name says xyxy. Intervals are half-open, so a
box covers [cx - w/2, cx + w/2) and its area is w * h.
"""

from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Sequence, Tuple

import numpy as np

Box = Tuple[float, float, float, float]


@dataclass(frozen=True)
class Detection:
    box: Box
    class_id: int
    confidence: float

    def __post_init__(self):
        if self.box[2] <= 0 or self.box[3] <= 0:
            raise ValueError(f"detection box must have positive size, got {self.box}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


@dataclass
class DetectionSet:
    """Detections of one frame held as parallel arrays"""
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    class_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64).reshape(-1)
        if not len(self.boxes) == len(self.scores) == len(self.class_ids):
            raise ValueError("boxes, scores and class_ids must have equal length")

    def __len__(self) -> int:
        return len(self.scores)

    def __iter__(self) -> Iterator[Detection]:
        for box, score, cls in zip(self.boxes, self.scores, self.class_ids):
            yield Detection(tuple(float(v) for v in box), int(cls), float(score))  # type: ignore

    def to_list(self) -> List[Detection]:
        return list(self)

    def select(self, index: np.ndarray) -> "DetectionSet":
        return DetectionSet(self.boxes[index], self.scores[index], self.class_ids[index])

    @classmethod
    def from_detections(cls, detections: Iterable[Detection]) -> "DetectionSet":
        detections = list(detections)
        if not detections:
            return cls()
        return cls(
            np.array([d.box for d in detections], dtype=np.float64),
            np.array([d.confidence for d in detections], dtype=np.float64),
            np.array([d.class_id for d in detections], dtype=np.int64),
        )


def as_detection_set(dets: "DetectionSet | Sequence[Detection]") -> DetectionSet:
    return dets if isinstance(dets, DetectionSet) else DetectionSet.from_detections(dets)


def cxcywh_to_xyxy(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64)
    half = boxes[..., 2:4] / 2
    return np.concatenate([boxes[..., 0:2] - half, boxes[..., 0:2] + half], axis=-1)


def xyxy_to_cxcywh(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64)
    size = boxes[..., 2:4] - boxes[..., 0:2]
    return np.concatenate([boxes[..., 0:2] + size / 2, size], axis=-1)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (N, 4) and (M, 4) cxcywh boxes"""
    a = cxcywh_to_xyxy(np.asarray(a, dtype=np.float64).reshape(-1, 4))
    b = cxcywh_to_xyxy(np.asarray(b, dtype=np.float64).reshape(-1, 4))
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        result = np.where(union > 0, inter / union, 0.0)
    return result


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    """IoU of two (cx, cy, w, h) boxes"""
    return float(iou_matrix(np.asarray(a)[None], np.asarray(b)[None])[0, 0])
