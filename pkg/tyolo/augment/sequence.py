"""
Labeled frame sequences and the label arithmetic shared by every augmentation.

Labels are (class_id, cx, cy, w, h) rows normalized to [0, 1]; frames are H x W x 3 float32
RGB images with values in [0, 1].
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from tyolo.core.errors import ShapeError

MIN_BOX_AREA = 1e-4
FILL_VALUE = 114 / 255


def empty_labels() -> np.ndarray:
    return np.zeros((0, 5), dtype=np.float64)


@dataclass
class LabeledSequence:
    frames: List[np.ndarray]
    labels: List[np.ndarray]
    source_id: str = ""
    history: List[Dict[str, Any]] = field(default_factory=list)

    def __post_init__(self):
        if not self.frames:
            raise ShapeError("a sequence needs at least one frame")
        if len(self.labels) != len(self.frames):
            raise ShapeError(f"{len(self.labels)} label sets for {len(self.frames)} frames")
        shape = self.frames[0].shape
        if len(shape) != 3 or shape[2] != 3:
            raise ShapeError(f"frames must be H x W x 3, got {shape}")
        for t, frame in enumerate(self.frames):
            if frame.shape != shape:
                raise ShapeError(f"frame {t} has shape {frame.shape}, frame 0 has {shape}")
        self.labels = [
            np.asarray(lab, dtype=np.float64).reshape(-1, 5) if len(lab) else empty_labels()
            for lab in self.labels
        ]

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def size(self) -> Tuple[int, int]:
        """(height, width)"""
        return self.frames[0].shape[0], self.frames[0].shape[1]

    def derive(
        self,
        frames: Optional[List[np.ndarray]] = None,
        labels: Optional[List[np.ndarray]] = None,
        event: Optional[Dict[str, Any]] = None,
        source_id: Optional[str] = None,
    ) -> "LabeledSequence":
        """New sequence sharing untouched parts with this one; event is appended to the history"""
        history = list(self.history) + ([event] if event is not None else [])
        return LabeledSequence(
            frames=list(self.frames) if frames is None else frames,
            labels=[lab.copy() for lab in self.labels] if labels is None else labels,
            source_id=self.source_id if source_id is None else source_id,
            history=history,
        )

    def stacked(self) -> np.ndarray:
        """(T, H, W, 3) array"""
        return np.stack(self.frames)

    def check_labels(self) -> None:
        for t, lab in enumerate(self.labels):
            if not len(lab):
                continue
            xyxy = labels_to_xyxy(lab)
            if (xyxy < -1e-9).any() or (xyxy > 1 + 1e-9).any():
                raise ValueError(f"frame {t}: box leaves the image")
            if ((lab[:, 3] * lab[:, 4]) <= MIN_BOX_AREA).any():
                raise ValueError(f"frame {t}: box area at or below {MIN_BOX_AREA}")


def labels_to_xyxy(labels: np.ndarray, width: float = 1.0, height: float = 1.0) -> np.ndarray:
    """(n, 5) normalized labels -> (n, 4) corner boxes scaled by (width, height)"""
    cx, cy, w, h = labels[:, 1], labels[:, 2], labels[:, 3], labels[:, 4]
    return np.stack(
        [(cx - w / 2) * width, (cy - h / 2) * height, (cx + w / 2) * width, (cy + h / 2) * height], axis=1
    )


def xyxy_to_labels(
    class_ids: np.ndarray, xyxy: np.ndarray, width: float = 1.0, height: float = 1.0
) -> np.ndarray:
    """Corner boxes in pixels -> normalized labels, clipped to the image; tiny boxes dropped"""
    if not len(xyxy):
        return empty_labels()
    box = np.asarray(xyxy, dtype=np.float64) / np.array([width, height, width, height])
    box = np.clip(box, 0.0, 1.0)
    w, h = box[:, 2] - box[:, 0], box[:, 3] - box[:, 1]
    keep = (w > 0) & (h > 0) & (w * h > MIN_BOX_AREA)
    out = np.stack(
        [np.asarray(class_ids, dtype=np.float64), (box[:, 0] + box[:, 2]) / 2, (box[:, 1] + box[:, 3]) / 2, w, h],
        axis=1,
    )
    return out[keep]


def merge_labels(*label_sets: np.ndarray) -> np.ndarray:
    sets = [lab for lab in label_sets if len(lab)]
    return np.concatenate(sets, axis=0) if sets else empty_labels()


def check_same_length(seqs: Sequence[LabeledSequence], op: str) -> int:
    lengths = {len(s) for s in seqs}
    if len(lengths) != 1:
        raise ShapeError(f"{op} needs sequences of equal length, got {sorted(lengths)}")
    return lengths.pop()
