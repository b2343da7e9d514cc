"""
On-disk datasets: root/{train,test}/{sequence_id}/{frame}.png with a matching {frame}.txt.

load_dataset validates the whole split up front (every issue is collected before raising)
and returns a VideoDataset whose frames are decoded lazily.
"""

import json
import re
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import cv2
import numpy as np
import structlog
from pydantic import BaseModel, Field

from tyolo.augment.sequence import LabeledSequence
from tyolo.core.errors import DatasetValidationError, ValidationIssue
from tyolo.data.labels import LabelRecord, array_to_records, read_label_file, records_to_array
from tyolo.models.config import DEFAULT_CLASSES

logger = structlog.get_logger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class DatasetMode(str, Enum):
    STATIC = "static"
    TEMPORAL = "temporal"


class SequenceInfo(BaseModel):
    sequence_id: str
    frame_count: int = Field(..., ge=1)


class DatasetManifest(BaseModel):
    root: str
    split: Split
    mode: DatasetMode
    sequences: List[SequenceInfo]
    classes: List[str] = Field(default_factory=lambda: list(DEFAULT_CLASSES))

    @property
    def num_frames(self) -> int:
        return sum(s.frame_count for s in self.sequences)

    @property
    def shortest(self) -> int:
        return min((s.frame_count for s in self.sequences), default=0)

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.model_dump(mode="json"), indent=2))
        return path

    @classmethod
    def load(cls, path: Path) -> "DatasetManifest":
        return cls.model_validate_json(Path(path).read_text())


def natural_key(name: str) -> Tuple:
    """Sort key comparing digit runs numerically: 2 < 10"""
    return tuple(int(part) if part.isdigit() else part.lower() for part in re.split(r"(\d+)", name))


def _frame_files(directory: Path) -> List[Path]:
    return sorted(
        (p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: natural_key(p.stem),
    )


def read_image(path: Path) -> np.ndarray:
    """H x W x 3 RGB float32 in [0, 1]"""
    image = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if image is None:
        raise DatasetValidationError([ValidationIssue(str(path), "unreadable image")])
    return cv2.cvtColor(image, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0


def write_image(path: Path, image: np.ndarray) -> None:
    """Write an RGB image given as uint8 or as floats in [0, 1]"""
    if image.dtype != np.uint8:
        image = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    cv2.imwrite(str(path), cv2.cvtColor(image, cv2.COLOR_RGB2BGR))


class VideoDataset:
    """A validated split; label arrays are held in memory, images are read on demand"""

    def __init__(self, manifest: DatasetManifest, frames: Dict[str, List[Path]], labels: Dict[str, List[np.ndarray]]):
        self.manifest = manifest
        self._frames = frames
        self._labels = labels

    @property
    def root(self) -> Path:
        return Path(self.manifest.root)

    @property
    def sequence_ids(self) -> List[str]:
        return [s.sequence_id for s in self.manifest.sequences]

    def frame_count(self, sequence_id: str) -> int:
        return len(self._frames[sequence_id])

    def frame_path(self, sequence_id: str, index: int) -> Path:
        return self._frames[sequence_id][index]

    def load_frame(self, sequence_id: str, index: int) -> np.ndarray:
        return read_image(self._frames[sequence_id][index])

    def labels(self, sequence_id: str, index: int) -> np.ndarray:
        return self._labels[sequence_id][index].copy()

    def load_sequence(self, sequence_id: str, start: int = 0, length: Optional[int] = None) -> LabeledSequence:
        count = self.frame_count(sequence_id)
        length = count - start if length is None else length
        if start < 0 or length < 1 or start + length > count:
            raise IndexError(f"window [{start}, {start + length}) outside {sequence_id} ({count} frames)")
        indices = range(start, start + length)
        return LabeledSequence(
            frames=[self.load_frame(sequence_id, i) for i in indices],
            labels=[self.labels(sequence_id, i) for i in indices],
            source_id=f"{self.manifest.split.value}/{sequence_id}@{start}",
        )

    def iter_records(self) -> Iterator[Tuple[str, int, np.ndarray]]:
        for sequence_id in self.sequence_ids:
            for index, labels in enumerate(self._labels[sequence_id]):
                yield sequence_id, index, labels

    def box_sizes(self, input_size: int) -> np.ndarray:
        """(n, 2) box widths and heights in pixels at the given input size"""
        rows = [lab[:, 3:5] for _, _, lab in self.iter_records() if len(lab)]
        return np.concatenate(rows) * input_size if rows else np.zeros((0, 2))


def load_dataset(
    root: Path,
    split: str = "train",
    mode: str = "temporal",
    classes: Optional[Sequence[str]] = None,
    seq_len: int = 1,
    cache_path: Optional[Path] = None,
) -> VideoDataset:
    """
    Validate and index one split. Raises DatasetValidationError listing every problem:
    malformed or out-of-range labels, unknown classes, frames without label files,
    label files without frames and (in temporal mode) sequences shorter than seq_len.
    """
    split_enum, mode_enum = Split(split), DatasetMode(mode)
    classes = list(classes) if classes is not None else list(DEFAULT_CLASSES)
    split_dir = Path(root) / split_enum.value
    if not split_dir.is_dir():
        raise DatasetValidationError([ValidationIssue(str(split_dir), "split directory does not exist")])

    issues: List[ValidationIssue] = []
    frames: Dict[str, List[Path]] = {}
    labels: Dict[str, List[np.ndarray]] = {}
    infos: List[SequenceInfo] = []
    for seq_dir in sorted((d for d in split_dir.iterdir() if d.is_dir()), key=lambda d: natural_key(d.name)):
        files = _frame_files(seq_dir)
        image_stems = {p.stem for p in files}
        for orphan in sorted(seq_dir.glob("*.txt"), key=lambda p: natural_key(p.stem)):
            if orphan.stem not in image_stems:
                issues.append(ValidationIssue(str(orphan), "label file has no matching frame"))
        if not files:
            issues.append(ValidationIssue(str(seq_dir), "sequence has no frames"))
            continue
        seq_labels = []
        for frame in files:
            label_path = frame.with_suffix(".txt")
            if not label_path.exists():
                issues.append(ValidationIssue(str(label_path), "missing label file"))
                seq_labels.append(records_to_array([]))
                continue
            records, found = read_label_file(label_path, len(classes))
            issues.extend(found)
            seq_labels.append(records_to_array(records))
        if mode_enum == DatasetMode.TEMPORAL and len(files) < seq_len:
            issues.append(
                ValidationIssue(str(seq_dir), f"{len(files)} frames is shorter than seq_len {seq_len}")
            )
        frames[seq_dir.name] = files
        labels[seq_dir.name] = seq_labels
        infos.append(SequenceInfo(sequence_id=seq_dir.name, frame_count=len(files)))

    if issues:
        raise DatasetValidationError(issues)
    manifest = DatasetManifest(root=str(Path(root)), split=split_enum, mode=mode_enum, sequences=infos, classes=classes)
    if cache_path is not None:
        manifest.save(cache_path)
    logger.info(
        "dataset loaded",
        root=str(root),
        split=split_enum.value,
        sequences=len(infos),
        frames=manifest.num_frames,
    )
    return VideoDataset(manifest, frames, labels)


def records_of(dataset: VideoDataset, sequence_id: str, index: int) -> List[LabelRecord]:
    return array_to_records(dataset.labels(sequence_id, index))
