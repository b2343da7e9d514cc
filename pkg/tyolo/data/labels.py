"""
Label files: one "class cx cy w h" line per box, coordinates normalized to [0, 1].
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from tyolo.core.errors import ValidationIssue


@dataclass(frozen=True)
class LabelRecord:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def to_line(self) -> str:
        return f"{self.class_id} {self.cx:.6f} {self.cy:.6f} {self.w:.6f} {self.h:.6f}"

    def as_row(self) -> Tuple[float, float, float, float, float]:
        return (float(self.class_id), self.cx, self.cy, self.w, self.h)


def parse_label_lines(
    lines: Sequence[str], num_classes: int, path: str = "<labels>"
) -> Tuple[List[LabelRecord], List[ValidationIssue]]:
    records: List[LabelRecord] = []
    issues: List[ValidationIssue] = []
    for number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            issues.append(ValidationIssue(path, f"expected 5 fields, found {len(fields)}", number))
            continue
        try:
            class_id = int(fields[0])
            cx, cy, w, h = (float(v) for v in fields[1:])
        except ValueError:
            issues.append(ValidationIssue(path, f"unparseable line {line!r}", number))
            continue
        if not 0 <= class_id < num_classes:
            issues.append(ValidationIssue(path, f"unknown class index {class_id}", number))
            continue
        bad = [name for name, v in zip(("cx", "cy", "w", "h"), (cx, cy, w, h)) if not 0.0 <= v <= 1.0]
        if bad:
            issues.append(ValidationIssue(path, f"coordinate out of [0, 1]: {', '.join(bad)}", number))
            continue
        if w <= 0 or h <= 0:
            issues.append(ValidationIssue(path, "box width and height must be positive", number))
            continue
        records.append(LabelRecord(class_id, cx, cy, w, h))
    return records, issues


def read_label_file(path: Path, num_classes: int) -> Tuple[List[LabelRecord], List[ValidationIssue]]:
    return parse_label_lines(Path(path).read_text().splitlines(), num_classes, str(path))


def write_label_file(path: Path, records: Sequence[LabelRecord]) -> None:
    Path(path).write_text("".join(r.to_line() + "\n" for r in records))


def records_to_array(records: Sequence[LabelRecord]) -> np.ndarray:
    if not records:
        return np.zeros((0, 5), dtype=np.float64)
    return np.array([r.as_row() for r in records], dtype=np.float64)


def array_to_records(labels: np.ndarray) -> List[LabelRecord]:
    return [LabelRecord(int(row[0]), *(float(v) for v in row[1:5])) for row in np.asarray(labels).reshape(-1, 5)]
