"""
Augmentations that combine or occlude whole video clips.

Mosaic geometry and the mixup ratio are sampled once per call and reused at every
timestep, so a clip keeps its temporal coherence.
"""

from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import cv2
import numpy as np
import structlog

from tyolo.augment.sequence import (
    FILL_VALUE,
    LabeledSequence,
    check_same_length,
    labels_to_xyxy,
    merge_labels,
    xyxy_to_labels,
)
from tyolo.core.errors import ShapeError

logger = structlog.get_logger(__name__)

MIXUP_ALPHA = 8.0
ERASING_AREA = (0.02, 0.2)
ERASING_ASPECT = (0.3, 3.3)


@dataclass(frozen=True)
class MosaicGeometry:
    """Mosaic centre on the 2H x 2W canvas, in pixels"""
    xc: int
    yc: int

    @classmethod
    def sample(cls, rng: np.random.Generator, height: int, width: int) -> "MosaicGeometry":
        return cls(
            xc=int(rng.uniform(0.5 * width, 1.5 * width)),
            yc=int(rng.uniform(0.5 * height, 1.5 * height)),
        )


Placement = Tuple[Tuple[int, int, int, int], Tuple[int, int, int, int]]


def mosaic_placements(
    geometry: MosaicGeometry, sizes: Sequence[Tuple[int, int]], canvas: Tuple[int, int]
) -> List[Placement]:
    """
    Canvas region (x1a, y1a, x2a, y2a) and source crop (x1b, y1b, x2b, y2b) for the
    top-left, top-right, bottom-left and bottom-right tiles.
    """
    xc, yc = geometry.xc, geometry.yc
    ch, cw = canvas
    placements = []
    for i, (h, w) in enumerate(sizes):
        if i == 0:
            x1a, y1a, x2a, y2a = max(xc - w, 0), max(yc - h, 0), xc, yc
            x1b, y1b, x2b, y2b = w - (x2a - x1a), h - (y2a - y1a), w, h
        elif i == 1:
            x1a, y1a, x2a, y2a = xc, max(yc - h, 0), min(xc + w, cw), yc
            x1b, y1b, x2b, y2b = 0, h - (y2a - y1a), min(w, x2a - x1a), h
        elif i == 2:
            x1a, y1a, x2a, y2a = max(xc - w, 0), yc, xc, min(ch, yc + h)
            x1b, y1b, x2b, y2b = w - (x2a - x1a), 0, w, min(y2a - y1a, h)
        else:
            x1a, y1a, x2a, y2a = xc, yc, min(xc + w, cw), min(ch, yc + h)
            x1b, y1b, x2b, y2b = 0, 0, min(w, x2a - x1a), min(y2a - y1a, h)
        placements.append(((x1a, y1a, x2a, y2a), (x1b, y1b, x2b, y2b)))
    return placements


def temporal_mosaic(
    seqs: Sequence[LabeledSequence],
    rng: np.random.Generator,
    geometry: Optional[MosaicGeometry] = None,
) -> LabeledSequence:
    """
    Tile four clips around one shared centre on a 2x canvas, frame by frame, then resize
    the canvas back to the working resolution of the first clip.
    """
    if len(seqs) != 4:
        raise ValueError(f"temporal_mosaic needs 4 sequences, got {len(seqs)}")
    steps = check_same_length(seqs, "temporal_mosaic")
    height, width = seqs[0].size
    canvas = (2 * height, 2 * width)
    if geometry is None:
        geometry = MosaicGeometry.sample(rng, height, width)
    placements = mosaic_placements(geometry, [s.size for s in seqs], canvas)

    frames, labels = [], []
    for t in range(steps):
        board = np.full(canvas + (3,), FILL_VALUE, dtype=seqs[0].frames[t].dtype)
        tile_labels = []
        for seq, ((x1a, y1a, x2a, y2a), (x1b, y1b, x2b, y2b)) in zip(seqs, placements):
            if x2a > x1a and y2a > y1a:
                board[y1a:y2a, x1a:x2a] = seq.frames[t][y1b:y2b, x1b:x2b]
            lab = seq.labels[t]
            if len(lab):
                h, w = seq.size
                xyxy = labels_to_xyxy(lab, w, h) + np.array([x1a - x1b, y1a - y1b] * 2)
                tile_labels.append(xyxy_to_labels(lab[:, 0], xyxy, canvas[1], canvas[0]))
        frames.append(cv2.resize(board, (width, height), interpolation=cv2.INTER_AREA))
        labels.append(merge_labels(*tile_labels))

    event = {"technique": "t_mosaic", **asdict(geometry), "sources": [s.source_id for s in seqs]}
    return seqs[0].derive(frames, labels, event, source_id="mosaic(" + ",".join(s.source_id for s in seqs) + ")")


def temporal_mixup(
    a: LabeledSequence,
    b: LabeledSequence,
    rng: np.random.Generator,
    alpha: float = MIXUP_ALPHA,
    lam: Optional[float] = None,
) -> LabeledSequence:
    """frame_t = lam * a_t + (1 - lam) * b_t with lam ~ Beta(alpha, alpha) drawn once"""
    check_same_length([a, b], "temporal_mixup")
    if a.size != b.size:
        raise ShapeError(f"temporal_mixup needs equal frame sizes, got {a.size} and {b.size}")
    if lam is None:
        lam = float(rng.beta(alpha, alpha))
    frames = [
        (lam * fa.astype(np.float64) + (1 - lam) * fb.astype(np.float64)).astype(fa.dtype)
        for fa, fb in zip(a.frames, b.frames)
    ]
    labels = [merge_labels(la, lb) for la, lb in zip(a.labels, b.labels)]
    event = {"technique": "t_mixup", "lam": lam, "partner": b.source_id}
    return a.derive(frames, labels, event)


def _erase_box(
    rng: np.random.Generator,
    height: int,
    width: int,
    area_range: Tuple[float, float],
    aspect_range: Tuple[float, float],
) -> Tuple[int, int, int, int]:
    area = rng.uniform(*area_range) * height * width
    aspect = float(np.exp(rng.uniform(np.log(aspect_range[0]), np.log(aspect_range[1]))))
    h = int(np.clip(round(np.sqrt(area * aspect)), 1, height))
    w = int(np.clip(round(np.sqrt(area / aspect)), 1, width))
    y0 = int(rng.integers(0, height - h + 1))
    x0 = int(rng.integers(0, width - w + 1))
    return x0, y0, x0 + w, y0 + h


def random_erasing(
    seq: LabeledSequence,
    rng: np.random.Generator,
    probability: float = 0.5,
    area_range: Tuple[float, float] = ERASING_AREA,
    aspect_range: Tuple[float, float] = ERASING_ASPECT,
) -> LabeledSequence:
    """
    Occlude one rectangle in each frame after the first, independently per frame.

    The rectangle is filled with a uniform random colour or with salt-and-pepper noise.
    The first frame is never touched; labels are never changed.
    """
    height, width = seq.size
    frames = [seq.frames[0]]
    rectangles = []
    for t in range(1, len(seq)):
        frame = seq.frames[t]
        if rng.random() >= probability:
            frames.append(frame)
            continue
        x0, y0, x1, y1 = _erase_box(rng, height, width, area_range, aspect_range)
        frame = frame.copy()
        if rng.random() < 0.5:
            fill = "color"
            frame[y0:y1, x0:x1] = rng.random(3).astype(frame.dtype)
        else:
            fill = "salt_pepper"
            mask = rng.random((y1 - y0, x1 - x0)) < 0.5
            frame[y0:y1, x0:x1] = np.where(mask[..., None], 1.0, 0.0).astype(frame.dtype)
        frames.append(frame)
        rectangles.append({"frame": t, "box": [x0, y0, x1, y1], "fill": fill})
    if not rectangles:
        return seq.derive(event={"technique": "r_erasing", "rectangles": []})
    return seq.derive(frames, event={"technique": "r_erasing", "rectangles": rectangles})
