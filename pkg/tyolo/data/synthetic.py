"""
Synthetic moving-shapes videos with exact boxes.

Each clip shows 1 to max_shapes textured shapes (circle, rectangle, triangle for the three
classes) bouncing linearly over a noisy background, optionally crossed by an occluding bar.
Shapes sit on integer pixel positions, so the box of a shape whose extent covers columns
x0..x1 and rows y0..y1 is exactly (x0, y0, x1 + 1, y1 + 1) / size. Labels stay amodal under
occlusion.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import cv2
import numpy as np
import structlog
from pydantic import BaseModel, Field, field_validator

from tyolo.data.labels import array_to_records, write_label_file
from tyolo.data.manifest import write_image

logger = structlog.get_logger(__name__)

SHAPE_KINDS = ("circle", "rectangle", "triangle")
BASE_COLORS = ((220, 170, 130), (45, 45, 45), (60, 120, 220))


class SynthConfig(BaseModel):
    seed: int = 0
    sequences: int = Field(8, ge=1, description="training sequences")
    test_sequences: int = Field(2, ge=0)
    frames: int = Field(20, ge=1, description="frames per sequence")
    size: int = Field(64, gt=0)
    max_shapes: int = Field(3, ge=1)
    occlusion_probability: float = Field(0.3, ge=0, le=1)
    noise_std: float = Field(0.04, ge=0)

    @field_validator("size")
    @classmethod
    def _divisible_by_32(cls, value: int) -> int:
        if value % 32:
            raise ValueError(f"size must be divisible by 32, got {value}")
        return value


@dataclass
class MovingShape:
    class_id: int
    x: int
    y: int
    extent: int
    vx: int
    vy: int
    color: Tuple[int, int, int]

    @property
    def box_pixels(self) -> Tuple[int, int, int, int]:
        """Inclusive (x0, y0, x1, y1)"""
        return self.x, self.y, self.x + self.extent - 1, self.y + self.extent - 1

    def label(self, size: int) -> Tuple[float, float, float, float, float]:
        x0, y0, x1, y1 = self.box_pixels
        return (
            float(self.class_id),
            (x0 + x1 + 1) / (2 * size),
            (y0 + y1 + 1) / (2 * size),
            (x1 + 1 - x0) / size,
            (y1 + 1 - y0) / size,
        )

    def mask(self, size: int) -> np.ndarray:
        mask = np.zeros((size, size), dtype=np.uint8)
        x0, y0, x1, y1 = self.box_pixels
        kind = SHAPE_KINDS[self.class_id % len(SHAPE_KINDS)]
        if kind == "circle":
            r = (self.extent - 1) // 2
            cv2.circle(mask, (x0 + r, y0 + r), r, 255, thickness=-1, lineType=cv2.LINE_8)
        elif kind == "rectangle":
            cv2.rectangle(mask, (x0, y0), (x1, y1), 255, thickness=-1, lineType=cv2.LINE_8)
        else:
            apex = (x0 + (self.extent - 1) // 2, y0)
            pts = np.array([[x0, y1], [x1, y1], apex], dtype=np.int32)
            cv2.fillPoly(mask, [pts], 255, lineType=cv2.LINE_8)
        return mask > 0

    def step(self, size: int) -> None:
        for pos, vel in (("x", "vx"), ("y", "vy")):
            p, v = getattr(self, pos), getattr(self, vel)
            if not 0 <= p + v <= size - self.extent:
                v = -v
            setattr(self, vel, v)
            setattr(self, pos, int(np.clip(p + v, 0, size - self.extent)))


@dataclass
class SyntheticSequence:
    frames: List[np.ndarray] = field(default_factory=list)
    labels: List[np.ndarray] = field(default_factory=list)
    masks: List[List[np.ndarray]] = field(default_factory=list)
    occluded: List[bool] = field(default_factory=list)


def _spawn(rng: np.random.Generator, size: int) -> MovingShape:
    class_id = int(rng.integers(0, len(SHAPE_KINDS)))
    extent = int(rng.integers(size // 8, size // 4 + 1))
    if SHAPE_KINDS[class_id] == "circle" and extent % 2 == 0:
        extent += 1
    speed = max(size // 32, 1)
    vx, vy = (int(v) if v != 0 else 1 for v in rng.integers(-speed, speed + 1, size=2))
    jitter = rng.integers(-20, 21, size=3)
    color = tuple(int(np.clip(c + j, 0, 255)) for c, j in zip(BASE_COLORS[class_id], jitter))
    return MovingShape(
        class_id=class_id,
        x=int(rng.integers(0, size - extent + 1)),
        y=int(rng.integers(0, size - extent + 1)),
        extent=extent,
        vx=vx,
        vy=vy,
        color=color,  # type: ignore[arg-type]
    )


def _texture(class_id: int, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    if class_id == 0:
        pattern = (yy // 2) % 2
    elif class_id == 1:
        pattern = (xx // 2) % 2
    else:
        pattern = ((xx // 2) + (yy // 2)) % 2
    return 0.8 + 0.2 * pattern[..., None]


def generate_sequence(rng: np.random.Generator, config: SynthConfig) -> SyntheticSequence:
    size = config.size
    shapes = [_spawn(rng, size) for _ in range(int(rng.integers(1, config.max_shapes + 1)))]
    background = rng.uniform(0.3, 0.55) * 255
    occlusion = None
    if rng.random() < config.occlusion_probability and config.frames > 1:
        start = int(rng.integers(0, config.frames))
        length = int(rng.integers(1, max(config.frames // 3, 1) + 1))
        width = max(size // 8, 2)
        occlusion = (start, start + length, int(rng.integers(0, size - width + 1)), width)

    textures = [_texture(c, size) for c in range(len(SHAPE_KINDS))]
    out = SyntheticSequence()
    for t in range(config.frames):
        noise = rng.normal(0.0, config.noise_std * 255, size=(size, size, 3))
        canvas = np.clip(background + noise, 0, 255)
        masks = []
        for shape in shapes:
            mask = shape.mask(size)
            fill = np.array(shape.color, dtype=np.float64)[None, None, :] * textures[shape.class_id]
            canvas = np.where(mask[..., None], fill, canvas)
            masks.append(mask)
        hidden = occlusion is not None and occlusion[0] <= t < occlusion[1]
        if hidden:
            _, _, x0, width = occlusion  # type: ignore[misc]
            canvas[:, x0:x0 + width] = background * 0.6
        out.frames.append(canvas.round().astype(np.uint8))
        out.labels.append(np.round(np.array([s.label(size) for s in shapes]), 6))
        out.masks.append(masks)
        out.occluded.append(hidden)
        for shape in shapes:
            shape.step(size)
    return out


def sequence_rng(seed: int, split: str, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0 if split == "train" else 1, index])


def synth_video_gen(config: SynthConfig, out: Path) -> Dict[str, int]:
    """Write train/ and test/ splits under out; returns frame counts per split"""
    out = Path(out)
    counts = {}
    for split, n in (("train", config.sequences), ("test", config.test_sequences)):
        for index in range(n):
            seq = generate_sequence(sequence_rng(config.seed, split, index), config)
            seq_dir = out / split / f"seq_{index:03d}"
            seq_dir.mkdir(parents=True, exist_ok=True)
            for t, (frame, labels) in enumerate(zip(seq.frames, seq.labels)):
                write_image(seq_dir / f"{t:06d}.png", frame)
                write_label_file(seq_dir / f"{t:06d}.txt", array_to_records(labels))
        counts[split] = n * config.frames
        logger.info("synthetic split written", split=split, sequences=n, frames=config.frames, out=str(out))
    return counts
