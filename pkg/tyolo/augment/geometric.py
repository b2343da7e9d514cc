"""
Static augmentation: one perspective/affine warp and one HSV gain triple per clip.

The warp is composed as M = T @ S @ R @ P @ C about the image centre: C centres the
image, P adds perspective, R rotates and scales, S shears and T translates back.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import cv2
import numpy as np
from pydantic import BaseModel, Field

from tyolo.augment.photometric import apply_hsv_gains
from tyolo.augment.sequence import FILL_VALUE, LabeledSequence, labels_to_xyxy, xyxy_to_labels


class StaticParams(BaseModel):
    """Sampling ranges; the defaults are the usual from-scratch detector hyperparameters"""

    degrees: float = Field(0.0, ge=0)
    translate: float = Field(0.1, ge=0, le=0.5)
    scale: float = Field(0.5, ge=0, lt=1)
    shear: float = Field(0.0, ge=0)
    perspective: float = Field(0.0, ge=0)
    hsv_h: float = Field(0.015, ge=0, le=1)
    hsv_s: float = Field(0.7, ge=0, le=1)
    hsv_v: float = Field(0.4, ge=0, le=1)


@dataclass
class StaticTransform:
    """A sampled warp matrix in pixels plus HSV gains, applied identically to every frame"""
    width: int
    height: int
    matrix: np.ndarray = field(default_factory=lambda: np.eye(3))
    hsv_gains: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    @property
    def is_perspective(self) -> bool:
        return bool(self.matrix[2, 0] != 0 or self.matrix[2, 1] != 0)

    @property
    def is_identity_warp(self) -> bool:
        return bool(np.array_equal(self.matrix, np.eye(3)))

    @classmethod
    def compose(
        cls,
        width: int,
        height: int,
        angle: float = 0.0,
        scale: float = 1.0,
        shear: Tuple[float, float] = (0.0, 0.0),
        translation: Tuple[float, float] = (0.0, 0.0),
        perspective: Tuple[float, float] = (0.0, 0.0),
        hsv_gains: Tuple[float, float, float] = (1.0, 1.0, 1.0),
    ) -> "StaticTransform":
        """Angle and shear in degrees, translation in pixels"""
        C = np.eye(3)
        C[0, 2], C[1, 2] = -width / 2, -height / 2
        P = np.eye(3)
        P[2, 0], P[2, 1] = perspective
        R = np.eye(3)
        R[:2] = cv2.getRotationMatrix2D(angle=angle, center=(0, 0), scale=scale)
        S = np.eye(3)
        S[0, 1] = math.tan(shear[0] * math.pi / 180)
        S[1, 0] = math.tan(shear[1] * math.pi / 180)
        T = np.eye(3)
        T[0, 2] = width / 2 + translation[0]
        T[1, 2] = height / 2 + translation[1]
        matrix = T @ S @ R @ P @ C
        # exact identity when every parameter is neutral
        if np.allclose(matrix, np.eye(3), rtol=0, atol=1e-12):
            matrix = np.eye(3)
        return cls(width, height, matrix, tuple(float(g) for g in hsv_gains))  # type: ignore[arg-type]

    @classmethod
    def sample(cls, rng: np.random.Generator, width: int, height: int, params: StaticParams) -> "StaticTransform":
        gains = rng.uniform(-1, 1, 3) * [params.hsv_h, params.hsv_s, params.hsv_v] + 1
        perspective = tuple(rng.uniform(-params.perspective, params.perspective, 2))
        angle = rng.uniform(-params.degrees, params.degrees)
        scale = rng.uniform(1 - params.scale, 1 + params.scale)
        shear = tuple(rng.uniform(-params.shear, params.shear, 2))
        translation = tuple(rng.uniform(-params.translate, params.translate, 2) * [width, height])
        return cls.compose(width, height, angle, scale, shear, translation, perspective, tuple(gains))  # type: ignore

    def to_log(self) -> Dict[str, Any]:
        return {"matrix": self.matrix.round(10).tolist(), "hsv_gains": list(self.hsv_gains)}


def box_candidates(
    before: np.ndarray, after: np.ndarray, wh_thr: float = 2, ar_thr: float = 20, area_thr: float = 0.1, eps: float = 1e-16
) -> np.ndarray:
    """Keep boxes that stay large enough, not too elongated and not mostly cropped away"""
    w1, h1 = before[:, 2] - before[:, 0], before[:, 3] - before[:, 1]
    w2, h2 = after[:, 2] - after[:, 0], after[:, 3] - after[:, 1]
    ar = np.maximum(w2 / (h2 + eps), h2 / (w2 + eps))
    return (w2 > wh_thr) & (h2 > wh_thr) & (w2 * h2 / (w1 * h1 + eps) > area_thr) & (ar < ar_thr)


def warp_labels(labels: np.ndarray, transform: StaticTransform, scale: float = 1.0) -> np.ndarray:
    if not len(labels) or transform.is_identity_warp:
        return labels
    w, h = transform.width, transform.height
    corners = labels_to_xyxy(labels, w, h)
    n = len(corners)
    xy = np.ones((n * 4, 3))
    xy[:, :2] = corners[:, [0, 1, 2, 3, 0, 3, 2, 1]].reshape(n * 4, 2)
    xy = xy @ transform.matrix.T
    xy = xy[:, :2] / xy[:, 2:3] if transform.is_perspective else xy[:, :2]
    xy = xy.reshape(n, 8)
    x, y = xy[:, [0, 2, 4, 6]], xy[:, [1, 3, 5, 7]]
    new = np.stack([x.min(1), y.min(1), x.max(1), y.max(1)], axis=1)
    new[:, [0, 2]] = new[:, [0, 2]].clip(0, w)
    new[:, [1, 3]] = new[:, [1, 3]].clip(0, h)
    keep = box_candidates(corners * scale, new)
    return xyxy_to_labels(labels[keep, 0], new[keep], w, h)


def warp_frame(frame: np.ndarray, transform: StaticTransform) -> np.ndarray:
    if transform.is_identity_warp:
        return frame
    size = (transform.width, transform.height)
    border = (FILL_VALUE,) * 3
    if transform.is_perspective:
        return cv2.warpPerspective(frame, transform.matrix, dsize=size, borderValue=border)
    return cv2.warpAffine(frame, transform.matrix[:2], dsize=size, borderValue=border)


def apply_static_transform(seq: LabeledSequence, transform: StaticTransform) -> LabeledSequence:
    scale = float(np.sqrt(abs(np.linalg.det(transform.matrix[:2, :2]))))
    frames = [apply_hsv_gains(warp_frame(f, transform), transform.hsv_gains) for f in seq.frames]
    labels = [warp_labels(lab, transform, scale) for lab in seq.labels]
    return seq.derive(frames, labels, {"technique": "static_affine_hsv", **transform.to_log()})


def static_augment(
    seq: LabeledSequence, rng: np.random.Generator, params: Optional[StaticParams] = None
) -> LabeledSequence:
    params = params or StaticParams()
    height, width = seq.size
    return apply_static_transform(seq, StaticTransform.sample(rng, width, height, params))
