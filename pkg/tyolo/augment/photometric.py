"""
Per-frame photometric augmentations. None of them touch labels.
"""

import math
from typing import Tuple

import cv2
import numpy as np

from tyolo.augment.sequence import LabeledSequence

BLUR_SIGMA = (0.5, 2.0)
NOISE_SIGMA = (0.01, 0.05)


def gaussian_kernel_size(sigma: float) -> int:
    return 2 * int(math.ceil(3 * sigma)) + 1


def blur_frame(frame: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian blur with reflective borders; preserves the mean of the frame"""
    k = gaussian_kernel_size(sigma)
    return cv2.GaussianBlur(frame, (k, k), sigmaX=sigma, sigmaY=sigma, borderType=cv2.BORDER_REFLECT)


def random_blur(
    seq: LabeledSequence,
    rng: np.random.Generator,
    probability: float = 0.5,
    sigma_range: Tuple[float, float] = BLUR_SIGMA,
) -> LabeledSequence:
    frames, applied = [], []
    for t, frame in enumerate(seq.frames):
        if rng.random() < probability:
            sigma = float(rng.uniform(*sigma_range))
            frames.append(blur_frame(frame, sigma))
            applied.append({"frame": t, "sigma": sigma})
        else:
            frames.append(frame)
    return seq.derive(frames, event={"technique": "r_blur", "frames": applied})


def gaussian_noise(
    seq: LabeledSequence,
    rng: np.random.Generator,
    probability: float = 0.5,
    sigma_range: Tuple[float, float] = NOISE_SIGMA,
) -> LabeledSequence:
    """Additive i.i.d. normal noise, clamped back to [0, 1]"""
    frames, applied = [], []
    for t, frame in enumerate(seq.frames):
        if rng.random() < probability:
            sigma = float(rng.uniform(*sigma_range))
            noise = rng.normal(0.0, sigma, size=frame.shape) if sigma > 0 else 0.0
            frames.append(np.clip(frame + noise, 0.0, 1.0).astype(frame.dtype))
            applied.append({"frame": t, "sigma": sigma})
        else:
            frames.append(frame)
    return seq.derive(frames, event={"technique": "g_noise", "frames": applied})


def apply_hsv_gains(frame: np.ndarray, gains: Tuple[float, float, float]) -> np.ndarray:
    """Scale hue, saturation and value of an RGB float image; hue wraps around"""
    if all(g == 1.0 for g in gains):
        return frame
    hsv = cv2.cvtColor(frame.astype(np.float32), cv2.COLOR_RGB2HSV)
    hsv[..., 0] = np.mod(hsv[..., 0] * gains[0], 360.0)
    hsv[..., 1] = np.clip(hsv[..., 1] * gains[1], 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * gains[2], 0.0, 1.0)
    rgb = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)
    return np.clip(rgb, 0.0, 1.0).astype(frame.dtype)
