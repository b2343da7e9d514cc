"""
Anchor-based detection head and box decoding.

Raw head output per scale is [N, 3, G, G, 5 + num_classes] holding (tx, ty, tw, th, obj, cls...)
logits. Decoding maps a cell (gx, gy) with anchor (aw, ah) at stride s to

    cx = (2 * sigmoid(tx) - 0.5 + gx) * s        w = aw * (2 * sigmoid(tw)) ** 2

and likewise for cy and h. Confidence is sigmoid(obj) * max sigmoid(cls).
"""

import math
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import expit, logit

from tyolo.core.errors import ShapeError
from tyolo.metrics.boxes import DetectionSet, cxcywh_to_xyxy, xyxy_to_cxcywh
from tyolo.models.config import DetectorConfig
from tyolo.models.pyramid import FeaturePyramid
from tyolo.nn.layers import Conv2d
from tyolo.nn.module import Module, ModuleList
from tyolo.tensor import ops
from tyolo.tensor.conv import ConvSpec
from tyolo.tensor.tensor import Tensor

NUM_ANCHORS = 3


class DetectionHead(Module):
    """One 1x1 convolution per scale emitting 3 * (5 + num_classes) channels"""

    def __init__(self, config: DetectorConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        outputs = NUM_ANCHORS * config.outputs_per_anchor
        self.convs = ModuleList(
            Conv2d(ConvSpec.square(c, outputs, 1), rng, bias=True) for c in config.effective_channels
        )
        self._init_biases()

    def _init_biases(self) -> None:
        """Objectness prior of ~8 objects per image, class prior of 0.6 / num_classes"""
        nc, no = self.config.num_classes, self.config.outputs_per_anchor
        for conv, stride in zip(self.convs, self.config.strides):
            bias = conv.bias.data.reshape(NUM_ANCHORS, no)
            bias[:, 4] += math.log(8 / (self.config.input_size / stride) ** 2)
            bias[:, 5:] += math.log(0.6 / (nc - 0.99)) if nc > 1 else 0.0

    def forward(self, pyramid: FeaturePyramid) -> List[Tensor]:
        pyramid.check(self.config, "head input")
        no = self.config.outputs_per_anchor
        raw = []
        for conv, feature in zip(self.convs, pyramid):
            n, _, h, w = feature.shape
            out = ops.reshape(conv(feature), (n, NUM_ANCHORS, no, h, w))
            raw.append(ops.permute(out, (0, 1, 3, 4, 2)))
        return raw


def _grid(size: int) -> Tuple[np.ndarray, np.ndarray]:
    gy, gx = np.meshgrid(np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64), indexing="ij")
    return gx, gy


def decode_scale(
    raw: np.ndarray, anchors: np.ndarray, stride: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Decode one scale's raw logits [N, 3, G, G, 5 + nc].

    Returns boxes [N, 3, G, G, 4] in pixels, objectness [N, 3, G, G] and
    class probabilities [N, 3, G, G, nc].
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 5 or raw.shape[1] != NUM_ANCHORS or raw.shape[2] != raw.shape[3]:
        raise ShapeError(f"raw head output must be [N, 3, G, G, 5 + nc], got {raw.shape}")
    gx, gy = _grid(raw.shape[2])
    sig = expit(raw)
    anchor_w = anchors[:, 0][None, :, None, None]
    anchor_h = anchors[:, 1][None, :, None, None]
    cx = (2 * sig[..., 0] - 0.5 + gx) * stride
    cy = (2 * sig[..., 1] - 0.5 + gy) * stride
    w = anchor_w * (2 * sig[..., 2]) ** 2
    h = anchor_h * (2 * sig[..., 3]) ** 2
    return np.stack([cx, cy, w, h], axis=-1), sig[..., 4], sig[..., 5:]


def encode_scale(boxes: np.ndarray, anchors: np.ndarray, stride: int) -> np.ndarray:
    """Inverse of the box part of decode_scale: [N, 3, G, G, 4] pixels -> (tx, ty, tw, th)"""
    boxes = np.asarray(boxes, dtype=np.float64)
    gx, gy = _grid(boxes.shape[2])
    anchor_w = anchors[:, 0][None, :, None, None]
    anchor_h = anchors[:, 1][None, :, None, None]
    tx = logit((boxes[..., 0] / stride - gx + 0.5) / 2)
    ty = logit((boxes[..., 1] / stride - gy + 0.5) / 2)
    tw = logit(np.sqrt(boxes[..., 2] / anchor_w) / 2)
    th = logit(np.sqrt(boxes[..., 3] / anchor_h) / 2)
    return np.stack([tx, ty, tw, th], axis=-1)


def clip_boxes(boxes: np.ndarray, size: int) -> np.ndarray:
    """Clip (cx, cy, w, h) boxes to [0, size] on both axes"""
    return xyxy_to_cxcywh(np.clip(cxcywh_to_xyxy(boxes), 0, size))


def decode(
    raw: Sequence[np.ndarray], config: DetectorConfig, clip: bool = True
) -> List[DetectionSet]:
    """
    All predictions of each frame, ordered scale, anchor, row, column.

    No confidence filtering happens here; that is left to nms.
    """
    raw = [r.numpy() if isinstance(r, Tensor) else np.asarray(r) for r in raw]
    if len(raw) != len(config.strides):
        raise ShapeError(f"expected {len(config.strides)} scales, got {len(raw)}")
    anchors = config.anchor_array()
    boxes, scores, classes = [], [], []
    for scale, (r, stride) in enumerate(zip(raw, config.strides)):
        if r.shape[-1] != config.outputs_per_anchor:
            raise ShapeError(
                f"scale {scale}: last dim {r.shape[-1]} != 5 + num_classes ({config.outputs_per_anchor})"
            )
        b, obj, cls = decode_scale(r, anchors[scale], stride)
        n = b.shape[0]
        boxes.append(b.reshape(n, -1, 4))
        scores.append((obj * cls.max(axis=-1)).reshape(n, -1))
        classes.append(cls.argmax(axis=-1).reshape(n, -1))
    all_boxes = np.concatenate(boxes, axis=1)
    all_scores = np.concatenate(scores, axis=1)
    all_classes = np.concatenate(classes, axis=1)
    if clip:
        all_boxes = clip_boxes(all_boxes, config.input_size)
    return [DetectionSet(all_boxes[i], all_scores[i], all_classes[i]) for i in range(len(all_boxes))]


def drop_degenerate(dets: DetectionSet) -> DetectionSet:
    """Remove boxes that clipping reduced to zero width or height"""
    keep = (dets.boxes[:, 2] > 0) & (dets.boxes[:, 3] > 0)
    return dets if keep.all() else dets.select(np.nonzero(keep)[0])
