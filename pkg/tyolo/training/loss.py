"""
Composite detection loss: CIoU box regression, objectness and classification BCE.

Targets are assigned per scale to every anchor whose shape is within anchor_ratio of the
box, on the box's own grid cell and on the two neighbouring cells nearest to its centre.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from tyolo.core.errors import ShapeError
from tyolo.models.config import DetectorConfig
from tyolo.tensor import ops
from tyolo.tensor.tensor import Tensor
from tyolo.training.config import LossWeights

NEIGHBOUR_OFFSET = 0.5
CIOU_EPS = 1e-7

# centre cell, then left, up, right, down
_OFFSETS = np.array([[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1]], dtype=np.float64) * NEIGHBOUR_OFFSET


@dataclass
class ScaleTargets:
    """Positive assignments at one scale; boxes and anchors are in grid units"""
    image: np.ndarray
    anchor: np.ndarray
    gj: np.ndarray
    gi: np.ndarray
    box: np.ndarray
    anchor_wh: np.ndarray
    class_id: np.ndarray

    def __len__(self) -> int:
        return len(self.image)


@dataclass
class LossTerms:
    total: Tensor
    box: Tensor
    obj: Tensor
    cls: Tensor

    def values(self) -> dict:
        return {"box": self.box.item(), "obj": self.obj.item(), "cls": self.cls.item(), "total": self.total.item()}


def _flatten_targets(labels: Sequence[np.ndarray]) -> np.ndarray:
    """Per-frame (n, 5) label arrays -> (N, 6) rows of (frame, class, cx, cy, w, h)"""
    rows = [
        np.concatenate([np.full((len(lab), 1), i, dtype=np.float64), np.asarray(lab, dtype=np.float64)], axis=1)
        for i, lab in enumerate(labels)
        if len(lab)
    ]
    return np.concatenate(rows) if rows else np.zeros((0, 6))


def build_targets(
    labels: Sequence[np.ndarray], config: DetectorConfig, anchor_ratio: float = 4.0
) -> List[ScaleTargets]:
    targets = _flatten_targets(labels)
    anchors_px = config.anchor_array()
    assigned = []
    for scale, (stride, grid) in enumerate(zip(config.strides, config.grid_sizes)):
        anchors = anchors_px[scale] / stride
        if not len(targets):
            empty = np.zeros(0, dtype=np.int64)
            assigned.append(ScaleTargets(empty, empty, empty, empty, np.zeros((0, 4)), np.zeros((0, 2)), empty))
            continue
        t = targets.copy()
        t[:, 2:6] *= grid
        # (anchors, targets) shape match
        ratio = t[None, :, 4:6] / anchors[:, None, :]
        match = np.maximum(ratio, 1 / ratio).max(axis=2) < anchor_ratio
        a_idx, t_idx = np.nonzero(match)
        t = t[t_idx]

        gxy = t[:, 2:4]
        gxi = grid - gxy
        left_up = ((gxy % 1 < NEIGHBOUR_OFFSET) & (gxy > 1)).T
        right_down = ((gxi % 1 < NEIGHBOUR_OFFSET) & (gxi > 1)).T
        select = np.stack([np.ones(len(t), dtype=bool), left_up[0], left_up[1], right_down[0], right_down[1]])
        rows, cols = np.nonzero(select)
        t_rep = t[cols]
        a_rep = a_idx[cols]
        gxy_rep = t_rep[:, 2:4]
        gij = np.floor(gxy_rep - _OFFSETS[rows]).astype(np.int64)
        gij = np.clip(gij, 0, grid - 1)
        assigned.append(
            ScaleTargets(
                image=t_rep[:, 0].astype(np.int64),
                anchor=a_rep.astype(np.int64),
                gj=gij[:, 1],
                gi=gij[:, 0],
                box=np.concatenate([gxy_rep - gij, t_rep[:, 4:6]], axis=1),
                anchor_wh=anchors[a_rep],
                class_id=t_rep[:, 1].astype(np.int64),
            )
        )
    return assigned


def _column(x: Tensor, i: int) -> Tensor:
    return ops.getitem(x, (slice(None), i))


def ciou(pred: Tensor, target: np.ndarray) -> Tensor:
    """Complete IoU between (n, 4) predicted and constant target (cx, cy, w, h) boxes"""
    px, py, pw, ph = (_column(pred, i) for i in range(4))
    tx, ty, tw, th = (ops.constant(target[:, i], like=pred) for i in range(4))
    half = lambda v: ops.affine(v, 0.5)  # noqa: E731
    b1x1, b1x2 = ops.sub(px, half(pw)), ops.add(px, half(pw))
    b1y1, b1y2 = ops.sub(py, half(ph)), ops.add(py, half(ph))
    b2x1, b2x2 = ops.sub(tx, half(tw)), ops.add(tx, half(tw))
    b2y1, b2y2 = ops.sub(ty, half(th)), ops.add(ty, half(th))

    inter_w = ops.clamp(ops.sub(ops.minimum(b1x2, b2x2), ops.maximum(b1x1, b2x1)), low=0.0)
    inter_h = ops.clamp(ops.sub(ops.minimum(b1y2, b2y2), ops.maximum(b1y1, b2y1)), low=0.0)
    inter = ops.mul(inter_w, inter_h)
    ph_eps = ops.affine(ph, 1.0, CIOU_EPS)
    th_eps = ops.affine(th, 1.0, CIOU_EPS)
    union = ops.affine(ops.sub(ops.add(ops.mul(pw, ph_eps), ops.mul(tw, th_eps)), inter), 1.0, CIOU_EPS)
    iou = ops.div(inter, union)

    cw = ops.sub(ops.maximum(b1x2, b2x2), ops.minimum(b1x1, b2x1))
    ch = ops.sub(ops.maximum(b1y2, b2y2), ops.minimum(b1y1, b2y1))
    c2 = ops.affine(ops.add(ops.pow(cw, 2), ops.pow(ch, 2)), 1.0, CIOU_EPS)
    dx = ops.sub(ops.add(b2x1, b2x2), ops.add(b1x1, b1x2))
    dy = ops.sub(ops.add(b2y1, b2y2), ops.add(b1y1, b1y2))
    rho2 = ops.affine(ops.add(ops.pow(dx, 2), ops.pow(dy, 2)), 0.25)

    aspect = ops.sub(ops.atan(ops.div(tw, th_eps)), ops.atan(ops.div(pw, ph_eps)))
    v = ops.affine(ops.pow(aspect, 2), 4 / math.pi ** 2)
    alpha = ops.div(v, ops.affine(ops.sub(v, iou), 1.0, 1.0 + CIOU_EPS))
    penalty = ops.add(ops.div(rho2, c2), ops.mul(v, alpha))
    return ops.sub(iou, penalty)


def detection_loss(
    raw: Sequence[Tensor],
    labels: Sequence[np.ndarray],
    config: DetectorConfig,
    weights: Optional[LossWeights] = None,
) -> LossTerms:
    """
    raw: head output per scale [N, 3, G, G, 5 + nc]; labels: one (n, 5) array per frame,
    frame i of labels matching index i of the N axis.
    """
    weights = weights or LossWeights()
    if len(raw) != len(config.strides):
        raise ShapeError(f"expected {len(config.strides)} scales, got {len(raw)}")
    n_frames = raw[0].shape[0]
    if len(labels) != n_frames:
        raise ShapeError(f"{len(labels)} label sets for {n_frames} predicted frames")
    like = raw[0]
    zero = ops.constant(np.zeros(()), like=like)
    box_term, obj_term, cls_term = zero, zero, zero
    nc = config.num_classes

    for scale, (pred, targets) in enumerate(zip(raw, build_targets(labels, config, weights.anchor_ratio))):
        tobj = np.zeros(pred.shape[:4], dtype=pred.dtype)
        if len(targets):
            index = (targets.image, targets.anchor, targets.gj, targets.gi)
            ps = ops.getitem(pred, index)  # (n, 5 + nc)
            sig = ops.sigmoid(ops.getitem(ps, (slice(None), slice(0, 4))))
            pxy = ops.affine(ops.getitem(sig, (slice(None), slice(0, 2))), 2.0, -0.5)
            pwh = ops.mul(
                ops.pow(ops.affine(ops.getitem(sig, (slice(None), slice(2, 4))), 2.0), 2),
                ops.constant(targets.anchor_wh, like=pred),
            )
            iou = ciou(ops.concat([pxy, pwh], axis=1), targets.box)
            box_term = ops.add(box_term, ops.mean(ops.one_minus(iou)))
            tobj[index] = 1.0
            if nc > 1:
                onehot = np.zeros((len(targets), nc), dtype=pred.dtype)
                onehot[np.arange(len(targets)), targets.class_id] = 1.0
                cls_logits = ops.getitem(ps, (slice(None), slice(5, 5 + nc)))
                cls_term = ops.add(cls_term, ops.mean(ops.bce_with_logits(cls_logits, onehot)))
        obj_logits = ops.getitem(pred, (Ellipsis, 4))
        obj_loss = ops.mean(ops.bce_with_logits(obj_logits, tobj))
        obj_term = ops.add(obj_term, ops.affine(obj_loss, weights.balance[scale]))

    box_term = ops.affine(box_term, weights.box)
    obj_term = ops.affine(obj_term, weights.obj)
    cls_term = ops.affine(cls_term, weights.cls)
    total = ops.add(ops.add(box_term, obj_term), cls_term)
    return LossTerms(total, box_term, obj_term, cls_term)
