"""
The temporal detector: backbone -> neck -> temporal cell per scale -> head.

Training and evaluation run whole clips [B, T, 3, S, S]. Deployment feeds one frame at a time
through stream_step/detect_stream, carrying a StreamState between calls.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import structlog

from tyolo.core.errors import ShapeError, StateMismatchError
from tyolo.metrics.boxes import DetectionSet
from tyolo.metrics.nms import DEPLOY_CONF_THRESHOLD, IOU_THRESHOLD, nms
from tyolo.models.backbone import Backbone
from tyolo.models.config import DetectorConfig
from tyolo.models.head import DetectionHead, decode, drop_degenerate
from tyolo.models.neck import PathAggregationNeck
from tyolo.models.pyramid import SCALES, FeaturePyramid
from tyolo.nn.module import Module
from tyolo.tensor import ops
from tyolo.tensor.tensor import Tensor, no_grad
from tyolo.temporal.convlstm import ConvLSTMCell
from tyolo.temporal.qrnn import QRNNCell
from tyolo.temporal.state import TemporalKind, TemporalState

logger = structlog.get_logger(__name__)

TemporalStates = Dict[str, TemporalState]


class TemporalNeck(Module):
    """One temporal cell per pyramid scale, channel counts (c3, c4, c5)"""

    def __init__(self, config: DetectorConfig, rng: np.random.Generator):
        super().__init__()
        self.kind = config.temporal_kind
        for name, channels in zip(SCALES, config.effective_channels):
            if self.kind == TemporalKind.QRNN:
                cell: Module = QRNNCell(channels, rng)
            else:
                cell = ConvLSTMCell(channels, rng, candidate_activation=config.candidate_activation)
            self.add_module(name, cell)

    def cell(self, scale: str) -> Module:
        return getattr(self, scale)

    def init_passthrough(self) -> None:
        for scale in SCALES:
            self.cell(scale).init_passthrough()


@dataclass
class StreamState:
    """Per-scale temporal states of one video stream plus the model signature that produced them"""
    signature: Dict[str, Any]
    states: TemporalStates = field(default_factory=dict)
    frames_seen: int = 0

    def check(self, config: DetectorConfig) -> None:
        expected = config.signature()
        if self.signature != expected:
            raise StateMismatchError(
                f"stream state was produced by {self.signature}, model is {expected}"
            )


class DetectorModel(Module):
    def __init__(self, config: DetectorConfig):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.backbone = Backbone(config, rng)
        self.neck = PathAggregationNeck(config, rng)
        if config.is_temporal:
            self.add_module(config.temporal_kind.value, TemporalNeck(config, rng))
        self.head = DetectionHead(config, rng)

    @property
    def temporal(self) -> Optional[TemporalNeck]:
        if not self.config.is_temporal:
            return None
        return getattr(self, self.config.temporal_kind.value)

    def stage_modules(self) -> Dict[str, Module]:
        stages: Dict[str, Module] = {"backbone": self.backbone, "neck": self.neck}
        if self.temporal is not None:
            stages["temporal"] = self.temporal
        stages["head"] = self.head
        return stages

    def init_temporal_passthrough(self) -> None:
        if self.temporal is not None:
            self.temporal.init_passthrough()

    def forward(
        self, clip: Tensor, states: Optional[TemporalStates] = None
    ) -> Tuple[List[Tensor], TemporalStates]:
        """[B, T, 3, S, S] -> raw predictions per scale over B * T frames, plus final states"""
        if clip.ndim != 5:
            raise ShapeError(f"detector expects a clip [B, T, 3, S, S], got {list(clip.shape)}")
        b, t = clip.shape[:2]
        frames = ops.reshape(clip, (b * t,) + clip.shape[2:])
        pyramid = neck_forward(self, backbone_forward(self, frames))
        pyramid, new_states = temporal_forward(self, pyramid, b, t, states)
        return head_forward(self, pyramid), new_states


def backbone_forward(model: DetectorModel, frames: Tensor) -> FeaturePyramid:
    """[B * T, 3, S, S] frames in [0, 1] -> pyramid with the variant's channel plan"""
    return model.backbone(frames)


def neck_forward(model: DetectorModel, pyramid: FeaturePyramid) -> FeaturePyramid:
    return model.neck(pyramid)


def temporal_forward(
    model: DetectorModel,
    pyramid: FeaturePyramid,
    batch: int,
    seq_len: int,
    states: Optional[TemporalStates] = None,
) -> Tuple[FeaturePyramid, TemporalStates]:
    """Run each scale's cell over the time axis; identity when the model has no temporal module"""
    if model.temporal is None:
        return pyramid, {}
    pyramid.check(model.config, "temporal input")
    states = states or {}
    new_states: TemporalStates = {}

    def run(scale: str, feature: Tensor) -> Tensor:
        n, c, h, w = feature.shape
        if n != batch * seq_len:
            raise ShapeError(f"{scale}: {n} frames is not batch {batch} x seq_len {seq_len}")
        seq = ops.reshape(feature, (batch, seq_len, c, h, w))
        out, new_states[scale] = model.temporal.cell(scale)(seq, states.get(scale))
        return ops.reshape(out, (n, c, h, w))

    return pyramid.map(run), new_states


def head_forward(model: DetectorModel, pyramid: FeaturePyramid) -> List[Tensor]:
    return model.head(pyramid)


def to_frame_tensor(frames: Union[np.ndarray, Tensor], dtype: np.dtype) -> Tensor:
    """(..., S, S, 3) images in [0, 1] -> [N, 3, S, S]; tensors are passed through"""
    if isinstance(frames, Tensor):
        return frames
    frames = np.asarray(frames)
    if frames.ndim == 3:
        frames = frames[None]
    if frames.ndim != 4 or frames.shape[-1] != 3:
        raise ShapeError(f"expected (N, S, S, 3) images, got {frames.shape}")
    return Tensor(np.ascontiguousarray(frames.transpose(0, 3, 1, 2), dtype=dtype))


def new_stream(model: DetectorModel) -> StreamState:
    return StreamState(signature=model.config.signature())


def stream_step(
    model: DetectorModel, frame: Union[np.ndarray, Tensor], state: Optional[StreamState] = None
) -> Tuple[List[Tensor], StreamState]:
    """Raw predictions for one new frame per stream, using only the carried state"""
    if state is None:
        state = new_stream(model)
    state.check(model.config)
    x = to_frame_tensor(frame, model.dtype)
    size = model.config.input_size
    if x.shape[1:] != (3, size, size):
        raise ShapeError(f"frame must be {size}x{size} RGB, got {list(x.shape)}")
    clip = ops.reshape(x, (x.shape[0], 1) + x.shape[1:])
    with no_grad():
        raw, states = model(clip, state.states or None)
    detached = {k: v.detach() for k, v in states.items()}
    return raw, StreamState(state.signature, detached, state.frames_seen + 1)


def detect_stream(
    model: DetectorModel,
    frame: Union[np.ndarray, Tensor],
    state: Optional[StreamState] = None,
    conf_thresh: float = DEPLOY_CONF_THRESHOLD,
    iou_thresh: float = IOU_THRESHOLD,
) -> Tuple[DetectionSet, StreamState]:
    """
    Detections for the next frame of a single video stream.

    Pass state=None for the first frame of a video; the returned state feeds the next call.
    """
    raw, new_state = stream_step(model, frame, state)
    if raw[0].shape[0] != 1:
        raise ShapeError("detect_stream handles one stream; use stream_step for batches")
    dets = drop_degenerate(decode(raw, model.config)[0])
    return nms(dets, conf_thresh, iou_thresh), new_state


def detect_clip(
    model: DetectorModel,
    clip: Union[np.ndarray, Tensor],
    conf_thresh: float = DEPLOY_CONF_THRESHOLD,
    iou_thresh: float = IOU_THRESHOLD,
) -> List[DetectionSet]:
    """Joint inference over a (T, S, S, 3) clip; one detection set per frame"""
    x = to_frame_tensor(clip, model.dtype)
    with no_grad():
        raw, _ = model(ops.reshape(x, (1,) + x.shape))
    return [nms(drop_degenerate(d), conf_thresh, iou_thresh) for d in decode(raw, model.config)]
