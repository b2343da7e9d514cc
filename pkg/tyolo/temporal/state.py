"""
Recurrent state threaded between calls of a temporal cell.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from tyolo.core.errors import ShapeError, StateMismatchError
from tyolo.tensor.tensor import Tensor


class TemporalKind(str, Enum):
    QRNN = "qrnn"
    CONVLSTM = "convlstm"
    NONE = "none"


@dataclass
class TemporalState:
    """Hidden state h, ConvLSTM memory s, and the QRNN's carried previous frame"""
    kind: TemporalKind
    h: Tensor
    s: Optional[Tensor] = None
    x_prev: Optional[Tensor] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.h.shape

    def detach(self) -> "TemporalState":
        return TemporalState(
            kind=self.kind,
            h=self.h.detach(),
            s=self.s.detach() if self.s is not None else None,
            x_prev=self.x_prev.detach() if self.x_prev is not None else None,
        )

    def check(self, kind: TemporalKind, frame_shape: Tuple[int, ...]) -> None:
        """frame_shape is [B, C, H, W] of one timestep"""
        if self.kind != kind:
            raise StateMismatchError(f"state of kind {self.kind.value} passed to a {kind.value} cell")
        if tuple(self.h.shape) != tuple(frame_shape):
            raise StateMismatchError(
                f"state shape {list(self.h.shape)} does not match input frames {list(frame_shape)}"
            )


def reset_state(state: TemporalState) -> TemporalState:
    """Zero h and s and drop the carried frame"""
    return TemporalState(
        kind=state.kind,
        h=Tensor(np.zeros_like(state.h.data)),
        s=Tensor(np.zeros_like(state.s.data)) if state.s is not None else None,
        x_prev=None,
    )


def check_sequence(x_seq: Tensor, channels: int, where: str) -> Tuple[int, int, int, int, int]:
    if x_seq.ndim != 5:
        raise ShapeError(f"{where}: expected [B, T, C, H, W], got {list(x_seq.shape)}")
    b, t, c, h, w = x_seq.shape
    if t == 0:
        raise ShapeError(f"{where}: sequence has no frames (T = 0)")
    if c != channels:
        raise ShapeError(f"{where}: input has {c} channels, cell has {channels}")
    return b, t, c, h, w
