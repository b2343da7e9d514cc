"""
Convolutional LSTM cell without the attention branch.

All four gates come from one convolution over [x_t, h_{t-1}]. The candidate uses
sigmoid by default; candidate_activation="tanh" selects the conventional LSTM form.
"""

from typing import List, Optional, Tuple

import numpy as np

from tyolo.nn.layers import kaiming_normal
from tyolo.nn.module import Module, Parameter
from tyolo.tensor import ops
from tyolo.tensor.conv import ConvSpec, conv2d
from tyolo.tensor.tensor import Tensor, get_default_dtype
from tyolo.temporal.state import TemporalKind, TemporalState, check_sequence

GATES = ("i", "f", "o", "c")


class ConvLSTMCell(Module):
    def __init__(
        self,
        channels: int,
        rng: np.random.Generator,
        kernel: int = 3,
        candidate_activation: str = "sigmoid",
    ):
        super().__init__()
        if candidate_activation not in ("sigmoid", "tanh"):
            raise ValueError(f"candidate_activation must be sigmoid or tanh, got {candidate_activation!r}")
        dtype = get_default_dtype()
        self.channels = channels
        self.candidate_activation = candidate_activation
        self.spec = ConvSpec.square(2 * channels, channels, kernel)
        self.spec_fused = ConvSpec.square(2 * channels, 4 * channels, kernel)
        for gate in GATES:
            weight = kaiming_normal(self.spec.weight_shape, self.spec.fan_in, rng, 1.0)
            setattr(self, f"w_{gate}", Parameter(weight))
            setattr(self, f"b_{gate}", Parameter(np.zeros(channels, dtype=dtype)))

    def gate_weights(self) -> Tuple[Tensor, Tensor]:
        weight = ops.concat([getattr(self, f"w_{g}") for g in GATES], axis=0)
        bias = ops.concat([getattr(self, f"b_{g}") for g in GATES], axis=0)
        return weight, bias

    def init_passthrough(self, saturation: float = 20.0) -> None:
        """
        Input gate open, forget gate closed, output gate open, identity candidate.

        The result is h_t = tanh(a(x_t)) with a the candidate activation. With the default
        sigmoid candidate that is tanh(sigmoid(x)), squashed into (0, 0.76) and not an identity
        around zero; candidate_activation="tanh" gives tanh(tanh(x)), which keeps the sign.
        """
        c, k = self.channels, self.spec.kernel_spatial[0]
        for gate in GATES:
            getattr(self, f"w_{gate}").data[...] = 0
        self.w_c.data[:, :c, k // 2, k // 2] = np.eye(c, dtype=self.w_c.dtype)
        self.b_i.data[...] = saturation
        self.b_f.data[...] = -saturation
        self.b_o.data[...] = saturation
        self.b_c.data[...] = 0

    def zero_state(self, batch: int, height: int, width: int, dtype: np.dtype) -> TemporalState:
        shape = (batch, self.channels, height, width)
        return TemporalState(
            kind=TemporalKind.CONVLSTM,
            h=Tensor(np.zeros(shape, dtype=dtype)),
            s=Tensor(np.zeros(shape, dtype=dtype)),
        )

    def forward(
        self, x_seq: Tensor, state: Optional[TemporalState] = None
    ) -> Tuple[Tensor, TemporalState]:
        return convlstm_forward(self, x_seq, state)


def convlstm_forward(
    cell: ConvLSTMCell, x_seq: Tensor, state: Optional[TemporalState] = None
) -> Tuple[Tensor, TemporalState]:
    """[B, T, C, H, W] -> hidden states of the same shape, plus (h_T, s_T)"""
    b, t, c, height, width = check_sequence(x_seq, cell.channels, "convlstm_forward")
    if state is None:
        state = cell.zero_state(b, height, width, x_seq.dtype)
    else:
        state.check(TemporalKind.CONVLSTM, (b, c, height, width))
    h = state.h
    s = state.s if state.s is not None else Tensor(np.zeros_like(h.data))

    weight, bias = cell.gate_weights()
    outputs: List[Tensor] = []
    for step in range(t):
        gates = conv2d(ops.concat_channels(x_seq[:, step], h), weight, bias, cell.spec_fused)
        i = ops.sigmoid(gates[:, 0:c])
        f = ops.sigmoid(gates[:, c:2 * c])
        o = ops.sigmoid(gates[:, 2 * c:3 * c])
        candidate = ops.activation(gates[:, 3 * c:], cell.candidate_activation)
        s = ops.add(ops.mul(f, s), ops.mul(i, candidate))
        h = ops.mul(o, ops.tanh(s))
        outputs.append(h)

    return ops.stack(outputs, axis=1), TemporalState(kind=TemporalKind.CONVLSTM, h=h, s=s)
