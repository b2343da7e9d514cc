"""
Quasi-recurrent cell with f-pooling.

Gates for every timestep come from one 3D convolution over consecutive frame pairs;
only the elementwise pooling h_t = f_t * h_{t-1} + (1 - f_t) * z_t runs sequentially.
"""

from typing import List, Optional, Tuple

import numpy as np

from tyolo.nn.layers import kaiming_normal
from tyolo.nn.module import Module, Parameter
from tyolo.tensor import ops
from tyolo.tensor.conv import ConvSpec, conv2d, conv3d
from tyolo.tensor.tensor import Tensor, get_default_dtype
from tyolo.temporal.state import TemporalKind, TemporalState, check_sequence


class QRNNCell(Module):
    def __init__(self, channels: int, rng: np.random.Generator, kernel: int = 3):
        super().__init__()
        dtype = get_default_dtype()
        self.channels = channels
        self.spec_h0 = ConvSpec.square(channels, channels, kernel)
        self.spec_gate = ConvSpec.square(channels, channels, kernel, kernel_temporal=2)
        gate_shape = (channels, channels, 2, kernel, kernel)

        self.w_h0 = Parameter(kaiming_normal(self.spec_h0.weight_shape, self.spec_h0.fan_in, rng, 1.0))
        self.b_h0 = Parameter(np.zeros(channels, dtype=dtype))
        self.w_z = Parameter(kaiming_normal(gate_shape, self.spec_gate.fan_in, rng, 1.0))
        self.b_z = Parameter(np.zeros(channels, dtype=dtype))
        self.w_f = Parameter(kaiming_normal(gate_shape, self.spec_gate.fan_in, rng, 1.0))
        self.b_f = Parameter(np.zeros(channels, dtype=dtype))

    def init_passthrough(self, saturation: float = 20.0) -> None:
        """h_t = tanh(x_t): identity candidate on the current frame, forget gate closed"""
        c, k = self.channels, self.spec_h0.kernel_spatial[0]
        eye = np.eye(c, dtype=self.w_z.dtype)
        self.w_h0.data[...] = 0
        self.w_h0.data[:, :, k // 2, k // 2] = eye
        self.b_h0.data[...] = 0
        self.w_z.data[...] = 0
        self.w_z.data[:, :, 1, k // 2, k // 2] = eye
        self.b_z.data[...] = 0
        self.w_f.data[...] = 0
        self.b_f.data[...] = -saturation

    def forward(
        self, x_seq: Tensor, state: Optional[TemporalState] = None
    ) -> Tuple[Tensor, TemporalState]:
        return qrnn_forward(self, x_seq, state)


def qrnn_forward(
    cell: QRNNCell, x_seq: Tensor, state: Optional[TemporalState] = None
) -> Tuple[Tensor, TemporalState]:
    """[B, T, C, H, W] -> hidden states of the same shape, plus the state after frame T"""
    b, t, c, height, width = check_sequence(x_seq, cell.channels, "qrnn_forward")
    if state is not None:
        state.check(TemporalKind.QRNN, (b, c, height, width))

    x_ct = ops.permute(x_seq, (0, 2, 1, 3, 4))  # [B, C, T, H, W]
    outputs: List[Tensor] = []
    if state is None or state.x_prev is None:
        h = ops.tanh(conv2d(x_seq[:, 0], cell.w_h0, cell.b_h0, cell.spec_h0))
        outputs.append(h)
        window_input = x_ct if t > 1 else None
    else:
        h = state.h
        prev = ops.reshape(state.x_prev, (b, c, 1, height, width))
        window_input = ops.concat([prev, x_ct], axis=2)

    if window_input is not None:
        gate_spec = ConvSpec(
            c, 2 * c, cell.spec_gate.kernel_spatial, 2, padding=cell.spec_gate.padding
        )
        weight = ops.concat([cell.w_z, cell.w_f], axis=0)
        bias = ops.concat([cell.b_z, cell.b_f], axis=0)
        gates = conv3d(window_input, weight, bias, gate_spec)  # [B, 2C, windows, H, W]
        z_all = ops.tanh(gates[:, :c])
        f_all = ops.sigmoid(gates[:, c:])
        for k in range(gates.shape[2]):
            z, f = z_all[:, :, k], f_all[:, :, k]
            h = ops.add(ops.mul(f, h), ops.mul(ops.one_minus(f), z))
            outputs.append(h)

    h_seq = ops.stack(outputs, axis=1)
    new_state = TemporalState(kind=TemporalKind.QRNN, h=h, x_prev=x_seq[:, t - 1])
    return h_seq, new_state
