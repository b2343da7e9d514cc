"""
Temporal modules: quasi-recurrent and convolutional LSTM cells.
"""

from tyolo.temporal.convlstm import ConvLSTMCell, convlstm_forward
from tyolo.temporal.qrnn import QRNNCell, qrnn_forward
from tyolo.temporal.state import TemporalKind, TemporalState, reset_state

__all__ = [
    "QRNNCell",
    "ConvLSTMCell",
    "qrnn_forward",
    "convlstm_forward",
    "TemporalKind",
    "TemporalState",
    "reset_state",
]
