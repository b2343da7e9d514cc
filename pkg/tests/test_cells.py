"""
Tests for the quasi-recurrent and convolutional LSTM cells.
"""

import numpy as np
import pytest
from scipy.signal import correlate

from tyolo.core.errors import ShapeError, StateMismatchError
from tyolo.tensor import ops
from tyolo.tensor.gradcheck import grad_check
from tyolo.tensor.tensor import Tensor, default_dtype
from tyolo.temporal import ConvLSTMCell, QRNNCell, TemporalKind, reset_state

B, T, C, H, W = 2, 4, 3, 5, 5


def _build(kind, channels=C, **kwargs):
    rng = np.random.default_rng(0)
    with default_dtype(np.float64):
        if kind == TemporalKind.QRNN:
            return QRNNCell(channels, rng)
        return ConvLSTMCell(channels, rng, **kwargs)


def _sequence(t=T, seed=1):
    return Tensor(np.random.default_rng(seed).standard_normal((B, t, C, H, W)))


@pytest.mark.parametrize("kind", [TemporalKind.QRNN, TemporalKind.CONVLSTM])
class TestCellContracts:
    """Behaviour shared by both cells"""

    def test_output_shape_and_state(self, kind):
        cell = _build(kind)
        out, state = cell(_sequence())
        assert out.shape == (B, T, C, H, W)
        assert state.kind == kind
        assert state.h.shape == (B, C, H, W)
        np.testing.assert_allclose(state.h.data, out.data[:, -1])

    def test_streaming_matches_joint_pass(self, kind):
        cell = _build(kind)
        x = _sequence()
        joint, _ = cell(x)
        state = None
        for t in range(T):
            step, state = cell(Tensor(x.data[:, t:t + 1]), state)
            np.testing.assert_allclose(step.data[:, 0], joint.data[:, t], rtol=1e-10, atol=1e-12)

    def test_split_clip_matches_joint_pass(self, kind):
        cell = _build(kind)
        x = _sequence()
        joint, _ = cell(x)
        first, state = cell(Tensor(x.data[:, :2]))
        second, _ = cell(Tensor(x.data[:, 2:]), state)
        np.testing.assert_allclose(np.concatenate([first.data, second.data], axis=1), joint.data, atol=1e-12)

    def test_empty_sequence_rejected(self, kind):
        with pytest.raises(ShapeError):
            _build(kind)(Tensor(np.zeros((B, 0, C, H, W))))

    def test_channel_mismatch_rejected(self, kind):
        with pytest.raises(ShapeError):
            _build(kind)(Tensor(np.zeros((B, 1, C + 1, H, W))))

    def test_state_from_other_resolution_rejected(self, kind):
        cell = _build(kind)
        _, state = cell(_sequence(t=1))
        with pytest.raises(StateMismatchError):
            cell(Tensor(np.zeros((B, 1, C, H + 2, W + 2))), state)

    def test_reset_state_zeroes(self, kind):
        _, state = _build(kind)(_sequence(t=2))
        cleared = reset_state(state)
        assert not cleared.h.data.any()
        assert cleared.x_prev is None

    def test_gradients(self, kind):
        cell = _build(kind, channels=2)
        x = Tensor(np.random.default_rng(3).standard_normal((1, 3, 2, 4, 4)))
        assert grad_check(lambda seq: ops.pow(cell(seq)[0], 2.0), [x]) < 1e-4

    def test_parameter_gradients_flow(self, kind):
        cell = _build(kind)
        out, _ = cell(_sequence(t=2))
        ops.sum(ops.pow(out, 2.0)).backward()
        assert all(p.grad is not None for p in cell.parameters())


class TestQRNN:
    """Quasi-recurrent specifics"""

    def test_passthrough_init_tracks_current_frame(self):
        cell = _build(TemporalKind.QRNN)
        cell.init_passthrough()
        x = _sequence()
        out, _ = cell(x)
        np.testing.assert_allclose(out.data, np.tanh(x.data), atol=1e-6)

    def test_state_of_other_kind_rejected(self):
        _, lstm_state = _build(TemporalKind.CONVLSTM)(_sequence(t=1))
        with pytest.raises(StateMismatchError):
            _build(TemporalKind.QRNN)(_sequence(t=1), lstm_state)

    def test_state_carries_previous_frame(self):
        x = _sequence(t=3)
        _, state = _build(TemporalKind.QRNN)(x)
        np.testing.assert_array_equal(state.x_prev.data, x.data[:, -1])


class TestConvLSTM:
    """Convolutional LSTM specifics"""

    @pytest.mark.parametrize("candidate, fn", [("sigmoid", lambda v: 1 / (1 + np.exp(-v))), ("tanh", np.tanh)])
    def test_passthrough_init(self, candidate, fn):
        cell = _build(TemporalKind.CONVLSTM, candidate_activation=candidate)
        cell.init_passthrough()
        x = _sequence()
        out, state = cell(x)
        np.testing.assert_allclose(out.data, np.tanh(fn(x.data)), atol=1e-6)
        assert state.s is not None

    def test_zero_initial_state_is_default(self):
        cell = _build(TemporalKind.CONVLSTM)
        x = _sequence(t=2)
        implicit, _ = cell(x)
        explicit, _ = cell(x, cell.zero_state(B, H, W, np.float64))
        np.testing.assert_array_equal(implicit.data, explicit.data)

    def test_rejects_unknown_candidate_activation(self):
        with pytest.raises(ValueError):
            ConvLSTMCell(2, np.random.default_rng(0), candidate_activation="relu")

    def test_state_of_other_kind_rejected(self):
        _, qrnn_state = _build(TemporalKind.QRNN)(_sequence(t=1))
        with pytest.raises(StateMismatchError):
            _build(TemporalKind.CONVLSTM)(_sequence(t=1), qrnn_state)


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def _same_conv(x, w, b):
    """[N, C, H, W] cross-correlated with [O, C, k, k], zero 'same' padding"""
    pad = w.shape[-1] // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.empty((x.shape[0], w.shape[0]) + x.shape[2:])
    for n in range(x.shape[0]):
        for o in range(w.shape[0]):
            out[n, o] = correlate(xp[n], w[o], mode="valid")[0] + b[o]
    return out


def qrnn_loop(cell, x):
    """Frame-by-frame QRNN: h_1 from the first frame alone, then f-pooling over frame pairs"""
    w = {name: getattr(cell, name).data for name in ("w_h0", "b_h0", "w_z", "b_z", "w_f", "b_f")}
    h = np.tanh(_same_conv(x[:, 0], w["w_h0"], w["b_h0"]))
    hidden = [h]
    for t in range(1, x.shape[1]):
        pair = lambda weight, bias: (  # noqa: E731
            _same_conv(x[:, t - 1], weight[:, :, 0], bias) + _same_conv(x[:, t], weight[:, :, 1], 0 * bias)
        )
        z = np.tanh(pair(w["w_z"], w["b_z"]))
        f = _sigmoid(pair(w["w_f"], w["b_f"]))
        h = f * h + (1 - f) * z
        hidden.append(h)
    return np.stack(hidden, axis=1)


def convlstm_loop(cell, x):
    """Frame-by-frame ConvLSTM from a zero state, one convolution per gate"""
    candidate = _sigmoid if cell.candidate_activation == "sigmoid" else np.tanh
    b, _, c, height, width = x.shape
    h = np.zeros((b, c, height, width))
    s = np.zeros_like(h)
    hidden = []
    for t in range(x.shape[1]):
        xh = np.concatenate([x[:, t], h], axis=1)
        gate = lambda g: _same_conv(xh, getattr(cell, f"w_{g}").data, getattr(cell, f"b_{g}").data)  # noqa: E731
        i, f, o = _sigmoid(gate("i")), _sigmoid(gate("f")), _sigmoid(gate("o"))
        s = f * s + i * candidate(gate("c"))
        h = o * np.tanh(s)
        hidden.append(h)
    return np.stack(hidden, axis=1), s


def _random_case(rng, kind):
    b, t, c = int(rng.integers(1, 3)), int(rng.integers(1, 5)), int(rng.integers(1, 5))
    height, width = int(rng.integers(3, 7)), int(rng.integers(3, 7))
    kernel = int(rng.choice([1, 3]))
    with default_dtype(np.float64):
        if kind == TemporalKind.QRNN:
            cell = QRNNCell(c, rng, kernel=kernel)
        else:
            cell = ConvLSTMCell(c, rng, kernel=kernel, candidate_activation=str(rng.choice(["sigmoid", "tanh"])))
    for name, param in cell.named_parameters():
        if name.startswith("b_"):
            param.data[...] = rng.normal(0, 0.5, param.shape)
    return cell, rng.standard_normal((b, t, c, height, width))


class TestSequentialOracles:
    """Cells against independent per-frame numpy loops"""

    def test_qrnn_matches_loop(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            cell, x = _random_case(rng, TemporalKind.QRNN)
            out, state = cell(Tensor(x))
            expected = qrnn_loop(cell, x)
            np.testing.assert_allclose(out.data, expected, atol=1e-6)
            np.testing.assert_allclose(state.h.data, expected[:, -1], atol=1e-6)

    def test_convlstm_matches_loop(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            cell, x = _random_case(rng, TemporalKind.CONVLSTM)
            out, state = cell(Tensor(x))
            expected, s = convlstm_loop(cell, x)
            np.testing.assert_allclose(out.data, expected, atol=1e-6)
            np.testing.assert_allclose(state.s.data, s, atol=1e-6)

    def test_qrnn_zero_weights_stay_at_zero(self):
        cell = _build(TemporalKind.QRNN)
        for param in cell.parameters():
            param.data[...] = 0
        out, _ = cell(_sequence())
        np.testing.assert_array_equal(out.data, np.zeros((B, T, C, H, W)))

    def test_convlstm_zero_weights_closed_form(self):
        cell = _build(TemporalKind.CONVLSTM)
        for param in cell.parameters():
            param.data[...] = 0
        out, state = cell(_sequence(t=1))
        np.testing.assert_array_equal(state.s.data, np.full((B, C, H, W), 0.25))
        np.testing.assert_array_equal(out.data[:, 0], np.full((B, C, H, W), 0.5 * np.tanh(0.25)))
