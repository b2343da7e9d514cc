"""
Tests for the detector graph, box decoding and causal streaming.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from tests.conftest import tiny_config
from tyolo.core.errors import CheckpointError, ShapeError, StateMismatchError
from tyolo.metrics.boxes import DetectionSet
from tyolo.models import DetectorModel, decode, decode_scale, detect_clip, detect_stream, encode_scale, new_stream, stream_step
from tyolo.models.config import DetectorConfig
from tyolo.models.head import drop_degenerate
from tyolo.nn.module import parameter_census
from tyolo.tensor.tensor import Tensor, default_dtype
from tyolo.temporal.state import TemporalKind


def _frames(count, size=64, seed=0):
    return np.random.default_rng(seed).random((count, size, size, 3))


class TestDetectorConfig:
    """Validation of the detector description"""

    def test_defaults(self):
        config = DetectorConfig()
        assert config.channels == (128, 256, 512)
        assert config.grid_sizes == (80, 40, 20)
        assert config.class_names == ["hand", "gun", "phone"]

    def test_width_multiple_scales_channels(self):
        assert tiny_config().effective_channels == (16, 32, 64)

    def test_input_size_must_divide_by_32(self):
        with pytest.raises(ValidationError):
            DetectorConfig(input_size=100)

    def test_anchor_shape_checked(self):
        with pytest.raises(ValidationError):
            DetectorConfig(anchors=[[(10, 13), (16, 30)]] * 3)

    def test_class_names_must_match_count(self):
        with pytest.raises(ValidationError):
            DetectorConfig(num_classes=2, class_names=["a", "b", "c"])

    def test_channels_must_increase(self):
        with pytest.raises(ValidationError):
            DetectorConfig(channels=(64, 64, 128))

    def test_default_anchors_scale_with_input(self):
        np.testing.assert_allclose(tiny_config().anchor_array()[0, 0], [1.0, 1.3])


class TestDetectorGraph:
    """Forward shapes, parameter layout and variant ordering"""

    def test_static_forward_shapes(self, static_config):
        model = DetectorModel(static_config)
        raw, states = model(Tensor(np.zeros((2, 1, 3, 64, 64), dtype=np.float32)))
        assert [r.shape for r in raw] == [(2, 3, g, g, 8) for g in (8, 4, 2)]
        assert states == {}
        assert model.temporal is None

    @pytest.mark.parametrize("kind", [TemporalKind.QRNN, TemporalKind.CONVLSTM])
    def test_temporal_forward_covers_every_frame(self, kind):
        model = DetectorModel(tiny_config(kind))
        raw, states = model(Tensor(np.zeros((1, 3, 3, 64, 64), dtype=np.float32)))
        assert raw[0].shape == (3, 3, 8, 8, 8)
        assert set(states) == {"p3", "p4", "p5"}
        assert any(name.startswith(f"{kind.value}.") for name in model.state_dict())

    def test_rejects_wrong_resolution(self, static_config):
        with pytest.raises(ShapeError):
            DetectorModel(static_config)(Tensor(np.zeros((1, 1, 3, 32, 32), dtype=np.float32)))

    def test_rejects_frames_without_time_axis(self, static_config):
        with pytest.raises(ShapeError):
            DetectorModel(static_config)(Tensor(np.zeros((1, 3, 64, 64), dtype=np.float32)))

    def test_variants_grow(self):
        counts = [
            DetectorModel(tiny_config(TemporalKind.NONE, variant=v)).num_parameters()
            for v in ("small", "medium", "large")
        ]
        assert counts[0] < counts[1] < counts[2]

    def test_temporal_cells_add_parameters(self, static_config, qrnn_config):
        assert DetectorModel(qrnn_config).num_parameters() > DetectorModel(static_config).num_parameters()

    def test_same_seed_same_weights(self, qrnn_config):
        a, b = DetectorModel(qrnn_config).state_dict(), DetectorModel(qrnn_config).state_dict()
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_census_after_freezing(self, qrnn_config):
        model = DetectorModel(qrnn_config)
        model.backbone.requires_grad_(False)
        census = parameter_census(model)
        assert census["frozen"] == model.backbone.num_parameters()
        assert census["trainable"] + census["frozen"] == census["total"]

    def test_static_state_seeds_temporal_model(self, static_config, qrnn_config):
        static = DetectorModel(static_config)
        temporal = DetectorModel(qrnn_config.model_copy(update={"seed": 5}))
        missing = temporal.load_state_dict(static.state_dict(), strict=False)
        assert missing and all(name.startswith("qrnn.") for name in missing)
        np.testing.assert_array_equal(
            temporal.state_dict()["head.convs.0.weight"], static.state_dict()["head.convs.0.weight"]
        )
        with pytest.raises(CheckpointError):
            temporal.load_state_dict(static.state_dict(), strict=True)

    def test_cast_to_float64(self, static_config):
        model = DetectorModel(static_config).to(np.float64)
        assert model.dtype == np.float64
        raw, _ = model(Tensor(np.zeros((1, 1, 3, 64, 64))))
        assert raw[0].dtype == np.float64


class TestDecode:
    """Raw head output to pixel boxes"""

    def test_zero_logits(self, static_config):
        grid = 8
        raw = np.zeros((1, 3, grid, grid, 8))
        anchors = static_config.anchor_array()[0]
        boxes, obj, cls = decode_scale(raw, anchors, 8)
        np.testing.assert_allclose(boxes[0, 0, 0, 0], [4.0, 4.0, anchors[0, 0], anchors[0, 1]])
        np.testing.assert_allclose(boxes[0, 1, 2, 3], [28.0, 20.0, anchors[1, 0], anchors[1, 1]])
        np.testing.assert_allclose(obj, 0.5)
        np.testing.assert_allclose(cls, 0.5)

    def test_encode_inverts_decode(self, static_config):
        anchors = static_config.anchor_array()[1]
        raw = np.random.default_rng(0).standard_normal((1, 3, 4, 4, 8))
        boxes, _, _ = decode_scale(raw, anchors, 16)
        np.testing.assert_allclose(encode_scale(boxes, anchors, 16), raw[..., :4], atol=1e-8)

    def test_decode_counts_every_prediction(self, static_config):
        raw = [np.zeros((2, 3, g, g, 8)) for g in static_config.grid_sizes]
        sets = decode(raw, static_config)
        assert len(sets) == 2
        assert len(sets[0]) == static_config.predictions_per_frame() == 252

    def test_clipping_keeps_boxes_inside(self, static_config):
        raw = [np.full((1, 3, g, g, 8), 6.0) for g in static_config.grid_sizes]
        boxes = decode(raw, static_config)[0].boxes
        half = boxes[:, 2:] / 2
        assert (boxes[:, :2] - half >= -1e-9).all()
        assert (boxes[:, :2] + half <= 64 + 1e-9).all()

    def test_unclipped_decode_keeps_raw_extent(self, static_config):
        raw = [np.full((1, 3, g, g, 8), 6.0) for g in static_config.grid_sizes]
        boxes = decode(raw, static_config, clip=False)[0].boxes
        assert (boxes[:, :2] + boxes[:, 2:] / 2 > 64).any()

    def test_wrong_class_count(self, static_config):
        raw = [np.zeros((1, 3, g, g, 9)) for g in static_config.grid_sizes]
        with pytest.raises(ShapeError):
            decode(raw, static_config)

    def test_drop_degenerate(self):
        dets = DetectionSet(np.array([[5, 5, 0, 4], [5, 5, 2, 2]], dtype=float), np.array([0.9, 0.8]), np.array([0, 0]))
        assert len(drop_degenerate(dets)) == 1


class TestStreaming:
    """Causal per-frame inference"""

    @pytest.mark.parametrize("kind", [TemporalKind.QRNN, TemporalKind.CONVLSTM])
    def test_stream_matches_clip(self, kind):
        with default_dtype(np.float64):
            model = DetectorModel(tiny_config(kind, seq_len=3))
        model.eval()
        frames = _frames(3)
        clip_raw, _ = model(Tensor(frames.transpose(0, 3, 1, 2)[None]))
        state = new_stream(model)
        for t in range(3):
            raw, state = stream_step(model, frames[t], state)
            for scale in range(3):
                np.testing.assert_allclose(raw[scale].data[0], clip_raw[scale].data[t], rtol=1e-8, atol=1e-10)
        assert state.frames_seen == 3

    @pytest.mark.parametrize("kind", [TemporalKind.QRNN, TemporalKind.CONVLSTM])
    def test_future_frames_do_not_leak(self, kind):
        model = DetectorModel(tiny_config(kind, seq_len=3)).eval()
        frames = _frames(3).astype(np.float32)
        changed = frames.copy()
        changed[2] = 1.0 - changed[2]
        before, _ = model(Tensor(frames.transpose(0, 3, 1, 2)[None]))
        after, _ = model(Tensor(changed.transpose(0, 3, 1, 2)[None]))
        for scale in range(3):
            np.testing.assert_array_equal(before[scale].data[:2], after[scale].data[:2])
            assert not np.array_equal(before[scale].data[2], after[scale].data[2])

    def test_detect_stream_and_clip_agree(self, qrnn_config):
        with default_dtype(np.float64):
            model = DetectorModel(qrnn_config)
        model.eval()
        frames = _frames(2, seed=3)
        clip_sets = detect_clip(model, frames, conf_thresh=0.0)
        state = None
        for t in range(2):
            dets, state = detect_stream(model, frames[t], state, conf_thresh=0.0)
            np.testing.assert_allclose(dets.scores, clip_sets[t].scores, rtol=1e-8)

    def test_state_from_other_model_rejected(self, qrnn_config):
        small = DetectorModel(qrnn_config)
        _, state = stream_step(small, _frames(1)[0].astype(np.float32))
        other = DetectorModel(qrnn_config.model_copy(update={"temporal_kind": TemporalKind.CONVLSTM}))
        with pytest.raises(StateMismatchError):
            stream_step(other, _frames(1)[0].astype(np.float32), state)

    def test_wrong_frame_size(self, qrnn_config):
        with pytest.raises(ShapeError):
            detect_stream(DetectorModel(qrnn_config), np.zeros((32, 32, 3), dtype=np.float32))

    def test_static_model_streams_without_state(self, static_config):
        model = DetectorModel(static_config).eval()
        dets, state = detect_stream(model, _frames(1)[0].astype(np.float32))
        assert state.states == {}
        assert isinstance(dets, DetectionSet)
