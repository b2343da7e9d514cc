"""
Tests for the batch-1 throughput benchmark.
"""

import time

import numpy as np
import pytest
from pydantic import ValidationError

from tests.conftest import tiny_config
from tyolo.metrics import EvalReport
from tyolo.metrics.benchmark import (
    BenchmarkConfig,
    BenchmarkResult,
    compare_variants,
    fps_benchmark,
    fps_from_latency,
    random_frames,
    results_frame,
)
from tyolo.models import DetectorModel
from tyolo.temporal import ConvLSTMCell, QRNNCell
from tyolo.temporal.state import TemporalKind
from tyolo.tensor import Tensor, default_dtype, no_grad

QUICK = {"warmup": 5, "runs": 30}


def test_fps_from_latency():
    assert fps_from_latency(8.0, 2.0) == pytest.approx(100.0)


class TestBenchmarkConfig:
    def test_minimum_runs(self):
        with pytest.raises(ValidationError):
            BenchmarkConfig(runs=10)
        with pytest.raises(ValidationError):
            BenchmarkConfig(warmup=1)

    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            BenchmarkConfig(mode="batch")


class TestFpsBenchmark:
    """Median latencies and the FPS they imply"""

    @pytest.mark.parametrize("mode", ["stream", "clip"])
    def test_result_consistency(self, qrnn_config, mode):
        result = fps_benchmark(DetectorModel(qrnn_config), config=BenchmarkConfig(mode=mode, **QUICK))
        assert result.label == "small-qrnn"
        assert result.runs == 30
        assert len(result.t_model_samples) == len(result.t_nms_samples) == 30
        assert result.fps == pytest.approx(1000.0 / (result.t_model_ms + result.t_nms_ms))
        assert result.t_model_ms > 0
        assert "cpu" in result.environment

    def test_explicit_frames_and_label(self, static_config):
        frames = random_frames(static_config, 2, seed=1)
        result = fps_benchmark(DetectorModel(static_config), frames, BenchmarkConfig(**QUICK), label="mine")
        assert result.label == "mine"
        assert result.mode == "stream"

    def test_model_left_in_eval_mode(self, static_config):
        model = DetectorModel(static_config)
        fps_benchmark(model, config=BenchmarkConfig(**QUICK))
        assert not model.training

    def test_applies_to_report(self):
        result = BenchmarkResult(label="x", mode="stream", runs=30, t_model_ms=4.0, t_nms_ms=1.0, fps=200.0)
        report = result.apply_to(EvalReport(map50=0.5, map50_95=0.3))
        assert report.fps == pytest.approx(200.0)
        assert report.map50 == 0.5


class TestCompareVariants:
    def test_every_variant_and_kind(self):
        config = BenchmarkConfig(variants=["small", "medium"], temporal_kinds=[TemporalKind.QRNN], **QUICK)
        results = compare_variants(tiny_config(), config)
        assert [r.label for r in results] == ["small-qrnn", "medium-qrnn"]
        frame = results_frame(results)
        assert list(frame.columns) == ["label", "mode", "runs", "t_model_ms", "t_nms_ms", "fps"]
        assert len(frame) == 2

    def test_override_kinds(self):
        results = compare_variants(tiny_config(), BenchmarkConfig(**QUICK), kinds=[TemporalKind.NONE])
        assert [r.label for r in results] == ["small-none"]


def _median_forward_ms(cell, x, runs=30, warmup=3):
    for _ in range(warmup):
        cell(x)
    times = []
    for _ in range(runs):
        start = time.perf_counter()
        cell(x)
        times.append((time.perf_counter() - start) * 1000.0)
    return float(np.median(times))


@pytest.mark.slow
def test_qrnn_cell_not_slower_than_convlstm():
    channels, size = 32, 20
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((1, 2, channels, size, size)).astype(np.float32))
    with default_dtype(np.float32), no_grad():
        qrnn = _median_forward_ms(QRNNCell(channels, rng), x)
        convlstm = _median_forward_ms(ConvLSTMCell(channels, rng), x)
    assert qrnn <= convlstm
