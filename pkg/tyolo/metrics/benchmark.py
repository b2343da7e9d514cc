"""
Batch-1 throughput benchmark.

FPS is 1000 / (t_model + t_nms) with both latencies taken as the median over the timed runs.
In stream mode each run feeds one new frame with the carried temporal state, which is how the
detector is deployed; clip mode times a whole seq_len clip per run.
"""

import statistics
import time
from typing import Any, Dict, List, Literal, Optional, Sequence

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict, Field

from tyolo.metrics.nms import DEPLOY_CONF_THRESHOLD, IOU_THRESHOLD, nms
from tyolo.metrics.report import EvalReport
from tyolo.models.config import DetectorConfig
from tyolo.models.detector import DetectorModel, new_stream, stream_step, to_frame_tensor
from tyolo.models.head import decode, drop_degenerate
from tyolo.tensor import ops
from tyolo.tensor.tensor import no_grad
from tyolo.temporal.state import TemporalKind
from tyolo.utils.system_checker import SystemChecker

logger = structlog.get_logger(__name__)


class BenchmarkConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    warmup: int = Field(5, ge=5)
    runs: int = Field(30, ge=30)
    mode: Literal["stream", "clip"] = "stream"
    conf_thresh: float = Field(DEPLOY_CONF_THRESHOLD, ge=0, le=1)
    iou_thresh: float = Field(IOU_THRESHOLD, ge=0, le=1)
    variants: List[str] = Field(default_factory=lambda: ["small"])
    temporal_kinds: List[TemporalKind] = Field(default_factory=lambda: [TemporalKind.QRNN, TemporalKind.CONVLSTM])
    seed: int = 0


class BenchmarkResult(BaseModel):
    label: str
    mode: str
    runs: int
    t_model_ms: float
    t_nms_ms: float
    fps: float
    t_model_samples: List[float] = Field(default_factory=list)
    t_nms_samples: List[float] = Field(default_factory=list)
    environment: Dict[str, Any] = Field(default_factory=dict)

    def apply_to(self, report: EvalReport) -> EvalReport:
        return report.with_timing(self.t_model_ms, self.t_nms_ms, self.environment)


def fps_from_latency(t_model_ms: float, t_nms_ms: float) -> float:
    return 1000.0 / (t_model_ms + t_nms_ms)


def random_frames(config: DetectorConfig, count: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    size = config.input_size
    return rng.random((count, size, size, 3)).astype(np.float32)


def _timed_stream(model: DetectorModel, frames: np.ndarray, config: BenchmarkConfig):
    state = new_stream(model)
    index = 0
    while True:
        frame = frames[index % len(frames)]
        index += 1
        start = time.perf_counter()
        raw, state = stream_step(model, frame, state)
        dets = drop_degenerate(decode(raw, model.config)[0])
        t_model = time.perf_counter() - start
        start = time.perf_counter()
        nms(dets, config.conf_thresh, config.iou_thresh)
        t_nms = time.perf_counter() - start
        yield t_model, t_nms


def _timed_clip(model: DetectorModel, frames: np.ndarray, config: BenchmarkConfig):
    seq_len = model.config.seq_len
    index = 0
    while True:
        picks = [(index + t) % len(frames) for t in range(seq_len)]
        index += seq_len
        x = to_frame_tensor(frames[picks], model.dtype)
        start = time.perf_counter()
        with no_grad():
            raw, _ = model(ops.reshape(x, (1,) + x.shape))
        sets = [drop_degenerate(d) for d in decode(raw, model.config)]
        t_model = time.perf_counter() - start
        start = time.perf_counter()
        for dets in sets:
            nms(dets, config.conf_thresh, config.iou_thresh)
        t_nms = time.perf_counter() - start
        yield t_model, t_nms


def fps_benchmark(
    model: DetectorModel,
    frames: Optional[np.ndarray] = None,
    config: Optional[BenchmarkConfig] = None,
    label: Optional[str] = None,
) -> BenchmarkResult:
    """Median model and NMS latency at batch size 1 after config.warmup untimed runs"""
    config = config or BenchmarkConfig()
    if frames is None:
        frames = random_frames(model.config, max(model.config.seq_len, 4), config.seed)
    frames = np.asarray(frames, dtype=np.float32)
    model.eval()
    timer = _timed_stream if config.mode == "stream" else _timed_clip
    samples = timer(model, frames, config)
    for _ in range(config.warmup):
        next(samples)
    t_model, t_nms = zip(*(next(samples) for _ in range(config.runs)))
    t_model_ms = statistics.median(t_model) * 1000.0
    t_nms_ms = statistics.median(t_nms) * 1000.0
    label = label or f"{model.config.variant.value}-{model.config.temporal_kind.value}"
    result = BenchmarkResult(
        label=label,
        mode=config.mode,
        runs=config.runs,
        t_model_ms=t_model_ms,
        t_nms_ms=t_nms_ms,
        fps=fps_from_latency(t_model_ms, t_nms_ms),
        t_model_samples=[round(t * 1000.0, 4) for t in t_model],
        t_nms_samples=[round(t * 1000.0, 4) for t in t_nms],
        environment=SystemChecker().environment(),
    )
    logger.info(
        "benchmark finished",
        label=label,
        mode=config.mode,
        t_model_ms=round(t_model_ms, 3),
        t_nms_ms=round(t_nms_ms, 3),
        fps=round(result.fps, 2),
    )
    return result


def compare_variants(
    base: DetectorConfig,
    config: Optional[BenchmarkConfig] = None,
    variants: Optional[Sequence[str]] = None,
    kinds: Optional[Sequence[TemporalKind]] = None,
) -> List[BenchmarkResult]:
    """Benchmark every variant x temporal kind at the base config's input size and channel scaling"""
    config = config or BenchmarkConfig()
    results = []
    for variant in variants or config.variants:
        for kind in kinds or config.temporal_kinds:
            detector = base.model_copy(update={"variant": variant, "channels": None, "temporal_kind": TemporalKind(kind)})
            detector = DetectorConfig.model_validate(detector.model_dump())
            model = DetectorModel(detector)
            frames = random_frames(detector, max(detector.seq_len, 4), config.seed)
            results.append(fps_benchmark(model, frames, config))
    return results


def results_frame(results: Sequence[BenchmarkResult]) -> pd.DataFrame:
    columns = ["label", "mode", "runs", "t_model_ms", "t_nms_ms", "fps"]
    return pd.DataFrame([r.model_dump(include=set(columns)) for r in results], columns=columns)
