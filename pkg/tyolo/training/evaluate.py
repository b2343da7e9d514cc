"""
Test-split evaluation of a detector or of a stored predictions file.

Temporal models are evaluated causally: every test video is streamed frame by frame with its
own state, reset at the start of each video. Models without a temporal module see frames in
batches.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from tyolo.core.errors import ShapeError
from tyolo.data.manifest import VideoDataset
from tyolo.metrics.average_precision import APResult, GroundTruth, evaluate_detections
from tyolo.metrics.boxes import DetectionSet
from tyolo.metrics.nms import nms
from tyolo.metrics.report import EvalReport
from tyolo.models.detector import DetectorModel, new_stream, stream_step, to_frame_tensor
from tyolo.models.head import decode, drop_degenerate
from tyolo.tensor import ops
from tyolo.tensor.tensor import no_grad
from tyolo.training.config import EvalConfig

logger = structlog.get_logger(__name__)

FrameKey = Tuple[str, int]


@dataclass
class EvalOutcome:
    result: APResult
    report: EvalReport
    keys: List[FrameKey]
    predictions: List[DetectionSet]


def ground_truth(labels: np.ndarray, input_size: int) -> GroundTruth:
    """Normalized (class, cx, cy, w, h) labels -> pixel boxes at the model's input size"""
    labels = np.asarray(labels, dtype=np.float64).reshape(-1, 5)
    return GroundTruth(labels[:, 1:5] * input_size, labels[:, 0].astype(np.int64))


def _check_frame(frame: np.ndarray, size: int, where: str) -> None:
    if frame.shape[:2] != (size, size):
        raise ShapeError(
            f"{where}: frame is {frame.shape[1]}x{frame.shape[0]}, model expects {size}x{size}"
        )


def _sequence_ids(dataset: VideoDataset, limit: Optional[int]) -> List[str]:
    ids = dataset.sequence_ids
    return ids[:limit] if limit is not None else ids


def _postprocess(dets: DetectionSet, config: EvalConfig) -> DetectionSet:
    return nms(drop_degenerate(dets), config.conf_thresh, config.iou_thresh, config.max_det)


def _stream_predictions(
    model: DetectorModel, dataset: VideoDataset, config: EvalConfig, limit: Optional[int]
) -> Iterator[Tuple[FrameKey, DetectionSet]]:
    size = model.config.input_size
    for sequence_id in _sequence_ids(dataset, limit):
        state = new_stream(model)
        for index in range(dataset.frame_count(sequence_id)):
            frame = dataset.load_frame(sequence_id, index)
            _check_frame(frame, size, f"{sequence_id}/{index}")
            raw, state = stream_step(model, frame, state)
            yield (sequence_id, index), _postprocess(decode(raw, model.config)[0], config)


def _batched_predictions(
    model: DetectorModel, dataset: VideoDataset, config: EvalConfig, limit: Optional[int]
) -> Iterator[Tuple[FrameKey, DetectionSet]]:
    size = model.config.input_size
    keys = [(s, i) for s in _sequence_ids(dataset, limit) for i in range(dataset.frame_count(s))]
    for start in range(0, len(keys), config.batch_size):
        chunk = keys[start:start + config.batch_size]
        frames = []
        for sequence_id, index in chunk:
            frame = dataset.load_frame(sequence_id, index)
            _check_frame(frame, size, f"{sequence_id}/{index}")
            frames.append(frame)
        x = to_frame_tensor(np.stack(frames), model.dtype)
        with no_grad():
            raw, _ = model(ops.reshape(x, (len(chunk), 1) + x.shape[1:]))
        for key, dets in zip(chunk, decode(raw, model.config)):
            yield key, _postprocess(dets, config)


def predict_dataset(
    model: DetectorModel,
    dataset: VideoDataset,
    config: Optional[EvalConfig] = None,
    limit: Optional[int] = None,
) -> Tuple[List[FrameKey], List[DetectionSet]]:
    config = config or EvalConfig()
    was_training = model.training
    model.eval()
    try:
        source = _stream_predictions if model.config.is_temporal else _batched_predictions
        pairs = list(source(model, dataset, config, limit))
    finally:
        model.train(was_training)
    return [k for k, _ in pairs], [d for _, d in pairs]


def evaluate_predictions(
    keys: Sequence[FrameKey],
    predictions: Sequence[DetectionSet],
    dataset: VideoDataset,
    input_size: int,
) -> EvalOutcome:
    gts = [ground_truth(dataset.labels(s, i), input_size) for s, i in keys]
    result = evaluate_detections(predictions, gts)
    report = EvalReport.from_ap_result(result, dataset.manifest.classes, num_images=len(keys))
    return EvalOutcome(result, report, list(keys), list(predictions))


def evaluate_model(
    model: DetectorModel,
    dataset: VideoDataset,
    config: Optional[EvalConfig] = None,
    limit: Optional[int] = None,
) -> EvalOutcome:
    keys, predictions = predict_dataset(model, dataset, config, limit)
    outcome = evaluate_predictions(keys, predictions, dataset, model.config.input_size)
    logger.info(
        "evaluation finished",
        images=len(keys),
        map50=round(outcome.report.map50, 4),
        map50_95=round(outcome.report.map50_95, 4),
    )
    return outcome


# JSON-lines predictions: one record per detection, pixel (cx, cy, w, h) at the input size


def detection_records(sequence_id: str, index: int, dets: DetectionSet) -> List[Dict[str, object]]:
    return [
        {
            "video": sequence_id,
            "frame": int(index),
            "class": int(cls),
            "cx": round(float(box[0]), 4),
            "cy": round(float(box[1]), 4),
            "w": round(float(box[2]), 4),
            "h": round(float(box[3]), 4),
            "conf": round(float(score), 6),
        }
        for box, score, cls in zip(dets.boxes, dets.scores, dets.class_ids)
    ]


def read_predictions(path: Path) -> Dict[FrameKey, DetectionSet]:
    grouped: Dict[FrameKey, List[Dict[str, float]]] = {}
    for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            key = (str(record["video"]), int(record["frame"]))
            grouped.setdefault(key, []).append(record)
        except (ValueError, KeyError) as exc:
            raise ValueError(f"{path}:{number}: malformed prediction record ({exc})") from exc
    return {
        key: DetectionSet(
            np.array([[r["cx"], r["cy"], r["w"], r["h"]] for r in records], dtype=np.float64),
            np.array([r["conf"] for r in records], dtype=np.float64),
            np.array([r["class"] for r in records], dtype=np.int64),
        )
        for key, records in grouped.items()
    }


def evaluate_predictions_file(path: Path, dataset: VideoDataset, input_size: int) -> EvalOutcome:
    """Frames of the dataset with no records count as frames without detections"""
    stored = read_predictions(path)
    keys = [(s, i) for s in dataset.sequence_ids for i in range(dataset.frame_count(s))]
    unknown = set(stored) - set(keys)
    if unknown:
        logger.warning("predictions for frames outside the dataset ignored", count=len(unknown))
    predictions = [stored.get(key, DetectionSet()) for key in keys]
    return evaluate_predictions(keys, predictions, dataset, input_size)
