"""
Two-stage training: a static detector first, then temporal fine-tuning from its weights with
the backbone and neck frozen. Both stages test after every eval_every epochs and keep the
checkpoint with the best mAP50:95.
"""

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Union

import cv2
import numpy as np
import pandas as pd
import structlog

from tyolo.augment.pipeline import AugmentPipeline
from tyolo.augment.sequence import LabeledSequence
from tyolo.core.errors import TrainingDivergedError
from tyolo.data.manifest import DatasetMode, VideoDataset
from tyolo.data.sampling import FramePool, sample_batch, window_index
from tyolo.models.detector import DetectorModel
from tyolo.nn.layers import BatchNorm2d
from tyolo.nn.module import parameter_census
from tyolo.temporal.state import TemporalKind
from tyolo.tensor.tensor import Tensor
from tyolo.training.checkpoint import Checkpoint, load_weights, save_checkpoint
from tyolo.training.config import EvalConfig, FreezePolicy, TrainConfig
from tyolo.training.evaluate import evaluate_model
from tyolo.training.loss import detection_loss
from tyolo.training.optim import SGD, LRSchedule

logger = structlog.get_logger(__name__)

LOG_COLUMNS = ["epoch", "box", "obj", "cls", "total", "map50", "map50_95", "lr", "wall_time"]


class ClipSource(Protocol):
    def sample(self, batch_size: int, seq_len: int, rng: np.random.Generator) -> List[LabeledSequence]:
        ...

    def draw(self, rng: np.random.Generator, seq_len: int) -> LabeledSequence:
        ...

    def window_count(self, seq_len: int) -> int:
        ...


class VideoClips:
    """Contiguous windows of one dataset split"""

    def __init__(self, dataset: VideoDataset):
        self.dataset = dataset

    def sample(self, batch_size: int, seq_len: int, rng: np.random.Generator) -> List[LabeledSequence]:
        return sample_batch(self.dataset, batch_size, seq_len, rng)

    def draw(self, rng: np.random.Generator, seq_len: int) -> LabeledSequence:
        return sample_batch(self.dataset, 1, seq_len, rng)[0]

    def window_count(self, seq_len: int) -> int:
        return len(window_index(self.dataset.manifest, seq_len))


class PooledFrames:
    """Single frames from a FramePool; every sample is a one-frame clip"""

    def __init__(self, pool: FramePool):
        self.pool = pool

    def sample(self, batch_size: int, seq_len: int, rng: np.random.Generator) -> List[LabeledSequence]:
        return self.pool.sample(batch_size, rng)

    def draw(self, rng: np.random.Generator, seq_len: int) -> LabeledSequence:
        return self.pool.sample(1, rng)[0]

    def window_count(self, seq_len: int) -> int:
        return len(self.pool)


def clip_source(data: Union[VideoDataset, FramePool]) -> ClipSource:
    return PooledFrames(data) if isinstance(data, FramePool) else VideoClips(data)


@dataclass
class EpochRecord:
    epoch: int
    box: float
    obj: float
    cls: float
    total: float
    map50: Optional[float]
    map50_95: Optional[float]
    lr: float
    wall_time: float


@dataclass
class TrainResult:
    stage: str
    best: Checkpoint
    last: Checkpoint
    history: List[EpochRecord] = field(default_factory=list)
    census: Dict[str, int] = field(default_factory=dict)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.history], columns=LOG_COLUMNS)


def resize_sequence(seq: LabeledSequence, size: int) -> LabeledSequence:
    """Square-resize every frame to size; normalized labels are unaffected"""
    if seq.size == (size, size):
        return seq
    frames = [cv2.resize(f, (size, size), interpolation=cv2.INTER_AREA) for f in seq.frames]
    return seq.derive(frames=frames, event={"op": "resize", "size": size})


def freeze_through_neck(model: DetectorModel) -> DetectorModel:
    """Exclude backbone and neck from training and lock their normalization statistics"""
    for stage in (model.backbone, model.neck):
        stage.requires_grad_(False)
        for module in stage.modules():
            if isinstance(module, BatchNorm2d):
                module.frozen = True
    census = parameter_census(model)
    logger.info("backbone and neck frozen", **census)
    return model


def set_bn_momentum(model: DetectorModel, momentum: float) -> None:
    for module in model.modules():
        if isinstance(module, BatchNorm2d):
            module.momentum = momentum


class Trainer:
    """Runs one training stage over a clip source and tests on a held-out split"""

    def __init__(
        self,
        model: DetectorModel,
        train_data: Union[VideoDataset, FramePool],
        test_data: VideoDataset,
        config: TrainConfig,
        out_dir: Path,
        eval_config: Optional[EvalConfig] = None,
        stage: str = "static",
    ):
        self.model = model
        self.source = clip_source(train_data)
        self.test_data = test_data
        self.config = config
        self.eval_config = eval_config or EvalConfig()
        self.out_dir = Path(out_dir)
        self.stage = stage
        self.seq_len = config.seq_len if model.config.is_temporal else 1
        if isinstance(train_data, VideoDataset) and train_data.manifest.mode == DatasetMode.STATIC:
            self.seq_len = 1
        self.rng = np.random.default_rng(config.seed)
        self.pipeline = AugmentPipeline(config.augment, seed=config.seed)
        windows = self.source.window_count(self.seq_len)
        self.steps_per_epoch = config.steps_per_epoch or max(1, math.ceil(windows / config.batch_size))
        self.optimizer = SGD(
            model.parameters(),
            lr=config.lr0,
            momentum=config.momentum,
            weight_decay=config.weight_decay,
            nesterov=config.nesterov,
        )
        self.schedule = LRSchedule(
            config.lr0, config.lrf, config.epochs, config.warmup_epochs, self.steps_per_epoch
        )
        set_bn_momentum(model, config.bn_momentum)
        self.iteration = 0

    @property
    def checkpoint_dir(self) -> Path:
        return self.out_dir / "checkpoints"

    @property
    def log_path(self) -> Path:
        return self.out_dir / "logs" / "train.csv"

    def _batch(self) -> tuple:
        size = self.model.config.input_size
        clips = self.source.sample(self.config.batch_size, self.seq_len, self.rng)
        draw = lambda rng: resize_sequence(self.source.draw(rng, self.seq_len), size)  # noqa: E731
        clips = [resize_sequence(self.pipeline(resize_sequence(c, size), draw), size) for c in clips]
        frames = np.stack([c.stacked() for c in clips])  # (B, T, S, S, 3)
        x = Tensor(np.ascontiguousarray(frames.transpose(0, 1, 4, 2, 3), dtype=self.model.dtype))
        labels = [lab for c in clips for lab in c.labels]
        return x, labels

    def step(self) -> Dict[str, float]:
        lr = self.schedule(self.iteration)
        self.optimizer.lr = lr
        x, labels = self._batch()
        self.model.train()
        raw, _ = self.model(x)
        terms = detection_loss(raw, labels, self.model.config, self.config.loss)
        values = terms.values()
        if not all(math.isfinite(v) for v in values.values()):
            raise TrainingDivergedError(
                f"non-finite loss at iteration {self.iteration}",
                {"stage": self.stage, "iteration": self.iteration, "lr": lr, "loss": values,
                 "targets": int(sum(len(lab) for lab in labels))},
            )
        self.optimizer.zero_grad()
        terms.total.backward()
        self.optimizer.step()
        self.iteration += 1
        values["lr"] = lr
        return values

    def _write_log(self, history: List[EpochRecord]) -> None:
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame([asdict(r) for r in history], columns=LOG_COLUMNS).to_csv(self.log_path, index=False)

    def fit(self) -> TrainResult:
        config = self.config
        census = parameter_census(self.model)
        logger.info(
            "training started",
            stage=self.stage,
            epochs=config.epochs,
            steps_per_epoch=self.steps_per_epoch,
            seq_len=self.seq_len,
            optimizer_parameters=self.optimizer.num_parameters,
            **census,
        )
        history: List[EpochRecord] = []
        best: Optional[Checkpoint] = None
        last: Optional[Checkpoint] = None
        best_score = -math.inf
        train_meta = {"stage": self.stage, **config.model_dump(mode="json")}
        for epoch in range(1, config.epochs + 1):
            start = time.perf_counter()
            sums = {"box": 0.0, "obj": 0.0, "cls": 0.0, "total": 0.0}
            lr = self.optimizer.lr
            for _ in range(self.steps_per_epoch):
                values = self.step()
                lr = values["lr"]
                for key in sums:
                    sums[key] += values[key]
            means = {k: v / self.steps_per_epoch for k, v in sums.items()}

            map50: Optional[float] = None
            map50_95: Optional[float] = None
            if epoch % config.eval_every == 0 or epoch == config.epochs:
                outcome = evaluate_model(self.model, self.test_data, self.eval_config, config.eval_limit)
                map50, map50_95 = outcome.report.map50, outcome.report.map50_95

            record = EpochRecord(
                epoch=epoch, lr=lr, map50=map50, map50_95=map50_95,
                wall_time=round(time.perf_counter() - start, 4), **means,
            )
            history.append(record)
            self._write_log(history)
            logger.info("epoch finished", stage=self.stage, **asdict(record))

            last = save_checkpoint(
                self.checkpoint_dir / "last.tyck", self.model, epoch,
                map50 or 0.0, map50_95 or 0.0, train_meta, self.rng,
            )
            if map50_95 is not None and map50_95 > best_score:
                best_score = map50_95
                best = save_checkpoint(
                    self.checkpoint_dir / "best.tyck", self.model, epoch,
                    map50 or 0.0, map50_95, train_meta, self.rng,
                )
                logger.info("new best checkpoint", stage=self.stage, epoch=epoch, map50_95=map50_95)

        assert best is not None and last is not None  # the final epoch is always tested
        return TrainResult(self.stage, best, last, history, census)


def train_static(
    model: DetectorModel,
    dataset: Union[VideoDataset, FramePool],
    test_dataset: VideoDataset,
    config: TrainConfig,
    out_dir: Path,
    eval_config: Optional[EvalConfig] = None,
) -> TrainResult:
    """Train a detector without temporal cells on single frames"""
    if model.config.is_temporal:
        raise ValueError(
            f"static training needs temporal_kind 'none', model has {model.config.temporal_kind.value}"
        )
    return Trainer(model, dataset, test_dataset, config, out_dir, eval_config, stage="static").fit()


def prepare_temporal(model: DetectorModel, static_checkpoint: Path, config: TrainConfig) -> Checkpoint:
    """Seed a temporal model from static weights, then apply pass-through init and freezing"""
    if not model.config.is_temporal:
        raise ValueError("temporal training needs a model with temporal cells")
    stored = load_weights(model, static_checkpoint, strict=False)
    if stored.detector.is_temporal:
        logger.warning("seeding from a temporal checkpoint", path=str(static_checkpoint))
    if config.passthrough_init:
        model.init_temporal_passthrough()
        if model.config.temporal_kind == TemporalKind.CONVLSTM and model.config.candidate_activation == "sigmoid":
            logger.warning(
                "pass-through init with a sigmoid candidate gives h = tanh(sigmoid(x)), not an identity",
                hint="set detector.candidate_activation=tanh for a sign-preserving pass-through",
            )
    if config.freeze_policy == FreezePolicy.THROUGH_NECK:
        freeze_through_neck(model)
    else:
        logger.warning("temporal training without freezing the backbone and neck")
    return stored


def train_temporal(
    model: DetectorModel,
    static_checkpoint: Path,
    dataset: VideoDataset,
    test_dataset: VideoDataset,
    config: TrainConfig,
    out_dir: Path,
    eval_config: Optional[EvalConfig] = None,
) -> TrainResult:
    """Fine-tune temporal cells and head on clips of config.seq_len frames"""
    prepare_temporal(model, static_checkpoint, config)
    return Trainer(model, dataset, test_dataset, config, out_dir, eval_config, stage="temporal").fit()
