"""
Loss, optimizer, checkpoints, evaluation and the two training stages.
"""

from tyolo.training.checkpoint import Checkpoint, load_model, load_weights, read_checkpoint, save_checkpoint
from tyolo.training.config import EvalConfig, FreezePolicy, LossWeights, TrainConfig
from tyolo.training.evaluate import EvalOutcome, evaluate_model, evaluate_predictions_file, predict_dataset
from tyolo.training.loss import LossTerms, build_targets, ciou, detection_loss
from tyolo.training.optim import SGD, LRSchedule
from tyolo.training.trainer import (
    Trainer,
    TrainResult,
    freeze_through_neck,
    prepare_temporal,
    train_static,
    train_temporal,
)

__all__ = [
    "TrainConfig",
    "EvalConfig",
    "LossWeights",
    "FreezePolicy",
    "detection_loss",
    "build_targets",
    "ciou",
    "LossTerms",
    "SGD",
    "LRSchedule",
    "Checkpoint",
    "save_checkpoint",
    "read_checkpoint",
    "load_model",
    "load_weights",
    "evaluate_model",
    "evaluate_predictions_file",
    "predict_dataset",
    "EvalOutcome",
    "Trainer",
    "TrainResult",
    "train_static",
    "train_temporal",
    "prepare_temporal",
    "freeze_through_neck",
]
