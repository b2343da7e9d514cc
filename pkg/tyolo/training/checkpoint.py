"""
Checkpoints: model weights in the tensor container plus the config snapshot and scores.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import structlog

from tyolo.core.errors import CheckpointError
from tyolo.models.config import DetectorConfig
from tyolo.models.detector import DetectorModel
from tyolo.tensor.serialization import load_tensors, save_tensors
from tyolo.tensor.tensor import default_dtype

logger = structlog.get_logger(__name__)

CHECKPOINT_SUFFIX = ".tyck"


@dataclass
class Checkpoint:
    path: Path
    detector: DetectorConfig
    epoch: int
    map50: float
    map50_95: float
    train: Dict[str, Any] = field(default_factory=dict)
    rng_state: Optional[Dict[str, Any]] = None
    dtype: str = "float32"

    def load_model(self, config: Optional[DetectorConfig] = None, strict: bool = True) -> DetectorModel:
        return load_model(self.path, config=config, strict=strict)


def save_checkpoint(
    path: Union[str, Path],
    model: DetectorModel,
    epoch: int,
    map50: float = 0.0,
    map50_95: float = 0.0,
    train: Optional[Dict[str, Any]] = None,
    rng: Optional[np.random.Generator] = None,
) -> Checkpoint:
    path = Path(path)
    meta = {
        "detector": model.config.model_dump(mode="json"),
        "train": train or {},
        "epoch": int(epoch),
        "map50": float(map50),
        "map50_95": float(map50_95),
        "rng_state": rng.bit_generator.state if rng is not None else None,
        "dtype": np.dtype(model.dtype).name,
    }
    save_tensors(path, model.state_dict(), meta)
    logger.debug("checkpoint saved", path=str(path), epoch=epoch, map50_95=map50_95)
    return _from_meta(path, meta)


def _from_meta(path: Path, meta: Dict[str, Any]) -> Checkpoint:
    try:
        detector = DetectorConfig.model_validate(meta["detector"])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: missing or invalid detector config") from exc
    return Checkpoint(
        path=path,
        detector=detector,
        epoch=int(meta.get("epoch", 0)),
        map50=float(meta.get("map50", 0.0)),
        map50_95=float(meta.get("map50_95", 0.0)),
        train=meta.get("train") or {},
        rng_state=meta.get("rng_state"),
        dtype=meta.get("dtype", "float32"),
    )


def read_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Metadata only"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    _, meta = load_tensors(path)
    return _from_meta(path, meta)


def load_model(
    path: Union[str, Path], config: Optional[DetectorConfig] = None, strict: bool = True
) -> DetectorModel:
    """
    Rebuild the stored model, or load the stored weights into a model built from config.

    With strict=False a static checkpoint can seed a temporal model: backbone, neck and head
    weights are copied and the temporal cells keep their initialization.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    _, meta = load_tensors(path)
    stored = _from_meta(path, meta)
    with default_dtype(stored.dtype):
        model = DetectorModel(config or stored.detector)
    load_weights(model, path, strict=strict)
    return model


def load_weights(model: DetectorModel, path: Union[str, Path], strict: bool = True) -> Checkpoint:
    """Copy stored weights into an existing model; returns the checkpoint metadata"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    tensors, meta = load_tensors(path)
    stored = _from_meta(path, meta)
    _check_compatible(stored.detector, model.config, path)
    missing = model.load_state_dict(tensors, strict=strict)
    if missing:
        logger.info("weights not in checkpoint kept at init", path=str(path), missing=len(missing))
    return stored


def _check_compatible(stored: DetectorConfig, target: DetectorConfig, path: Path) -> None:
    fields = ("variant", "effective_channels", "input_size", "num_classes")
    for name in fields:
        if getattr(stored, name) != getattr(target, name):
            raise CheckpointError(
                f"{path}: {name} {getattr(stored, name)} does not match model {getattr(target, name)}"
            )
