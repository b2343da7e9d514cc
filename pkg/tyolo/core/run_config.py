"""
Declarative run configuration.

A run is described by one RunConfig: preset defaults, then a YAML file (or the config block of
a previous run's manifest.json), then key.path=value overrides from the command line. Every
command writes the resolved config with its seeds to manifest.json, and that file alone is
enough to repeat the run.
"""

import copy
import json
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import yaml
from pydantic import BaseModel, ConfigDict, Field

from tyolo import __version__
from tyolo.augment.pipeline import SEARCHABLE, Technique
from tyolo.data.synthetic import SynthConfig
from tyolo.metrics.benchmark import BenchmarkConfig
from tyolo.models.config import DEFAULT_CLASSES, DetectorConfig
from tyolo.training.config import EvalConfig, FreezePolicy, TrainConfig

MANIFEST_NAME = "manifest.json"


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    root: Optional[str] = Field(None, description="temporal dataset with train/ and test/ splits")
    static_root: Optional[str] = Field(None, description="static image dataset merged in mixed mode")
    classes: List[str] = Field(default_factory=lambda: list(DEFAULT_CLASSES))


class SearchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    techniques: List[Technique] = Field(default_factory=lambda: list(SEARCHABLE))
    epochs: int = Field(10, ge=1, description="training budget of each trial")
    replay: Optional[str] = Field(None, description="score table replayed instead of training")


def _temporal_defaults() -> TrainConfig:
    return TrainConfig(freeze_policy=FreezePolicy.THROUGH_NECK, passthrough_init=True)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "desk"
    seed: int = 0
    data: DataConfig = Field(default_factory=DataConfig)
    detector: DetectorConfig = Field(default_factory=DetectorConfig)
    static: TrainConfig = Field(default_factory=TrainConfig)
    temporal: TrainConfig = Field(default_factory=_temporal_defaults)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    benchmark: BenchmarkConfig = Field(default_factory=BenchmarkConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    search: SearchConfig = Field(default_factory=SearchConfig)

    def seeds(self) -> Dict[str, int]:
        return {
            "run": self.seed,
            "detector": self.detector.seed,
            "static": self.static.seed,
            "temporal": self.temporal.seed,
            "synth": self.synth.seed,
            "benchmark": self.benchmark.seed,
        }


def _full_size(variant: str, batch: int) -> Dict[str, Any]:
    train = {"epochs": 200, "batch_size": batch, "seq_len": 2}
    return {
        "name": f"full-{variant}",
        "detector": {"variant": variant, "input_size": 640, "width_multiple": 1.0},
        "static": dict(train),
        "temporal": {**train, "freeze_policy": "through_neck", "passthrough_init": True},
        "synth": {"size": 640},
    }


PRESETS: Dict[str, Dict[str, Any]] = {
    "desk": {
        "name": "desk",
        "detector": {"variant": "small", "input_size": 64, "width_multiple": 0.125},
        "static": {"epochs": 300, "batch_size": 8, "seq_len": 1},
        "temporal": {"epochs": 300, "batch_size": 8, "seq_len": 2,
                     "freeze_policy": "through_neck", "passthrough_init": True},
        "synth": {"size": 64, "sequences": 40, "test_sequences": 8, "frames": 16},
    },
    "full-small": _full_size("small", 40),
    "full-medium": _full_size("medium", 36),
    "full-large": _full_size("large", 28),
}


def deep_merge(base: Mapping[str, Any], update: Mapping[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(dict(base))
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(item: str) -> Dict[str, Any]:
    """'a.b.c=value' -> {'a': {'b': {'c': value}}}; value parsed as a YAML scalar"""
    if "=" not in item:
        raise ValueError(f"override {item!r} is not of the form key.path=value")
    key, raw = item.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ValueError(f"override {item!r} has an empty key")
    value: Any = yaml.safe_load(raw) if raw.strip() else None
    for part in reversed(parts):
        value = {part: value}
    return value


def read_config_file(path: Path) -> Dict[str, Any]:
    """YAML config, or the config block of a manifest.json"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        return data.get("config", data)
    data = yaml.safe_load(path.read_text()) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    return data


def load_run_config(
    path: Optional[Path] = None,
    overrides: Sequence[str] = (),
    preset: Optional[str] = None,
) -> RunConfig:
    """Preset <- file <- overrides, validated; pydantic.ValidationError on bad fields"""
    data: Dict[str, Any] = read_config_file(path) if path is not None else {}
    file_preset = data.pop("preset", None)
    preset = preset or file_preset
    if preset is not None:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        data = deep_merge(PRESETS[preset], data)
    for item in overrides:
        data = deep_merge(data, parse_override(item))
    return RunConfig.model_validate(data)


def write_manifest(
    out_dir: Path,
    command: str,
    config: RunConfig,
    environment: Dict[str, Any],
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "version": __version__,
        "config": config.model_dump(mode="json"),
        "seeds": config.seeds(),
        "environment": environment,
        **(extra or {}),
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path
