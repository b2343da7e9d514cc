"""
Declarative augmentation pipelines.

A pipeline is a list of AugmentSpec entries, usually read from the run configuration.
Techniques always run in a fixed order regardless of how they are listed:
static warp/HSV, mosaic, mixup, blur, noise, erasing.
"""

from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from tyolo.augment.geometric import StaticParams, static_augment
from tyolo.augment.photometric import BLUR_SIGMA, NOISE_SIGMA, gaussian_noise, random_blur
from tyolo.augment.sequence import LabeledSequence
from tyolo.augment.temporal import ERASING_ASPECT, ERASING_AREA, MIXUP_ALPHA, random_erasing, temporal_mixup, temporal_mosaic

logger = structlog.get_logger(__name__)


class Technique(str, Enum):
    STATIC = "static_affine_hsv"
    MOSAIC = "t_mosaic"
    MIXUP = "t_mixup"
    BLUR = "r_blur"
    NOISE = "g_noise"
    ERASING = "r_erasing"

    @property
    def label(self) -> str:
        return TECHNIQUE_LABELS[self]


TECHNIQUE_LABELS = {
    Technique.STATIC: "Static",
    Technique.MOSAIC: "T. Mosaic",
    Technique.MIXUP: "T. MixUp",
    Technique.BLUR: "Blur",
    Technique.NOISE: "Gaussian Noise",
    Technique.ERASING: "Random Erasing",
}

APPLY_ORDER = [
    Technique.STATIC,
    Technique.MOSAIC,
    Technique.MIXUP,
    Technique.BLUR,
    Technique.NOISE,
    Technique.ERASING,
]

# techniques searched over by greedy_search, in trial order
SEARCHABLE = [Technique.MOSAIC, Technique.BLUR, Technique.ERASING, Technique.MIXUP, Technique.NOISE]

DEFAULT_PROBABILITY = {
    Technique.STATIC: 1.0,
    Technique.MOSAIC: 1.0,
    Technique.MIXUP: 1.0,
    Technique.BLUR: 0.5,
    Technique.NOISE: 0.5,
    Technique.ERASING: 0.5,
}

DEFAULT_PARAMS: Dict[Technique, Dict[str, Any]] = {
    Technique.STATIC: StaticParams().model_dump(),
    Technique.MOSAIC: {},
    Technique.MIXUP: {"alpha": MIXUP_ALPHA},
    Technique.BLUR: {"sigma_range": list(BLUR_SIGMA)},
    Technique.NOISE: {"sigma_range": list(NOISE_SIGMA)},
    Technique.ERASING: {"area_range": list(ERASING_AREA), "aspect_range": list(ERASING_ASPECT)},
}

RANGE_PARAMS = {"sigma_range", "area_range", "aspect_range"}


class AugmentSpec(BaseModel):
    """One technique with its application probability, parameter ranges and optional seed"""

    model_config = ConfigDict(extra="forbid")

    technique: Technique
    probability: Optional[float] = Field(None, ge=0.0, le=1.0)
    params: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None

    @field_validator("params")
    @classmethod
    def _non_degenerate_ranges(cls, params: Dict[str, Any]) -> Dict[str, Any]:
        for key in RANGE_PARAMS & set(params):
            low, high = params[key]
            if low < 0 or high < low:
                raise ValueError(f"{key} must satisfy 0 <= low <= high, got {params[key]}")
        if "alpha" in params and params["alpha"] <= 0:
            raise ValueError("alpha must be positive")
        return params

    @model_validator(mode="after")
    def _fill_defaults(self) -> "AugmentSpec":
        if self.probability is None:
            self.probability = DEFAULT_PROBABILITY[self.technique]
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.technique])
        if unknown:
            raise ValueError(f"{self.technique.value} has no parameters {sorted(unknown)}")
        self.params = {**DEFAULT_PARAMS[self.technique], **self.params}
        if self.technique == Technique.STATIC:
            StaticParams(**self.params)
        return self


PartnerSource = Callable[[np.random.Generator], LabeledSequence]


class AugmentPipeline:
    """Applies a set of AugmentSpecs to training clips; partners for mosaic/mixup come from draw"""

    def __init__(self, specs: Sequence[AugmentSpec], seed: int = 0):
        by_technique = {}
        for spec in specs:
            if spec.technique in by_technique:
                raise ValueError(f"technique {spec.technique.value} listed twice")
            by_technique[spec.technique] = spec
        self.specs = [by_technique[t] for t in APPLY_ORDER if t in by_technique]
        self.seed = seed
        self._calls = 0

    @classmethod
    def from_techniques(cls, techniques: Sequence[str], seed: int = 0) -> "AugmentPipeline":
        return cls([AugmentSpec(technique=Technique(t)) for t in techniques], seed=seed)

    @property
    def techniques(self) -> List[Technique]:
        return [spec.technique for spec in self.specs]

    def _rng(self, spec: AugmentSpec) -> np.random.Generator:
        base = self.seed if spec.seed is None else spec.seed
        return np.random.default_rng([base, APPLY_ORDER.index(spec.technique), self._calls])

    def __call__(self, seq: LabeledSequence, draw: Optional[PartnerSource] = None) -> LabeledSequence:
        self._calls += 1
        for spec in self.specs:
            rng = self._rng(spec)
            seq = apply_spec(spec, seq, rng, draw)
        return seq


def apply_spec(
    spec: AugmentSpec,
    seq: LabeledSequence,
    rng: np.random.Generator,
    draw: Optional[PartnerSource] = None,
) -> LabeledSequence:
    technique, p, params = spec.technique, spec.probability, spec.params
    if technique == Technique.STATIC:
        return static_augment(seq, rng, StaticParams(**params)) if rng.random() < p else seq
    if technique == Technique.MOSAIC:
        if draw is None or rng.random() >= p:
            return seq
        return temporal_mosaic([seq] + [draw(rng) for _ in range(3)], rng)
    if technique == Technique.MIXUP:
        if draw is None or rng.random() >= p:
            return seq
        return temporal_mixup(seq, draw(rng), rng, alpha=params["alpha"])
    if technique == Technique.BLUR:
        return random_blur(seq, rng, p, tuple(params["sigma_range"]))
    if technique == Technique.NOISE:
        return gaussian_noise(seq, rng, p, tuple(params["sigma_range"]))
    return random_erasing(seq, rng, p, tuple(params["area_range"]), tuple(params["aspect_range"]))
