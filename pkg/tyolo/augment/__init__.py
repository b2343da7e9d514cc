"""
Clip-level augmentations and the greedy technique search.
"""

from tyolo.augment.geometric import StaticParams, StaticTransform, apply_static_transform, static_augment
from tyolo.augment.photometric import gaussian_noise, random_blur
from tyolo.augment.pipeline import SEARCHABLE, AugmentPipeline, AugmentSpec, Technique
from tyolo.augment.search import ReplayTable, SearchReport, greedy_search
from tyolo.augment.sequence import MIN_BOX_AREA, LabeledSequence
from tyolo.augment.temporal import MosaicGeometry, random_erasing, temporal_mixup, temporal_mosaic

__all__ = [
    "LabeledSequence",
    "MIN_BOX_AREA",
    "AugmentSpec",
    "AugmentPipeline",
    "Technique",
    "SEARCHABLE",
    "temporal_mosaic",
    "MosaicGeometry",
    "temporal_mixup",
    "random_erasing",
    "random_blur",
    "gaussian_noise",
    "static_augment",
    "StaticParams",
    "StaticTransform",
    "apply_static_transform",
    "greedy_search",
    "SearchReport",
    "ReplayTable",
]
