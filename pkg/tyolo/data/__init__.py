"""
Dataset layout, label files, clip sampling and the synthetic generator.
"""

from tyolo.data.anchors import default_anchors, kmeans_anchors
from tyolo.data.labels import LabelRecord, read_label_file, write_label_file
from tyolo.data.manifest import DatasetManifest, VideoDataset, load_dataset, read_image, write_image
from tyolo.data.sampling import FramePool, combine_pools, sample_batch, sample_windows, window_index
from tyolo.data.synthetic import SynthConfig, generate_sequence, synth_video_gen

__all__ = [
    "LabelRecord",
    "read_label_file",
    "write_label_file",
    "DatasetManifest",
    "VideoDataset",
    "load_dataset",
    "read_image",
    "write_image",
    "sample_batch",
    "sample_windows",
    "window_index",
    "FramePool",
    "combine_pools",
    "SynthConfig",
    "generate_sequence",
    "synth_video_gen",
    "kmeans_anchors",
    "default_anchors",
]
