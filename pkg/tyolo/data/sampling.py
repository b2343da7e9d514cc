"""
Clip sampling for training.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from tyolo.augment.sequence import LabeledSequence
from tyolo.data.manifest import DatasetManifest, DatasetMode, VideoDataset

Window = Tuple[str, int]


def window_index(manifest: DatasetManifest, seq_len: int) -> List[Window]:
    """Every contiguous (sequence_id, start) window of seq_len frames, in playback order"""
    if manifest.mode == DatasetMode.STATIC:
        seq_len = 1
    if seq_len < 1:
        raise ValueError(f"seq_len must be at least 1, got {seq_len}")
    if seq_len > manifest.shortest:
        raise ValueError(f"seq_len {seq_len} exceeds the shortest sequence ({manifest.shortest} frames)")
    return [
        (info.sequence_id, start)
        for info in manifest.sequences
        for start in range(info.frame_count - seq_len + 1)
    ]


def sample_windows(
    manifest: DatasetManifest, batch_size: int, seq_len: int, rng: np.random.Generator
) -> List[Window]:
    """batch_size windows drawn uniformly (with replacement) over all windows"""
    windows = window_index(manifest, seq_len)
    picks = rng.integers(0, len(windows), size=batch_size)
    return [windows[i] for i in picks]


def sample_batch(
    dataset: VideoDataset, batch_size: int, seq_len: int, rng: np.random.Generator
) -> List[LabeledSequence]:
    if dataset.manifest.mode == DatasetMode.STATIC:
        seq_len = 1
    return [
        dataset.load_sequence(sequence_id, start, seq_len)
        for sequence_id, start in sample_windows(dataset.manifest, batch_size, seq_len, rng)
    ]


@dataclass(frozen=True)
class PoolEntry:
    pool: int
    sequence_id: str
    index: int


class FramePool:
    """Single frames drawn from several datasets, each frame treated independently"""

    def __init__(self, datasets: Sequence[VideoDataset]):
        self.datasets = list(datasets)
        self.entries = [
            PoolEntry(p, sequence_id, index)
            for p, ds in enumerate(self.datasets)
            for sequence_id in ds.sequence_ids
            for index in range(ds.frame_count(sequence_id))
        ]

    def __len__(self) -> int:
        return len(self.entries)

    def load(self, entry: PoolEntry) -> LabeledSequence:
        return self.datasets[entry.pool].load_sequence(entry.sequence_id, entry.index, 1)

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[LabeledSequence]:
        picks = rng.integers(0, len(self.entries), size=batch_size)
        return [self.load(self.entries[i]) for i in picks]


def combine_pools(static: VideoDataset, temporal: VideoDataset) -> FramePool:
    """Static images plus every frame of the temporal dataset: |static| + |temporal frames| items"""
    return FramePool([static, temporal])
