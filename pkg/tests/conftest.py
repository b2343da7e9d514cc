"""
Shared fixtures: tiny detector configs and a small synthetic dataset on disk.
"""

import os

import numpy as np
import pytest

os.environ.setdefault("TYOLO_ENVIRONMENT", "testing")

from tyolo.data.synthetic import SynthConfig, synth_video_gen  # noqa: E402
from tyolo.models.config import DetectorConfig  # noqa: E402
from tyolo.temporal.state import TemporalKind  # noqa: E402

TINY = {"variant": "small", "input_size": 64, "width_multiple": 0.125, "seq_len": 2, "seed": 0}


def tiny_config(kind: TemporalKind = TemporalKind.QRNN, **overrides) -> DetectorConfig:
    return DetectorConfig(**{**TINY, "temporal_kind": kind, **overrides})


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def static_config():
    return tiny_config(TemporalKind.NONE)


@pytest.fixture
def qrnn_config():
    return tiny_config(TemporalKind.QRNN)


@pytest.fixture
def convlstm_config():
    return tiny_config(TemporalKind.CONVLSTM)


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """Two training and one test sequence of four 64 px frames"""
    root = tmp_path_factory.mktemp("synth")
    synth_video_gen(SynthConfig(seed=0, sequences=2, test_sequences=1, frames=4, size=64), root)
    return root
