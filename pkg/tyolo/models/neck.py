"""
Path-aggregation neck: a top-down pass followed by a bottom-up pass.
"""

import numpy as np

from tyolo.models.config import DetectorConfig
from tyolo.models.pyramid import FeaturePyramid
from tyolo.nn.layers import BottleneckCSP, ConvBnAct
from tyolo.nn.module import Module
from tyolo.tensor import ops


class PathAggregationNeck(Module):
    def __init__(self, config: DetectorConfig, rng: np.random.Generator):
        super().__init__()
        c3, c4, c5 = config.effective_channels
        n = config.repeats(3)
        self.config = config

        # top-down
        self.lateral5 = ConvBnAct(c5, c4, 1, rng)
        self.merge4 = BottleneckCSP(2 * c4, c4, n, rng, shortcut=False)
        self.lateral4 = ConvBnAct(c4, c3, 1, rng)
        self.merge3 = BottleneckCSP(2 * c3, c3, n, rng, shortcut=False)
        # bottom-up
        self.down3 = ConvBnAct(c3, c3, 3, rng, stride=2)
        self.out4 = BottleneckCSP(2 * c3, c4, n, rng, shortcut=False)
        self.down4 = ConvBnAct(c4, c4, 3, rng, stride=2)
        self.out5 = BottleneckCSP(2 * c4, c5, n, rng, shortcut=False)

    def forward(self, pyramid: FeaturePyramid) -> FeaturePyramid:
        pyramid.check(self.config, "neck input")
        x5 = self.lateral5(pyramid.p5)
        x4 = self.lateral4(self.merge4(ops.concat_channels(ops.upsample2x(x5), pyramid.p4)))
        out3 = self.merge3(ops.concat_channels(ops.upsample2x(x4), pyramid.p3))
        out4 = self.out4(ops.concat_channels(self.down3(out3), x4))
        out5 = self.out5(ops.concat_channels(self.down4(out4), x5))
        return FeaturePyramid(out3, out4, out5)
