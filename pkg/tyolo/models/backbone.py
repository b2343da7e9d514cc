"""
CSP backbone: strided Conv-BN-SiLU stages with bottleneck CSP blocks and SPP at the top.
"""

import numpy as np

from tyolo.core.errors import ShapeError
from tyolo.models.config import DetectorConfig, make_divisible
from tyolo.models.pyramid import FeaturePyramid
from tyolo.nn.layers import SPP, BottleneckCSP, ConvBnAct
from tyolo.nn.module import Module
from tyolo.tensor.tensor import Tensor


class Backbone(Module):
    def __init__(self, config: DetectorConfig, rng: np.random.Generator):
        super().__init__()
        c3, c4, c5 = config.effective_channels
        stem, mid = make_divisible(c3 / 4), make_divisible(c3 / 2)
        self.input_size = config.input_size

        self.stem = ConvBnAct(3, stem, 3, rng, stride=2)
        self.down1 = ConvBnAct(stem, mid, 3, rng, stride=2)
        self.csp1 = BottleneckCSP(mid, mid, config.repeats(3), rng)
        self.down2 = ConvBnAct(mid, c3, 3, rng, stride=2)
        self.csp2 = BottleneckCSP(c3, c3, config.repeats(9), rng)
        self.down3 = ConvBnAct(c3, c4, 3, rng, stride=2)
        self.csp3 = BottleneckCSP(c4, c4, config.repeats(9), rng)
        self.down4 = ConvBnAct(c4, c5, 3, rng, stride=2)
        self.spp = SPP(c5, c5, rng)
        self.csp4 = BottleneckCSP(c5, c5, config.repeats(3), rng, shortcut=False)

    def forward(self, frames: Tensor) -> FeaturePyramid:
        if frames.ndim != 4 or frames.shape[1:] != (3, self.input_size, self.input_size):
            raise ShapeError(
                f"backbone expects [N, 3, {self.input_size}, {self.input_size}], got {list(frames.shape)}"
            )
        x = self.csp1(self.down1(self.stem(frames)))
        p3 = self.csp2(self.down2(x))
        p4 = self.csp3(self.down3(p3))
        p5 = self.csp4(self.spp(self.down4(p4)))
        return FeaturePyramid(p3, p4, p5)
