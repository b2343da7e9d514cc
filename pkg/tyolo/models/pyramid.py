"""
Three-scale feature pyramid passed between detector stages.
"""

from dataclasses import dataclass
from typing import Callable, Iterator, Tuple

from tyolo.models.config import DetectorConfig
from tyolo.nn.layers import check_feature
from tyolo.tensor.tensor import Tensor

SCALES = ("p3", "p4", "p5")


@dataclass
class FeaturePyramid:
    """Features at strides 8, 16 and 32, each [N, C, H, W] with N = B * T"""
    p3: Tensor
    p4: Tensor
    p5: Tensor

    def __iter__(self) -> Iterator[Tensor]:
        return iter((self.p3, self.p4, self.p5))

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(zip(SCALES, self))

    def map(self, fn: Callable[[str, Tensor], Tensor]) -> "FeaturePyramid":
        return FeaturePyramid(*(fn(name, t) for name, t in self.items()))

    @property
    def shapes(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(t.shape for t in self)

    def check(self, config: DetectorConfig, where: str) -> None:
        for channels, size, (name, t) in zip(config.effective_channels, config.grid_sizes, self.items()):
            check_feature(t, channels, size, f"{where} ({name})")
