"""
Layers used by the detector: convolutions, batch normalization and the CSP/SPP blocks.
"""

import math
from typing import Any, Sequence

import numpy as np

from tyolo.core.errors import ShapeError
from tyolo.nn.module import Module, ModuleList, Parameter
from tyolo.tensor import ops
from tyolo.tensor.conv import ConvSpec, conv2d, conv3d
from tyolo.tensor.tensor import Tensor, get_default_dtype


def kaiming_normal(
    shape: Sequence[int],
    fan_in: int,
    rng: np.random.Generator,
    gain: float = math.sqrt(2.0),
    dtype: Any = None,
) -> np.ndarray:
    """Fan-in scaled normal initialization"""
    std = gain / math.sqrt(max(fan_in, 1))
    return (rng.standard_normal(tuple(shape)) * std).astype(dtype or get_default_dtype())


class Conv2d(Module):
    def __init__(self, spec: ConvSpec, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        if spec.kernel_temporal != 1:
            raise ValueError("Conv2d needs kernel_temporal == 1")
        self.spec = spec
        self.weight = Parameter(kaiming_normal(spec.weight_shape, spec.fan_in, rng))
        self.bias = Parameter(np.zeros(spec.out_channels, dtype=get_default_dtype())) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.spec)


class Conv3d(Module):
    def __init__(self, spec: ConvSpec, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.spec = spec
        shape = (spec.out_channels, spec.in_channels, spec.kernel_temporal) + spec.kernel_spatial
        self.weight = Parameter(kaiming_normal(shape, spec.fan_in, rng))
        self.bias = Parameter(np.zeros(spec.out_channels, dtype=get_default_dtype())) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return conv3d(x, self.weight, self.bias, self.spec)


class BatchNorm2d(Module):
    """Batch normalization with running statistics; frozen modules always use running stats"""

    def __init__(self, channels: int, eps: float = 1e-3, momentum: float = 0.03):
        super().__init__()
        dtype = get_default_dtype()
        self.eps = eps
        self.momentum = momentum
        self.frozen = False
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        if self.training and not self.frozen:
            out = ops.batch_norm(x, self.gamma, self.beta, eps=self.eps)
            if self.momentum > 0:
                count = x.shape[0] * x.shape[2] * x.shape[3]
                mean = x.data.mean(axis=(0, 2, 3))
                var = x.data.var(axis=(0, 2, 3)) * count / max(count - 1, 1)
                m = self.momentum
                self.set_buffer("running_mean", (1 - m) * self.buffer("running_mean") + m * mean)
                self.set_buffer("running_var", (1 - m) * self.buffer("running_var") + m * var)
            return out
        return ops.batch_norm(
            x,
            self.gamma,
            self.beta,
            running_mean=self.buffer("running_mean").astype(x.dtype),
            running_var=self.buffer("running_var").astype(x.dtype),
            eps=self.eps,
        )


class ConvBnAct(Module):
    """Convolution (no bias) -> batch norm -> SiLU"""

    def __init__(
        self,
        c_in: int,
        c_out: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        act: str = "silu",
    ):
        super().__init__()
        self.conv = Conv2d(ConvSpec.square(c_in, c_out, kernel, stride), rng, bias=False)
        self.bn = BatchNorm2d(c_out)
        self.act = act

    def forward(self, x: Tensor) -> Tensor:
        return ops.activation(self.bn(self.conv(x)), self.act)


class Bottleneck(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, shortcut: bool = True):
        super().__init__()
        self.cv1 = ConvBnAct(c_in, c_out, 1, rng)
        self.cv2 = ConvBnAct(c_out, c_out, 3, rng)
        self.shortcut = shortcut and c_in == c_out

    def forward(self, x: Tensor) -> Tensor:
        y = self.cv2(self.cv1(x))
        return ops.add(x, y) if self.shortcut else y


class BottleneckCSP(Module):
    """Cross-stage partial block: half the channels go through n bottlenecks, half bypass"""

    def __init__(
        self,
        c_in: int,
        c_out: int,
        repeats: int,
        rng: np.random.Generator,
        shortcut: bool = True,
    ):
        super().__init__()
        hidden = max(c_out // 2, 1)
        self.cv1 = ConvBnAct(c_in, hidden, 1, rng)
        self.cv2 = ConvBnAct(c_in, hidden, 1, rng)
        self.m = ModuleList(Bottleneck(hidden, hidden, rng, shortcut) for _ in range(repeats))
        self.cv3 = ConvBnAct(2 * hidden, c_out, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        y = self.cv1(x)
        for block in self.m:
            y = block(y)
        return self.cv3(ops.concat_channels(y, self.cv2(x)))


class SPP(Module):
    """Spatial pyramid pooling with stride-1 max pools"""

    def __init__(
        self,
        c_in: int,
        c_out: int,
        rng: np.random.Generator,
        kernels: Sequence[int] = (5, 9, 13),
    ):
        super().__init__()
        hidden = max(c_in // 2, 1)
        self.kernels = tuple(kernels)
        self.cv1 = ConvBnAct(c_in, hidden, 1, rng)
        self.cv2 = ConvBnAct(hidden * (len(self.kernels) + 1), c_out, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        x = self.cv1(x)
        pooled = [x] + [ops.maxpool(x, k, 1, k // 2) for k in self.kernels]
        return self.cv2(ops.concat(pooled, axis=1))


def check_feature(x: Tensor, channels: int, size: int, where: str) -> None:
    if x.ndim != 4 or x.shape[1] != channels or x.shape[2] != size or x.shape[3] != size:
        raise ShapeError(
            f"{where}: expected [N, {channels}, {size}, {size}], got {list(x.shape)}"
        )

