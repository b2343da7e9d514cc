"""
2D and 3D convolution (cross-correlation) via im2col and a single matrix product.
"""

import itertools
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tyolo.core.errors import ShapeError
from tyolo.tensor import ops
from tyolo.tensor.tensor import Function, Tensor


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a 2D (kernel_temporal == 1) or 3D convolution"""
    in_channels: int
    out_channels: int
    kernel_spatial: Tuple[int, int] = (3, 3)
    kernel_temporal: int = 1
    stride: Tuple[int, int] = (1, 1)
    padding: Tuple[int, int] = (0, 0)
    temporal_padding: int = 0

    def __post_init__(self):
        if self.kernel_temporal not in (1, 2, 3):
            raise ValueError(f"kernel_temporal must be 1, 2 or 3, got {self.kernel_temporal}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if min(self.kernel_spatial) < 1 or min(self.stride) < 1 or min(self.padding) < 0:
            raise ValueError(f"invalid kernel/stride/padding in {self}")

    @classmethod
    def square(
        cls,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        padding: Optional[int] = None,
        kernel_temporal: int = 1,
        temporal_padding: int = 0,
    ) -> "ConvSpec":
        """Square kernel with 'same' padding by default"""
        padding = kernel // 2 if padding is None else padding
        return cls(
            in_channels,
            out_channels,
            (kernel, kernel),
            kernel_temporal,
            (stride, stride),
            (padding, padding),
            temporal_padding,
        )

    @property
    def weight_shape(self) -> Tuple[int, ...]:
        kh, kw = self.kernel_spatial
        if self.kernel_temporal == 1:
            return (self.out_channels, self.in_channels, kh, kw)
        return (self.out_channels, self.in_channels, self.kernel_temporal, kh, kw)

    @property
    def fan_in(self) -> int:
        kh, kw = self.kernel_spatial
        return self.in_channels * self.kernel_temporal * kh * kw

    def output_spatial(self, height: int, width: int) -> Tuple[int, int]:
        sizes = []
        for size, k, s, p in zip((height, width), self.kernel_spatial, self.stride, self.padding):
            out = (size + 2 * p - k) // s + 1
            if out <= 0:
                raise ShapeError(
                    f"convolution produces empty output: input {size}, kernel {k}, "
                    f"stride {s}, padding {p}"
                )
            sizes.append(out)
        return sizes[0], sizes[1]

    def output_temporal(self, frames: int) -> int:
        out = frames + 2 * self.temporal_padding - self.kernel_temporal + 1
        if out <= 0:
            raise ShapeError(
                f"temporal kernel {self.kernel_temporal} exceeds {frames} frame(s) "
                f"with temporal padding {self.temporal_padding}"
            )
        return out


class ConvNd(Function):
    """Cross-correlation over the trailing len(kernel) axes of [N, C, ...]"""

    def forward(
        self,
        x: np.ndarray,
        weight: np.ndarray,
        bias: np.ndarray,
        stride: Tuple[int, ...],
        padding: Tuple[int, ...],
    ) -> np.ndarray:
        nd = weight.ndim - 2
        kernel = weight.shape[2:]
        out_channels, in_channels = weight.shape[0], weight.shape[1]
        pad = ((0, 0), (0, 0)) + tuple((p, p) for p in padding)
        xp = np.pad(x, pad) if any(padding) else x
        spatial_axes = tuple(range(2, 2 + nd))

        windows = sliding_window_view(xp, kernel, axis=spatial_axes)
        windows = windows[(slice(None), slice(None)) + tuple(slice(None, None, s) for s in stride)]
        out_sizes = windows.shape[2:2 + nd]
        # [N, *O, C, *K] so every output position is one contiguous row
        order = (0,) + spatial_axes + (1,) + tuple(range(2 + nd, 2 + 2 * nd))
        cols = np.ascontiguousarray(windows.transpose(order))
        rows = x.shape[0] * int(np.prod(out_sizes))
        cols = cols.reshape(rows, in_channels * int(np.prod(kernel)))
        w2d = weight.reshape(out_channels, -1)

        out = cols @ w2d.T
        out += bias
        self.cols, self.w2d = cols, w2d
        self.x_shape, self.padded_shape = x.shape, xp.shape
        self.kernel, self.stride, self.padding, self.out_sizes = kernel, stride, padding, out_sizes
        out = out.reshape((x.shape[0],) + tuple(out_sizes) + (out_channels,))
        return np.ascontiguousarray(np.moveaxis(out, -1, 1))

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        nd = len(self.kernel)
        n, out_channels = grad.shape[0], grad.shape[1]
        in_channels = self.x_shape[1]
        g2d = np.moveaxis(grad, 1, -1).reshape(-1, out_channels)

        grad_w = (g2d.T @ self.cols).reshape((out_channels, in_channels) + tuple(self.kernel))
        grad_b = g2d.sum(axis=0)

        gcols = (g2d @ self.w2d).reshape((n,) + tuple(self.out_sizes) + (in_channels,)
                                         + tuple(self.kernel))
        gxp = np.zeros(self.padded_shape, dtype=grad.dtype)
        for tap in itertools.product(*(range(k) for k in self.kernel)):
            contribution = gcols[(Ellipsis,) + tap]  # [N, *O, C]
            contribution = np.moveaxis(contribution, -1, 1)
            target = (slice(None), slice(None)) + tuple(
                slice(t, t + s * (o - 1) + 1, s)
                for t, s, o in zip(tap, self.stride, self.out_sizes)
            )
            gxp[target] += contribution
        crop = (slice(None), slice(None)) + tuple(
            slice(p, p + size) for p, size in zip(self.padding, self.x_shape[2:])
        )
        return gxp[crop], grad_w, grad_b


def _check_channels(x: Tensor, weight: Tensor, bias: Optional[Tensor], spec: ConvSpec) -> None:
    if weight.shape != spec.weight_shape:
        raise ShapeError(f"weight shape {weight.shape} does not match spec {spec.weight_shape}")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"input has {x.shape[1]} channels, spec expects {spec.in_channels}")
    if bias is not None and bias.shape != (spec.out_channels,):
        raise ShapeError(f"bias shape {bias.shape}, expected ({spec.out_channels},)")


def _zero_bias(spec: ConvSpec, like: Tensor) -> Tensor:
    return Tensor(np.zeros(spec.out_channels, dtype=like.dtype))


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor], spec: ConvSpec) -> Tensor:
    """[N, C, H, W] * [O, C, kh, kw] -> [N, O, H', W']"""
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects [N, C, H, W], got {x.shape}")
    if spec.kernel_temporal != 1:
        raise ShapeError("conv2d requires kernel_temporal == 1; use conv3d")
    _check_channels(x, weight, bias, spec)
    spec.output_spatial(x.shape[2], x.shape[3])
    bias = bias if bias is not None else _zero_bias(spec, x)
    return ConvNd.apply(x, weight, bias, stride=spec.stride, padding=spec.padding)


def conv3d(x: Tensor, weight: Tensor, bias: Optional[Tensor], spec: ConvSpec) -> Tensor:
    """[N, C, T, H, W] * [O, C, kt, kh, kw] -> [N, O, T', H', W']"""
    if x.ndim != 5:
        raise ShapeError(f"conv3d expects [N, C, T, H, W], got {x.shape}")
    if weight.ndim == 4 and spec.kernel_temporal == 1:
        weight = ops.reshape(weight, weight.shape[:2] + (1,) + weight.shape[2:])
    expected = (spec.out_channels, spec.in_channels, spec.kernel_temporal) + spec.kernel_spatial
    if weight.shape != expected:
        raise ShapeError(f"weight shape {weight.shape} does not match spec {expected}")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"input has {x.shape[1]} channels, spec expects {spec.in_channels}")
    if bias is not None and bias.shape != (spec.out_channels,):
        raise ShapeError(f"bias shape {bias.shape}, expected ({spec.out_channels},)")
    spec.output_temporal(x.shape[2])
    spec.output_spatial(x.shape[3], x.shape[4])
    bias = bias if bias is not None else _zero_bias(spec, x)
    return ConvNd.apply(
        x,
        weight,
        bias,
        stride=(1,) + spec.stride,
        padding=(spec.temporal_padding,) + spec.padding,
    )
