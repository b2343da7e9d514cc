"""
Differentiable tensor operations.

Elementwise operations require exactly matching shapes: there is no broadcasting.
Scalars enter only through affine(), pow() and clamp().
"""

from enum import Enum
from typing import Any, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from tyolo.core.errors import ShapeError
from tyolo.tensor.tensor import Function, Tensor


class ActivationKind(str, Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    SILU = "silu"
    LEAKY_RELU = "leaky_relu"


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape} (no broadcasting)")


# elementwise binary


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a + b

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return grad, grad


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a - b

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return grad, -grad


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.a, self.b = a, b
        return a * b

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return grad * self.b, grad * self.a


class Div(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.a, self.b = a, b
        return a / b

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grad_a = grad / self.b
        return grad_a, -grad_a * self.a / self.b


class Maximum(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.mask = a >= b
        return np.where(self.mask, a, b)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return np.where(self.mask, grad, 0), np.where(self.mask, 0, grad)


class Minimum(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.mask = a <= b
        return np.where(self.mask, a, b)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return np.where(self.mask, grad, 0), np.where(self.mask, 0, grad)


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return Sub.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    return Mul.apply(a, b)


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "div")
    return Div.apply(a, b)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "maximum")
    return Maximum.apply(a, b)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "minimum")
    return Minimum.apply(a, b)


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    """Exact-shape binary op by name"""
    table = {"add": add, "sub": sub, "mul": mul, "div": div}
    if kind not in table:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    return table[kind](a, b)


# elementwise unary


class Affine(Function):
    def forward(self, x: np.ndarray, scale: float, shift: float) -> np.ndarray:
        self.scale = x.dtype.type(scale)
        return x * self.scale + x.dtype.type(shift)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * self.scale,)


class Pow(Function):
    def forward(self, x: np.ndarray, exponent: float) -> np.ndarray:
        self.x, self.exponent = x, exponent
        return np.power(x, exponent)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * self.exponent * np.power(self.x, self.exponent - 1),)


class Exp(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.y = np.exp(x)
        return self.y

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * self.y,)


class Log(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.x = x
        return np.log(x)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad / self.x,)


class Atan(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.x = x
        return np.arctan(x)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad / (1 + self.x * self.x),)


class Clamp(Function):
    def forward(self, x: np.ndarray, low: Optional[float], high: Optional[float]) -> np.ndarray:
        self.mask = np.ones(x.shape, dtype=bool)
        if low is not None:
            self.mask &= x >= low
        if high is not None:
            self.mask &= x <= high
        return np.clip(x, low, high)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (np.where(self.mask, grad, 0),)


class Sigmoid(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.y = expit(x)
        return self.y

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * self.y * (1 - self.y),)


class Tanh(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.y = np.tanh(x)
        return self.y

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * (1 - self.y * self.y),)


class SiLU(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.x = x
        self.s = expit(x)
        return x * self.s

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        s = self.s
        return (grad * (s + self.x * s * (1 - s)),)


class LeakyReLU(Function):
    def forward(self, x: np.ndarray, slope: float) -> np.ndarray:
        self.slope = x.dtype.type(slope)
        self.mask = x > 0
        return np.where(self.mask, x, x * self.slope)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (np.where(self.mask, grad, grad * self.slope),)


def affine(x: Tensor, scale: float, shift: float = 0.0) -> Tensor:
    """scale * x + shift"""
    return Affine.apply(x, scale=scale, shift=shift)


def one_minus(x: Tensor) -> Tensor:
    return affine(x, -1.0, 1.0)


def pow(x: Tensor, exponent: float) -> Tensor:
    return Pow.apply(x, exponent=exponent)


def exp(x: Tensor) -> Tensor:
    return Exp.apply(x)


def log(x: Tensor) -> Tensor:
    return Log.apply(x)


def atan(x: Tensor) -> Tensor:
    return Atan.apply(x)


def clamp(x: Tensor, low: Optional[float] = None, high: Optional[float] = None) -> Tensor:
    return Clamp.apply(x, low=low, high=high)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def tanh(x: Tensor) -> Tensor:
    return Tanh.apply(x)


def silu(x: Tensor) -> Tensor:
    return SiLU.apply(x)


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    return LeakyReLU.apply(x, slope=slope)


def activation(x: Tensor, kind: str) -> Tensor:
    kind = ActivationKind(kind)
    if kind is ActivationKind.SIGMOID:
        return sigmoid(x)
    if kind is ActivationKind.TANH:
        return tanh(x)
    if kind is ActivationKind.SILU:
        return silu(x)
    return leaky_relu(x)


# reductions and layout


class Sum(Function):
    def forward(self, x: np.ndarray, axis: Any, keepdims: bool) -> np.ndarray:
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.asarray(np.sum(x, axis=axis, keepdims=keepdims))

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


def sum(x: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))
    return affine(sum(x, axis=axis, keepdims=keepdims), 1.0 / max(count, 1))


class Reshape(Function):
    def forward(self, x: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad.reshape(self.shape),)


class Permute(Function):
    def forward(self, x: np.ndarray, axes: Tuple[int, ...]) -> np.ndarray:
        self.inverse = tuple(np.argsort(axes))
        return np.ascontiguousarray(np.transpose(x, axes))

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (np.ascontiguousarray(np.transpose(grad, self.inverse)),)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        np.empty(x.shape, dtype=np.bool_).reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {x.shape} into {shape}") from exc
    return Reshape.apply(x, shape=shape)


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"permute axes {axes} invalid for {x.ndim}-d tensor")
    return Permute.apply(x, axes=axes)


def _is_basic_index(index: Any) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, slice, type(Ellipsis), type(None))) for i in items)


class GetItem(Function):
    def forward(self, x: np.ndarray, index: Any) -> np.ndarray:
        self.shape, self.dtype, self.index = x.shape, x.dtype, index
        out = x[index]
        return np.array(out, copy=True)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros(self.shape, dtype=self.dtype)
        if _is_basic_index(self.index):
            full[self.index] += grad
        else:
            np.add.at(full, self.index, grad)
        return (full,)


def getitem(x: Tensor, index: Any) -> Tensor:
    return GetItem.apply(x, index=index)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int) -> np.ndarray:
        self.axis = axis
        self.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, ...]:
        return tuple(np.ascontiguousarray(g) for g in np.split(grad, self.splits, axis=self.axis))


class Stack(Function):
    def forward(self, *arrays: np.ndarray, axis: int) -> np.ndarray:
        self.axis = axis
        return np.stack(arrays, axis=axis)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, ...]:
        count = grad.shape[self.axis]
        return tuple(np.ascontiguousarray(np.take(grad, i, axis=self.axis)) for i in range(count))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    ref = tensors[0].shape
    axis = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            d != r for i, (d, r) in enumerate(zip(t.shape, ref)) if i != axis
        ):
            raise ShapeError(f"concat along axis {axis}: incompatible shapes {ref} and {t.shape}")
    return Concat.apply(*tensors, axis=axis)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two [N, C, ...] tensors on the channel axis"""
    return concat([a, b], axis=1)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("stack needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != ref:
            raise ShapeError(f"stack: shape mismatch {ref} vs {t.shape}")
    return Stack.apply(*tensors, axis=axis)


# spatial


class Upsample2x(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return x.repeat(2, axis=-2).repeat(2, axis=-1)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        *lead, h2, w2 = grad.shape
        blocks = grad.reshape(*lead, h2 // 2, 2, w2 // 2, 2)
        return (blocks.sum(axis=(-3, -1)),)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour upsampling of the two trailing axes"""
    if x.ndim < 2:
        raise ShapeError(f"upsample2x needs at least 2 dims, got {x.shape}")
    return Upsample2x.apply(x)


class MaxPool2d(Function):
    def forward(self, x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
        n, c, h, w = x.shape
        self.shape, self.kernel, self.stride, self.padding = x.shape, kernel, stride, padding
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                    constant_values=-np.inf)
        windows = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
        oh, ow = windows.shape[2], windows.shape[3]
        flat = windows.reshape(n, c, oh, ow, kernel * kernel)
        self.argmax = flat.argmax(axis=-1)
        self.padded_shape = xp.shape
        return np.take_along_axis(flat, self.argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        n, c, oh, ow = grad.shape
        k, s, p = self.kernel, self.stride, self.padding
        rows = np.arange(oh)[:, None] * s + self.argmax // k
        cols = np.arange(ow)[None, :] * s + self.argmax % k
        nn = np.arange(n)[:, None, None, None]
        cc = np.arange(c)[None, :, None, None]
        full = np.zeros(self.padded_shape, dtype=grad.dtype)
        np.add.at(full, (nn, cc, rows, cols), grad)
        h, w = self.shape[2], self.shape[3]
        return (full[:, :, p:p + h, p:p + w],)


def maxpool(x: Tensor, kernel: int, stride: int = 1, padding: Optional[int] = None) -> Tensor:
    """2D max pooling over [N, C, H, W]; padding defaults to kernel // 2"""
    if x.ndim != 4:
        raise ShapeError(f"maxpool expects [N, C, H, W], got {x.shape}")
    padding = kernel // 2 if padding is None else padding
    out = (x.shape[2] + 2 * padding - kernel) // stride + 1
    if out <= 0:
        raise ShapeError(f"maxpool kernel {kernel} too large for input {x.shape}")
    return MaxPool2d.apply(x, kernel=kernel, stride=stride, padding=padding)


# normalization and losses


class BatchNorm(Function):
    """Per-channel normalization of [N, C, H, W]; batch statistics unless mean/var given"""

    def forward(
        self,
        x: np.ndarray,
        gamma: np.ndarray,
        beta: np.ndarray,
        mean: Optional[np.ndarray],
        var: Optional[np.ndarray],
        eps: float,
    ) -> np.ndarray:
        self.training = mean is None
        if self.training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
        self.inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
        self.xhat = (x - mean[None, :, None, None]) * self.inv_std[None, :, None, None]
        self.gamma = gamma
        return self.xhat * gamma[None, :, None, None] + beta[None, :, None, None]

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        grad_gamma = (grad * self.xhat).sum(axis=(0, 2, 3))
        grad_beta = grad.sum(axis=(0, 2, 3))
        g = grad * self.gamma[None, :, None, None]
        scale = self.inv_std[None, :, None, None]
        if not self.training:
            return g * scale, grad_gamma, grad_beta
        m = grad.shape[0] * grad.shape[2] * grad.shape[3]
        grad_x = scale / m * (
            m * g
            - g.sum(axis=(0, 2, 3), keepdims=True)
            - self.xhat * (g * self.xhat).sum(axis=(0, 2, 3), keepdims=True)
        )
        return grad_x, grad_gamma, grad_beta


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Optional[np.ndarray] = None,
    running_var: Optional[np.ndarray] = None,
    eps: float = 1e-3,
) -> Tensor:
    if x.ndim != 4 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(f"batch_norm: input {x.shape} with gamma {gamma.shape}, beta {beta.shape}")
    return BatchNorm.apply(x, gamma, beta, mean=running_mean, var=running_var, eps=eps)


class BCEWithLogits(Function):
    def forward(self, x: np.ndarray, target: np.ndarray) -> np.ndarray:
        self.x, self.target = x, target
        return np.maximum(x, 0) - x * target + np.log1p(np.exp(-np.abs(x)))

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * (expit(self.x) - self.target),)


def bce_with_logits(logits: Tensor, target: np.ndarray) -> Tensor:
    """Elementwise binary cross-entropy on logits against a constant target"""
    target = np.asarray(target, dtype=logits.dtype)
    if target.shape != logits.shape:
        raise ShapeError(f"bce_with_logits: target {target.shape} vs logits {logits.shape}")
    return BCEWithLogits.apply(logits, target=target)


def constant(array: Any, like: Tensor) -> Tensor:
    """Wrap a numpy array as a non-differentiable tensor of like's dtype"""
    return Tensor(np.asarray(array, dtype=like.dtype))
