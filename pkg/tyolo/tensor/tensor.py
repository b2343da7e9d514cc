"""
Tensor and the reverse-mode differentiation engine.

A Tensor wraps a numpy array. Differentiable operations subclass Function and record
themselves on their output so that backward() can walk the graph in reverse
topological order.
"""

import contextlib
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from tyolo.core.errors import ShapeError

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_default_dtype = np.dtype(np.float32)
_grad_enabled = True

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]


def get_default_dtype() -> np.dtype:
    return _default_dtype


def set_default_dtype(dtype: Any) -> None:
    """Select single or double precision for newly created tensors"""
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in FLOAT_DTYPES:
        raise ValueError(f"unsupported element type {dtype}; use float32 or float64")
    _default_dtype = dtype


@contextlib.contextmanager
def default_dtype(dtype: Any) -> Iterator[None]:
    previous = get_default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block"""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Function:
    """
    Base class for differentiable operations.

    forward() receives the input arrays and returns the output array; backward() receives
    the gradient of the output and returns one gradient (or None) per input tensor.
    """

    def __init__(self, *tensors: "Tensor"):
        self.parents: Tuple["Tensor", ...] = tensors

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        func = cls(*tensors)
        out = func.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = _grad_enabled and any(t.requires_grad for t in tensors)
        result = Tensor(out, requires_grad=requires_grad, dtype=out.dtype)
        if requires_grad:
            result._ctx = func
        return result


class Tensor:
    """N-dimensional array with an optional gradient"""

    __slots__ = ("data", "grad", "requires_grad", "_ctx", "name")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Any = None,
        name: Optional[str] = None,
    ):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in FLOAT_DTYPES:
                dtype = data.dtype
            else:
                dtype = _default_dtype
        self.data: np.ndarray = np.asarray(data, dtype=dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._ctx: Optional[Function] = None
        self.name = name

    # construction helpers

    @classmethod
    def zeros(cls, shape: Sequence[int], requires_grad: bool = False, dtype: Any = None) -> "Tensor":
        return cls(np.zeros(tuple(shape), dtype=dtype or _default_dtype), requires_grad=requires_grad)

    @classmethod
    def ones(cls, shape: Sequence[int], requires_grad: bool = False, dtype: Any = None) -> "Tensor":
        return cls(np.ones(tuple(shape), dtype=dtype or _default_dtype), requires_grad=requires_grad)

    @classmethod
    def randn(
        cls,
        shape: Sequence[int],
        rng: np.random.Generator,
        requires_grad: bool = False,
        dtype: Any = None,
    ) -> "Tensor":
        data = rng.standard_normal(tuple(shape)).astype(dtype or _default_dtype)
        return cls(data, requires_grad=requires_grad)

    # properties

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype: Any) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # autodiff

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._ctx is not None:
                for parent in node._ctx.parents:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self) -> None:
        """Accumulate d(self)/d(t) into t.grad for every reachable t that requires grad"""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("backward() called on a tensor that does not require grad")

        grads: Dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(self._topological_order()):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            if node._ctx is None:
                continue
            parent_grads = node._ctx.backward(grad)
            for parent, parent_grad in zip(node._ctx.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent_grad.shape != parent.shape:
                    raise ShapeError(
                        f"{type(node._ctx).__name__} produced gradient {parent_grad.shape} "
                        f"for input {parent.shape}"
                    )
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad

    # operator sugar; every operator maps onto an explicit op in tyolo.tensor.ops

    def __add__(self, other: "Tensor") -> "Tensor":
        from tyolo.tensor import ops

        return ops.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from tyolo.tensor import ops

        return ops.sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from tyolo.tensor import ops

        return ops.mul(self, other)

    def __truediv__(self, other: "Tensor") -> "Tensor":
        from tyolo.tensor import ops

        return ops.div(self, other)

    def __neg__(self) -> "Tensor":
        from tyolo.tensor import ops

        return ops.affine(self, -1.0, 0.0)

    def __getitem__(self, index: Any) -> "Tensor":
        from tyolo.tensor import ops

        return ops.getitem(self, index)

    def reshape(self, *shape: int) -> "Tensor":
        from tyolo.tensor import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def permute(self, *axes: int) -> "Tensor":
        from tyolo.tensor import ops

        return ops.permute(self, axes)

    def sum(self) -> "Tensor":
        from tyolo.tensor import ops

        return ops.sum(self)

    def mean(self) -> "Tensor":
        from tyolo.tensor import ops

        return ops.mean(self)
