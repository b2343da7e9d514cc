"""
SGD with Nesterov momentum and the warmup + cosine learning-rate schedule.
"""

import math
from typing import Dict, List, Sequence

import numpy as np

from tyolo.nn.module import Parameter


def cosine_factor(epoch: float, epochs: int, lrf: float) -> float:
    """1.0 at epoch 0 falling to lrf at the final epoch"""
    return ((1 - math.cos(epoch * math.pi / max(epochs, 1))) / 2) * (lrf - 1) + 1


class LRSchedule:
    def __init__(self, lr0: float, lrf: float, epochs: int, warmup_epochs: float, steps_per_epoch: int):
        self.lr0 = lr0
        self.lrf = lrf
        self.epochs = epochs
        self.steps_per_epoch = max(steps_per_epoch, 1)
        self.warmup_iters = int(round(warmup_epochs * self.steps_per_epoch))

    def __call__(self, iteration: int) -> float:
        epoch = iteration // self.steps_per_epoch
        lr = self.lr0 * cosine_factor(epoch, self.epochs, self.lrf)
        if self.warmup_iters and iteration < self.warmup_iters:
            lr *= (iteration + 1) / self.warmup_iters
        return lr


class SGD:
    """
    Momentum SGD over the trainable parameters given at construction.

    Weight decay applies to weight matrices and kernels only; biases and
    normalization scales (1-d parameters) are not decayed.
    """

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 0.01,
        momentum: float = 0.937,
        weight_decay: float = 5e-4,
        nesterov: bool = True,
    ):
        self.params: List[Parameter] = [p for p in params if p.requires_grad]
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.nesterov = nesterov
        self._buffers: Dict[int, np.ndarray] = {}

    @property
    def num_parameters(self) -> int:
        return sum(p.size for p in self.params)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        m = self.momentum
        for p in self.params:
            grad = np.zeros_like(p.data) if p.grad is None else p.grad.astype(p.dtype, copy=True)
            if self.weight_decay and p.ndim > 1:
                grad += self.weight_decay * p.data
            if m:
                buf = self._buffers.get(id(p))
                buf = grad.copy() if buf is None else m * buf + grad
                self._buffers[id(p)] = buf
                grad = grad + m * buf if self.nesterov else buf
            p.data = p.data - self.lr * grad
