"""
Central finite-difference gradient checking.
"""

from typing import Callable, Optional, Sequence

import numpy as np
import structlog

from tyolo.tensor import ops
from tyolo.tensor.tensor import Tensor, no_grad

logger = structlog.get_logger(__name__)

MAX_CHECKED_ELEMENTS = 10_000


def _scalar(output: Tensor) -> Tensor:
    return output if output.size == 1 else ops.sum(output)


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    floor: float = 1e-5,
    max_elements: int = MAX_CHECKED_ELEMENTS,
    seed: int = 0,
    wrt: Optional[Sequence[int]] = None,
) -> float:
    """
    Compare autodiff gradients of f(*inputs) with central differences.

    Non-scalar outputs are summed. Inputs with more than max_elements entries are checked
    on a random subsample. The relative error of one element is
    |analytic - numeric| / max(|analytic|, |numeric|, floor); the maximum is returned.
    """
    rng = np.random.default_rng(seed)
    targets = list(range(len(inputs))) if wrt is None else list(wrt)

    for t in inputs:
        t.zero_grad()
    for i in targets:
        inputs[i].requires_grad = True
    loss = _scalar(f(*inputs))
    loss.backward()

    worst = 0.0
    for i in targets:
        tensor = inputs[i]
        if not tensor.data.flags["C_CONTIGUOUS"]:
            tensor.data = np.ascontiguousarray(tensor.data)
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        count = flat.size
        indices = (
            np.arange(count)
            if count <= max_elements
            else rng.choice(count, size=max_elements, replace=False)
        )
        flat_grad = analytic.reshape(-1)
        for index in indices:
            original = flat[index]
            with no_grad():
                flat[index] = original + eps
                plus = _scalar(f(*inputs)).item()
                flat[index] = original - eps
                minus = _scalar(f(*inputs)).item()
            flat[index] = original
            numeric = (plus - minus) / (2 * eps)
            a = float(flat_grad[index])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    logger.debug("grad_check", inputs=len(targets), max_relative_error=worst)
    return worst
