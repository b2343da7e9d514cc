"""
Minimal dense tensor library with reverse-mode differentiation.
"""

from tyolo.tensor.conv import ConvSpec, conv2d, conv3d
from tyolo.tensor.gradcheck import grad_check
from tyolo.tensor.ops import (
    ActivationKind,
    activation,
    concat,
    concat_channels,
    elementwise,
    maxpool,
    upsample2x,
)
from tyolo.tensor.serialization import load_tensor, load_tensors, save_tensor, save_tensors
from tyolo.tensor.tensor import (
    Function,
    Tensor,
    default_dtype,
    get_default_dtype,
    is_grad_enabled,
    no_grad,
    set_default_dtype,
)

__all__ = [
    "Tensor",
    "Function",
    "ConvSpec",
    "conv2d",
    "conv3d",
    "activation",
    "ActivationKind",
    "elementwise",
    "upsample2x",
    "concat",
    "concat_channels",
    "maxpool",
    "grad_check",
    "no_grad",
    "is_grad_enabled",
    "default_dtype",
    "get_default_dtype",
    "set_default_dtype",
    "save_tensor",
    "load_tensor",
    "save_tensors",
    "load_tensors",
]
