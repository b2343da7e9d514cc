"""
Layer toolkit over the tensor core.
"""

from tyolo.nn.layers import (
    SPP,
    BatchNorm2d,
    Bottleneck,
    BottleneckCSP,
    Conv2d,
    Conv3d,
    ConvBnAct,
    kaiming_normal,
)
from tyolo.nn.module import Module, ModuleList, Parameter, parameter_census

__all__ = [
    "Module",
    "ModuleList",
    "Parameter",
    "parameter_census",
    "Conv2d",
    "Conv3d",
    "BatchNorm2d",
    "ConvBnAct",
    "Bottleneck",
    "BottleneckCSP",
    "SPP",
    "kaiming_normal",
]
