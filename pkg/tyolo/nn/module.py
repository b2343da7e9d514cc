"""
Module and Parameter containers over the tensor core.
"""

from collections import OrderedDict
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from tyolo.core.errors import CheckpointError
from tyolo.tensor.tensor import Tensor


class Parameter(Tensor):
    """A tensor that belongs to a module and is trained by default"""

    def __init__(self, data: Any, dtype: Any = None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """Container of parameters, buffers and child modules with stable dotted names"""

    def __init__(self):
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def add_module(self, name: str, module: "Module") -> None:
        setattr(self, name, module)

    def register_buffer(self, name: str, array: np.ndarray) -> None:
        self._buffers[name] = np.asarray(array)

    def buffer(self, name: str) -> np.ndarray:
        return self._buffers[name]

    def set_buffer(self, name: str, array: np.ndarray) -> None:
        if name not in self._buffers:
            raise KeyError(f"unknown buffer {name!r}")
        self._buffers[name] = np.asarray(array, dtype=self._buffers[name].dtype)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    # traversal

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self._modules.items():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def modules(self) -> Iterator["Module"]:
        for _, module in self.named_modules():
            yield module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for module_name, module in self.named_modules(prefix):
            for name, param in module._parameters.items():
                yield (f"{module_name}.{name}" if module_name else name), param

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for module_name, module in self.named_modules(prefix):
            for name, array in module._buffers.items():
                yield (f"{module_name}.{name}" if module_name else name), array

    def num_parameters(self, trainable_only: bool = False) -> int:
        return sum(p.size for p in self.parameters() if p.requires_grad or not trainable_only)

    # modes

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def requires_grad_(self, flag: bool) -> "Module":
        for param in self.parameters():
            param.requires_grad = flag
        return self

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def to(self, dtype: Any) -> "Module":
        """Cast parameters and floating buffers in place"""
        dtype = np.dtype(dtype)
        for module in self.modules():
            for param in module._parameters.values():
                param.data = param.data.astype(dtype)
                param.grad = None
            for name, array in list(module._buffers.items()):
                if np.issubdtype(array.dtype, np.floating):
                    module._buffers[name] = array.astype(dtype)
        return self

    @property
    def dtype(self) -> np.dtype:
        params = self.parameters()
        return params[0].dtype if params else np.dtype(np.float32)

    # state

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, param in self.named_parameters():
            state[name] = param.data.copy()
        for name, array in self.named_buffers():
            state[name] = np.array(array, copy=True)
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True) -> List[str]:
        """Copy arrays into matching parameters/buffers; returns names that were not found"""
        own_params = dict(self.named_parameters())
        own_buffers = {}
        for module_name, module in self.named_modules():
            for name in module._buffers:
                own_buffers[f"{module_name}.{name}" if module_name else name] = (module, name)

        missing = [n for n in list(own_params) + list(own_buffers) if n not in state]
        unexpected = [n for n in state if n not in own_params and n not in own_buffers]
        if strict and (missing or unexpected):
            raise CheckpointError(
                f"state mismatch: missing {missing[:5]}{'...' if len(missing) > 5 else ''}, "
                f"unexpected {unexpected[:5]}{'...' if len(unexpected) > 5 else ''}"
            )
        for name, array in state.items():
            if name in own_params:
                param = own_params[name]
                if tuple(array.shape) != param.shape:
                    raise CheckpointError(
                        f"{name}: checkpoint shape {tuple(array.shape)} vs model {param.shape}"
                    )
                param.data = np.array(array, dtype=param.dtype, copy=True)
            elif name in own_buffers:
                module, key = own_buffers[name]
                module.set_buffer(key, np.array(array, copy=True))
        return missing


class ModuleList(Module):
    """Ordered list of child modules named "0", "1", ..."""

    def __init__(self, modules: Optional[Iterable[Module]] = None):
        super().__init__()
        for module in modules or []:
            self.append(module)

    def append(self, module: Module) -> None:
        self.add_module(str(len(self._modules)), module)

    def __getitem__(self, index: int) -> Module:
        return list(self._modules.values())[index]

    def __iter__(self) -> Iterator[Module]:
        return iter(self._modules.values())

    def __len__(self) -> int:
        return len(self._modules)


def parameter_census(module: Module) -> Dict[str, int]:
    """Element counts: total, trainable and frozen"""
    total = module.num_parameters()
    trainable = module.num_parameters(trainable_only=True)
    return {"total": total, "trainable": trainable, "frozen": total - trainable}
