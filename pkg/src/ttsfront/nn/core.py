"""Parameters and the module protocol.

Layers cache what they need during ``forward`` and consume it in ``backward``;
a module instance therefore handles one forward/backward pair at a time.
Sequences are 2-D arrays shaped ``(T, channels)`` with no batch axis; batching
is done by accumulating gradients over several sequences.
"""

from __future__ import annotations

import copy
from typing import Dict, Iterator, Tuple

import numpy as np

DTYPE = np.float32


class Param:
    """A dense parameter tensor with a same-shaped gradient accumulator."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.asarray(data)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Param(shape={self.data.shape}, dtype={self.data.dtype})"


class Module:
    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)

    def named_params(self, prefix: str = "") -> Iterator[Tuple[str, Param]]:
        for name, value in vars(self).items():
            if isinstance(value, Param):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_params(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_params(f"{prefix}{name}.{i}.")

    def params(self) -> Dict[str, Param]:
        return dict(self.named_params())

    def zero_grad(self) -> None:
        for _, p in self.named_params():
            p.zero_grad()

    @property
    def dtype(self):
        for _, p in self.named_params():
            return p.data.dtype
        return np.dtype(DTYPE)

    def astype(self, dtype) -> "Module":
        """Deep copy with every parameter cast to ``dtype`` (caches dropped)."""
        clone = copy.deepcopy(self)
        for _, p in clone.named_params():
            p.data = p.data.astype(dtype)
            p.grad = np.zeros_like(p.data)
        return clone

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_params()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = self.params()
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.data.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.data.shape}")
            p.data = value.astype(p.data.dtype, copy=True)
            p.grad = np.zeros_like(p.data)

    def n_params(self) -> int:
        return sum(p.data.size for _, p in self.named_params())
