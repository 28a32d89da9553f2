from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from .tensor import DTYPE, NonFiniteError, Tensor


class ParamSet:
    """Ordered, uniquely named collection of trainable tensors."""

    def __init__(self):
        self._params: OrderedDict[str, Tensor] = OrderedDict()
        self.step = 0

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=DTYPE), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def num_parameters(self) -> int:
        return int(sum(t.data.size for t in self._params.values()))

    def subset(self, prefix: str) -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Gradient map; parameters off the loss path get zeros."""
        out = {}
        for name, t in self._params.items():
            g = np.zeros_like(t.data) if t.grad is None else t.grad
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"grad[{name}]", "backward")
            out[name] = g
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        if strict:
            missing = set(self._params) - set(state)
            extra = set(state) - set(self._params)
            if missing or extra:
                raise KeyError(f"parameter mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, value in state.items():
            if name not in self._params:
                continue
            t = self._params[name]
            if t.data.shape != np.shape(value):
                raise ValueError(f"{name}: shape {np.shape(value)} != {t.data.shape}")
            t.data = np.array(value, dtype=DTYPE)

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> ParamSet:
        ps = cls()
        for name, value in state.items():
            ps.add(name, value)
        return ps

    def equal(self, other: ParamSet) -> bool:
        return self.names() == other.names() and all(
            np.array_equal(self[n].data, other[n].data) for n in self)
