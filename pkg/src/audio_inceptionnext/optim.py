"""SGD with classic (heavy-ball) momentum."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from .tensor import Tensor


@dataclass
class OptimizerState:
    lr: float
    momentum: float = 0.9
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.lr < 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")

    @classmethod
    def for_params(cls, params: Mapping[str, Tensor], lr: float, momentum: float = 0.9) -> "OptimizerState":
        state = cls(lr=lr, momentum=momentum)
        for name, p in params.items():
            if p.requires_grad:
                state.velocity[name] = np.zeros_like(p.data)
        return state

    def discard(self, prefix: str) -> None:
        """Drop velocity buffers whose parameter name starts with ``prefix``."""
        for name in [k for k in self.velocity if k.startswith(prefix)]:
            del self.velocity[name]


def sgd_momentum_step(params: Mapping[str, Tensor], state: OptimizerState) -> None:
    """``v <- m*v + g``; ``p <- p - lr*v`` for every parameter holding a gradient.

    Parameters with ``requires_grad=False`` or no gradient are left alone.
    """
    for name, p in params.items():
        if not p.requires_grad or p.grad is None:
            continue
        if p.grad.shape != p.shape:
            raise ValueError(f"gradient shape {p.grad.shape} != parameter shape {p.shape} for {name}")
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(p.data)
        v *= state.momentum
        v += p.grad.astype(v.dtype, copy=False)
        p.data -= (state.lr * v).astype(p.dtype, copy=False)


def zero_grad(params: Mapping[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
