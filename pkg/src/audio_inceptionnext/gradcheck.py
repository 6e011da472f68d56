"""Central finite-difference gradient checking in 64-bit mode."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    eps: float = 1e-6,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``f`` receives one float64 :class:`Tensor` per entry of ``inputs`` and must
    return a scalar tensor. The error per coordinate is
    ``|a - n| / max(|a|, |n|, 1e-8)``. With ``max_coords`` set, at most that
    many randomly chosen coordinates per input are differenced.
    """
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = f(*tensors)
    if out.size != 1:
        raise ValueError(f"f must return a scalar, got shape {out.shape}")
    out.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    def evaluate() -> float:
        return float(f(*[Tensor(a) for a in arrays]).data)

    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for arr, grad in zip(arrays, analytic):
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + eps
            up = evaluate()
            flat[idx] = orig - eps
            down = evaluate()
            flat[idx] = orig
            num = (up - down) / (2 * eps)
            a = gflat[idx]
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, err)
    return worst
