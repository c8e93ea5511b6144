"""SGD with momentum, selective weight decay and the poly schedule."""

from __future__ import annotations

from typing import Dict, Iterable, Optional

import numpy as np

from ..autodiff import DTYPE, Tensor


def poly_lr(iteration: int, base_lr: float, max_iter: int, power: float = 0.9) -> float:
    if not 0 <= iteration <= max_iter:
        raise ValueError(f"iteration {iteration} outside [0, {max_iter}]")
    return base_lr * (1.0 - iteration / max_iter) ** power


def decays(name: str, param: Tensor) -> bool:
    # Conv kernels only; biases and batch-norm affine parameters are 1-d.
    return param.ndim > 1


class SGD:
    """``buf = momentum * buf + grad + wd * param``; ``param -= lr * buf``."""

    def __init__(
        self,
        params: Dict[str, Tensor],
        lr: float = 0.01,
        momentum: float = 0.9,
        weight_decay: float = 0.0005,
        max_iter: int = 1000,
        poly_power: float = 0.9,
        no_decay: Optional[Iterable[str]] = None,
    ):
        self.params = dict(params)
        self.lr0 = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.max_iter = max_iter
        self.poly_power = poly_power
        skip = set(no_decay or ())
        self.decay = {n for n, p in self.params.items() if decays(n, p) and n not in skip}
        self.buffers = {n: np.zeros(p.shape, dtype=DTYPE) for n, p in self.params.items()}

    def lr_at(self, iteration: int) -> float:
        return poly_lr(iteration, self.lr0, self.max_iter, self.poly_power)

    def step(self, lr: float) -> None:
        lr = DTYPE(lr)
        m = DTYPE(self.momentum)
        wd = DTYPE(self.weight_decay)
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            if name in self.decay and wd:
                g = g + wd * p.data
            buf = self.buffers[name]
            buf *= m
            buf += g
            p.data -= lr * buf

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {n: b.copy() for n, b in self.buffers.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for n, b in state.items():
            if n not in self.buffers or self.buffers[n].shape != b.shape:
                raise KeyError(f"optimizer buffer {n!r} does not match the model")
            self.buffers[n][...] = b
