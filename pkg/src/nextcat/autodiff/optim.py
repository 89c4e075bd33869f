"""SGD and Adam. Parameters with ``requires_grad=False`` are never touched."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .tensor import Tensor


class Optimizer:
    def __init__(self, params: Iterable[Tensor], lr: float):
        self.params = list(params)
        self.lr = float(lr)
        self.step_count = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _active(self):
        return [p for p in self.params if p.requires_grad and p.grad is not None]


class SGD(Optimizer):
    def step(self) -> None:
        self.step_count += 1
        for p in self._active():
            p.data -= self.lr * p.grad


class Adam(Optimizer):
    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self._m: dict[int, np.ndarray] = {}
        self._v: dict[int, np.ndarray] = {}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p in self._active():
            key = id(p)
            m = self._m.get(key)
            if m is None:
                m = self._m[key] = np.zeros_like(p.data)
                self._v[key] = np.zeros_like(p.data)
            v = self._v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(params: Iterable[Tensor], max_norm: float) -> float:
    """Rescale grads in place so their joint L2 norm is at most ``max_norm``."""
    grads = [p.grad for p in params if p.requires_grad and p.grad is not None]
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total > max_norm > 0:
        for g in grads:
            g *= max_norm / total
    return total
