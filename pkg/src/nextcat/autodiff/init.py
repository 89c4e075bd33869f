"""Seeded parameter initializers."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...], name: str | None = None) -> Tensor:
    """Glorot uniform. For (out, in) matrices and (F, C, kh, kw) kernels."""
    receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    fan_out, fan_in = shape[0] * receptive, shape[1] * receptive
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


def zeros(shape, name: str | None = None) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def ones(shape, name: str | None = None) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True, name=name)


def normal(rng: np.random.Generator, shape, std: float, name: str | None = None) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True, name=name)
