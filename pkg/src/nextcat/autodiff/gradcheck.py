"""Central finite-difference verification of analytic gradients.

The error reported for a tensor is ``||analytic - numeric|| / max(||analytic|| + ||numeric||, floor)``,
so tiny individual entries do not dominate, and a gradient that is zero in
exact arithmetic (round-off on one side, 0 on the other) does not count as a
total mismatch.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

LossFn = Callable[[], Tensor]
CaseBuilder = Callable[[np.random.Generator], tuple[LossFn, list[Tensor]]]


def numeric_grad(loss_fn: LossFn, param: Tensor, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    with T.no_grad():
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_fn().item()
            flat[i] = old - h
            down = loss_fn().item()
            flat[i] = old
            gflat[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    denom = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / denom)


def check(loss_fn: LossFn, params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error over ``params``."""
    for p in params:
        p.grad = None
    loss_fn().backward()
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        worst = max(worst, relative_error(analytic, numeric_grad(loss_fn, p, h)))
    return worst


def _param(rng, *shape, positive: bool = False) -> Tensor:
    data = rng.uniform(0.5, 1.5, shape) if positive else rng.normal(size=shape)
    return Tensor(data, requires_grad=True)


def _case_matmul(rng):
    a, b = _param(rng, 3, 4), _param(rng, 4, 2)
    w = Tensor(rng.normal(size=(3, 2)))
    return (lambda: T.sum_(T.mul(T.matmul(a, b), w))), [a, b]


def _case_batched_matmul(rng):
    a, b = _param(rng, 2, 3, 4), _param(rng, 4, 2)
    c = _param(rng, 2, 2, 3)
    w = Tensor(rng.normal(size=(2, 2, 2)))
    return (lambda: T.sum_(T.mul(T.matmul(c, T.matmul(a, b)), w))), [a, b, c]


def _case_add(rng):
    a, b = _param(rng, 3, 4), _param(rng, 4)
    w = Tensor(rng.normal(size=(3, 4)))
    return (lambda: T.sum_(T.mul(T.add(a, b), w))), [a, b]


def _case_mul(rng):
    a, b = _param(rng, 2, 3), _param(rng, 2, 1)
    w = Tensor(rng.normal(size=(2, 3)))
    return (lambda: T.sum_(T.mul(T.mul(a, b), w))), [a, b]


def _case_elementwise(op, positive=False):
    def build(rng):
        x = _param(rng, int(rng.integers(3, 9)), positive=positive)
        w = Tensor(rng.normal(size=x.shape))
        return (lambda: T.sum_(T.mul(op(x), w))), [x]
    return build


def _case_relu(rng):
    # Keep entries away from the kink.
    data = rng.uniform(0.1, 1.0, 6) * rng.choice([-1.0, 1.0], 6)
    x = Tensor(data, requires_grad=True)
    w = Tensor(rng.normal(size=6))
    return (lambda: T.sum_(T.mul(T.relu(x), w))), [x]


def _case_embedding(rng):
    table = _param(rng, 5, 3)
    ids = np.array([[0, 3, 3], [4, 1, 0]])
    w = Tensor(rng.normal(size=(2, 3, 3)))
    return (lambda: T.sum_(T.mul(T.embedding_lookup(table, ids), w))), [table]


def _case_conv2d(rng):
    x = _param(rng, 2, 2, 5, 4)
    k = _param(rng, 3, 2, 3, 2)
    b = _param(rng, 3)
    w = Tensor(rng.normal(size=(2, 3, 3, 3)))
    return (lambda: T.sum_(T.mul(T.conv2d(x, k, b), w))), [x, k, b]


def _case_max_pool(rng):
    # Distinct values so the argmax is stable under +-h.
    x = Tensor(rng.permutation(2 * 5 * 4).reshape(1, 2, 5, 4) * 0.1, requires_grad=True)
    w = Tensor(rng.normal(size=(1, 2, 2, 2)))
    return (lambda: T.sum_(T.mul(T.max_pool2d(x), w))), [x]


def _case_softmax(rng):
    x = _param(rng, 2, 5)
    w = Tensor(rng.normal(size=(2, 5)))
    return (lambda: T.sum_(T.mul(T.softmax(x), w))), [x]


def _case_log_softmax(rng):
    x = _param(rng, 3, 4)
    w = Tensor(rng.normal(size=(3, 4)))
    return (lambda: T.sum_(T.mul(T.log_softmax(x), w))), [x]


def _case_layer_norm(rng):
    x, g, b = _param(rng, 3, 6), _param(rng, 6), _param(rng, 6)
    w = Tensor(rng.normal(size=(3, 6)))
    return (lambda: T.sum_(T.mul(T.layer_norm(x, g, b), w))), [x, g, b]


def _case_concat(rng):
    a, b = _param(rng, 2, 3), _param(rng, 2, 2)
    w = Tensor(rng.normal(size=(2, 5)))
    return (lambda: T.sum_(T.mul(T.concat([a, b], axis=1), w))), [a, b]


def _case_slice(rng):
    a = _param(rng, 4, 5)
    w = Tensor(rng.normal(size=(2, 3)))
    idx = np.array([0, 2, 2])
    w2 = Tensor(rng.normal(size=(3, 5)))
    return (lambda: T.sum_(T.mul(a[1:3, ::2], w)) + T.sum_(T.mul(a[idx], w2))), [a]


def _case_cross_entropy(rng):
    x = _param(rng, 4, 4)
    targets = rng.integers(0, 4, 4)
    mask = np.array([1.0, 0.0, 1.0, 1.0])
    return (lambda: T.cross_entropy(x, targets, mask)), [x]


def _case_shape_ops(rng):
    a = _param(rng, 2, 3, 4)
    w = Tensor(rng.normal(size=(4, 6)))
    return (lambda: T.sum_(T.mul(T.reshape(T.transpose(a, (2, 0, 1)), (4, 6)), w))
            + T.mean(a, axis=1).sum() - T.scale(a, 0.5).sum()), [a]


PRIMITIVE_CASES: dict[str, CaseBuilder] = {
    "matmul": _case_matmul,
    "matmul_batched": _case_batched_matmul,
    "add": _case_add,
    "mul": _case_mul,
    "embedding_lookup": _case_embedding,
    "conv2d": _case_conv2d,
    "max_pool2d": _case_max_pool,
    "sigmoid": _case_elementwise(T.sigmoid),
    "tanh": _case_elementwise(T.tanh),
    "relu": _case_relu,
    "exp": _case_elementwise(T.exp),
    "log": _case_elementwise(T.log, positive=True),
    "softmax": _case_softmax,
    "log_softmax": _case_log_softmax,
    "layer_norm": _case_layer_norm,
    "concat": _case_concat,
    "slice": _case_slice,
    "cross_entropy": _case_cross_entropy,
    "reshape_transpose_sum_mean": _case_shape_ops,
}


def run_cases(cases: dict[str, CaseBuilder], seed: int = 0, h: float = 1e-5) -> dict[str, float]:
    results = {}
    for i, (name, build) in enumerate(cases.items()):
        loss_fn, params = build(np.random.default_rng([seed, i]))
        results[name] = check(loss_fn, params, h)
    return results
