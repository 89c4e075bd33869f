from __future__ import annotations

import numpy as np
import pytest

from nextcat import autodiff as ad
from nextcat.autodiff import checkpoint
from nextcat.autodiff.gradcheck import PRIMITIVE_CASES, check, relative_error


@pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
def test_primitive_gradients(name):
    loss_fn, params = PRIMITIVE_CASES[name](np.random.default_rng(0))
    assert check(loss_fn, params) < 1e-6


def test_gradcheck_detects_a_wrong_gradient():
    x = ad.Tensor(np.random.default_rng(1).normal(size=(3, 2)), requires_grad=True)

    def loss():
        y = ad.mul(x, x)
        # Replace the true backward (2x) with x.
        y._backward = lambda g: [g * x.data]
        return ad.sum_(y)

    assert check(loss, [x]) > 0.1


def test_relative_error_floor():
    assert relative_error(np.zeros(3), np.full(3, 1e-12)) < 1e-3
    assert relative_error(np.ones(3), -np.ones(3)) == pytest.approx(1.0)


def test_values_against_numpy():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(4, 5)) * 50
    sm = ad.softmax(ad.Tensor(a)).data
    assert np.allclose(sm.sum(axis=-1), 1.0)
    ref = a - a.max(axis=-1, keepdims=True)
    ref = ref - np.log(np.exp(ref).sum(axis=-1, keepdims=True))
    assert np.allclose(ad.log_softmax(ad.Tensor(a)).data, ref)
    g, b = ad.Tensor(np.ones(5)), ad.Tensor(np.zeros(5))
    ln = ad.layer_norm(ad.Tensor(a), g, b).data
    assert np.allclose(ln.mean(axis=-1), 0, atol=1e-9)
    assert np.allclose(ln.std(axis=-1), 1, atol=1e-3)
    assert ad.cross_entropy(ad.Tensor(a), [0, 1, 2, 3]).item() == pytest.approx(-ref[range(4), range(4)].mean())


def test_weighted_cross_entropy_ignores_zero_weight_rows():
    logits = ad.Tensor(np.random.default_rng(3).normal(size=(3, 4)), requires_grad=True)
    loss = ad.cross_entropy(logits, [0, 1, 2], weights=np.array([1.0, 0.0, 1.0]))
    loss.backward()
    assert np.all(logits.grad[1] == 0)
    full = ad.cross_entropy(ad.Tensor(logits.data[[0, 2]]), [0, 2]).item()
    assert loss.item() == pytest.approx(full)


def test_shape_errors_are_reported():
    with pytest.raises(ad.ShapeError):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))
    with pytest.raises(ad.ShapeError):
        ad.add(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((4,))))


def test_no_grad_builds_no_graph():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = ad.sum_(ad.mul(x, x))
    assert not y.requires_grad


def test_gradients_accumulate_over_shared_use():
    x = ad.Tensor(np.array([2.0]), requires_grad=True)
    ad.sum_(ad.add(ad.mul(x, x), x)).backward()
    assert x.grad[0] == pytest.approx(5.0)


@pytest.mark.parametrize("opt_cls, lr", [(ad.SGD, 0.1), (ad.Adam, 0.1)])
def test_optimizers_minimize_a_quadratic(opt_cls, lr):
    w = ad.Tensor(np.array([3.0, -2.0]), requires_grad=True)
    frozen = ad.Tensor(np.array([1.0]))
    opt = opt_cls([w, frozen], lr=lr)
    for _ in range(300):
        opt.zero_grad()
        ad.sum_(ad.mul(w, w)).backward()
        opt.step()
    assert np.abs(w.data).max() < 1e-2
    assert frozen.data[0] == 1.0


def test_clip_grad_norm():
    w = ad.Tensor(np.zeros(2), requires_grad=True)
    w.grad = np.array([3.0, 4.0])
    assert ad.clip_grad_norm([w], 1.0) == pytest.approx(5.0)
    assert np.linalg.norm(w.grad) == pytest.approx(1.0)


def test_checkpoint_round_trip_is_byte_stable(tmp_path):
    rng = np.random.default_rng(4)
    tensors = {"b": rng.normal(size=(2, 3)), "a": rng.normal(size=4)}
    blob = checkpoint.to_bytes(tensors, {"k": 1})
    back, meta = checkpoint.from_bytes(blob)
    assert meta == {"k": 1}
    assert all(np.array_equal(back[k], tensors[k]) for k in tensors)
    assert checkpoint.to_bytes(back, meta) == blob
    with pytest.raises(ValueError):
        checkpoint.from_bytes(b"garbage" + blob)
