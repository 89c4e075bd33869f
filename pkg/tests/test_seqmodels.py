from __future__ import annotations

import numpy as np
import pytest

from nextcat import seqmodels as sm
from nextcat import selftest
from nextcat.autodiff.gradcheck import check
from nextcat.categories import CATEGORIES, Category


def test_left_padding_contract():
    e = sm.encode([Category.CLOTHING, Category.OTHER])
    assert e.matrix.shape == (sm.L_MAX, sm.N_SYMBOLS)
    assert (e.matrix[:12, sm.PAD] == 1).all()
    assert e.matrix[12, Category.CLOTHING.index] == 1 and e.matrix[13, Category.OTHER.index] == 1
    assert (e.matrix.sum(axis=1) == 1).all()
    with pytest.raises(ValueError):
        sm.encode([])
    with pytest.raises(ValueError):
        sm.encode([Category.GROCERY] * 15)


@pytest.mark.parametrize("name", ["micro_lstm", "micro_cnn"])
@pytest.mark.parametrize("seed", range(5))
def test_micro_model_gradients(name, seed):
    loss_fn, params = selftest.MODEL_CASES[name](np.random.default_rng(seed))
    assert check(loss_fn, params) < 1e-4


def _copy_last_task(n, rng):
    windows = [[CATEGORIES[i] for i in rng.integers(0, 4, 9)] for _ in range(n)]
    return sm.encode_batch(windows), np.array([w[-1].index for w in windows])


@pytest.mark.parametrize("make", [lambda: sm.LstmClassifier(hidden=16, seed=0),
                                  lambda: sm.CnnClassifier(seed=0)], ids=["lstm", "cnn"])
def test_learns_a_copy_task_and_accepts_every_length(make):
    rng = np.random.default_rng(0)
    x, y = _copy_last_task(600, rng)
    model = make()
    curve = sm.train(model, x, y, epochs=12, lr=0.02, batch_size=32, seed=0)
    assert curve[-1] < curve[0]
    for k in (4, 7, 9, 14):
        windows = [[CATEGORIES[i] for i in rng.integers(0, 4, k)] for _ in range(100)]
        preds, logits = sm.predict(model, sm.encode_batch(windows))
        assert logits.shape == (100, 4) and np.isfinite(logits).all()
        if k == 9:
            acc = np.mean([p is w[-1] for p, w in zip(preds, windows)])
            assert acc > 0.75  # chance is 0.25


def test_training_is_deterministic():
    x, y = _copy_last_task(64, np.random.default_rng(1))
    runs = []
    for _ in range(2):
        m = sm.LstmClassifier(hidden=4, seed=3)
        sm.train(m, x, y, epochs=2, seed=5)
        runs.append(m.state_dict())
    assert all(np.array_equal(runs[0][k], runs[1][k]) for k in runs[0])


def test_training_errors():
    with pytest.raises(sm.TrainingError):
        sm.train(sm.LstmClassifier(hidden=2), np.zeros((0, 14, 5)), np.zeros(0), epochs=1)
    with pytest.raises(sm.TrainingError):
        sm.train(sm.LstmClassifier(hidden=2), np.zeros((1, 14, 5)), np.array([7]), epochs=1)
