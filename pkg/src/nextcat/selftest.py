"""Gradient checks and small oracle comparisons run by ``nextcat selftest``."""
from __future__ import annotations

from collections import Counter
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import baseline as bl
from . import evaluation as ev
from . import seqmodels as sm
from .autodiff.gradcheck import PRIMITIVE_CASES, check
from .categories import CATEGORIES
from .lm.model import BaseLm, LmConfig, attach_lora

TOLERANCE = 1e-4


def _case_lstm(rng):
    model = sm.LstmClassifier(hidden=3, seed=int(rng.integers(1 << 31)))
    x = sm.encode_batch([[CATEGORIES[i] for i in rng.integers(0, 4, n)] for n in (3, 6)])
    y = rng.integers(0, 4, 2)
    return (lambda: ad.cross_entropy(model.forward(x), y)), model.parameters()


def _case_cnn(rng):
    model = sm.CnnClassifier(filters=(2, 3), seed=int(rng.integers(1 << 31)))
    # Continuous inputs: one-hot rows make max-pool ties.
    x = rng.normal(size=(2, sm.L_MAX, sm.N_SYMBOLS))
    # Zero biases put all-zero receptive fields exactly on the ReLU kink.
    for name in ("conv1_b", "conv2_b"):
        model.params[name].data[...] = rng.normal(scale=0.1, size=model.params[name].shape)
    y = rng.integers(0, 4, 2)
    return (lambda: ad.cross_entropy(model.forward(x), y)), model.parameters()


def _micro_lm(rng):
    cfg = LmConfig(vocab_size=11, d_model=8, n_layers=1, n_heads=2, d_ff=16, max_len=8)
    model = BaseLm(cfg, seed=int(rng.integers(1 << 31)))
    ids = rng.integers(0, 11, (2, 6))
    ids[1, :2] = 0  # some padding
    return model, ids


def _case_transformer(rng):
    model, ids = _micro_lm(rng)
    model.freeze(False)
    targets = rng.integers(1, 11, ids.size)

    def loss():
        logits = model.forward(ids, start=1)
        return ad.cross_entropy(ad.reshape(logits, (-1, 11)), targets)

    return loss, model.parameters()


def _case_transformer_lora(rng):
    model, ids = _micro_lm(rng)
    lm = attach_lora(model, ("attention", "mlp"), r=2, alpha=3.0, seed=1)
    for p in lm.trainable():
        # Non-zero B so every adapter matrix receives a gradient.
        p.data[...] = rng.normal(scale=0.5, size=p.shape)
    rows, cols = np.array([0, 0, 1]), np.array([2, 5, 5])
    targets = rng.integers(1, 11, 3)
    return (lambda: ad.cross_entropy(lm.forward(ids, positions=(rows, cols)), targets)), lm.trainable()


MODEL_CASES = {
    "micro_lstm": _case_lstm,
    "micro_cnn": _case_cnn,
    "micro_transformer": _case_transformer,
    "micro_transformer_lora": _case_transformer_lora,
}

# Name -> builder; extended in tests to prove a broken gradient is caught.
REGISTRY: dict[str, Callable] = {**PRIMITIVE_CASES, **MODEL_CASES}


def gradient_checks(seed: int = 0) -> dict[str, float]:
    results = {}
    for i, (name, build) in enumerate(REGISTRY.items()):
        loss_fn, params = build(np.random.default_rng([seed, i]))
        results[name] = check(loss_fn, params)
    return results


def _oracle_argmax(window, tie_order) -> int:
    counts = Counter(t.category for t in window)
    best = max(counts.values())
    return next(c.index for c in tie_order if counts.get(c.value, 0) == best)


def baseline_oracle(seed: int = 0, n: int = 200) -> int:
    """Mismatches between the baseline and a count-and-argmax restatement."""
    from .data import Transaction
    from datetime import date
    from decimal import Decimal
    rng = np.random.default_rng(seed)
    bad = 0
    for i in range(n):
        cats = rng.integers(0, 4, int(rng.integers(1, 15)))
        window = [Transaction(i, date(2015, 1, 1), Decimal("1.00"), CATEGORIES[c].value) for c in cats]
        model = bl.fit({i: window})
        bad += bl.predict(model, i).index != _oracle_argmax(window, model.tie_order)
    return bad


def metrics_oracle(seed: int = 0, n: int = 1000) -> float:
    """Largest deviation between ``compute_metrics`` and a per-sample counting loop."""
    rng = np.random.default_rng(seed)
    truth, pred = rng.integers(0, 4, n).tolist(), rng.integers(0, 4, n).tolist()
    r = ev.compute_metrics(truth, pred)
    worst = 0.0
    wf1 = 0.0
    for c in range(4):
        tp = sum(1 for t, p in zip(truth, pred) if t == c and p == c)
        npred = sum(1 for p in pred if p == c)
        ntrue = sum(1 for t in truth if t == c)
        prec = tp / npred if npred else 0.0
        rec = tp / ntrue if ntrue else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        wf1 += ntrue / n * f1
        worst = max(worst, abs(r.per_class[CATEGORIES[c].value].f1 - f1))
    acc = sum(1 for t, p in zip(truth, pred) if t == p) / n
    return max(worst, abs(r.f1 - wf1), abs(r.accuracy - acc))


def run(seed: int = 0) -> tuple[bool, list[str]]:
    lines = []
    ok = True
    for name, err in gradient_checks(seed).items():
        passed = err < TOLERANCE
        ok &= passed
        lines.append(f"{'PASS' if passed else 'FAIL'} gradcheck {name}: {err:.2e}")
    mismatches = baseline_oracle(seed)
    ok &= mismatches == 0
    lines.append(f"{'PASS' if mismatches == 0 else 'FAIL'} baseline oracle: {mismatches} mismatches")
    dev = metrics_oracle(seed)
    ok &= dev < 1e-9
    lines.append(f"{'PASS' if dev < 1e-9 else 'FAIL'} metrics oracle: max deviation {dev:.1e}")
    return bool(ok), lines
