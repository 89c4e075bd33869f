"""LSTM and CNN next-category classifiers over one-hot category sequences.

Windows are left-padded with an explicit PAD symbol to ``L_MAX`` rows, so a
model trained on last-9 windows accepts any length from 1 to 14 at test time.
Only category sequences are used; demographics and amounts are not inputs.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import init
from .autodiff.nn import Module, linear
from .categories import N_CLASSES, Category

log = logging.getLogger(__name__)

L_MAX = 14
PAD = N_CLASSES
N_SYMBOLS = N_CLASSES + 1


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class EncodedSequence:
    matrix: np.ndarray  # (L_MAX, N_SYMBOLS) one-hot rows
    length: int


def encode(window: Sequence[Category], max_len: int = L_MAX) -> EncodedSequence:
    n = len(window)
    if not 1 <= n <= max_len:
        raise ValueError(f"window length {n} outside [1, {max_len}]")
    m = np.zeros((max_len, N_SYMBOLS))
    m[np.arange(max_len - n), PAD] = 1.0
    m[np.arange(max_len - n, max_len), [c.index for c in window]] = 1.0
    return EncodedSequence(m, n)


def encode_batch(windows: Sequence[Sequence[Category]], max_len: int = L_MAX) -> np.ndarray:
    return np.stack([encode(w, max_len).matrix for w in windows]) if windows else np.zeros((0, max_len, N_SYMBOLS))


class LstmClassifier(Module):
    """Single-layer LSTM; logits from the final hidden state."""

    kind = "lstm"

    def __init__(self, hidden: int = 128, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.hidden = hidden
        H = hidden
        # Gate blocks stacked as input, forget, cell, output.
        self.params = {
            "w_ih": init.xavier_uniform(rng, (4 * H, N_SYMBOLS)),
            "w_hh": init.xavier_uniform(rng, (4 * H, H)),
            "b": init.zeros((4 * H,)),
            "w_out": init.xavier_uniform(rng, (N_CLASSES, H)),
            "b_out": init.zeros((N_CLASSES,)),
        }

    def forward(self, x: np.ndarray) -> ad.Tensor:
        p, H = self.params, self.hidden
        N, L, _ = x.shape
        xw = linear(ad.Tensor(x), p["w_ih"], p["b"])  # (N, L, 4H), all steps at once
        h = ad.Tensor(np.zeros((N, H)))
        c = ad.Tensor(np.zeros((N, H)))
        w_hh_t = ad.transpose(p["w_hh"])
        for t in range(L):
            z = xw[:, t, :] + ad.matmul(h, w_hh_t)
            i = ad.sigmoid(z[:, :H])
            f = ad.sigmoid(z[:, H:2 * H])
            g = ad.tanh(z[:, 2 * H:3 * H])
            o = ad.sigmoid(z[:, 3 * H:])
            c = f * c + i * g
            h = o * ad.tanh(c)
        return linear(h, p["w_out"], p["b_out"])


class CnnClassifier(Module):
    """Two valid convolutions + ReLU, one 2x2 max-pool, dense head.

    ``pool="end"`` pools once after both convolutions; ``pool="between"``
    pools after the first one instead.
    """

    kind = "cnn"

    def __init__(self, filters: tuple[int, int] = (8, 16),
                 kernels: tuple[tuple[int, int], tuple[int, int]] = ((3, 3), (3, 2)),
                 pool: str = "end", seed: int = 0):
        super().__init__()
        if pool not in ("end", "between"):
            raise ValueError(f"pool must be 'end' or 'between', got {pool!r}")
        rng = np.random.default_rng(seed)
        self.pool = pool
        f1, f2 = filters
        (a1, b1), (a2, b2) = kernels
        h, w = L_MAX - a1 + 1, N_SYMBOLS - b1 + 1
        if pool == "between":
            h, w = h // 2, w // 2
        h, w = h - a2 + 1, w - b2 + 1
        if pool == "end":
            h, w = h // 2, w // 2
        if h < 1 or w < 1:
            raise ValueError(f"kernels {kernels} with pool={pool!r} leave no spatial extent")
        self.flat = f2 * h * w
        self.params = {
            "conv1": init.xavier_uniform(rng, (f1, 1, a1, b1)),
            "conv1_b": init.zeros((f1,)),
            "conv2": init.xavier_uniform(rng, (f2, f1, a2, b2)),
            "conv2_b": init.zeros((f2,)),
            "w_out": init.xavier_uniform(rng, (N_CLASSES, self.flat)),
            "b_out": init.zeros((N_CLASSES,)),
        }

    def forward(self, x: np.ndarray) -> ad.Tensor:
        p = self.params
        z = ad.Tensor(x[:, None, :, :])
        z = ad.relu(ad.conv2d(z, p["conv1"], p["conv1_b"]))
        if self.pool == "between":
            z = ad.max_pool2d(z)
        z = ad.relu(ad.conv2d(z, p["conv2"], p["conv2_b"]))
        if self.pool == "end":
            z = ad.max_pool2d(z)
        z = ad.reshape(z, (x.shape[0], self.flat))
        return linear(z, p["w_out"], p["b_out"])


def train(model: Module, x: np.ndarray, y: np.ndarray, epochs: int = 20, lr: float = 5e-3,
          batch_size: int = 64, seed: int = 0) -> list[float]:
    """Adam on mean cross-entropy of the final-step logits; returns per-epoch mean loss."""
    y = np.asarray(y, dtype=np.int64)
    if epochs and len(y) == 0:
        raise TrainingError("empty training corpus")
    if len(y) and (y.min() < 0 or y.max() >= N_CLASSES):
        raise TrainingError("labels must lie in 0..3")
    rng = np.random.default_rng(seed)
    opt = ad.Adam(model.trainable(), lr=lr)
    curve = []
    for epoch in range(epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), batch_size):
            idx = order[start:start + batch_size]
            opt.zero_grad()
            loss = ad.cross_entropy(model.forward(x[idx]), y[idx])
            if not math.isfinite(loss.item()):
                raise TrainingError(f"{model.kind}: non-finite loss at epoch {epoch}, batch {start // batch_size}")
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        curve.append(total / len(y))
        log.debug("%s epoch %d loss %.4f", model.kind, epoch, curve[-1])
    return curve


def predict(model: Module, x: np.ndarray, batch_size: int = 256) -> tuple[list[Category], np.ndarray]:
    if len(x) == 0:
        return [], np.zeros((0, N_CLASSES))
    with ad.no_grad():
        logits = np.concatenate([model.forward(x[i:i + batch_size]).data
                                 for i in range(0, len(x), batch_size)])
    return [Category.from_index(int(i)) for i in logits.argmax(axis=1)], logits


class SequenceModelAdapter:
    """Evaluation-protocol wrapper around a trained LSTM/CNN."""

    def __init__(self, name: str, model: Module):
        self.name = name
        self.model = model

    def predict_windows(self, windows) -> list[Category]:
        return predict(self.model, encode_batch([w.categories for w in windows]))[0]
