"""Pre-training, adapter fine-tuning and constrained label scoring."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import autodiff as ad
from ..categories import CATEGORIES, LABEL_SENTENCES, Category
from ..instructions import OUTPUT_PREFIX
from .model import BaseLm, LmConfig, LoraLm
from .tokenizer import BOS_ID, EOS_ID, PAD_ID, Tokenizer, tokenize

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


# Positions kept free after the prompt for the answer (or filler) tokens.
TAIL_ROOM = 16
PREFIX_LEN = len(tokenize(OUTPUT_PREFIX))


@dataclass(frozen=True)
class TrainingPair:
    """Prompt ids ``x`` (BOS first) and answer ids ``y``; the loss covers ``y`` only."""

    x: tuple[int, ...]
    y: tuple[int, ...]

    @property
    def ids(self) -> list[int]:
        return list(self.x) + list(self.y)

    @property
    def mask(self) -> np.ndarray:
        """Per-position flag on the *target* sequence ``ids[1:]``."""
        m = np.zeros(len(self.x) + len(self.y) - 1)
        m[len(self.x) - 1:] = 1.0
        return m


def prompt_text(instruction_input: str) -> str:
    return f"{instruction_input}\n{OUTPUT_PREFIX}"


def prompt_end(tokenizer: Tokenizer) -> int:
    """Position of the last prompt token; every prompt is left-padded to end here."""
    return tokenizer.max_len - TAIL_ROOM - 1


def _head(body: list[int], anchor: int) -> tuple[int, ...]:
    # Left truncation keeps the most recent transactions.
    return (BOS_ID, *body[len(body) - anchor:]) if len(body) > anchor else (BOS_ID, *body)


def make_pair(tokenizer: Tokenizer, instruction_input: str, output: str) -> TrainingPair:
    y = tokenizer.encode(output)
    if len(y) > TAIL_ROOM:
        raise ValueError(f"answer of {len(y)} tokens exceeds the {TAIL_ROOM} reserved positions")
    x = _head(tokenizer.encode(prompt_text(instruction_input)), prompt_end(tokenizer))
    return TrainingPair(x, tuple(y))


def layout(heads: Sequence[Sequence[int]], tails: Sequence[Sequence[int]], anchor: int):
    """Left-pad so every head ends at position ``anchor``; tails follow it.

    Returns (ids, start): ids (B, W) cover positions ``start..start+W-1``.
    """
    lo = min(anchor + 1 - len(h) for h in heads)
    if lo < 0:
        raise ValueError("head longer than its anchor position")
    width = anchor + 1 + max(len(t) for t in tails) - lo
    ids = np.full((len(heads), width), PAD_ID, dtype=np.int64)
    for i, (h, t) in enumerate(zip(heads, tails)):
        s = anchor + 1 - len(h) - lo
        ids[i, s:s + len(h)] = h
        ids[i, s + len(h):s + len(h) + len(t)] = t
    return ids, lo


def _check(loss: ad.Tensor, what: str) -> float:
    v = loss.item()
    if not math.isfinite(v):
        raise TrainingError(f"{what}: non-finite loss")
    return v


# -- pre-training ----------------------------------------------------------------

@dataclass(frozen=True)
class LmText:
    """A pre-training text split at the anchor: ``head`` ends where prompts end."""

    head: tuple[int, ...]
    tail: tuple[int, ...]


def encode_text(tokenizer: Tokenizer, text: str, filler: str = "") -> LmText:
    """Input text aligned like a prompt body; ``filler`` (and EOS) fill the answer room."""
    anchor = prompt_end(tokenizer) - PREFIX_LEN
    tail = tokenizer.encode(filler)[:tokenizer.max_len - anchor - 2] + [EOS_ID]
    return LmText(_head(tokenizer.encode(text), anchor), tuple(tail))




def lm_loss(model, batch: Sequence[LmText]) -> ad.Tensor:
    """Mean next-token cross-entropy over the real (non-pad) transitions of ``batch``."""
    anchor = model.config.max_len - TAIL_ROOM - 1 - PREFIX_LEN
    ids, lo = layout([t.head for t in batch], [t.tail for t in batch], anchor)
    inputs, targets = ids[:, :-1], ids[:, 1:]
    logits = model.forward(inputs, start=lo)
    V = logits.shape[-1]
    weights = ((inputs != PAD_ID) & (targets != PAD_ID)).reshape(-1).astype(float)
    return ad.cross_entropy(ad.reshape(logits, (-1, V)), targets.reshape(-1), weights)


def evaluate_lm(model, texts: Sequence[LmText], batch_size: int = 32) -> float:
    total = count = 0.0
    with ad.no_grad():
        for i in range(0, len(texts), batch_size):
            batch = texts[i:i + batch_size]
            n = sum(len(t.head) + len(t.tail) - 1 for t in batch)
            total += lm_loss(model, batch).item() * n
            count += n
    return total / count


def pretrain_base(tokenizer: Tokenizer, corpus: Sequence[tuple[str, str]], config: LmConfig | None = None,
                  epochs: int = 1, lr: float = 3e-3, batch_size: int = 16, clip: float = 1.0,
                  holdout: float = 0.05, seed: int = 0, min_tokens: int = 10_000):
    """Train a base model on (text, filler) items.

    Returns (model, per-epoch train loss, held-out loss per token).
    """
    config = config or LmConfig(vocab_size=len(tokenizer), max_len=tokenizer.max_len)
    if config.max_len != tokenizer.max_len:
        raise ValueError("model and tokenizer disagree on max_len")
    texts = [encode_text(tokenizer, text, filler) for text, filler in corpus]
    n_tokens = sum(len(t.head) + len(t.tail) for t in texts)
    if n_tokens < min_tokens:
        raise TrainingError(f"pre-training corpus has {n_tokens} tokens, need >= {min_tokens}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(texts))
    n_held = max(1, int(round(holdout * len(texts)))) if holdout > 0 else 0
    held = [texts[i] for i in order[:n_held]]
    train_texts = [texts[i] for i in order[n_held:]]
    model = BaseLm(config, seed=seed)
    model.freeze(False)
    opt = ad.Adam(model.trainable(), lr=lr)
    curve = []
    for epoch in range(epochs):
        perm = rng.permutation(len(train_texts))
        total = 0.0
        for b, start in enumerate(range(0, len(perm), batch_size)):
            batch = [train_texts[i] for i in perm[start:start + batch_size]]
            opt.zero_grad()
            loss = lm_loss(model, batch)
            total += _check(loss, f"pre-training epoch {epoch} batch {b}") * len(batch)
            loss.backward()
            ad.clip_grad_norm(opt.params, clip)
            opt.step()
        curve.append(total / len(train_texts))
        log.info("pretrain epoch %d loss %.4f", epoch, curve[-1])
    held_loss = evaluate_lm(model, held) if held else float("nan")
    return model, curve, held_loss


# -- fine-tuning ------------------------------------------------------------------

def _answer_cells(pairs: Sequence[TrainingPair], anchor: int, lo: int):
    rows, cols, targets = [], [], []
    for i, p in enumerate(pairs):
        for t, tok in enumerate(p.y):
            rows.append(i)
            cols.append(anchor - lo + t)
            targets.append(tok)
    return rows, cols, targets


def answer_logits(model, pairs: Sequence[TrainingPair]):
    """Logits predicting each answer token, plus the matching targets and row owners."""
    anchor = model.config.max_len - TAIL_ROOM - 1
    ids, lo = layout([p.x for p in pairs], [p.y for p in pairs], anchor)
    rows, cols, targets = _answer_cells(pairs, anchor, lo)
    if not targets:
        raise TrainingError("every position in the batch is masked out")
    return model.forward(ids[:, :-1], positions=(rows, cols), start=lo), targets, rows


def masked_loss(model, pairs: Sequence[TrainingPair]) -> ad.Tensor:
    """Mean negative log-likelihood of the answer tokens.

    Only answer positions reach the output head, so prompt positions add
    neither loss nor gradient.
    """
    if not pairs:
        raise TrainingError("empty batch")
    logits, targets, _ = answer_logits(model, pairs)
    return ad.cross_entropy(logits, targets)


def finetune(model: LoraLm, pairs: Sequence[TrainingPair], epochs: int = 2, lr: float = 1e-2,
             batch_size: int = 16, clip: float = 1.0, seed: int = 0) -> list[float]:
    """Adam over the adapter only; returns the mean masked loss per epoch."""
    if not pairs:
        raise TrainingError("no fine-tuning pairs")
    if any(p.requires_grad for p in model.base.parameters()):
        raise TrainingError("base weights must be frozen before fine-tuning")
    rng = np.random.default_rng(seed)
    opt = ad.Adam(model.trainable(), lr=lr)
    curve = []
    for epoch in range(epochs):
        perm = rng.permutation(len(pairs))
        total = 0.0
        for b, start in enumerate(range(0, len(perm), batch_size)):
            batch = [pairs[i] for i in perm[start:start + batch_size]]
            opt.zero_grad()
            loss = masked_loss(model, batch)
            total += _check(loss, f"fine-tuning epoch {epoch} batch {b}") * len(batch)
            loss.backward()
            ad.clip_grad_norm(opt.params, clip)
            opt.step()
        curve.append(total / len(pairs))
        log.info("finetune epoch %d loss %.4f", epoch, curve[-1])
    return curve


def mean_masked_loss(model, pairs: Sequence[TrainingPair], batch_size: int = 32) -> float:
    total = count = 0.0
    with ad.no_grad():
        for i in range(0, len(pairs), batch_size):
            batch = pairs[i:i + batch_size]
            n = sum(len(p.y) for p in batch)
            total += masked_loss(model, batch).item() * n
            count += n
    return total / count


# -- label scoring ----------------------------------------------------------------

@dataclass(frozen=True)
class LabelScores:
    category: Category
    scores: dict[Category, float]


def score_labels(model, tokenizer: Tokenizer, instruction_inputs: Sequence[str],
                 normalize: bool = True, batch_size: int = 8) -> list[LabelScores]:
    """Teacher-forced log-probability of each label sentence after the prompt.

    Scores are mean token log-probabilities (sums with ``normalize=False``);
    ties go to the earlier category in the fixed category order.
    """
    out: list[LabelScores] = []
    for start in range(0, len(instruction_inputs), batch_size):
        chunk = instruction_inputs[start:start + batch_size]
        pairs = [make_pair(tokenizer, text, sentence) for text in chunk for sentence in LABEL_SENTENCES]
        with ad.no_grad():
            logits, targets, owner = answer_logits(model, pairs)
            logp = ad.log_softmax(logits).data
        tok_lp = logp[np.arange(len(targets)), targets]
        sums = np.bincount(owner, weights=tok_lp, minlength=len(pairs))
        lens = np.array([len(p.y) for p in pairs], dtype=float)
        vals = (sums / lens if normalize else sums).reshape(len(chunk), len(LABEL_SENTENCES))
        for row in vals:
            best = int(np.argmax(row))  # first maximum = fixed category order
            out.append(LabelScores(CATEGORIES[best], {c: float(v) for c, v in zip(CATEGORIES, row)}))
    return out


def predict_category(model, tokenizer: Tokenizer, instruction_input: str,
                     normalize: bool = True) -> LabelScores:
    return score_labels(model, tokenizer, [instruction_input], normalize)[0]
