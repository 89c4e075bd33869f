"""Averaging baseline: per-customer historical category frequencies.

For customer i and category j, ``p_ij = (1/K_i) * sum_k I(n_ijk > 0)`` over
K_i time periods. With the default ``period="event"`` every transaction is
its own period, so ``p_ij`` is the relative frequency of j in the window.
``period="week"`` buckets the window into calendar weeks (empty weeks count
toward K_i) and normalizes the vector before prediction.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .categories import N_CLASSES, Category, parse_category
from .data import Transaction

# Used when no training frequencies are supplied.
DEFAULT_TIE_ORDER = (Category.GROCERY, Category.OTHER, Category.GAS_STATIONS, Category.CLOTHING)


@dataclass
class FrequencyModel:
    probabilities: dict[int, np.ndarray] = field(default_factory=dict)
    period_counts: dict[int, int] = field(default_factory=dict)
    tie_order: tuple[Category, ...] = DEFAULT_TIE_ORDER
    period: str = "event"

    def to_json(self) -> str:
        return json.dumps({
            "period": self.period,
            "tie_order": [c.value for c in self.tie_order],
            "probabilities": {str(k): v.tolist() for k, v in sorted(self.probabilities.items())},
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "FrequencyModel":
        obj = json.loads(text)
        return cls(
            probabilities={int(k): np.asarray(v, dtype=float) for k, v in obj["probabilities"].items()},
            tie_order=tuple(Category(c) for c in obj["tie_order"]),
            period=obj.get("period", "event"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def tie_order_from_frequencies(windows: Iterable[Sequence[Transaction]]) -> tuple[Category, ...]:
    """Categories by descending training frequency; equal counts keep the default order."""
    counts = Counter(parse_category(t.category) for w in windows for t in w)
    return tuple(sorted(DEFAULT_TIE_ORDER, key=lambda c: (-counts[c], DEFAULT_TIE_ORDER.index(c))))


def _week(t: Transaction) -> int:
    # Monday-based week index counted from the proleptic epoch.
    return (t.date.toordinal() - 1) // 7


def frequency_vector(window: Sequence[Transaction], period: str = "event") -> tuple[np.ndarray, int]:
    if not window:
        raise ValueError("cannot fit the baseline on an empty window")
    if period == "event":
        p = np.zeros(N_CLASSES)
        for t in window:
            p[parse_category(t.category).index] += 1.0
        return p / len(window), len(window)
    if period == "week":
        weeks = [_week(t) for t in window]
        first = min(weeks)
        K = max(weeks) - first + 1
        seen = np.zeros((K, N_CLASSES), dtype=bool)
        for w, t in zip(weeks, window):
            seen[w - first, parse_category(t.category).index] = True
        return seen.sum(axis=0) / K, K
    raise ValueError(f"unknown period {period!r}")


def fit(history: Mapping[int, Sequence[Transaction]], period: str = "event",
        tie_order: tuple[Category, ...] | None = None) -> FrequencyModel:
    model = FrequencyModel(tie_order=tie_order or DEFAULT_TIE_ORDER, period=period)
    for cid, window in history.items():
        p, K = frequency_vector(window, period)
        model.probabilities[cid] = p
        model.period_counts[cid] = K
    return model


def argmax_with_ties(p: np.ndarray, tie_order: Sequence[Category]) -> Category:
    total = p.sum()
    if total > 0:
        p = p / total
    best = p.max()
    for c in tie_order:
        if p[c.index] == best:
            return c
    raise AssertionError("tie order must list all categories")


def predict(model: FrequencyModel, customer_id: int) -> Category:
    if customer_id not in model.probabilities:
        raise KeyError(f"customer {customer_id} was not fitted")
    return argmax_with_ties(model.probabilities[customer_id], model.tie_order)


class AveragingBaseline:
    """Protocol adapter: re-fits on every evaluation window, needs no training."""

    name = "Baseline (Averaging)"

    def __init__(self, tie_order: tuple[Category, ...] = DEFAULT_TIE_ORDER, period: str = "event"):
        self.tie_order = tie_order
        self.period = period

    @classmethod
    def trained_on(cls, windows, period: str = "event") -> "AveragingBaseline":
        return cls(tie_order_from_frequencies(w.transactions for w in windows), period)

    def predict_windows(self, windows) -> list[Category]:
        model = fit({w.customer_id: w.transactions for w in windows}, self.period, self.tie_order)
        return [predict(model, w.customer_id) for w in windows]

