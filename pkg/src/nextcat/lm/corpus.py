"""Pre-training items: instruction inputs without labels, plus templated filler.

The filler restates a fact already present in the input (the most recent
category), so the base model learns to carry it to the end of the text
without ever seeing a label.
"""
from __future__ import annotations

from typing import Iterable

from ..data import Dataset
from ..instructions import make_windows, serialize

FILLER_TEMPLATE = "Latest purchases: {recent}."
FILLER_DEPTH = 4


def filler(categories, depth: int = FILLER_DEPTH) -> str:
    """The last ``depth`` categories, most recent first."""
    recent = ", ".join(c.text for c in reversed(categories[-depth:]))
    return FILLER_TEMPLATE.format(recent=recent)


def pretraining_items(dataset: Dataset, lengths: Iterable[int] = (4, 7, 9, 14),
                      with_filler: bool = True) -> list[tuple[str, str]]:
    """(instruction_input, filler) pairs; the label of each window is dropped."""
    items = []
    for k in lengths:
        for w in make_windows(dataset, k)[0]:
            text = serialize(w.profile, w.transactions, w.label).instruction_input
            items.append((text, filler(w.categories) if with_filler else ""))
    return items
