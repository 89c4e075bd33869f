"""Customer windows rendered as instruction-tuning text pairs."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from decimal import ROUND_HALF_UP
from pathlib import Path
from typing import Iterable, Sequence

from .categories import LABEL_SENTENCES, Category, parse_category
from .data import CENT, CustomerProfile, Dataset, Transaction

log = logging.getLogger(__name__)

TASK_INSTRUCTION = (
    "Based on my demographic details and historical transaction data provided below, "
    "predict my next purchase category."
)
OUTPUT_PREFIX = "Task Output:"
NARRATIVE_FIELDS = ("age", "marital_status", "gender", "education", "job", "income_group")


class SerializationError(ValueError):
    pass


@dataclass(frozen=True)
class InstructionSample:
    customer_id: int
    instruction_input: str
    instruction_output: str
    label: Category
    seq_len: int


@dataclass(frozen=True)
class Window:
    """The last ``k`` transactions of a customer plus the category that followed."""

    profile: CustomerProfile
    transactions: tuple[Transaction, ...]
    label: Category

    @property
    def customer_id(self) -> int:
        return self.profile.customer_id

    @property
    def categories(self) -> list[Category]:
        return [parse_category(t.category) for t in self.transactions]


def _money(amount) -> str:
    return "$" + str(amount.quantize(CENT, rounding=ROUND_HALF_UP))


def task_input(profile: CustomerProfile, window: Sequence[Transaction]) -> str:
    missing = [f for f in NARRATIVE_FIELDS if getattr(profile, f) in (None, "")]
    if missing:
        raise SerializationError(f"customer {profile.customer_id}: missing {', '.join(missing)}")
    if not window:
        raise SerializationError(f"customer {profile.customer_id}: empty transaction window")
    # Decimal sums are exact in cents.
    total = sum((t.amount for t in window), start=CENT * 0)
    cats = ", ".join(parse_category(t.category).text for t in window)
    dates = ", ".join(t.date.isoformat() for t in window)
    amounts = ", ".join(_money(t.amount) for t in window)
    return (
        f"I am {profile.customer_id}. "
        f"I am {profile.age} years old, {profile.marital_status} {profile.gender}, "
        f"{profile.education} graduate, and I am working as a {profile.job}. "
        f"In terms of my income state, I belong to the {profile.income_group}-income group. "
        f"Recently, I made {len(window)} transactions. "
        f"In these transactions, I have spent a total of {_money(total)} dollars. "
        f"I bought items from the following categories, chronologically: {cats}. "
        f"I bought from these categories on the following dates, chronologically: {dates}. "
        f"I spent the following money for these items, chronologically: {amounts}."
    )


def serialize(profile: CustomerProfile, window: Sequence[Transaction], label: Category) -> InstructionSample:
    text = f"Task Instruction: {TASK_INSTRUCTION}\nTask Input: {task_input(profile, window)}"
    return InstructionSample(profile.customer_id, text, label.sentence, label, len(window))


def render_table(sample: InstructionSample) -> str:
    """Full instruction / output block, one field per line."""
    return f"{sample.instruction_input}\n{OUTPUT_PREFIX} {sample.instruction_output}\n"


def parse_label(sentence: str) -> Category:
    s = sentence.strip()
    if s.startswith(OUTPUT_PREFIX):
        s = s[len(OUTPUT_PREFIX):].strip()
    if s not in LABEL_SENTENCES:
        raise ValueError(f"not a label sentence: {sentence!r}")
    return Category.from_index(LABEL_SENTENCES.index(s))


def make_windows(dataset: Dataset, seq_len: int) -> tuple[list[Window], int]:
    """Last-``seq_len`` window per customer; returns (windows, skipped_count)."""
    if seq_len < 1:
        raise ValueError("seq_len must be positive")
    windows, skipped = [], 0
    for profile in sorted(dataset.profiles, key=lambda p: p.customer_id):
        txs = dataset.histories[profile.customer_id]
        if len(txs) < seq_len + 1:
            skipped += 1
            continue
        tail = txs[-(seq_len + 1):]
        windows.append(Window(profile, tuple(tail[:-1]), parse_category(tail[-1].category)))
    return windows, skipped


def build_corpus(dataset: Dataset, seq_len: int) -> list[InstructionSample]:
    windows, skipped = make_windows(dataset, seq_len)
    if skipped:
        log.info("%s: skipped %d customers with fewer than %d transactions",
                 dataset.name, skipped, seq_len + 1)
    return [serialize(w.profile, w.transactions, w.label) for w in windows]


def export_jsonl(samples: Iterable[InstructionSample], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(json.dumps({
                "instruction_input": s.instruction_input,
                "instruction_output": s.instruction_output,
                "customer_id": s.customer_id,
                "seq_len": s.seq_len,
            }, ensure_ascii=False) + "\n")
    return path


def import_jsonl(path: str | Path) -> list[InstructionSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append(InstructionSample(
                    customer_id=int(obj["customer_id"]),
                    instruction_input=obj["instruction_input"],
                    instruction_output=obj["instruction_output"],
                    label=parse_label(obj["instruction_output"]),
                    seq_len=int(obj["seq_len"]),
                ))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed corpus line ({exc})") from exc
    return out
