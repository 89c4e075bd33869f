"""Cleansing, category consolidation and income-group derivation."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

from .categories import KEPT_CATEGORIES, Category
from .data import Dataset

DEFAULT_ORDER = ("complete", "map_other", "min_activity")


@dataclass(frozen=True)
class PreprocessReport:
    users_in: int
    users_removed_incomplete: int
    users_removed_low_activity: int
    users_out: int
    categories_in: int
    transactions_out: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _keep_customers(dataset: Dataset, keep: set[int]) -> Dataset:
    return dataset.with_records(
        (p for p in dataset.profiles if p.customer_id in keep),
        (t for t in dataset.transactions if t.customer_id in keep),
    )


def filter_complete_demographics(dataset: Dataset) -> Dataset:
    keep = {p.customer_id for p in dataset.profiles if not p.missing_fields()}
    return _keep_customers(dataset, keep)


def filter_min_activity(dataset: Dataset, min_tx: int = 10, min_distinct: int = 2) -> Dataset:
    """Keep customers with >= ``min_tx`` transactions in >= ``min_distinct`` categories."""
    if min_tx < 1 or min_distinct < 1:
        raise ValueError("min_tx and min_distinct must be >= 1")
    keep = {
        cid for cid, txs in dataset.histories.items()
        if len(txs) >= min_tx and len({t.category for t in txs}) >= min_distinct
    }
    return _keep_customers(dataset, keep)


def map_to_other(dataset: Dataset, kept: frozenset[str] | set[str] = KEPT_CATEGORIES) -> Dataset:
    if not kept:
        raise ValueError("kept category set must be non-empty")
    other = Category.OTHER.value
    return dataset.with_records(
        dataset.profiles,
        (t if t.category in kept else replace(t, category=other) for t in dataset.transactions),
    )


def derive_income_group(dataset: Dataset) -> Dataset:
    """Assign low/middle/high by empirical income terciles; ties go to the lower group."""
    n = len(dataset.profiles)
    if n == 0:
        return dataset
    incomes = sorted(p.income for p in dataset.profiles)
    if incomes[0] is None or incomes[0] <= 0:
        raise ValueError("every profile needs a positive income to derive income groups")
    low_cut = incomes[math.ceil(n / 3) - 1]
    mid_cut = incomes[math.ceil(2 * n / 3) - 1]

    def group(income: int) -> str:
        if income <= low_cut:
            return "low"
        if income <= mid_cut:
            return "middle"
        return "high"

    return dataset.with_records(
        (replace(p, income_group=group(p.income)) for p in dataset.profiles),
        dataset.transactions,
    )


def run_pipeline(dataset: Dataset, min_tx: int = 10, min_distinct: int = 2,
                 order: tuple[str, ...] = DEFAULT_ORDER) -> tuple[Dataset, PreprocessReport]:
    """Filters in ``order``, then income groups.

    The default order measures distinct categories after the Other mapping.
    """
    if sorted(order) != sorted(DEFAULT_ORDER):
        raise ValueError(f"order must be a permutation of {DEFAULT_ORDER}")
    users_in = len(dataset.profiles)
    categories_in = len({t.category for t in dataset.transactions})
    removed = {"complete": 0, "min_activity": 0}
    out = dataset
    for step in order:
        before = len(out.profiles)
        if step == "complete":
            out = filter_complete_demographics(out)
        elif step == "map_other":
            out = map_to_other(out)
        else:
            out = filter_min_activity(out, min_tx, min_distinct)
        if step in removed:
            removed[step] = before - len(out.profiles)
    out = derive_income_group(out)
    report = PreprocessReport(
        users_in=users_in,
        users_removed_incomplete=removed["complete"],
        users_removed_low_activity=removed["min_activity"],
        users_out=len(out.profiles),
        categories_in=categories_in,
        transactions_out=len(out.transactions),
    )
    return out, report
