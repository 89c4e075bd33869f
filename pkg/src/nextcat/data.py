"""Transaction, profile and dataset records plus their CSV form."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from datetime import date
from decimal import Decimal
from functools import cached_property
from pathlib import Path
from typing import Iterable

PROFILE_COLUMNS = ("customer_id", "age", "gender", "marital_status", "education", "job", "income")
TRANSACTION_COLUMNS = ("customer_id", "date", "amount", "category")
DEMOGRAPHIC_FIELDS = PROFILE_COLUMNS[1:]

CENT = Decimal("0.01")


@dataclass(frozen=True)
class Transaction:
    customer_id: int
    date: date
    amount: Decimal
    category: str


@dataclass(frozen=True)
class CustomerProfile:
    customer_id: int
    age: int | None
    gender: str | None
    marital_status: str | None
    education: str | None
    job: str | None
    income: int | None
    income_group: str | None = None

    def missing_fields(self) -> list[str]:
        return [f for f in DEMOGRAPHIC_FIELDS if getattr(self, f) in (None, "")]


@dataclass(frozen=True)
class Dataset:
    """Profiles plus transactions sorted by (customer_id, date, generation order).

    ``planted`` and ``segments`` are generator ground truth; they are not part
    of the CSV form and are ignored by equality.
    """

    name: str
    profiles: tuple[CustomerProfile, ...]
    transactions: tuple[Transaction, ...]
    planted: dict = field(default_factory=dict, compare=False, repr=False)
    segments: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        ids = {p.customer_id for p in self.profiles}
        for t in self.transactions:
            if t.customer_id not in ids:
                raise ValueError(f"transaction for customer {t.customer_id} has no profile")

    @cached_property
    def histories(self) -> dict[int, list[Transaction]]:
        out: dict[int, list[Transaction]] = {p.customer_id: [] for p in self.profiles}
        for t in self.transactions:
            out[t.customer_id].append(t)
        return out

    @cached_property
    def profile_by_id(self) -> dict[int, CustomerProfile]:
        return {p.customer_id: p for p in self.profiles}

    def with_records(self, profiles: Iterable[CustomerProfile],
                     transactions: Iterable[Transaction]) -> "Dataset":
        return replace(self, profiles=tuple(profiles), transactions=tuple(transactions))


def format_amount(amount: Decimal) -> str:
    return str(amount.quantize(CENT))


def _cell(value) -> str:
    return "" if value is None else str(value)


def export_csv(dataset: Dataset, directory: str | Path) -> tuple[Path, Path]:
    """Write ``profiles.csv`` and ``transactions.csv`` under ``directory``.

    Columns are fixed (see PROFILE_COLUMNS / TRANSACTION_COLUMNS); missing
    demographics are empty cells. ``income_group`` is derived data and is not
    written.
    """
    directory = Path(directory)
    prof_path = directory / "profiles.csv"
    tx_path = directory / "transactions.csv"
    try:
        directory.mkdir(parents=True, exist_ok=True)
        with open(prof_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PROFILE_COLUMNS)
            for p in dataset.profiles:
                w.writerow([_cell(getattr(p, c)) for c in PROFILE_COLUMNS])
        with open(tx_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRANSACTION_COLUMNS)
            for t in dataset.transactions:
                w.writerow([t.customer_id, t.date.isoformat(), format_amount(t.amount), t.category])
    except OSError as exc:
        raise OSError(f"cannot write dataset under {directory}: {exc}") from exc
    return prof_path, tx_path


def _opt_int(s: str) -> int | None:
    return int(s) if s != "" else None


def _opt_str(s: str) -> str | None:
    return s if s != "" else None


def import_csv(directory: str | Path, name: str | None = None) -> Dataset:
    directory = Path(directory)
    prof_path = directory / "profiles.csv"
    tx_path = directory / "transactions.csv"
    try:
        with open(prof_path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        with open(tx_path, encoding="utf-8", newline="") as fh:
            tx_rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read dataset under {directory}: {exc}") from exc
    if not rows or tuple(rows[0]) != PROFILE_COLUMNS:
        raise ValueError(f"{prof_path}: header must be {','.join(PROFILE_COLUMNS)}")
    if not tx_rows or tuple(tx_rows[0]) != TRANSACTION_COLUMNS:
        raise ValueError(f"{tx_path}: header must be {','.join(TRANSACTION_COLUMNS)}")
    profiles = [
        CustomerProfile(
            customer_id=int(r[0]), age=_opt_int(r[1]), gender=_opt_str(r[2]),
            marital_status=_opt_str(r[3]), education=_opt_str(r[4]), job=_opt_str(r[5]),
            income=_opt_int(r[6]),
        )
        for r in rows[1:]
    ]
    transactions = [
        Transaction(int(r[0]), date.fromisoformat(r[1]), Decimal(r[2]), r[3])
        for r in tx_rows[1:]
    ]
    return Dataset(name or directory.name, tuple(profiles), tuple(transactions))
