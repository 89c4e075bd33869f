from __future__ import annotations

from datetime import date
from decimal import Decimal
from pathlib import Path

import pytest

from nextcat import instructions as ins
from nextcat.categories import Category
from nextcat.data import CustomerProfile, Transaction

GOLDEN = Path(__file__).parent / "golden" / "instruction_example.txt"

ROWS = [
    ("2015-03-28", "39.82", "Grocery"), ("2015-04-01", "47.25", "Grocery"),
    ("2015-04-15", "27.81", "Grocery"), ("2015-05-01", "124.97", "Other"),
    ("2015-05-27", "105.97", "Clothing"), ("2015-06-04", "24.95", "Other"),
    ("2015-06-04", "49.99", "Clothing"), ("2015-06-04", "99.95", "Clothing"),
    ("2015-06-08", "39.90", "Clothing"),
]
PROFILE = CustomerProfile(1695432, 48, "male", "married", "secondary school", "private employee",
                          120_000, income_group="high")


def golden_sample():
    window = [Transaction(1695432, date.fromisoformat(d), Decimal(a), c) for d, a, c in ROWS]
    return ins.serialize(PROFILE, window, Category.GAS_STATIONS)


def test_golden_text_is_byte_exact():
    assert ins.render_table(golden_sample()) == GOLDEN.read_text(encoding="utf-8")


def test_total_is_the_cent_exact_sum():
    assert sum(Decimal(a) for _, a, _ in ROWS) == Decimal("560.61")
    assert "a total of $560.61 dollars" in golden_sample().instruction_input


def test_output_sentence():
    assert golden_sample().instruction_output == "Gas stations."
    assert ins.parse_label("Task Output: Gas stations.") is Category.GAS_STATIONS
    with pytest.raises(ValueError):
        ins.parse_label("Gas Stations")


def test_missing_demographic_is_rejected():
    from dataclasses import replace
    window = [Transaction(1, date(2015, 1, 1), Decimal("1.00"), "Grocery")]
    with pytest.raises(ins.SerializationError, match="job"):
        ins.task_input(replace(PROFILE, job=None), window)
    with pytest.raises(ins.SerializationError):
        ins.task_input(PROFILE, [])


@pytest.mark.parametrize("k", [4, 7, 9, 14])
def test_windows_take_the_last_k_and_count_skips(clean_bank_a, k):
    windows, skipped = ins.make_windows(clean_bank_a, k)
    assert len(windows) + skipped == len(clean_bank_a.profiles)
    for w in windows[:20]:
        history = clean_bank_a.histories[w.customer_id]
        assert list(w.transactions) == history[-(k + 1):-1]
        assert w.label.value == history[-1].category


def test_jsonl_round_trip(tmp_path, clean_bank_a):
    samples = ins.build_corpus(clean_bank_a, 9)
    path = ins.export_jsonl(samples, tmp_path / "c.jsonl")
    assert ins.import_jsonl(path) == samples


def test_malformed_jsonl_reports_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"instruction_input": "x"}\n')
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        ins.import_jsonl(p)
