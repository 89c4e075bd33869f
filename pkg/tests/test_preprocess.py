from __future__ import annotations

from dataclasses import replace

import pytest

from nextcat import preprocess as pp
from nextcat import synthgen as sg
from nextcat.data import export_csv, import_csv


@pytest.fixture(scope="module")
def planted():
    cfg = replace(sg.default_bank_a(300, seed=9), plant_incomplete=12, plant_low_activity=10)
    return sg.generate(cfg)


def test_removes_exactly_the_planted_users(planted):
    clean, report = pp.run_pipeline(planted)
    removed = {p.customer_id for p in planted.profiles} - {p.customer_id for p in clean.profiles}
    assert removed == planted.planted["incomplete"] | planted.planted["low_activity"]
    assert report.users_removed_incomplete == 12
    assert report.users_removed_low_activity == 10
    assert report.users_out == 278


def test_without_planting_nobody_is_removed(small_bank_a):
    clean, report = pp.run_pipeline(small_bank_a)
    assert report.users_out == report.users_in == 150


def test_only_four_categories_remain(clean_bank_a, small_bank_a):
    assert len({t.category for t in small_bank_a.transactions}) > 4
    assert {t.category for t in clean_bank_a.transactions} <= {"Grocery", "Clothing", "GasStations", "Other"}


def test_income_terciles(clean_bank_a):
    groups = [p.income_group for p in clean_bank_a.profiles]
    n = len(groups)
    for g in ("low", "middle", "high"):
        assert abs(groups.count(g) - n / 3) <= 1
    by_group = {g: [p.income for p in clean_bank_a.profiles if p.income_group == g] for g in ("low", "middle", "high")}
    assert max(by_group["low"]) < min(by_group["middle"]) <= max(by_group["middle"]) < min(by_group["high"])


def test_distinct_count_is_measured_after_mapping():
    # A customer buying only two raw "other" categories has one mapped category.
    cfg = replace(sg.default_bank_a(5, seed=0), raw_other_categories=("Books", "Travel"))
    ds = sg.generate(cfg)
    cid = ds.profiles[0].customer_id
    txs = tuple(replace(t, category="Books" if i % 2 else "Travel")
                for i, t in enumerate(ds.histories[cid]))
    ds = ds.with_records(ds.profiles, txs + tuple(t for t in ds.transactions if t.customer_id != cid))
    clean, _ = pp.run_pipeline(ds)
    assert cid not in {p.customer_id for p in clean.profiles}
    reordered, _ = pp.run_pipeline(ds, order=("complete", "min_activity", "map_other"))
    assert cid in {p.customer_id for p in reordered.profiles}


def test_csv_round_trip(tmp_path, small_bank_a):
    export_csv(small_bank_a, tmp_path)
    back = import_csv(tmp_path, name=small_bank_a.name)
    assert back == small_bank_a


def test_invalid_thresholds(small_bank_a):
    with pytest.raises(ValueError):
        pp.filter_min_activity(small_bank_a, min_tx=0)
    with pytest.raises(ValueError):
        pp.run_pipeline(small_bank_a, order=("complete",))
