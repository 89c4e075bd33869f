from __future__ import annotations

from collections import Counter
from datetime import date

import numpy as np
import pytest

from nextcat import baseline as bl
from nextcat.categories import CATEGORIES, Category

from conftest import make_window


def count_argmax(cats, tie_order):
    counts = Counter(cats)
    best = max(counts.values())
    return next(c for c in tie_order if counts.get(c.index, 0) == best)


def test_matches_count_and_argmax_on_random_windows():
    rng = np.random.default_rng(0)
    ties = 0
    for i in range(200):
        cats = rng.integers(0, 4, int(rng.integers(1, 15))).tolist()
        order = tuple(CATEGORIES[j] for j in rng.permutation(4))
        model = bl.fit({i: make_window(cats, i)}, tie_order=order)
        assert bl.predict(model, i) is count_argmax(cats, order)
        ties += sorted(Counter(cats).values())[-2:] == [max(Counter(cats).values())] * 2
    assert ties > 20


def test_uniform_window_goes_to_first_in_tie_order():
    window = make_window([0, 1, 2, 3])
    assert bl.predict(bl.fit({1: window}), 1) is Category.GROCERY
    order = (Category.CLOTHING, Category.GROCERY, Category.OTHER, Category.GAS_STATIONS)
    assert bl.predict(bl.fit({1: window}, tie_order=order), 1) is Category.CLOTHING


def test_event_frequencies():
    p, K = bl.frequency_vector(make_window([0, 0, 3, 1]))
    assert K == 4
    assert np.allclose(p, [0.5, 0.25, 0, 0.25])


def test_week_periods_count_empty_weeks():
    # Jan 5 2015 is a Monday: days 0..6 are week one, day 14 is week three.
    w = make_window([0, 0, 2], start=date(2015, 1, 5))
    w[2] = w[2].__class__(1, date(2015, 1, 19), w[2].amount, w[2].category)
    p, K = bl.frequency_vector(w, "week")
    assert K == 3
    assert np.allclose(p, [1 / 3, 0, 1 / 3, 0])


def test_tie_order_from_training_frequencies():
    windows = [make_window([3, 3, 3, 0, 0, 2])]
    assert bl.tie_order_from_frequencies(windows) == (
        Category.OTHER, Category.GROCERY, Category.GAS_STATIONS, Category.CLOTHING)


def test_json_round_trip(tmp_path):
    model = bl.fit({7: make_window([1, 1, 2])}, tie_order=bl.DEFAULT_TIE_ORDER)
    model.save(tmp_path / "b.json")
    back = bl.FrequencyModel.from_json((tmp_path / "b.json").read_text())
    assert back.tie_order == model.tie_order
    assert np.array_equal(back.probabilities[7], model.probabilities[7])


def test_errors():
    with pytest.raises(ValueError):
        bl.frequency_vector([])
    with pytest.raises(KeyError):
        bl.predict(bl.fit({}), 3)
    with pytest.raises(ValueError):
        bl.frequency_vector(make_window([0]), "month")
