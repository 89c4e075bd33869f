from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from nextcat import synthgen as sg
from nextcat.categories import CATEGORIES, KEPT_CATEGORIES


def _path_enumeration_bayes(config, k):
    """Sum over every length-k category path of the best next-step probability."""
    total = 0.0
    for w, seg, P in zip(sg.segment_weights(config), config.segments, sg.effective_transitions(config)):
        p0 = np.asarray(seg.initial if seg.initial is not None else config.target_marginals)
        for path in itertools.product(range(4), repeat=k):
            prob = p0[path[0]]
            for a, b in zip(path, path[1:]):
                prob *= P[a, b]
            total += w * prob * P[path[-1]].max()
    return total


@pytest.mark.parametrize("k", [1, 3, 5])
def test_bayes_accuracy_matches_path_enumeration(k):
    for cfg in (sg.default_bank_a(10), sg.strong_signal_config(10)):
        assert sg.bayes_accuracy(cfg, k) == pytest.approx(_path_enumeration_bayes(cfg, k), abs=1e-12)


def test_bayes_accuracy_rejects_bad_length():
    with pytest.raises(ValueError):
        sg.bayes_accuracy(sg.default_bank_a(10), 0)


def test_calibrated_matrices_are_stochastic_with_target_stationary_law():
    cfg = sg.default_bank_a(10)
    target = np.asarray(cfg.target_marginals)
    for P in sg.effective_transitions(cfg):
        assert np.allclose(P.sum(axis=1), 1.0)
        assert (P >= 0).all()
        assert np.allclose(target @ P, target, atol=1e-10)


def test_generation_is_deterministic_and_seed_sensitive():
    a = sg.generate(sg.default_bank_a(30, seed=5))
    b = sg.generate(sg.default_bank_a(30, seed=5))
    c = sg.generate(sg.default_bank_a(30, seed=6))
    assert a == b
    assert a != c


def test_transactions_are_chronological_and_inside_window():
    cfg = sg.default_bank_a(40)
    ds = sg.generate(cfg)
    for txs in ds.histories.values():
        dates = [t.date for t in txs]
        assert dates == sorted(dates)
        assert cfg.start <= dates[0] and dates[-1] <= cfg.end
        assert all(t.amount > 0 for t in txs)


def test_empirical_marginals_within_two_points():
    ds = sg.generate(sg.default_bank_a(4000, seed=1))
    assert len(ds.transactions) >= 100_000
    counts = Counter(t.category if t.category in KEPT_CATEGORIES else "Other" for t in ds.transactions)
    n = sum(counts.values())
    for c, target in zip(CATEGORIES, sg.TARGET_MARGINALS):
        assert abs(counts[c.value] / n - target) <= 0.02, c


def test_bank_b_is_a_shifted_copy():
    a = sg.default_bank_a(10)
    b = sg.default_bank_b(a, 20)
    assert b.n_customers == 20 and b.name == "bank_b"
    assert b.start.year < a.start.year
    assert not np.allclose(b.segments[0].transitions, a.segments[0].transitions)
    assert np.allclose(sg.default_bank_b(a, 20, epsilon=0.0).segments[0].transitions, a.segments[0].transitions)


def test_strong_signal_has_dominant_transitions():
    cfg = sg.strong_signal_config(10)
    for P in sg.effective_transitions(cfg):
        assert (P.max(axis=1) >= 0.7).all()


@pytest.mark.parametrize("change, field", [
    ({"n_customers": -1}, "n_customers"),
    ({"target_marginals": (0.5, 0.5, 0.5, 0.5)}, "target_marginals"),
    ({"segments": ()}, "segments"),
    ({"tx_count_range": (0, 5)}, "tx_count_range"),
    ({"plant_incomplete": 11}, "plant_incomplete"),
])
def test_invalid_configs_name_the_field(change, field):
    with pytest.raises(sg.ConfigError) as err:
        sg.generate(replace(sg.default_bank_a(10), **change))
    assert field in str(err.value)


def test_non_stochastic_segment_is_rejected():
    seg = replace(sg.default_bank_a(10).segments[0], transitions=((1.0, 0, 0, 0),) * 3 + ((0.5, 0, 0, 0),))
    with pytest.raises(sg.ConfigError, match="segments\\[0\\]"):
        sg.validate(replace(sg.default_bank_a(10), segments=(seg,)))
