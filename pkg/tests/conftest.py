from __future__ import annotations

from datetime import date
from decimal import Decimal

import pytest

from nextcat import preprocess as pp
from nextcat import synthgen as sg
from nextcat.categories import CATEGORIES
from nextcat.data import Transaction

# Criterion number -> (passed, detail), filled by test_acceptance.py.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


@pytest.fixture(scope="session")
def small_bank_a():
    return sg.generate(sg.default_bank_a(150, seed=3))


@pytest.fixture(scope="session")
def clean_bank_a(small_bank_a):
    return pp.run_pipeline(small_bank_a)[0]


def make_window(cats, customer_id=1, start=date(2015, 1, 1), amount="10.00"):
    """Transactions with the given category indices, one per day."""
    return [Transaction(customer_id, date.fromordinal(start.toordinal() + i), Decimal(amount),
                        CATEGORIES[c].value) for i, c in enumerate(cats)]
