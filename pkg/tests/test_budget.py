import threading
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dips.budget import (
    BudgetExhausted,
    PrivacyBudget,
    PrivacyLedger,
    split_budget,
)


def test_budget_requires_positive_epsilon():
    with pytest.raises(ValueError):
        PrivacyBudget(0.0)
    with pytest.raises(ValueError):
        PrivacyBudget(-1.0)


def test_sequential_charges_accumulate():
    ledger = PrivacyLedger(PrivacyBudget(1.0))
    ledger.charge("a", 0.25)
    ledger.charge("b", 0.25)
    assert ledger.effective_spend == pytest.approx(0.5)
    assert ledger.remaining == pytest.approx(0.5)


def test_parallel_group_counts_by_maximum():
    ledger = PrivacyLedger(PrivacyBudget(1.0))
    for i in range(10):
        ledger.charge(f"cell-{i}", 0.3, mode="parallel", group="cells")
    assert ledger.effective_spend == pytest.approx(0.3)


def test_mixed_composition():
    ledger = PrivacyLedger(PrivacyBudget(1.0))
    ledger.charge("seq", 0.4)
    ledger.charge("c1", 0.2, mode="parallel", group="g")
    ledger.charge("c2", 0.35, mode="parallel", group="g")
    assert ledger.effective_spend == pytest.approx(0.75)


def test_overcharge_rejected_and_rolled_back():
    ledger = PrivacyLedger(PrivacyBudget(1.0))
    ledger.charge("a", 0.9)
    with pytest.raises(BudgetExhausted):
        ledger.charge("b", 0.2)
    assert len(ledger.entries) == 1
    assert ledger.effective_spend == pytest.approx(0.9)


def test_exact_fraction_bookkeeping():
    eps = 0.3  # not exactly representable shares when divided by 3 in float
    ledger = PrivacyLedger(PrivacyBudget(eps))
    for i in range(30):
        ledger.charge(f"s{i}", Fraction(eps) / 30)
    assert ledger.effective_spend_exact() == Fraction(eps)


def test_parallel_charge_requires_group():
    ledger = PrivacyLedger(PrivacyBudget(1.0))
    with pytest.raises(ValueError):
        ledger.charge("x", 0.1, mode="parallel")


def test_unknown_mode_rejected():
    ledger = PrivacyLedger(PrivacyBudget(1.0))
    with pytest.raises(ValueError):
        ledger.charge("x", 0.1, mode="adaptive")


def test_delta_s_convention_validated():
    PrivacyLedger(PrivacyBudget(1.0), delta_s_counts=2)
    with pytest.raises(ValueError):
        PrivacyLedger(PrivacyBudget(1.0), delta_s_counts=3)


def test_concurrent_charges_are_atomic():
    ledger = PrivacyLedger(PrivacyBudget(1.0))
    errors = []

    def worker(i):
        try:
            ledger.charge(f"w{i}", Fraction(1, 100))
        except BudgetExhausted as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(100)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert ledger.effective_spend_exact() == Fraction(1)


def test_to_json_audit_record():
    import json

    ledger = PrivacyLedger(PrivacyBudget(2.0))
    ledger.charge("stat", 0.5)
    rec = json.loads(ledger.to_json())
    assert rec["total"] == 2.0
    assert rec["entries"][0]["label"] == "stat"
    assert rec["effective_spend"] == 0.5


@given(
    eps=st.floats(min_value=1e-6, max_value=1e3),
    weights=st.lists(st.floats(min_value=1e-3, max_value=1e3),
                     min_size=1, max_size=12),
)
@settings(max_examples=200)
def test_split_budget_sums_exactly(eps, weights):
    shares = split_budget(eps, weights)
    assert len(shares) == len(weights)
    assert all(s > 0 for s in shares)
    import math

    assert math.fsum(shares) == pytest.approx(eps, rel=0, abs=0)


@given(
    charges=st.lists(st.fractions(min_value=Fraction(1, 1000),
                                  max_value=Fraction(1, 10)),
                     min_size=1, max_size=20),
)
@settings(max_examples=100)
def test_ledger_spend_is_sum_of_sequential_charges(charges):
    ledger = PrivacyLedger(PrivacyBudget(1e9))
    for i, c in enumerate(charges):
        ledger.charge(f"c{i}", c)
    assert ledger.effective_spend_exact() == sum(charges, Fraction(0))
