"""Privacy-budget arithmetic under sequential and parallel composition.

A ledger tracks every epsilon expenditure against a fixed total.  Charges
are stored internally as exact rationals so that e.g. thirty charges of
eps/30 sum back to eps with no floating-point drift; exhaustion checks use
a small relative tolerance on top of the exact arithmetic.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

__all__ = [
    "BudgetExhausted",
    "PrivacyBudget",
    "LedgerEntry",
    "PrivacyLedger",
    "split_budget",
]

#: relative tolerance used when checking budget exhaustion
EXHAUSTION_RTOL = 1e-12

EpsLike = Union[float, int, Fraction]


class BudgetExhausted(RuntimeError):
    """Raised when a charge would push the effective spend over the total."""


def _as_fraction(eps: EpsLike) -> Fraction:
    frac = Fraction(eps)
    if frac <= 0:
        raise ValueError(f"epsilon must be positive, got {eps}")
    return frac


@dataclass(frozen=True)
class PrivacyBudget:
    """A positive privacy-loss allowance."""

    epsilon: float

    def __post_init__(self):
        if not (self.epsilon > 0) or math.isnan(self.epsilon):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class LedgerEntry:
    label: str
    eps: Fraction
    mode: str  # "sequential" or "parallel"
    group: str | None = None


@dataclass
class PrivacyLedger:
    """Append-only record of privacy expenditures against a total budget.

    Sequential entries accumulate; entries in the same parallel group count
    only through the group's maximum.  Mutation is guarded by a lock so a
    harness may charge from several workers (compare-and-charge semantics:
    the check and the append happen atomically).

    ``delta_s_counts`` records the neighboring-dataset convention for count
    statistics: 1 for removal of one observation (the default), 2 for the
    one-row-change alternative.
    """

    total: PrivacyBudget
    delta_s_counts: int = 1
    entries: list[LedgerEntry] = field(default_factory=list)
    _lock: threading.Lock = field(
        default_factory=threading.Lock, repr=False, compare=False
    )

    def __post_init__(self):
        if self.delta_s_counts not in (1, 2):
            raise ValueError("delta_s_counts must be 1 or 2")

    # -- accounting ---------------------------------------------------------

    def effective_spend_exact(self) -> Fraction:
        """Exact effective spend: sequential sum plus per-group maxima."""
        seq = Fraction(0)
        groups: dict[str, Fraction] = {}
        for entry in self.entries:
            if entry.mode == "sequential":
                seq += entry.eps
            else:
                prev = groups.get(entry.group, Fraction(0))
                groups[entry.group] = max(prev, entry.eps)
        return seq + sum(groups.values(), Fraction(0))

    @property
    def effective_spend(self) -> float:
        return float(self.effective_spend_exact())

    @property
    def remaining(self) -> float:
        return float(Fraction(self.total.epsilon) - self.effective_spend_exact())

    def charge(self, label: str, eps: EpsLike, mode: str = "sequential",
               group: str | None = None) -> "PrivacyLedger":
        """Append an expenditure, raising BudgetExhausted if it cannot fit."""
        eps_frac = _as_fraction(eps)
        if mode not in ("sequential", "parallel"):
            raise ValueError(f"unknown composition mode {mode!r}")
        if mode == "parallel" and group is None:
            raise ValueError("parallel charges need a group id")
        with self._lock:
            candidate = LedgerEntry(label, eps_frac, mode, group)
            self.entries.append(candidate)
            spend = self.effective_spend_exact()
            limit = Fraction(self.total.epsilon)
            if spend > limit * (1 + Fraction(EXHAUSTION_RTOL).limit_denominator(10**15)):
                self.entries.pop()
                raise BudgetExhausted(
                    f"charge {label!r} of {float(eps_frac)} would raise effective "
                    f"spend to {float(spend)} > total {self.total.epsilon}"
                )
        assert self.effective_spend_exact() <= limit * (1 + Fraction(1, 10**12))
        return self

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({
            "total": self.total.epsilon,
            "entries": [
                {"label": e.label, "eps": float(e.eps), "mode": e.mode,
                 "group": e.group}
                for e in self.entries
            ],
            "effective_spend": self.effective_spend,
        })


def split_budget(eps: float, weights: list[float]) -> list[float]:
    """Split ``eps`` proportionally to ``weights``; shares sum to eps exactly.

    The last share absorbs the compensated-summation residual so that the
    float shares add back to ``eps``.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not weights:
        raise ValueError("weights must be non-empty")
    if any(w <= 0 for w in weights):
        raise ValueError("weights must all be positive")
    total_w = math.fsum(weights)
    shares = [eps * w / total_w for w in weights[:-1]]
    shares.append(eps - math.fsum(shares))
    # the subtraction can leave the fsum an ulp or two off eps; polish one
    # share at a time (smallest first, its ulp is finest) until exact
    order = sorted(range(len(shares)), key=lambda i: abs(shares[i]))
    for j in order:
        if _polish_share(eps, shares, j):
            break
    if math.fsum(shares) != eps:
        raise ValueError("could not make shares sum exactly to eps")
    if any(s <= 0 for s in shares):
        raise ValueError("degenerate split: non-positive share")
    return shares


def _polish_share(eps: float, shares: list[float], j: int) -> bool:
    """Adjust ``shares[j]`` in place so ``fsum(shares)`` equals ``eps``.

    Returns True on success.  Bisects over float values of the share, since
    stepping by the raw gap can overshoot and oscillate around eps.
    """

    def gap_at(v: float) -> float:
        shares[j] = v
        return eps - math.fsum(shares)

    lo = shares[j]
    g_lo = gap_at(lo)
    if g_lo == 0.0:
        return True
    # walk outward until the gap changes sign, then bisect
    step = g_lo
    hi = lo + step
    for _ in range(60):
        if hi == lo:
            hi = math.nextafter(lo, math.copysign(math.inf, g_lo))
        g_hi = gap_at(hi)
        if g_hi == 0.0:
            return True
        if (g_hi > 0) != (g_lo > 0):
            break
        lo, step = hi, step * 2
        hi = lo + step
    else:
        shares[j] = lo
        return False
    while True:
        mid = lo + (hi - lo) / 2
        if mid == lo or mid == hi:
            shares[j] = lo
            return False
        g = gap_at(mid)
        if g == 0.0:
            return True
        if (g > 0) == (g_lo > 0):
            lo = mid
        else:
            hi = mid
