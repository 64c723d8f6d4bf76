"""Decision counts, minimal ranking length and the average rank of correct recommendation (ARC).

ARC of an order is the mean full-assortment rank of the items bought in it; the
run-level ARC is the unweighted mean over orders. Two counting conventions for
shelf walks are exposed: ``comparisons`` (one decision per shelf item per open
list entry, the closed-form best/worst counts) and ``items_viewed`` (one
decision per shelf item looked at).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError


class SizeExceedsAssortment(DataError):
    pass


class EmptyOrder(DataError):
    pass


class NoOrders(DataError):
    pass


class UnreachableList(DataError):
    pass


def decisions_best_case(s: int) -> int:
    """sum_{i=0}^{s} (s - i), i.e. s(s+1)/2."""
    if s < 0:
        raise ValueError("order size must be >= 0")
    return sum(s - i for i in range(s + 1))


def decisions_worst_case(a: int, s: int) -> int:
    if s < 0 or a < 0:
        raise ValueError("sizes must be >= 0")
    if s > a:
        raise SizeExceedsAssortment(f"order size {s} exceeds assortment size {a}")
    return (a - s) * s + decisions_best_case(s)


def minimal_ranking_length(s: int, accuracy: float) -> int:
    """Least integer r with r >= s / accuracy.

    Float accuracies are read through their shortest decimal repr so that
    e.g. 21 / 0.12 is exactly 175, not 175.00000000000003.
    """
    if s < 1:
        raise ValueError("order size must be >= 1")
    acc = accuracy if isinstance(accuracy, Fraction) else Fraction(repr(float(accuracy)))
    if not 0 < acc <= 1:
        raise ValueError(f"accuracy must lie in (0, 1], got {accuracy}")
    return math.ceil(Fraction(s) / acc)


@dataclass(frozen=True)
class OrderOutcome:
    order_id: str
    ranks: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        if len(set(self.ranks)) != len(self.ranks):
            raise ValueError(f"order {self.order_id}: ranks must be distinct")
        if any(r < 1 for r in self.ranks):
            raise ValueError(f"order {self.order_id}: ranks must be positive")

    @property
    def size(self) -> int:
        return len(self.ranks)


def arc_order(outcome: OrderOutcome) -> float:
    if not outcome.ranks:
        raise EmptyOrder(f"order {outcome.order_id} has no items")
    return sum(outcome.ranks) / len(outcome.ranks)


def arc_lower_bound(size: int) -> float:
    if size < 1:
        raise ValueError("order size must be >= 1")
    return (size + 1) / 2


@dataclass(frozen=True)
class ArcReport:
    per_order: tuple[tuple[str, float], ...]
    mean: float
    std: float
    n_orders: int

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.per_order], dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "n_orders": self.n_orders,
            "per_order": [[oid, v] for oid, v in self.per_order],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArcReport":
        return cls(tuple((oid, v) for oid, v in d["per_order"]), d["mean"], d["std"], d["n_orders"])


def arc_aggregate(outcomes: Iterable[OrderOutcome]) -> ArcReport:
    """Unweighted mean of per-order ARC; ``std`` uses ddof=1 (0 for one order)."""
    per_order = tuple((o.order_id, arc_order(o)) for o in outcomes)
    if not per_order:
        raise NoOrders("no orders to aggregate")
    vals = np.array([v for _, v in per_order], dtype=np.float64)
    std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return ArcReport(per_order, float(vals.mean()), std, len(per_order))


def arc_reduction(arc_topk: float, arc_topn: float) -> float:
    """Relative decision reduction of the top-N arm, 1 - ARC_B / ARC_A."""
    return 1.0 - arc_topn / arc_topk


def simulate_shelf_decisions(
    shelf: Sequence[str], shopping_list: Iterable[str], counting: str = "comparisons"
) -> int:
    """Walk the shelf in order until every list item has been found."""
    if counting not in ("comparisons", "items_viewed"):
        raise ValueError(f"unknown counting mode {counting!r}")
    remaining = set(shopping_list)
    absent = remaining.difference(shelf)
    if absent:
        raise UnreachableList(f"items not on the shelf: {sorted(absent)}")
    decisions = 0
    for item in shelf:
        if not remaining:
            break
        decisions += len(remaining) if counting == "comparisons" else 1
        remaining.discard(item)
    return decisions
