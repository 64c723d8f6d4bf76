"""Full-assortment ranking type shared by the personalized models."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

from .errors import DataError


class ColdStartUser(DataError):
    """The user has no purchase history the model can use."""


@dataclass(frozen=True)
class FullRanking:
    """Personalized prefix followed by the fallback order of the remaining items.

    ``scores`` holds one value per prefix item (p-values for the network model,
    purchase counts for the repeat-purchase model) or is empty.
    """

    user_id: str
    items: tuple[str, ...]
    prefix_len: int
    scores: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "scores", tuple(self.scores))
        if not 0 <= self.prefix_len <= len(self.items):
            raise ValueError(f"prefix_len {self.prefix_len} outside [0, {len(self.items)}]")
        if self.scores and len(self.scores) != self.prefix_len:
            raise ValueError("scores must cover exactly the prefix")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def prefix(self) -> tuple[str, ...]:
        return self.items[: self.prefix_len]

    @cached_property
    def rank_of(self) -> dict[str, int]:
        """item_id -> 1-based rank."""
        return {it: r for r, it in enumerate(self.items, start=1)}

    def is_permutation_of(self, assortment: Iterable[str]) -> bool:
        assortment = list(assortment)
        return len(self.items) == len(assortment) and set(self.items) == set(assortment) and len(
            set(self.items)
        ) == len(self.items)


def complete_with_fallback(
    user_id: str, prefix: Sequence[str], fallback: Sequence[str], scores: Sequence[float] = ()
) -> FullRanking:
    chosen = set(prefix)
    missing = chosen.difference(fallback)
    if missing:
        raise DataError(f"prefix items absent from the fallback order: {sorted(missing)[:5]}")
    rest = [it for it in fallback if it not in chosen]
    return FullRanking(user_id, tuple(prefix) + tuple(rest), len(prefix), tuple(scores))


def rankings_to_csv(rankings: Iterable[FullRanking]) -> bytes:
    """``user_id,rank,item_id,score`` rows; score is empty outside the prefix."""
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("user_id", "rank", "item_id", "score"))
    for rk in rankings:
        for pos, item in enumerate(rk.items):
            score = repr(float(rk.scores[pos])) if pos < len(rk.scores) else ""
            w.writerow((rk.user_id, pos + 1, item, score))
    return buf.getvalue().encode("utf-8")


def rankings_from_csv(data: bytes) -> list[FullRanking]:
    grouped: dict[str, list[tuple[int, str, str]]] = {}
    for rec in csv.DictReader(io.StringIO(data.decode("utf-8"), newline="")):
        grouped.setdefault(rec["user_id"], []).append((int(rec["rank"]), rec["item_id"], rec["score"]))
    out = []
    for user, rows in grouped.items():
        rows.sort()
        scores = [float(s) for _, _, s in rows if s != ""]
        prefix_len = sum(1 for _, _, s in rows if s != "")
        out.append(FullRanking(user, tuple(it for _, it, _ in rows), prefix_len, tuple(scores)))
    return out
