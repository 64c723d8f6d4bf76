"""Repeat-purchase top-k benchmark and the cluster popularity fallback order."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from datetime import date, datetime
from typing import Iterable, Sequence

from .errors import ConfigError, DataError
from .ingest import TransactionLog
from .ranking import ColdStartUser, FullRanking, complete_with_fallback


@dataclass(frozen=True)
class EgnnConfig:
    lookback_days: int = 365
    repeat_threshold: int = 2

    def __post_init__(self):
        if self.lookback_days < 1:
            raise ConfigError("lookback_days must be >= 1")
        if self.repeat_threshold < 1:
            raise ConfigError("repeat_threshold must be >= 1")


def popularity_ranking(
    log: TransactionLog, by_cluster: bool = True, assortment: Iterable[str] | None = None
) -> tuple[str, ...]:
    """Items by purchase count (events), optionally grouped by category cluster.

    Clusters are ordered by their total count, items within a cluster by their
    own count; ties fall back to cluster id and item id. Items in ``assortment``
    that never occur in ``log`` are appended in id order.
    """
    if not log.events:
        raise DataError("cannot rank popularity on an empty log")
    counts = Counter(ev.item_id for ev in log.events)
    category = log.categories
    if by_cluster:
        totals: Counter = Counter()
        for item, n in counts.items():
            totals[category[item]] += n
        key = lambda it: (-totals[category[it]], category[it], -counts[it], it)
    else:
        key = lambda it: (-counts[it], it)
    order = sorted(counts, key=key)
    if assortment is not None:
        seen = set(order)
        order += sorted(set(assortment) - seen)
    return tuple(order)


def _as_day(ref) -> date:
    return ref.date() if isinstance(ref, datetime) else ref


def egnn_prefix(
    log: TransactionLog, u: str, cfg: EgnnConfig = EgnnConfig(), reference_date=None
) -> list[tuple[str, int]]:
    """``(item, times bought)`` for items the user bought at least ``repeat_threshold``
    times (distinct orders) within the lookback window, most frequent first, then
    most recent, then item id.
    """
    orders = log.orders_by_user.get(u)
    if not orders:
        raise ColdStartUser(f"user {u!r} not in log")
    ref = _as_day(reference_date) if reference_date is not None else log.last_timestamp.date()
    times: Counter = Counter()
    last_seen: dict[str, datetime] = {}
    for order in orders:
        offset = (order.timestamp.date() - ref).days
        if offset > 0 or offset <= -cfg.lookback_days:
            continue
        for item in order.item_ids:
            times[item] += 1
            if item not in last_seen or order.timestamp > last_seen[item]:
                last_seen[item] = order.timestamp
    qualified = [it for it, n in times.items() if n >= cfg.repeat_threshold]
    qualified.sort(key=lambda it: (-times[it], -last_seen[it].timestamp(), it))
    return [(it, times[it]) for it in qualified]


def egnn_ranking(
    log: TransactionLog,
    u: str,
    cfg: EgnnConfig = EgnnConfig(),
    fallback: Sequence[str] = (),
    reference_date=None,
    max_prefix: int | None = None,
) -> FullRanking:
    """The user's own recent repeat purchases first, the rest in fallback order.

    k (the prefix length) is data-driven and may be 0; ``max_prefix`` optionally
    caps it.
    """
    prefix = egnn_prefix(log, u, cfg, reference_date)
    if max_prefix is not None:
        prefix = prefix[:max_prefix]
    return complete_with_fallback(u, [it for it, _ in prefix], fallback, [float(n) for _, n in prefix])
