"""Seeded synthetic grocery transaction logs.

Users belong to preference segments; each segment favours a few item clusters
and each user perturbs the segment taste with personal staples. Baskets are
drawn without replacement from the user's item weights. With
``preference_concentration=0`` every user buys uniformly at random.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import ConfigError
from .ingest import PurchaseEvent, TransactionLog


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 500
    n_items: int = 2000
    n_clusters: int = 20
    n_segments: int = 8
    orders_per_user: float = 20.0
    basket_mean: float = 21.0
    preference_concentration: float = 0.9
    cluster_affinity: float = 0.3  # Dirichlet concentration of segment cluster tastes
    popularity_skew: float = 0.8  # Zipf exponent of item popularity within a cluster
    staple_shape: float = 0.5  # Gamma shape of per-user item multipliers; smaller = spikier
    span_days: int = 365
    start: str = "2017-01-01"

    def __post_init__(self):
        for name in ("n_users", "n_items", "n_clusters", "n_segments", "span_days"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.orders_per_user < 1 or self.basket_mean < 1:
            raise ConfigError("orders_per_user and basket_mean must be >= 1")
        if not 0 <= self.preference_concentration <= 1:
            raise ConfigError("preference_concentration must lie in [0, 1]")
        if self.cluster_affinity <= 0 or self.staple_shape <= 0 or self.popularity_skew < 0:
            raise ConfigError("cluster_affinity and staple_shape must be > 0, popularity_skew >= 0")
        if self.n_clusters > self.n_items:
            raise ConfigError("n_clusters cannot exceed n_items")

    def to_dict(self) -> dict:
        return asdict(self)


def _ids(prefix: str, n: int) -> list[str]:
    width = len(str(n))
    return [f"{prefix}{k:0{width}d}" for k in range(1, n + 1)]


def generate_synthetic_log(cfg: SynthConfig, seed: int) -> TransactionLog:
    rng = np.random.default_rng(seed)
    item_ids = _ids("i", cfg.n_items)
    user_ids = _ids("u", cfg.n_users)
    cluster_ids = _ids("c", cfg.n_clusters)

    # every cluster gets at least one item
    cluster_of = np.concatenate(
        [np.arange(cfg.n_clusters), rng.integers(0, cfg.n_clusters, cfg.n_items - cfg.n_clusters)]
    )
    rng.shuffle(cluster_of)
    popularity = np.empty(cfg.n_items)
    for c in range(cfg.n_clusters):
        members = np.flatnonzero(cluster_of == c)
        ranks = rng.permutation(members.size) + 1
        popularity[members] = ranks ** (-cfg.popularity_skew)
        popularity[members] /= popularity[members].sum()

    segment_taste = rng.dirichlet(np.full(cfg.n_clusters, cfg.cluster_affinity), size=cfg.n_segments)
    uniform = np.full(cfg.n_items, 1.0 / cfg.n_items)
    start = datetime.fromisoformat(cfg.start).replace(tzinfo=timezone.utc)

    events: list[PurchaseEvent] = []
    order_no = 0
    for u, user in enumerate(user_ids):
        segment = rng.integers(cfg.n_segments)
        weights = segment_taste[segment][cluster_of] * popularity
        weights *= rng.gamma(cfg.staple_shape, 1.0 / cfg.staple_shape, cfg.n_items)
        weights /= weights.sum()
        weights = cfg.preference_concentration * weights + (1 - cfg.preference_concentration) * uniform
        with np.errstate(divide="ignore"):
            log_w = np.log(weights)

        n_orders = 1 + rng.poisson(cfg.orders_per_user - 1)
        days = np.sort(rng.integers(0, cfg.span_days, n_orders))
        seconds = rng.integers(6 * 3600, 22 * 3600, n_orders)
        for day, sec in zip(days, seconds):
            order_no += 1
            size = min(1 + rng.poisson(cfg.basket_mean - 1), cfg.n_items)
            # Gumbel top-k: weighted sampling without replacement
            keys = log_w + rng.gumbel(size=cfg.n_items)
            basket = np.argpartition(-keys, size - 1)[:size]
            basket = basket[np.argsort(-keys[basket])]
            quantities = 1 + rng.poisson(0.4, size)
            ts = start + timedelta(days=int(day), seconds=int(sec))
            oid = f"o{order_no:07d}"
            for item, qty in zip(basket, quantities):
                events.append(
                    PurchaseEvent(oid, user, item_ids[item], int(qty), ts, cluster_ids[cluster_of[item]])
                )

    events.sort(key=lambda ev: (ev.timestamp, ev.order_id))
    return TransactionLog(tuple(events))
