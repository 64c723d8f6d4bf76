"""Offline replay of a two-arm ranking experiment.

Both arms are trained on the log up to the cutoff. Every holdout order of an
eligible (repeat and active) user is scored against that user's full-assortment
ranking, giving one ARC observation per order.
"""

from __future__ import annotations

import hashlib
import json
import statistics
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import date, datetime
from typing import Any

import numpy as np

from .baseline import EgnnConfig, egnn_ranking, popularity_ranking
from .cousin import DEFAULT_N_PREFIX, CousinConfig, fit_network, rank_users
from .errors import ConfigError, DataError
from .ingest import TransactionLog
from .metrics import ArcReport, OrderOutcome, arc_aggregate, arc_order, arc_reduction
from .ranking import ColdStartUser, FullRanking
from .stats import (
    StatsError,
    TestResult,
    chi_squared_independence,
    moods_median_test,
    normality_diagnostic,
    two_sample_t_test,
    welch_t_test,
)

GROUPS = ("A", "B")


class EmptySplit(DataError):
    pass


def assign_group(user_id: str, seed: int) -> str:
    """Deterministic keyed-hash parity split into ``A`` / ``B``."""
    key = int(seed).to_bytes(8, "little", signed=True)
    digest = hashlib.blake2b(str(user_id).encode("utf-8"), digest_size=8, key=key).digest()
    return "A" if digest[-1] % 2 == 0 else "B"


def _as_day(d) -> date:
    if isinstance(d, datetime):
        return d.date()
    if isinstance(d, str):
        return date.fromisoformat(d)
    return d


def temporal_split(log: TransactionLog, cutoff) -> tuple[TransactionLog, TransactionLog]:
    """Events on or before the cutoff day go to train, later ones to holdout."""
    cutoff = _as_day(cutoff)
    train = tuple(ev for ev in log.events if ev.timestamp.date() <= cutoff)
    holdout = tuple(ev for ev in log.events if ev.timestamp.date() > cutoff)
    if not train:
        raise EmptySplit(f"no events on or before {cutoff}")
    if not holdout:
        raise EmptySplit(f"no events after {cutoff}")
    return TransactionLog(train), TransactionLog(holdout)


@dataclass(frozen=True)
class ModelSpec:
    """``kind`` is ``egnn`` (repeat purchases) or ``cousin`` (network regression)."""

    kind: str = "cousin"
    cousin: CousinConfig = CousinConfig()
    egnn: EgnnConfig = EgnnConfig()

    def __post_init__(self):
        if self.kind not in ("egnn", "cousin"):
            raise ConfigError(f"unknown model kind {self.kind!r}")

    @property
    def label(self) -> str:
        return "top-N" if self.kind == "cousin" else "top-k"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "cousin": asdict(self.cousin), "egnn": asdict(self.egnn)}


@dataclass(frozen=True)
class AbConfig:
    seed: int
    cutoff: date
    group_a_model: ModelSpec = ModelSpec("egnn")
    group_b_model: ModelSpec = ModelSpec("cousin")
    n_prefix_a: int | None = None
    n_prefix_b: int | None = DEFAULT_N_PREFIX
    activity_days: int = 365
    by_cluster: bool = True

    def model(self, group: str) -> tuple[ModelSpec, int | None]:
        return (self.group_a_model, self.n_prefix_a) if group == "A" else (self.group_b_model, self.n_prefix_b)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "cutoff": _as_day(self.cutoff).isoformat(),
            "group_a_model": self.group_a_model.to_dict(),
            "group_b_model": self.group_b_model.to_dict(),
            "n_prefix_a": self.n_prefix_a,
            "n_prefix_b": self.n_prefix_b,
            "activity_days": self.activity_days,
            "by_cluster": self.by_cluster,
        }


@dataclass(frozen=True)
class GroupResult:
    ranking: str
    users: int
    converted_users: int
    orders: int
    ranked_users: int
    mean_prefix_len: float
    arc: ArcReport | None
    distinct_items: tuple[int, ...]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arc"] = self.arc.to_dict() if self.arc else None
        d["distinct_items"] = list(self.distinct_items)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GroupResult":
        return cls(
            d["ranking"], d["users"], d["converted_users"], d["orders"], d["ranked_users"],
            d["mean_prefix_len"], ArcReport.from_dict(d["arc"]) if d["arc"] else None,
            tuple(d["distinct_items"]),
        )


@dataclass(frozen=True)
class AbReport:
    config: dict
    assortment_size: int
    groups: dict[str, GroupResult]
    welch: TestResult | None
    arc_median: TestResult | None
    conversion: dict[str, Any]
    basket: dict[str, Any]
    normality: dict[str, Any]
    day_slice: dict[str, Any]
    excluded_cold_start: int
    notes: tuple[str, ...] = field(default=())
    # supplementary: one observation per user (mean ARC of their orders), robust to
    # the correlation between orders of the same user
    welch_by_user: TestResult | None = None

    @property
    def arc_reduction(self) -> float | None:
        a, b = self.groups["A"].arc, self.groups["B"].arc
        if a is None or b is None:
            return None
        return arc_reduction(a.mean, b.mean)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "assortment_size": self.assortment_size,
            "groups": {g: r.to_dict() for g, r in self.groups.items()},
            "welch": self.welch.to_dict() if self.welch else None,
            "arc_median": self.arc_median.to_dict() if self.arc_median else None,
            "conversion": _tests_to_dict(self.conversion),
            "basket": _tests_to_dict(self.basket),
            "normality": self.normality,
            "day_slice": {
                "date": self.day_slice.get("date"),
                "arc": {g: (r.to_dict() if r else None) for g, r in self.day_slice.get("arc", {}).items()},
            },
            "excluded_cold_start": self.excluded_cold_start,
            "notes": list(self.notes),
            "welch_by_user": self.welch_by_user.to_dict() if self.welch_by_user else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AbReport":
        return cls(
            config=d["config"],
            assortment_size=d["assortment_size"],
            groups={g: GroupResult.from_dict(r) for g, r in d["groups"].items()},
            welch=TestResult.from_dict(d["welch"]) if d["welch"] else None,
            arc_median=TestResult.from_dict(d["arc_median"]) if d["arc_median"] else None,
            conversion=_tests_from_dict(d["conversion"]),
            basket=_tests_from_dict(d["basket"]),
            normality=d["normality"],
            day_slice={
                "date": d["day_slice"]["date"],
                "arc": {g: (ArcReport.from_dict(r) if r else None) for g, r in d["day_slice"]["arc"].items()},
            },
            excluded_cold_start=d["excluded_cold_start"],
            notes=tuple(d["notes"]),
            welch_by_user=TestResult.from_dict(d["welch_by_user"]) if d.get("welch_by_user") else None,
        )


def _tests_to_dict(d: dict) -> dict:
    return {k: (v.to_dict() if isinstance(v, TestResult) else v) for k, v in d.items()}


def _tests_from_dict(d: dict) -> dict:
    return {k: (TestResult.from_dict(v) if isinstance(v, dict) and "p_value" in v else v) for k, v in d.items()}


def conversion_lift(users_a: int, orders_a: int, users_b: int, orders_b: int) -> float:
    """(orders_B / users_B) / (orders_A / users_A) - 1."""
    return (orders_b / users_b) / (orders_a / users_a) - 1.0


def eligible_users(train: TransactionLog, cutoff, activity_days: int = 365) -> list[str]:
    """Users with at least one train order in the ``activity_days`` before the cutoff."""
    cutoff = _as_day(cutoff)
    out = []
    for user, orders in train.orders_by_user.items():
        last = orders[-1].timestamp.date()
        if 0 <= (cutoff - last).days < activity_days:
            out.append(user)
    return out


def _rank_group(
    train: TransactionLog,
    users: list[str],
    spec: ModelSpec,
    n_prefix: int | None,
    fallback: tuple[str, ...],
    assortment: tuple[str, ...],
    cutoff: date,
    cache: dict,
) -> tuple[dict[str, FullRanking], int]:
    rankings: dict[str, FullRanking] = {}
    excluded = 0
    if spec.kind == "egnn":
        for u in users:
            try:
                rankings[u] = egnn_ranking(train, u, spec.egnn, fallback, cutoff, n_prefix)
            except ColdStartUser:
                excluded += 1
        return rankings, excluded
    key = ("cousin", spec.cousin)
    if key not in cache:
        cache[key] = fit_network(train, spec.cousin, cutoff, assortment)
    net = cache[key]
    known = net.purchases.user_index
    degree = np.diff(net.purchases.values.indptr)
    warm = [u for u in users if u in known and degree[known[u]] > 0]
    excluded = len(users) - len(warm)
    n = DEFAULT_N_PREFIX if n_prefix is None else n_prefix
    for rk in rank_users(net, warm, n, fallback, spec.cousin.leave_one_out):
        rankings[rk.user_id] = rk
    return rankings, excluded


def _per_user_arc(outcomes: list[OrderOutcome], order_user: dict[str, str]) -> list[float]:
    """Mean order ARC per user, users in id order."""
    by_user: dict[str, list[float]] = {}
    for o in outcomes:
        by_user.setdefault(order_user[o.order_id], []).append(arc_order(o))
    return [float(np.mean(by_user[u])) for u in sorted(by_user)]


def _safe(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StatsError:
        return None


def replay_ab_test(train: TransactionLog, holdout: TransactionLog, cfg: AbConfig) -> AbReport:
    cutoff = _as_day(cfg.cutoff)
    assortment = tuple(sorted(set(train.items) | set(holdout.items)))
    fallback = popularity_ranking(train, cfg.by_cluster, assortment)

    eligible = eligible_users(train, cutoff, cfg.activity_days)
    members: dict[str, list[str]] = {g: [] for g in GROUPS}
    for u in eligible:
        members[assign_group(u, cfg.seed)].append(u)
    eligible_set = set(eligible)

    holdout_orders = sorted(
        (o for o in holdout.orders.values() if o.user_id in eligible_set), key=lambda o: o.order_id
    )
    buyers = {o.user_id for o in holdout_orders}

    cache: dict = {}
    rankings: dict[str, dict[str, FullRanking]] = {}
    excluded = 0
    for g in GROUPS:
        spec, n_prefix = cfg.model(g)
        to_rank = [u for u in members[g] if u in buyers]
        rankings[g], n_excl = _rank_group(train, to_rank, spec, n_prefix, fallback, assortment, cutoff, cache)
        excluded += n_excl

    outcomes: dict[str, list[OrderOutcome]] = {g: [] for g in GROUPS}
    order_day: dict[str, date] = {}
    order_user: dict[str, str] = {}
    basket_sizes: dict[str, list[int]] = {g: [] for g in GROUPS}
    group_of = {u: g for g in GROUPS for u in members[g]}
    for order in holdout_orders:
        g = group_of[order.user_id]
        rk = rankings[g].get(order.user_id)
        if rk is None:
            continue
        items = order.item_ids
        basket_sizes[g].append(len(items))
        outcomes[g].append(OrderOutcome(order.order_id, tuple(rk.rank_of[it] for it in items)))
        order_day[order.order_id] = order.timestamp.date()
        order_user[order.order_id] = order.user_id

    arcs = {g: (arc_aggregate(outcomes[g]) if outcomes[g] else None) for g in GROUPS}

    groups = {}
    for g in GROUPS:
        spec, _ = cfg.model(g)
        prefix_lens = [rk.prefix_len for rk in rankings[g].values()]
        converted = len({o.user_id for o in holdout_orders if group_of[o.user_id] == g})
        groups[g] = GroupResult(
            ranking=spec.label,
            users=len(members[g]),
            converted_users=converted,
            orders=len(outcomes[g]),
            ranked_users=len(rankings[g]),
            mean_prefix_len=float(np.mean(prefix_lens)) if prefix_lens else 0.0,
            arc=arcs[g],
            distinct_items=tuple(basket_sizes[g]),
        )

    welch = arc_median = None
    if arcs["A"] and arcs["B"] and arcs["A"].n_orders >= 2 and arcs["B"].n_orders >= 2:
        welch = _safe(welch_t_test, arcs["A"].values, arcs["B"].values, "greater")
    per_user = {g: _per_user_arc(outcomes[g], order_user) for g in GROUPS}
    welch_by_user = None
    if len(per_user["A"]) >= 2 and len(per_user["B"]) >= 2:
        welch_by_user = _safe(welch_t_test, per_user["A"], per_user["B"], "greater")
        arc_median = _safe(moods_median_test, arcs["A"].values, arcs["B"].values)

    ga, gb = groups["A"], groups["B"]
    conversion: dict[str, Any] = {
        "orders_per_user": {g: (groups[g].orders / groups[g].users if groups[g].users else None) for g in GROUPS},
        "table": [[ga.converted_users, ga.users - ga.converted_users], [gb.converted_users, gb.users - gb.converted_users]],
        "lift": conversion_lift(ga.users, ga.orders, gb.users, gb.orders) if ga.users and gb.users and ga.orders else None,
        "chi_squared": _safe(chi_squared_independence, [[ga.converted_users, ga.users - ga.converted_users],
                                                        [gb.converted_users, gb.users - gb.converted_users]]),
    }
    basket: dict[str, Any] = {
        "mean": {g: (float(np.mean(groups[g].distinct_items)) if groups[g].distinct_items else None) for g in GROUPS},
        "median": {g: (float(np.median(groups[g].distinct_items)) if groups[g].distinct_items else None) for g in GROUPS},
        "std": {g: (float(np.std(groups[g].distinct_items, ddof=1)) if len(groups[g].distinct_items) > 1 else None) for g in GROUPS},
        "t_test": _safe(two_sample_t_test, ga.distinct_items, gb.distinct_items)
        if len(ga.distinct_items) >= 2 and len(gb.distinct_items) >= 2 else None,
    }
    normality = {g: (_safe(normality_diagnostic, arcs[g].values) if arcs[g] else None) for g in GROUPS}

    day_slice: dict[str, Any] = {"date": None, "arc": {}}
    if order_day:
        busiest = sorted(Counter(order_day.values()).items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
        day_slice["date"] = busiest.isoformat()
        for g in GROUPS:
            sel = [o for o in outcomes[g] if order_day[o.order_id] == busiest]
            day_slice["arc"][g] = arc_aggregate(sel) if sel else None

    return AbReport(
        config=cfg.to_dict(),
        assortment_size=len(assortment),
        groups=groups,
        welch=welch,
        welch_by_user=welch_by_user,
        arc_median=arc_median,
        conversion=conversion,
        basket=basket,
        normality=normality,
        day_slice=day_slice,
        excluded_cold_start=excluded,
        notes=(
            "Search time between add-to-basket actions and revenue need live telemetry; not replayable offline.",
        ),
    )


# -- rendering ---------------------------------------------------------------------


def _fmt(x, spec: str = ".1f") -> str:
    if x is None:
        return "n/a"
    return format(x, spec)


def _fmt_p(r: TestResult | None) -> str:
    if r is None:
        return "n/a"
    return f"{r.p_value:.4g}"


def render_report(report: AbReport, format: str = "json") -> str:
    if format == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if format not in ("markdown", "md"):
        raise ConfigError(f"unknown report format {format!r}")

    lines = ["## Information overload (ARC)", ""]
    lines.append("| Group | Ranking | Users | Orders | ARC (mean) | ARC (std) | Mean prefix length |")
    lines.append("|---|---|---|---|---|---|---|")
    for g in GROUPS:
        r = report.groups[g]
        lines.append(
            f"| {g} | {r.ranking} | {r.users} | {r.orders} | {_fmt(r.arc.mean if r.arc else None)} | "
            f"{_fmt(r.arc.std if r.arc else None)} | {_fmt(r.mean_prefix_len)} |"
        )
    w = report.welch
    lines.append(
        f"| p-value | Welch one-sided (ARC_A > ARC_B) | | | {_fmt_p(w)} | t = {_fmt(w.statistic if w else None, '.3f')} | "
        f"df = {_fmt(w.df if w else None, '.1f')} |"
    )
    red = report.arc_reduction
    lines += ["", f"ARC reduction of group B: {_fmt(red * 100 if red is not None else None)}%"]
    wu = report.welch_by_user
    if wu is not None:
        lines.append(f"Welch one-sided on per-user mean ARC: t = {wu.statistic:.3f}, p = {_fmt_p(wu)}")
    lines.append("")

    ds = report.day_slice
    if ds.get("date"):
        lines.append(f"Single-day slice {ds['date']}: " + ", ".join(
            f"{g} ARC = {_fmt(a.mean if a else None)} (n = {a.n_orders if a else 0})" for g, a in ds["arc"].items()
        ))
        lines.append("")

    lines += ["## Users and company", ""]
    lines.append("| Group | Ranking | Users | Orders | Orders per user | Distinct items (mean) | Distinct items (median) | Distinct items (std) |")
    lines.append("|---|---|---|---|---|---|---|---|")
    conv, bask = report.conversion, report.basket
    for g in GROUPS:
        r = report.groups[g]
        lines.append(
            f"| {g} | {r.ranking} | {r.users} | {r.orders} | {_fmt(conv['orders_per_user'][g], '.4f')} | "
            f"{_fmt(bask['mean'][g], '.2f')} | {_fmt(bask['median'][g], '.1f')} | {_fmt(bask['std'][g], '.2f')} |"
        )
    lines.append(
        f"| p-value | | Chi-squared independence: {_fmt_p(conv['chi_squared'])} | | "
        f"Mood's median (ARC): {_fmt_p(report.arc_median)} | Two-sample t-test: {_fmt_p(bask['t_test'])} | | |"
    )
    lift = conv.get("lift")
    lines += ["", f"Conversion lift of group B: {_fmt(lift * 100 if lift is not None else None, '.1f')}%"]
    if report.excluded_cold_start:
        lines.append(f"Excluded cold-start users: {report.excluded_cold_start}")
    lines.append("")
    lines += [f"Note: {n}" for n in report.notes]
    return "\n".join(lines) + "\n"
