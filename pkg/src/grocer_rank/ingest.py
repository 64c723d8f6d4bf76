"""Transaction log parsing and user-item matrix extraction.

A log is an immutable sequence of purchase events. Two matrices are cut from it:
the item matrix (recent ``tau_days`` window, feeds item similarity) and the user
matrix (each user's most recent orders up to a global quantile cap, feeds user
similarity and the purchase edges of the network).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from functools import cached_property
from typing import IO, Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import ConfigError, DataError

FIELDS = ("order_id", "user_id", "item_id", "quantity", "timestamp", "category")


class MalformedRow(DataError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateOrderUser(DataError):
    def __init__(self, order_id: str, users: tuple[str, str]):
        super().__init__(f"order {order_id!r} carries two user ids: {users[0]!r}, {users[1]!r}")
        self.order_id = order_id


class EmptyWindow(DataError):
    pass


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat()


@dataclass(frozen=True)
class PurchaseEvent:
    order_id: str
    user_id: str
    item_id: str
    quantity: int
    timestamp: datetime
    category: str


@dataclass(frozen=True)
class TransactionLog:
    """Immutable purchase log. Construction validates the order/user invariant."""

    events: tuple[PurchaseEvent, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        owner: dict[str, str] = {}
        for ev in self.events:
            if ev.quantity < 1:
                raise DataError(f"order {ev.order_id!r}: quantity must be >= 1")
            prev = owner.setdefault(ev.order_id, ev.user_id)
            if prev != ev.user_id:
                raise DuplicateOrderUser(ev.order_id, (prev, ev.user_id))

    def __len__(self) -> int:
        return len(self.events)

    @cached_property
    def items(self) -> tuple[str, ...]:
        return tuple(sorted({ev.item_id for ev in self.events}))

    @cached_property
    def users(self) -> tuple[str, ...]:
        return tuple(sorted({ev.user_id for ev in self.events}))

    @property
    def assortment_size(self) -> int:
        return len(self.items)

    @cached_property
    def categories(self) -> dict[str, str]:
        """item_id -> category; the first event seen for an item wins."""
        out: dict[str, str] = {}
        for ev in self.events:
            out.setdefault(ev.item_id, ev.category)
        return out

    @cached_property
    def orders(self) -> dict[str, "Order"]:
        """order_id -> Order, in first-appearance order."""
        grouped: dict[str, list[PurchaseEvent]] = {}
        for ev in self.events:
            grouped.setdefault(ev.order_id, []).append(ev)
        return {
            oid: Order(oid, evs[0].user_id, min(e.timestamp for e in evs), tuple(evs))
            for oid, evs in grouped.items()
        }

    @cached_property
    def orders_by_user(self) -> dict[str, tuple["Order", ...]]:
        """user_id -> orders sorted oldest first (first-event time, then order id)."""
        out: dict[str, list[Order]] = {}
        for order in self.orders.values():
            out.setdefault(order.user_id, []).append(order)
        return {
            u: tuple(sorted(os_, key=lambda o: (o.timestamp, o.order_id)))
            for u, os_ in sorted(out.items())
        }

    @property
    def first_timestamp(self) -> datetime:
        return min(ev.timestamp for ev in self.events)

    @property
    def last_timestamp(self) -> datetime:
        return max(ev.timestamp for ev in self.events)

    def filter(self, keep) -> "TransactionLog":
        return TransactionLog(tuple(ev for ev in self.events if keep(ev)))


@dataclass(frozen=True)
class Order:
    order_id: str
    user_id: str
    timestamp: datetime
    events: tuple[PurchaseEvent, ...]

    @property
    def item_ids(self) -> tuple[str, ...]:
        """Distinct items of the order in first-appearance order."""
        return tuple(dict.fromkeys(ev.item_id for ev in self.events))


# -- parsing / serialization -------------------------------------------------


def _event_from_record(rec: dict, line_no: int) -> PurchaseEvent:
    missing = [f for f in FIELDS if rec.get(f) in (None, "")]
    if missing:
        raise MalformedRow(line_no, f"missing field(s) {', '.join(missing)}")
    try:
        qty = int(str(rec["quantity"]).strip())
    except ValueError:
        raise MalformedRow(line_no, f"quantity {rec['quantity']!r} is not an integer") from None
    if qty < 1:
        raise MalformedRow(line_no, f"quantity {qty} < 1")
    try:
        ts = parse_timestamp(str(rec["timestamp"]))
    except ValueError:
        raise MalformedRow(line_no, f"unparseable timestamp {rec['timestamp']!r}") from None
    return PurchaseEvent(
        order_id=str(rec["order_id"]),
        user_id=str(rec["user_id"]),
        item_id=str(rec["item_id"]),
        quantity=qty,
        timestamp=ts,
        category=str(rec["category"]),
    )


def parse_transaction_log(source: bytes | IO[bytes], format: str = "csv") -> TransactionLog:
    """Parse a CSV or JSONL byte stream into a TransactionLog.

    Every record is validated; the first bad one raises ``MalformedRow`` with its
    1-based line number. Event order is preserved.
    """
    raw = source if isinstance(source, (bytes, bytearray)) else source.read()
    try:
        text = bytes(raw).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"input is not valid UTF-8: {exc}") from None

    events: list[PurchaseEvent] = []
    if format == "csv":
        reader = csv.DictReader(io.StringIO(text, newline=""))
        header = reader.fieldnames or []
        if not set(FIELDS) <= set(header):
            raise MalformedRow(1, f"header must declare {', '.join(FIELDS)}")
        for rec in reader:
            if None in rec:
                raise MalformedRow(reader.line_num, "too many columns")
            events.append(_event_from_record(rec, reader.line_num))
    elif format == "jsonl":
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                raise MalformedRow(line_no, "invalid JSON") from None
            if not isinstance(rec, dict):
                raise MalformedRow(line_no, "record is not an object")
            events.append(_event_from_record(rec, line_no))
    else:
        raise ConfigError(f"unknown log format {format!r}")

    owner: dict[str, str] = {}
    for ev in events:
        prev = owner.setdefault(ev.order_id, ev.user_id)
        if prev != ev.user_id:
            raise DuplicateOrderUser(ev.order_id, (prev, ev.user_id))
    return TransactionLog(tuple(events))


def serialize_transaction_log(log: TransactionLog, format: str = "csv") -> bytes:
    if format == "csv":
        buf = io.StringIO(newline="")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(FIELDS)
        for ev in log.events:
            writer.writerow(
                [ev.order_id, ev.user_id, ev.item_id, ev.quantity, format_timestamp(ev.timestamp), ev.category]
            )
        return buf.getvalue().encode("utf-8")
    if format == "jsonl":
        lines = [
            json.dumps(
                {
                    "order_id": ev.order_id,
                    "user_id": ev.user_id,
                    "item_id": ev.item_id,
                    "quantity": ev.quantity,
                    "timestamp": format_timestamp(ev.timestamp),
                    "category": ev.category,
                }
            )
            for ev in log.events
        ]
        return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")
    raise ConfigError(f"unknown log format {format!r}")


def read_log(path: str) -> TransactionLog:
    fmt = "jsonl" if str(path).endswith((".jsonl", ".ndjson")) else "csv"
    with open(path, "rb") as fh:
        return parse_transaction_log(fh, fmt)


# -- matrices -----------------------------------------------------------------


@dataclass(frozen=True)
class MatrixSpec:
    """Extraction window. ``tau_days=None`` means unbounded.

    ``reference_date=None`` resolves to the calendar date of the latest event.
    """

    tau_days: int | None = None
    sigma_percent: float = 100.0
    reference_date: date | None = None
    value_mode: str = "binary"

    def __post_init__(self):
        if self.tau_days is not None and self.tau_days < 1:
            raise ConfigError(f"tau_days must be >= 1, got {self.tau_days}")
        if not 0 < self.sigma_percent <= 100:
            raise ConfigError(f"sigma_percent must be in (0, 100], got {self.sigma_percent}")
        if self.value_mode not in ("binary", "count"):
            raise ConfigError(f"value_mode must be 'binary' or 'count', got {self.value_mode!r}")


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Sparse user x item matrix; ``values`` is CSR with no stored zeros."""

    users: tuple[str, ...]
    items: tuple[str, ...]
    values: sparse.csr_matrix = field(repr=False)

    def __post_init__(self):
        v = sparse.csr_matrix(self.values, dtype=np.float64)
        v.eliminate_zeros()
        v.sort_indices()
        if v.shape != (len(self.users), len(self.items)):
            raise ValueError(f"values shape {v.shape} does not match id lists")
        object.__setattr__(self, "values", v)

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.users)}

    @cached_property
    def item_index(self) -> dict[str, int]:
        return {it: i for i, it in enumerate(self.items)}

    @property
    def nnz(self) -> int:
        return self.values.nnz

    def entries(self) -> dict[tuple[str, str], float]:
        coo = self.values.tocoo()
        return {(self.users[r], self.items[c]): float(x) for r, c, x in zip(coo.row, coo.col, coo.data)}

    def __eq__(self, other) -> bool:
        if not isinstance(other, InteractionMatrix):
            return NotImplemented
        return (
            self.users == other.users
            and self.items == other.items
            and (self.values != other.values).nnz == 0
        )

    def with_items(self, items: Sequence[str]) -> "InteractionMatrix":
        """Re-index columns onto a superset item list."""
        idx = {it: i for i, it in enumerate(items)}
        try:
            remap = np.array([idx[it] for it in self.items], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"item {exc.args[0]!r} missing from target item list") from None
        coo = self.values.tocoo()
        v = sparse.csr_matrix((coo.data, (coo.row, remap[coo.col])), shape=(len(self.users), len(items)))
        return InteractionMatrix(self.users, tuple(items), v)


def _reference_day(log: TransactionLog, spec: MatrixSpec) -> date:
    if spec.reference_date is not None:
        ref = spec.reference_date
        return ref.date() if isinstance(ref, datetime) else ref
    return log.last_timestamp.date()


def _build_matrix(
    events: Iterable[PurchaseEvent],
    value_mode: str,
    users: Sequence[str] | None = None,
    items: Sequence[str] | None = None,
) -> InteractionMatrix:
    events = list(events)
    users = tuple(sorted({ev.user_id for ev in events})) if users is None else tuple(users)
    items = tuple(sorted({ev.item_id for ev in events})) if items is None else tuple(items)
    uidx = {u: i for i, u in enumerate(users)}
    iidx = {it: i for i, it in enumerate(items)}
    try:
        rows = np.fromiter((uidx[ev.user_id] for ev in events), dtype=np.int64, count=len(events))
        cols = np.fromiter((iidx[ev.item_id] for ev in events), dtype=np.int64, count=len(events))
    except KeyError as exc:
        raise ValueError(f"id {exc.args[0]!r} not in supplied id list") from None
    data = np.ones(len(events))
    # duplicates are summed on conversion: count = number of purchase events
    m = sparse.csr_matrix((data, (rows, cols)), shape=(len(users), len(items)))
    m.sum_duplicates()
    if value_mode == "binary":
        m.data[:] = 1.0
    return InteractionMatrix(users, items, m)


def extract_item_matrix(
    log: TransactionLog, spec: MatrixSpec, items: Sequence[str] | None = None
) -> InteractionMatrix:
    """Matrix over events whose day lies in (reference - tau, reference].

    ``items`` optionally fixes the column id list (must cover the window).
    """
    if not log.events:
        raise EmptyWindow("log is empty")
    ref = _reference_day(log, spec)
    if ref < log.first_timestamp.date():
        raise EmptyWindow(f"reference date {ref} precedes the first event")

    def in_window(ev: PurchaseEvent) -> bool:
        offset = (ev.timestamp.date() - ref).days
        if offset > 0:
            return False
        return spec.tau_days is None or offset > -spec.tau_days

    window = [ev for ev in log.events if in_window(ev)]
    if not window:
        raise EmptyWindow(f"no event within {spec.tau_days} days of {ref}")
    return _build_matrix(window, spec.value_mode, items=items)


def order_quantile_cap(log: TransactionLog, sigma_percent: float) -> int:
    """Nearest-rank ``sigma_percent`` percentile of orders per user, at least 1."""
    if not log.events:
        raise DataError("log is empty")
    if not 0 < sigma_percent <= 100:
        raise ConfigError(f"sigma_percent must be in (0, 100], got {sigma_percent}")
    counts = sorted(len(orders) for orders in log.orders_by_user.values())
    # tolerance keeps e.g. 29% of 100 from ceiling to 30 via float error
    rank = math.ceil(sigma_percent * len(counts) / 100.0 - 1e-9)
    rank = min(max(rank, 1), len(counts))
    return max(counts[rank - 1], 1)


def extract_user_matrix(
    log: TransactionLog, spec: MatrixSpec, items: Sequence[str] | None = None
) -> InteractionMatrix:
    """Matrix over each user's ``q`` most recent orders up to the reference date.

    ``q = order_quantile_cap(log, sigma)`` is global. Every user with at least
    one order keeps at least one.
    """
    if not log.events:
        raise EmptyWindow("log is empty")
    ref = _reference_day(log, spec)
    upto = log.filter(lambda ev: ev.timestamp.date() <= ref)
    if not upto.events:
        raise EmptyWindow(f"no event on or before {ref}")
    q = order_quantile_cap(upto, spec.sigma_percent)
    kept: list[PurchaseEvent] = []
    for orders in upto.orders_by_user.values():
        for order in orders[-q:]:
            kept.extend(order.events)
    return _build_matrix(kept, spec.value_mode, items=items)
