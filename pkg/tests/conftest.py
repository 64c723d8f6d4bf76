from datetime import datetime, timedelta, timezone

import pytest

from grocer_rank.ingest import PurchaseEvent, TransactionLog

T0 = datetime(2017, 8, 30, 12, 0, tzinfo=timezone.utc)


def ev(order, user, item, day=0, qty=1, category="c1", hour=0):
    """Event ``day`` days after 2017-08-30 noon."""
    return PurchaseEvent(order, user, item, qty, T0 + timedelta(days=day, hours=hour), category)


def make_log(rows):
    return TransactionLog(tuple(ev(*r) if isinstance(r, tuple) else ev(**r) for r in rows))


@pytest.fixture
def small_log():
    # u1: 3 orders, u2: 2 orders, u3: 1 order
    return make_log(
        [
            ("o1", "u1", "A", -20, 1, "dairy"),
            ("o1", "u1", "B", -20, 2, "dairy"),
            ("o2", "u1", "A", -10, 1, "dairy"),
            ("o2", "u1", "C", -10, 1, "bakery"),
            ("o3", "u1", "A", 0, 1, "dairy"),
            ("o4", "u2", "B", -9, 1, "dairy"),
            ("o4", "u2", "C", -9, 1, "bakery"),
            ("o5", "u2", "D", -1, 3, "bakery"),
            ("o6", "u3", "A", -3, 1, "dairy"),
        ]
    )


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, ok, detail)``; fails the test when not ok."""
    lines = request.config.stash.setdefault(_CRITERIA, {})

    def record(number: int, ok: bool, detail: str) -> None:
        lines[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        assert ok, lines[number]

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
