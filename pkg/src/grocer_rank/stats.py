"""Hypothesis tests for comparing ranking arms, plus a normality diagnostic.

Tests take raw samples or :class:`SampleSummary` rows so that published
``(n, mean, sd)`` summaries can be re-analyzed directly. No continuity
correction is applied anywhere.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .special import chi2_sf, t_sf

ALTERNATIVES = ("two_sided", "greater", "less")


class StatsError(DataError):
    pass


class DegenerateVariance(StatsError):
    pass


class DegenerateMargin(StatsError):
    pass


class TooFewSamples(StatsError):
    pass


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    sd: float

    @classmethod
    def of(cls, samples: Sequence[float]) -> "SampleSummary":
        x = np.asarray(samples, dtype=np.float64)
        if x.size < 2:
            raise TooFewSamples(f"need at least 2 samples, got {x.size}")
        return cls(int(x.size), float(x.mean()), float(x.std(ddof=1)))


@dataclass(frozen=True)
class TestResult:
    test: str
    statistic: float
    df: float | tuple[float, ...]
    p_value: float
    alternative: str = "two_sided"

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(self.df, tuple):
            d["df"] = list(self.df)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TestResult":
        df = d["df"]
        return cls(d["test"], d["statistic"], tuple(df) if isinstance(df, list) else df, d["p_value"], d["alternative"])


def _summary(x) -> SampleSummary:
    return x if isinstance(x, SampleSummary) else SampleSummary.of(x)


def _t_p_value(t: float, df: float, alternative: str) -> float:
    if alternative not in ALTERNATIVES:
        raise ConfigError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")
    greater = t_sf(t, df)
    less = t_sf(-t, df)
    if alternative == "greater":
        return greater
    if alternative == "less":
        return less
    return min(1.0, 2.0 * min(greater, less))


def welch_t_test(a, b, alternative: str = "two_sided") -> TestResult:
    """Unequal-variance t-test; ``greater`` tests mean(a) > mean(b)."""
    sa, sb = _summary(a), _summary(b)
    if sa.n < 2 or sb.n < 2:
        raise TooFewSamples("Welch test needs n >= 2 in each group")
    va, vb = sa.sd**2 / sa.n, sb.sd**2 / sb.n
    se2 = va + vb
    diff = sa.mean - sb.mean
    if se2 == 0:
        if diff == 0:
            raise DegenerateVariance("both groups are constant and equal")
        t = math.copysign(math.inf, diff)
        df = float(sa.n + sb.n - 2)
    else:
        t = diff / math.sqrt(se2)
        df = se2**2 / (va**2 / (sa.n - 1) + vb**2 / (sb.n - 1))
    return TestResult("welch_t", t, df, _t_p_value(t, df, alternative), alternative)


def two_sample_t_test(a, b, alternative: str = "two_sided") -> TestResult:
    """Student's pooled-variance t-test with n_a + n_b - 2 degrees of freedom."""
    sa, sb = _summary(a), _summary(b)
    if sa.n < 2 or sb.n < 2:
        raise TooFewSamples("t-test needs n >= 2 in each group")
    df = sa.n + sb.n - 2
    pooled = ((sa.n - 1) * sa.sd**2 + (sb.n - 1) * sb.sd**2) / df
    se2 = pooled * (1.0 / sa.n + 1.0 / sb.n)
    diff = sa.mean - sb.mean
    if se2 == 0:
        if diff == 0:
            raise DegenerateVariance("both groups are constant and equal")
        t = math.copysign(math.inf, diff)
    else:
        t = diff / math.sqrt(se2)
    return TestResult("student_t", t, float(df), _t_p_value(t, float(df), alternative), alternative)


def chi_squared_independence(table) -> TestResult:
    """Pearson chi-squared on a 2x2 table, df = 1."""
    obs = np.asarray(table, dtype=np.float64)
    if obs.shape != (2, 2):
        raise ValueError(f"expected a 2x2 table, got shape {obs.shape}")
    if np.any(obs < 0):
        raise ValueError("counts must be nonnegative")
    rows, cols, total = obs.sum(axis=1), obs.sum(axis=0), obs.sum()
    if np.any(rows == 0) or np.any(cols == 0):
        raise DegenerateMargin("every row and column margin must be positive")
    expected = np.outer(rows, cols) / total
    stat = float(((obs - expected) ** 2 / expected).sum())
    return TestResult("chi_squared", stat, 1.0, chi2_sf(stat, 1.0), "two_sided")


def median_table(a: Sequence[float], b: Sequence[float]) -> np.ndarray:
    """Counts of values strictly above / not above the pooled median, per group."""
    xa, xb = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    med = np.median(np.concatenate([xa, xb]))
    return np.array(
        [[np.sum(xa > med), np.sum(xa <= med)], [np.sum(xb > med), np.sum(xb <= med)]], dtype=np.float64
    )


def moods_median_test(a: Sequence[float], b: Sequence[float]) -> TestResult:
    if len(a) + len(b) < 4:
        raise TooFewSamples("Mood's median test needs at least 4 pooled values")
    result = chi_squared_independence(median_table(a, b))
    return TestResult("moods_median", result.statistic, result.df, result.p_value, "two_sided")


def normality_diagnostic(samples: Sequence[float]) -> dict:
    """Freedman-Diaconis histogram plus moment skewness and excess kurtosis.

    Informational only; no test decision is made.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 8:
        raise TooFewSamples(f"need at least 8 samples, got {x.size}")
    dev = x - x.mean()
    m2 = float(np.mean(dev**2))
    if m2 == 0:
        raise DegenerateVariance("sample has zero variance")
    m3, m4 = float(np.mean(dev**3)), float(np.mean(dev**4))
    counts, edges = np.histogram(x, bins="fd")
    return {
        "n": int(x.size),
        "bin_edges": [float(e) for e in edges],
        "counts": [int(c) for c in counts],
        "skewness": m3 / m2**1.5,
        "excess_kurtosis": m4 / m2**2 - 3.0,
    }
