"""Regularized incomplete beta/gamma functions and the tail probabilities built on them.

The beta routines are vectorized over numpy arrays because the network model
evaluates one F-test per (user, item) pair. ``log_reg_incomplete_beta`` keeps
resolution for tail probabilities far below the float64 underflow limit.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .errors import DataError

_EPS = 1e-15
_FPMIN = 1e-300
_MAXIT = 20000


class DomainError(DataError):
    pass


def _betacf(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Modified Lentz evaluation of the incomplete beta continued fraction.

    Works on 1-d arrays; converged elements are dropped from the working set.
    """
    out = np.empty_like(x)
    idx = np.arange(x.size)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d[np.abs(d) < _FPMIN] = _FPMIN
    d = 1.0 / d
    h = d.copy()
    for m in range(1, _MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d[np.abs(d) < _FPMIN] = _FPMIN
        c = 1.0 + aa / c
        c[np.abs(c) < _FPMIN] = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d[np.abs(d) < _FPMIN] = _FPMIN
        c = 1.0 + aa / c
        c[np.abs(c) < _FPMIN] = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        done = np.abs(delta - 1.0) < _EPS
        if done.any():
            out[idx[done]] = h[done]
            keep = ~done
            if not keep.any():
                return out
            idx, a, b, x, qab, qap, qam, c, d, h = (
                arr[keep] for arr in (idx, a, b, x, qab, qap, qam, c, d, h)
            )
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def _beta_parts(a, b, x):
    a, b, x = np.broadcast_arrays(
        np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64), np.asarray(x, dtype=np.float64)
    )
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise DomainError("incomplete beta requires a > 0 and b > 0")
    if np.any(~((x >= 0) & (x <= 1))):
        raise DomainError("incomplete beta requires 0 <= x <= 1")
    interior = (x > 0) & (x < 1)
    flip = x > (a + 1.0) / (a + b + 2.0)
    aa = np.where(flip, b, a)
    bb = np.where(flip, a, b)
    xx = np.where(flip, 1.0 - x, x)
    # direct-branch value I_xx(aa, bb) and its log, for interior points only
    log_direct = np.full(x.shape, -np.inf)
    if interior.any():
        ai, bi, xi = aa[interior], bb[interior], xx[interior]
        cf = _betacf(ai, bi, xi)
        log_front = ai * np.log(xi) + bi * np.log1p(-xi) - (gammaln(ai) + gammaln(bi) - gammaln(ai + bi))
        log_direct[interior] = log_front + np.log(cf) - np.log(ai)
    return x, flip, interior, log_direct


def reg_incomplete_beta(a, b, x):
    """I_x(a, b). Scalars in, float out; arrays in, array out."""
    scalar = np.ndim(a) == 0 and np.ndim(b) == 0 and np.ndim(x) == 0
    x, flip, interior, log_direct = _beta_parts(a, b, x)
    direct = np.exp(log_direct)
    out = np.where(flip, 1.0 - direct, direct)
    out = np.where(interior, out, np.where(x >= 1, 1.0, 0.0))
    out = np.clip(out, 0.0, 1.0)
    return float(out) if scalar else out


def log_reg_incomplete_beta(a, b, x):
    """log I_x(a, b), accurate where I_x underflows."""
    scalar = np.ndim(a) == 0 and np.ndim(b) == 0 and np.ndim(x) == 0
    x, flip, interior, log_direct = _beta_parts(a, b, x)
    with np.errstate(divide="ignore"):
        comp = np.log1p(-np.exp(log_direct))
    out = np.where(flip, comp, log_direct)
    out = np.where(interior, out, np.where(x >= 1, 0.0, -np.inf))
    out = np.minimum(out, 0.0)
    return float(out) if scalar else out


def reg_incomplete_gamma_upper(s: float, x: float) -> float:
    """Q(s, x) = Gamma(s, x) / Gamma(s); series below s + 1, continued fraction above."""
    if not s > 0 or not x >= 0 or math.isnan(x):
        raise DomainError("upper incomplete gamma requires s > 0 and x >= 0")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    log_prefix = s * math.log(x) - x - math.lgamma(s)
    if x < s + 1.0:
        ap, term = s, 1.0 / s
        total = term
        for _ in range(_MAXIT):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                return min(max(1.0 - total * math.exp(log_prefix), 0.0), 1.0)
        raise ArithmeticError("incomplete gamma series did not converge")
    b = x + 1.0 - s
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT + 1):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return min(max(math.exp(log_prefix) * h, 0.0), 1.0)
    raise ArithmeticError("incomplete gamma continued fraction did not converge")


# -- tail probabilities ------------------------------------------------------------


def t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    t2 = t * t
    if t2 < df:
        # df / (df + t^2) would round to 1 for tiny t; use the complementary argument
        tail = 0.5 - 0.5 * reg_incomplete_beta(0.5, df / 2.0, t2 / (df + t2))
    else:
        tail = 0.5 * reg_incomplete_beta(df / 2.0, 0.5, df / (df + t2))
    return tail if t >= 0 else 1.0 - tail


def _f_args(f, d1, d2):
    f = np.asarray(f, dtype=np.float64)
    d1 = np.asarray(d1, dtype=np.float64)
    d2 = np.asarray(d2, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(np.isinf(f), 0.0, d2 / (d2 + d1 * f))
        y = np.where(np.isinf(f), 1.0, d1 * f / (d2 + d1 * f))
    # evaluate through whichever of x, y = 1 - x is smaller so neither rounds to 1
    return f, d1, d2, x, y, y < 0.5


def f_sf(f, d1, d2):
    """P(F > f) for the F distribution; vectorized."""
    f, d1, d2, x, y, small = _f_args(f, d1, d2)
    upper = reg_incomplete_beta(d2 / 2.0, d1 / 2.0, np.where(small, 0.5, x))
    lower = reg_incomplete_beta(d1 / 2.0, d2 / 2.0, np.where(small, y, 0.5))
    out = np.where(small, 1.0 - lower, upper)
    return float(out) if out.ndim == 0 else out


def log_f_sf(f, d1, d2):
    f, d1, d2, x, y, small = _f_args(f, d1, d2)
    upper = log_reg_incomplete_beta(d2 / 2.0, d1 / 2.0, np.where(small, 0.5, x))
    lower = reg_incomplete_beta(d1 / 2.0, d2 / 2.0, np.where(small, y, 0.5))
    with np.errstate(divide="ignore"):
        out = np.where(small, np.log1p(-lower), upper)
    return float(out) if out.ndim == 0 else out


def chi2_sf(x: float, df: float) -> float:
    return reg_incomplete_gamma_upper(df / 2.0, x / 2.0)
