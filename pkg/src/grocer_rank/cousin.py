"""Network regression recommender with split user/item matrices.

For a user ``u`` and a candidate item ``i`` the evidence is one (x, y) pair per
intermediate node on a two-hop path from ``u`` to ``i``:

* similar user ``v``:     x = user_sim(u, v),  y = purchase(v, i)
* item ``j`` (j != i):    x = purchase(u, j),  y = item_sim(j, i)
* item ``i`` itself, only when ``u`` bought it and leave-one-out is off:
  x = purchase(u, i), y = 1

Pairs with x = y = 0 do not exist. The pairs are fitted by least squares
through the origin and the item's score is the p-value of the F-test of that
fit. Lower is better; items without usable evidence score 1.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import ConfigError, DataError
from .ingest import InteractionMatrix, MatrixSpec, TransactionLog, extract_item_matrix, extract_user_matrix
from .ranking import ColdStartUser, FullRanking
from .similarity import SimilarityMatrix, build_similarity_matrix
from .special import f_sf, log_f_sf

DEFAULT_N_PREFIX = 4000
# relative SSE below this is treated as an exact proportional fit
_EXACT_FIT_RTOL = 1e-12


class IdMismatch(DataError):
    pass


class UnknownId(DataError):
    pass


class InsufficientEvidence(DataError):
    pass


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    f_statistic: float
    df: tuple[int, int]
    p_value: float
    n: int


@dataclass(frozen=True, eq=False)
class HeterogeneousNetwork:
    """User-user, item-item and user-item edges aligned on the purchase matrix ids."""

    user_sim: SimilarityMatrix
    item_sim: SimilarityMatrix
    purchases: InteractionMatrix
    su: sparse.csr_matrix = field(init=False, repr=False)
    si: sparse.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        p = self.purchases
        extra_users = set(self.user_sim.ids).difference(p.users)
        extra_items = set(self.item_sim.ids).difference(p.items)
        if extra_users:
            raise IdMismatch(f"user_sim ids absent from purchases: {sorted(extra_users)[:5]}")
        if extra_items:
            raise IdMismatch(f"item_sim ids absent from purchases: {sorted(extra_items)[:5]}")
        object.__setattr__(self, "su", _embed(self.user_sim, p.user_index, len(p.users)))
        object.__setattr__(self, "si", _embed(self.item_sim, p.item_index, len(p.items)))

    @property
    def users(self) -> tuple[str, ...]:
        return self.purchases.users

    @property
    def items(self) -> tuple[str, ...]:
        return self.purchases.items

    def user_row(self, u: str) -> int:
        try:
            return self.purchases.user_index[u]
        except KeyError:
            raise UnknownId(f"unknown user {u!r}") from None

    def item_col(self, i: str) -> int:
        try:
            return self.purchases.item_index[i]
        except KeyError:
            raise UnknownId(f"unknown item {i!r}") from None


def _embed(sim: SimilarityMatrix, index: dict[str, int], size: int) -> sparse.csr_matrix:
    """Re-index a similarity matrix into the purchase matrix's id space."""
    remap = np.array([index[x] for x in sim.ids], dtype=np.int64)
    coo = sim.values.tocoo()
    out = sparse.csr_matrix((coo.data, (remap[coo.row], remap[coo.col])), shape=(size, size))
    out.sort_indices()
    return out


def build_network(
    user_sim: SimilarityMatrix, item_sim: SimilarityMatrix, purchases: InteractionMatrix
) -> HeterogeneousNetwork:
    return HeterogeneousNetwork(user_sim, item_sim, purchases)


def extract_subnetwork(
    net: HeterogeneousNetwork, u: str, i: str, leave_one_out: bool = False
) -> list[tuple[float, float]]:
    """Evidence pairs for (u, i): user paths by user index, then item paths by item index."""
    r, c = net.user_row(u), net.item_col(i)
    p = net.purchases.values
    pairs: list[tuple[float, float]] = []

    row = net.su.getrow(r)
    for v, s in zip(row.indices, row.data):
        pairs.append((float(s), float(p[v, c])))

    bought = p.getrow(r)
    x_of = dict(zip(bought.indices.tolist(), bought.data.tolist()))
    col = net.si.getcol(c).tocsc()
    y_of = dict(zip(col.indices.tolist(), col.data.tolist()))
    for j in sorted(set(x_of) | set(y_of)):
        if j == c:
            continue
        pairs.append((float(x_of.get(j, 0.0)), float(y_of.get(j, 0.0))))
    if c in x_of and not leave_one_out:
        pairs.append((float(x_of[c]), 1.0))
    return pairs


def regress_through_origin(pairs: Sequence[tuple[float, float]]) -> RegressionResult:
    """Least squares y = b x with no intercept, and its F(1, n-1) test."""
    n = len(pairs)
    xs = np.array([x for x, _ in pairs], dtype=np.float64)
    ys = np.array([y for _, y in pairs], dtype=np.float64)
    sxx = float(xs @ xs) if n else 0.0
    if n < 2 or sxx == 0:
        raise InsufficientEvidence(f"need n >= 2 and nonzero regressor (n={n})")
    sxy, syy = float(xs @ ys), float(ys @ ys)
    slope = sxy / sxx
    ssr = sxy * sxy / sxx
    sse = syy - ssr
    if sse <= _EXACT_FIT_RTOL * syy:
        sse = 0.0
    if ssr == 0:
        return RegressionResult(slope, 0.0, (1, n - 1), 1.0, n)
    if sse == 0:
        return RegressionResult(slope, float("inf"), (1, n - 1), 0.0, n)
    f = ssr / (sse / (n - 1))
    return RegressionResult(slope, f, (1, n - 1), float(f_sf(f, 1, n - 1)), n)


def score_user_item(net: HeterogeneousNetwork, u: str, i: str, leave_one_out: bool = False) -> float:
    try:
        return regress_through_origin(extract_subnetwork(net, u, i, leave_one_out)).p_value
    except InsufficientEvidence:
        return 1.0


def score_block(
    net: HeterogeneousNetwork, rows: Sequence[int], leave_one_out: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized p-values and log p-values for ``rows`` x all items.

    Same evidence sums as :func:`extract_subnetwork` + :func:`regress_through_origin`,
    assembled with sparse products instead of per-pair loops.
    """
    rows = np.asarray(rows, dtype=np.int64)
    p = net.purchases.values
    su = net.su[rows]
    pb = p[rows]
    p_dense = pb.toarray()
    b_dense = (p_dense > 0).astype(np.float64)
    nbr_i = (net.si != 0).astype(np.float64)

    # user paths
    n = np.asarray((su != 0).sum(axis=1), dtype=np.float64)  # (b, 1)
    sxx = np.asarray(su.multiply(su).sum(axis=1), dtype=np.float64)
    sxy = np.asarray((su @ p).todense())
    syy = np.asarray(((su != 0).astype(np.float64) @ p.multiply(p)).todense())

    # item paths through j != i
    deg = b_dense.sum(axis=1, keepdims=True)
    nbr_count = np.asarray(nbr_i.sum(axis=0)).ravel()
    overlap = np.asarray((sparse.csr_matrix(b_dense) @ nbr_i).todense())
    n = n + (deg - b_dense) + nbr_count[None, :] - overlap
    sq = p_dense * p_dense
    sxx = sxx + sq.sum(axis=1, keepdims=True) - sq
    sxy = sxy + np.asarray((pb @ net.si).todense())
    syy = syy + np.asarray(net.si.multiply(net.si).sum(axis=0)).ravel()[None, :]

    if not leave_one_out:
        n = n + b_dense
        sxx = sxx + sq
        sxy = sxy + p_dense
        syy = syy + b_dense

    return _f_test_arrays(n, sxx, sxy, syy)


def _f_test_arrays(n, sxx, sxy, syy) -> tuple[np.ndarray, np.ndarray]:
    shape = np.broadcast(n, sxx, sxy, syy).shape
    n, sxx, sxy, syy = (np.broadcast_to(a, shape).astype(np.float64) for a in (n, sxx, sxy, syy))
    pval = np.ones(shape)
    logp = np.zeros(shape)
    ok = (n >= 2) & (sxx > 0) & (sxy > 0)
    ssr = np.zeros(shape)
    ssr[ok] = sxy[ok] ** 2 / sxx[ok]
    sse = syy - ssr
    exact = ok & (sse <= _EXACT_FIT_RTOL * syy)
    pval[exact] = 0.0
    logp[exact] = -np.inf
    test = ok & ~exact
    if test.any():
        d2 = n[test] - 1
        f = ssr[test] / (sse[test] / d2)
        pval[test] = f_sf(f, 1.0, d2)
        logp[test] = log_f_sf(f, 1.0, d2)
    return pval, logp


def rank_items_for_user(
    net: HeterogeneousNetwork,
    u: str,
    n_prefix: int,
    fallback: Sequence[str],
    leave_one_out: bool = False,
) -> FullRanking:
    """Ascending p-value prefix (only p < 1, at most ``n_prefix`` items), then fallback order."""
    return rank_users(net, [u], n_prefix, fallback, leave_one_out)[0]


def rank_users(
    net: HeterogeneousNetwork,
    users: Sequence[str],
    n_prefix: int,
    fallback: Sequence[str],
    leave_one_out: bool = False,
    threads: int | None = None,
) -> list[FullRanking]:
    """Rank many users in batches; results come back in input order."""
    if n_prefix < 0:
        raise ConfigError("n_prefix must be >= 0")
    fallback = tuple(fallback)
    pos = {it: k for k, it in enumerate(fallback)}
    if len(pos) != len(fallback):
        raise DataError("fallback order contains duplicates")
    missing = [it for it in net.items if it not in pos]
    if missing:
        raise DataError(f"network items absent from the fallback order: {missing[:5]}")
    # network columns laid out in fallback order; a stable sort on log p then
    # breaks ties by fallback position (and hence by item id within equal counts)
    col_order = np.array(sorted(range(len(net.items)), key=lambda c: pos[net.items[c]]), dtype=np.int64)
    col_items = [net.items[c] for c in col_order]

    row_of = []
    degree = np.diff(net.purchases.values.indptr)
    for u in users:
        r = net.purchases.user_index.get(u)
        if r is None or degree[r] == 0:
            raise ColdStartUser(f"user {u!r} has no purchase history")
        row_of.append(r)

    batch = max(1, 2_000_000 // max(len(net.items), 1))
    chunks = [(k, row_of[k : k + batch]) for k in range(0, len(row_of), batch)]

    def run(chunk):
        start, rows = chunk
        pval, logp = score_block(net, rows, leave_one_out)
        pval, logp = pval[:, col_order], logp[:, col_order]
        out = []
        for k in range(len(rows)):
            order = np.argsort(logp[k], kind="stable")
            hits = order[pval[k, order] < 1.0][:n_prefix]
            prefix = [col_items[c] for c in hits]
            chosen = set(prefix)
            rest = [it for it in fallback if it not in chosen]
            out.append(FullRanking(users[start + k], tuple(prefix) + tuple(rest), len(prefix),
                                   tuple(float(pval[k, c]) for c in hits)))
        return out

    workers = threads if threads is not None else int(os.environ.get("GROCER_RANK_THREADS", "1") or 1)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(ch) for ch in chunks]
    return [rk for part in parts for rk in part]


# -- end-to-end model ------------------------------------------------------------


@dataclass(frozen=True)
class CousinConfig:
    """Meta-parameters of the network model.

    ``tau_days``/``sigma_percent`` select the item and user matrices; ``alpha``
    and ``beta`` are the item/user similarity exponents (1 disables the
    power-law adjustment); ``top_m`` caps neighbors per node (None = keep all).
    """

    tau_days: int | None = 365
    sigma_percent: float = 100.0
    alpha: float = 1.0
    beta: float = 1.0
    top_m: int | None = 100
    value_mode: str = "binary"
    leave_one_out: bool = False

    def __post_init__(self):
        if self.alpha < 1 or self.beta < 1:
            raise ConfigError("alpha and beta must be >= 1")


def fit_network(
    log: TransactionLog,
    cfg: CousinConfig = CousinConfig(),
    reference_date=None,
    assortment: Iterable[str] | None = None,
) -> HeterogeneousNetwork:
    """Extract both matrices, compute similarities and assemble the network."""
    items = tuple(sorted(set(assortment) | set(log.items))) if assortment is not None else log.items
    spec = MatrixSpec(cfg.tau_days, cfg.sigma_percent, reference_date, cfg.value_mode)
    item_m = extract_item_matrix(log, spec, items=items)
    user_m = extract_user_matrix(log, spec, items=items)
    item_sim = build_similarity_matrix(item_m, "items", cfg.alpha, cfg.top_m)
    user_sim = build_similarity_matrix(user_m, "users", cfg.beta, cfg.top_m)
    return build_network(user_sim, item_sim, user_m)
