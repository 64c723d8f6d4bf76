import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse
from scipy import stats as sps

from grocer_rank.cousin import (
    HeterogeneousNetwork,
    IdMismatch,
    InsufficientEvidence,
    UnknownId,
    build_network,
    extract_subnetwork,
    rank_items_for_user,
    rank_users,
    regress_through_origin,
    score_block,
    score_user_item,
)
from grocer_rank.ingest import InteractionMatrix
from grocer_rank.ranking import ColdStartUser
from grocer_rank.similarity import SimilarityMatrix


def reference_regression(pairs):
    """lstsq fit without intercept + scipy F survival function."""
    x = np.array([p[0] for p in pairs], float)
    y = np.array([p[1] for p in pairs], float)
    b = np.linalg.lstsq(x[:, None], y, rcond=None)[0][0]
    fitted = b * x
    ssr = float(fitted @ fitted)
    sse = float(((y - fitted) ** 2).sum())
    n = len(pairs)
    if sse <= 1e-12 * max(float(y @ y), 1e-300):
        return b, math.inf, 0.0 if ssr > 0 else 1.0
    f = ssr / (sse / (n - 1))
    return b, f, float(sps.f.sf(f, 1, n - 1))


def purchases(users, items, bought, values=None):
    uidx = {u: k for k, u in enumerate(users)}
    iidx = {i: k for k, i in enumerate(items)}
    rows = [uidx[u] for u, _ in bought]
    cols = [iidx[i] for _, i in bought]
    data = values if values is not None else [1.0] * len(bought)
    return InteractionMatrix(tuple(users), tuple(items), sparse.csr_matrix((data, (rows, cols)), shape=(len(users), len(items))))


def random_network(seed, n_users=7, n_items=9, counts=False):
    rng = np.random.default_rng(seed)
    users = [f"u{k}" for k in range(n_users)]
    items = [f"i{k}" for k in range(n_items)]
    dense = (rng.random((n_users, n_items)) < 0.35).astype(float)
    if counts:
        dense *= rng.integers(1, 4, dense.shape)
    p = InteractionMatrix(tuple(users), tuple(items), sparse.csr_matrix(dense))

    def sym(n, density):
        m = np.triu(rng.random((n, n)) * (rng.random((n, n)) < density), 1)
        return sparse.csr_matrix(m + m.T)

    return build_network(SimilarityMatrix(tuple(users), sym(n_users, 0.5)), SimilarityMatrix(tuple(items), sym(n_items, 0.4)), p)


class TestRegression:
    def test_perfect_fit(self):
        r = regress_through_origin([(1, 2), (2, 4), (3, 6)])
        assert r.slope == 2 and r.p_value == 0.0 and r.df == (1, 2)

    def test_no_relation(self):
        r = regress_through_origin([(1, 0), (0, 1)])
        assert r.slope == 0 and r.f_statistic == 0 and r.p_value == 1.0

    def test_cauchy_closed_form(self):
        r = regress_through_origin([(1, 1), (2, 1)])
        assert r.slope == pytest.approx(0.6)
        assert r.f_statistic == pytest.approx(9.0)
        assert r.df == (1, 1)
        # F(1,1) is the square of a standard Cauchy variable
        assert r.p_value == pytest.approx(1 - 2 * math.atan(3) / math.pi, abs=1e-12)
        assert r.p_value == pytest.approx(0.204833, abs=1e-6)

    @pytest.mark.parametrize("pairs", [[], [(1, 1)], [(0, 1), (0, 2)]])
    def test_insufficient(self, pairs):
        with pytest.raises(InsufficientEvidence):
            regress_through_origin(pairs)

    @given(st.lists(st.tuples(st.floats(0.01, 5), st.floats(0, 5)), min_size=2, max_size=25))
    @settings(max_examples=80, deadline=None)
    def test_matches_reference(self, pairs):
        r = regress_through_origin(pairs)
        b, f, p = reference_regression(pairs)
        assert r.slope == pytest.approx(b, rel=1e-9, abs=1e-12)
        assert 0 <= r.p_value <= 1
        assert r.p_value == pytest.approx(p, abs=1e-9)

    def test_adding_consistent_pair_keeps_exact_fit(self):
        pairs = [(1, 3), (2, 6)]
        assert regress_through_origin(pairs + [(4, 12)]).p_value == 0.0


class TestNetwork:
    def test_id_mismatch(self):
        p = purchases(["u1"], ["a"], [("u1", "a")])
        with pytest.raises(IdMismatch):
            build_network(SimilarityMatrix.empty(["u1"]), SimilarityMatrix.empty(["a", "b"]), p)
        with pytest.raises(IdMismatch):
            build_network(SimilarityMatrix.empty(["u1", "u2"]), SimilarityMatrix.empty(["a"]), p)

    def test_single_edge(self):
        p = purchases(["u1"], ["a"], [("u1", "a")])
        net = build_network(SimilarityMatrix.empty(["u1"]), SimilarityMatrix.empty(["a"]), p)
        assert net.purchases.nnz == 1
        assert extract_subnetwork(net, "u1", "a") == [(1.0, 1.0)]
        assert extract_subnetwork(net, "u1", "a", leave_one_out=True) == []
        assert score_user_item(net, "u1", "a") == 1.0

    def test_empty_similarities_degenerate(self):
        p = purchases(["u1", "u2"], ["a", "b", "c"], [("u1", "a"), ("u1", "b"), ("u2", "c")])
        net = build_network(SimilarityMatrix.empty(["u1", "u2"]), SimilarityMatrix.empty(["a", "b", "c"]), p)
        # no similarity edges: nothing the user has not bought gets evidence
        assert score_user_item(net, "u1", "c") == 1.0
        assert score_user_item(net, "u2", "a") == 1.0
        assert score_user_item(net, "u2", "c") == 1.0

    def test_similar_user_path(self):
        p = purchases(["u", "v"], ["i"], [("v", "i")])
        net = build_network(SimilarityMatrix.from_pairs(["u", "v"], {("u", "v"): 0.8}), SimilarityMatrix.empty(["i"]), p)
        assert extract_subnetwork(net, "u", "i") == [(0.8, 1.0)]

    def test_item_path(self):
        p = purchases(["u"], ["i", "j"], [("u", "j")])
        net = build_network(SimilarityMatrix.empty(["u"]), SimilarityMatrix.from_pairs(["i", "j"], {("j", "i"): 0.6}), p)
        assert (1.0, 0.6) in extract_subnetwork(net, "u", "i")

    def test_unknown_ids(self):
        net = random_network(0)
        with pytest.raises(UnknownId):
            extract_subnetwork(net, "nobody", "i0")
        with pytest.raises(UnknownId):
            score_user_item(net, "u0", "nothing")

    def test_neighbors_bought_beats_unbought(self):
        # u1 and u2 are strongly similar to u0 and bought "x"; nobody bought "y"
        users, items = ["u0", "u1", "u2"], ["x", "y", "z"]
        p = purchases(users, items, [("u0", "z"), ("u1", "x"), ("u1", "z"), ("u2", "x"), ("u2", "z")])
        usim = SimilarityMatrix.from_pairs(users, {("u0", "u1"): 0.9, ("u0", "u2"): 0.85, ("u1", "u2"): 0.95})
        isim = SimilarityMatrix.from_pairs(items, {("x", "z"): 0.8})
        net = build_network(usim, isim, p)
        brute = {}
        for it in ("x", "y"):
            pairs = extract_subnetwork(net, "u0", it)
            xs = sum(x * x for x, _ in pairs)
            brute[it] = reference_regression(pairs)[2] if len(pairs) >= 2 and xs > 0 else 1.0
        assert score_user_item(net, "u0", "x") < score_user_item(net, "u0", "y") == 1.0
        assert score_user_item(net, "u0", "x") == pytest.approx(brute["x"], abs=1e-9)


@pytest.mark.parametrize("seed", range(12))
@pytest.mark.parametrize("leave_one_out", [False, True])
def test_vectorized_matches_scalar(seed, leave_one_out):
    net = random_network(seed, counts=seed % 2 == 1)
    rows = list(range(len(net.users)))
    pval, logp = score_block(net, rows, leave_one_out)
    for r, u in enumerate(net.users):
        for c, i in enumerate(net.items):
            want = score_user_item(net, u, i, leave_one_out)
            assert pval[r, c] == pytest.approx(want, abs=1e-12)
            if 0 < want < 1:
                assert logp[r, c] == pytest.approx(math.log(want), rel=1e-9)
    assert np.all((pval >= 0) & (pval <= 1))


class TestRanking:
    def setup_method(self):
        self.net = random_network(4, n_users=6, n_items=12)
        self.fallback = tuple(sorted(self.net.items, reverse=True))

    def test_zero_prefix_is_fallback(self):
        rk = rank_items_for_user(self.net, "u0", 0, self.fallback)
        assert rk.items == self.fallback and rk.prefix_len == 0

    def test_prefix_sorted_by_score_then_fallback(self):
        rk = rank_items_for_user(self.net, "u1", 4000, self.fallback)
        assert rk.is_permutation_of(self.net.items)
        assert rk.prefix_len <= len(self.net.items)
        scores = {i: score_user_item(self.net, "u1", i) for i in self.net.items}
        expect = sorted((i for i in self.net.items if scores[i] < 1), key=lambda i: (scores[i], self.fallback.index(i)))
        # equal p-values are only distinguishable through the log-space sort; check the weak order
        got = list(rk.prefix)
        assert set(got) == set(expect)
        assert all(scores[a] <= scores[b] for a, b in zip(got, got[1:]))
        assert rk.items[rk.prefix_len:] == tuple(i for i in self.fallback if i not in set(got))
        assert rk.scores == pytest.approx(tuple(scores[i] for i in got), abs=1e-12)

    def test_all_insufficient_is_fallback(self):
        p = purchases(["u"], ["a", "b", "c"], [("u", "a")])
        net = build_network(SimilarityMatrix.empty(["u"]), SimilarityMatrix.empty(["a", "b", "c"]), p)
        rk = rank_items_for_user(net, "u", 10, ("c", "b", "a"))
        assert rk.items == ("c", "b", "a") and rk.prefix_len == 0

    def test_clamped_prefix(self):
        rk = rank_items_for_user(self.net, "u2", 4000, self.fallback)
        assert len(rk) == 12 and rk.prefix_len <= 12

    def test_cold_start(self):
        p = purchases(["u", "w"], ["a"], [("u", "a")])
        net = build_network(SimilarityMatrix.empty(["u", "w"]), SimilarityMatrix.empty(["a"]), p)
        with pytest.raises(ColdStartUser):
            rank_items_for_user(net, "w", 5, ("a",))
        with pytest.raises(ColdStartUser):
            rank_items_for_user(net, "ghost", 5, ("a",))

    def test_deterministic_and_thread_independent(self):
        users = list(self.net.users)
        one = rank_users(self.net, users, 5, self.fallback, threads=1)
        many = rank_users(self.net, users, 5, self.fallback, threads=4)
        assert one == many == rank_users(self.net, users, 5, self.fallback)

    def test_fallback_with_extra_items(self):
        fb = self.fallback + ("zz_new",)
        rk = rank_items_for_user(self.net, "u3", 3, fb)
        assert rk.is_permutation_of(fb)
        assert rk.items[-1] == "zz_new"


class TestFitNetwork:
    def setup_method(self):
        from grocer_rank.synth import SynthConfig, generate_synthetic_log

        self.log = generate_synthetic_log(SynthConfig(n_users=40, n_items=60, n_clusters=4, orders_per_user=6, basket_mean=6), 3)

    def test_unrestricted_windows_collapse_to_one_matrix(self):
        from grocer_rank.ingest import MatrixSpec, extract_item_matrix, extract_user_matrix

        spec = MatrixSpec(tau_days=None, sigma_percent=100)
        assert extract_item_matrix(self.log, spec) == extract_user_matrix(self.log, spec)

    def test_exponent_keeps_neighbor_order(self):
        from grocer_rank.cousin import CousinConfig, fit_network

        plain = fit_network(self.log, CousinConfig(alpha=1, beta=1, top_m=None))
        sharp = fit_network(self.log, CousinConfig(alpha=2.5, beta=3, top_m=None))
        for a, b in ((plain.item_sim, sharp.item_sim), (plain.user_sim, sharp.user_sim)):
            for x in a.ids[:15]:
                assert [y for y, _ in a.neighbors(x)] == [y for y, _ in b.neighbors(x)]

    def test_rejects_sub_unit_exponent(self):
        from grocer_rank.cousin import CousinConfig
        from grocer_rank.errors import ConfigError

        with pytest.raises(ConfigError):
            CousinConfig(alpha=0.5)

    def test_rankings_cover_assortment(self):
        from grocer_rank.baseline import popularity_ranking
        from grocer_rank.cousin import CousinConfig, fit_network

        extra = ("zz1", "zz2")
        net = fit_network(self.log, CousinConfig(), assortment=self.log.items + extra)
        fb = popularity_ranking(self.log, assortment=self.log.items + extra)
        for rk in rank_users(net, list(self.log.users)[:10], 4000, fb):
            assert rk.is_permutation_of(self.log.items + extra)
            assert 0 < rk.prefix_len < len(rk)
