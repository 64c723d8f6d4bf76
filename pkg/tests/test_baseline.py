import pytest

from grocer_rank.baseline import EgnnConfig, egnn_prefix, egnn_ranking, popularity_ranking
from grocer_rank.errors import ConfigError, DataError
from grocer_rank.ranking import ColdStartUser

from conftest import make_log


def counted(spec):
    """``{(item, category): count}`` -> one single-item order per purchase."""
    rows, k = [], 0
    for (item, cat), n in spec.items():
        for _ in range(n):
            k += 1
            rows.append((f"o{k}", f"u{k % 3}", item, -k % 50, 1, cat))
    return make_log(rows)


class TestPopularity:
    def test_cluster_ordering(self):
        log = counted({("A", "c1"): 5, ("B", "c1"): 2, ("C", "c2"): 3, ("D", "c2"): 3})
        assert popularity_ranking(log) == ("A", "B", "C", "D")

    def test_global_ordering(self):
        log = counted({("A", "c1"): 5, ("B", "c1"): 2, ("C", "c2"): 3, ("D", "c2"): 3})
        assert popularity_ranking(log, by_cluster=False) == ("A", "C", "D", "B")

    def test_cluster_total_tie_broken_by_cluster_id(self):
        log = counted({("X", "c2"): 4, ("Y", "c1"): 4})
        assert popularity_ranking(log) == ("Y", "X")

    def test_unseen_assortment_appended(self):
        log = counted({("B", "c1"): 1, ("A", "c1"): 1})
        assert popularity_ranking(log, assortment=["Z", "A", "B", "M"]) == ("A", "B", "M", "Z")

    def test_is_deterministic_permutation(self, small_log):
        r = popularity_ranking(small_log)
        assert sorted(r) == sorted(small_log.items)
        assert r == popularity_ranking(small_log)

    def test_empty(self):
        with pytest.raises(DataError):
            popularity_ranking(make_log([]))


@pytest.fixture
def repeat_log():
    # A in 3 orders, C in 2, B in 1
    return make_log(
        [
            ("o1", "u", "A", -30), ("o1", "u", "B", -30),
            ("o2", "u", "A", -20), ("o2", "u", "C", -20),
            ("o3", "u", "A", -10), ("o3", "u", "C", -10),
            ("o4", "v", "B", -5),
        ]
    )


class TestEgnn:
    def test_repeat_items_by_frequency(self, repeat_log):
        assert egnn_prefix(repeat_log, "u") == [("A", 3), ("C", 2)]
        rk = egnn_ranking(repeat_log, "u", fallback=("B", "C", "A"))
        assert rk.items == ("A", "C", "B") and rk.prefix_len == 2

    def test_no_repeats_gives_fallback(self, repeat_log):
        rk = egnn_ranking(repeat_log, "v", fallback=("C", "B", "A"))
        assert rk.prefix_len == 0 and rk.items == ("C", "B", "A")

    def test_recency_breaks_frequency_ties(self):
        log = make_log([("o1", "u", "Y", -9), ("o1", "u", "X", -9), ("o2", "u", "Y", -5), ("o3", "u", "X", -1)])
        assert [it for it, _ in egnn_prefix(log, "u")] == ["X", "Y"]

    def test_k_is_data_driven(self):
        rows = []
        for o in range(3):
            rows += [(f"o{o}", "u", f"i{j:02d}", -o) for j in range(30)]
        rows.append(("o9", "u", "single", -1))
        log = make_log(rows)
        rk = egnn_ranking(log, "u", fallback=tuple(sorted(log.items)))
        assert rk.prefix_len == 30
        assert egnn_ranking(log, "u", fallback=tuple(sorted(log.items)), max_prefix=7).prefix_len == 7

    def test_lookback_window(self, repeat_log):
        # reference is the last day (-5); a 10-day lookback keeps only o3, five days earlier
        assert egnn_prefix(repeat_log, "u", EgnnConfig(lookback_days=10)) == []
        assert egnn_prefix(repeat_log, "u", EgnnConfig(lookback_days=10, repeat_threshold=1)) == [("A", 1), ("C", 1)]

    def test_prefix_soundness(self, small_log):
        cfg = EgnnConfig()
        for u in small_log.users:
            orders = small_log.orders_by_user[u]
            for item, n in egnn_prefix(small_log, u, cfg):
                assert n >= cfg.repeat_threshold
                assert sum(item in o.item_ids for o in orders) == n

    def test_cold_start(self, repeat_log):
        with pytest.raises(ColdStartUser):
            egnn_prefix(repeat_log, "nobody")

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            EgnnConfig(repeat_threshold=0)
