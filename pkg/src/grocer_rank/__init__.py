"""Personalized top-N grocery rankings, a repeat-purchase top-k benchmark,
ARC information-overload metrics and an offline A/B replay harness."""

from .baseline import EgnnConfig, egnn_ranking, popularity_ranking
from .cousin import CousinConfig, build_network, fit_network, rank_items_for_user, rank_users, score_user_item
from .experiment import AbConfig, AbReport, ModelSpec, render_report, replay_ab_test, temporal_split
from .ingest import MatrixSpec, TransactionLog, parse_transaction_log, serialize_transaction_log
from .ranking import FullRanking
from .synth import SynthConfig, generate_synthetic_log

__version__ = "0.1.0"
