"""Command line entry point: ``grocer-rank <subcommand> [flags]``.

Configuration comes from an optional key-value file (``--config``; INI syntax,
section headers optional, ``[synth]`` holds generator settings) and is
overridden by flags. Exit codes: 0 ok, 1 configuration error, 2 data error,
3 internal error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

from . import metrics, stats
from .baseline import EgnnConfig, egnn_ranking, popularity_ranking
from .cousin import DEFAULT_N_PREFIX, CousinConfig, fit_network, rank_users
from .errors import ConfigError, DataError
from .experiment import AbConfig, AbReport, ModelSpec, render_report, replay_ab_test, temporal_split
from .ingest import MatrixSpec, extract_item_matrix, extract_user_matrix, order_quantile_cap, read_log, serialize_transaction_log
from .ranking import ColdStartUser, rankings_to_csv
from .similarity import build_similarity_matrix, similarity_to_csv
from .synth import SynthConfig, generate_synthetic_log

SUBCOMMANDS = ("ingest-check", "train", "rank", "metrics", "abtest", "synth", "report")


@dataclass
class RunConfig:
    input: str | None = None
    out: str = "out"
    seed: int = 0
    cutoff: date | None = None
    tau: int | None = 365
    sigma: float = 100.0
    alpha: float = 1.0
    beta: float = 1.0
    top_m: int | None = 100
    n_prefix: int = DEFAULT_N_PREFIX
    egnn_lookback: int = 365
    egnn_threshold: int = 2
    activity_days: int = 365
    by_cluster: bool = True
    synth: dict = field(default_factory=dict)

    def cousin(self) -> CousinConfig:
        return CousinConfig(self.tau, self.sigma, self.alpha, self.beta, self.top_m)

    def egnn(self) -> EgnnConfig:
        return EgnnConfig(self.egnn_lookback, self.egnn_threshold)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(**self.synth)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["cutoff"] = self.cutoff.isoformat() if self.cutoff else None
        return d


def _optional_int(text: str) -> int | None:
    return None if str(text).strip().lower() in ("", "none", "unbounded", "inf") else int(text)


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARSERS = {
    "input": str, "out": str, "seed": int, "cutoff": date.fromisoformat, "tau": _optional_int,
    "sigma": float, "alpha": float, "beta": float, "top_m": _optional_int, "n_prefix": int,
    "egnn_lookback": int, "egnn_threshold": int, "activity_days": int, "by_cluster": _bool,
}
_SYNTH_FIELDS = {f.name: f.type for f in dataclasses.fields(SynthConfig)}


def load_config(path: str | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = p.read_text(encoding="utf-8")
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    for section in parser.sections():
        for key, raw in parser.items(section):
            key = key.replace("-", "_")
            try:
                if section == "synth":
                    if key not in _SYNTH_FIELDS:
                        raise ConfigError(f"unknown synth key {key!r}")
                    kind = _SYNTH_FIELDS[key]
                    cfg.synth[key] = raw if kind in (str, "str") else (int(raw) if kind in (int, "int") else float(raw))
                else:
                    if key not in _PARSERS:
                        raise ConfigError(f"unknown config key {key!r}")
                    setattr(cfg, key, _PARSERS[key](raw))
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
    # relative input paths are relative to the config file
    if cfg.input is not None and not os.path.isabs(cfg.input):
        cfg.input = str(p.parent / cfg.input)
    return cfg


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_outputs(out_dir: str, command: str, cfg: RunConfig, inputs: dict[str, bytes], outputs: dict[str, bytes]) -> None:
    out = Path(out_dir)
    for name, data in outputs.items():
        _atomic_write(out / name, data)
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "inputs": {name: _sha256(data) for name, data in sorted(inputs.items())},
        "outputs": {name: _sha256(data) for name, data in sorted(outputs.items())},
    }
    _atomic_write(out / f"manifest_{command}.json", (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())


def _load_input(cfg: RunConfig):
    if cfg.input is None:
        raise ConfigError("no input log given (--input or 'input' in the config)")
    if not Path(cfg.input).is_file():
        raise ConfigError(f"input log not found: {cfg.input}")
    data = Path(cfg.input).read_bytes()
    return read_log(cfg.input), {Path(cfg.input).name: data}


def _apply_flags(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    for name in ("input", "out", "seed", "cutoff", "tau", "sigma", "alpha", "beta", "n_prefix"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    return cfg


# -- subcommands ----------------------------------------------------------------


def cmd_synth(cfg: RunConfig, args) -> int:
    log = generate_synthetic_log(cfg.synth_config(), cfg.seed)
    data = serialize_transaction_log(log, "csv")
    _write_outputs(cfg.out, "synth", cfg, {}, {args.name: data})
    print(Path(cfg.out) / args.name)
    return 0


def cmd_ingest_check(cfg: RunConfig, args) -> int:
    log, _ = _load_input(cfg)
    summary = {
        "events": len(log),
        "orders": len(log.orders),
        "users": len(log.users),
        "assortment_size": log.assortment_size,
        "first_timestamp": log.first_timestamp.isoformat() if log.events else None,
        "last_timestamp": log.last_timestamp.isoformat() if log.events else None,
        "order_cap": order_quantile_cap(log, cfg.sigma) if log.events else None,
    }
    print(json.dumps(summary, indent=2))
    return 0


def _train_view(cfg: RunConfig, log):
    if cfg.cutoff is None:
        return log, log.last_timestamp.date()
    return log.filter(lambda ev: ev.timestamp.date() <= cfg.cutoff), cfg.cutoff


def cmd_train(cfg: RunConfig, args) -> int:
    log, inputs = _load_input(cfg)
    train, ref = _train_view(cfg, log)
    spec = MatrixSpec(cfg.tau, cfg.sigma, ref, "binary")
    items = log.items
    item_sim = build_similarity_matrix(extract_item_matrix(train, spec, items), "items", cfg.alpha, cfg.top_m)
    user_sim = build_similarity_matrix(extract_user_matrix(train, spec, items), "users", cfg.beta, cfg.top_m)
    _write_outputs(cfg.out, "train", cfg, inputs, {
        "item_similarity.csv": similarity_to_csv(item_sim),
        "user_similarity.csv": similarity_to_csv(user_sim),
    })
    print(f"item pairs: {item_sim.nnz // 2}, user pairs: {user_sim.nnz // 2}")
    return 0


def cmd_rank(cfg: RunConfig, args) -> int:
    log, inputs = _load_input(cfg)
    train, ref = _train_view(cfg, log)
    fallback = popularity_ranking(train, cfg.by_cluster, log.items)
    users = args.users.split(",") if args.users else list(train.users)
    if args.model == "egnn":
        rankings = [egnn_ranking(train, u, cfg.egnn(), fallback, ref) for u in users]
    else:
        net = fit_network(train, cfg.cousin(), ref, log.items)
        rankings = rank_users(net, users, cfg.n_prefix, fallback)
    name = f"rankings_{args.model}.csv"
    _write_outputs(cfg.out, "rank", cfg, inputs, {name: rankings_to_csv(rankings)})
    print(Path(cfg.out) / name)
    return 0


def _summary(text: str) -> stats.SampleSummary:
    try:
        n, mean, sd = text.split(",")
        return stats.SampleSummary(int(n), float(mean), float(sd))
    except ValueError:
        raise ConfigError(f"expected n,mean,sd, got {text!r}") from None


def cmd_metrics(cfg: RunConfig, args) -> int:
    did = False
    if args.eq1:
        print(metrics.decisions_best_case(args.s))
        did = True
    if args.eq2:
        print(metrics.decisions_worst_case(args.a, args.s))
        did = True
    if args.eq3:
        if args.accuracy is None:
            raise ConfigError("--eq3 needs --accuracy")
        print(metrics.minimal_ranking_length(args.s, args.accuracy))
        did = True
    if args.eq6:
        print(f"{metrics.arc_lower_bound(args.s):g}")
        did = True
    if args.arc_ranks:
        ranks = [int(r) for r in args.arc_ranks.split(",")]
        print(f"{metrics.arc_order(metrics.OrderOutcome('cli', tuple(ranks))):g}")
        did = True
    if args.welch:
        a, b = (_summary(t) for t in args.welch)
        res = stats.welch_t_test(a, b, "greater")
        print(json.dumps({**res.to_dict(), "arc_reduction": metrics.arc_reduction(a.mean, b.mean)}, indent=2))
        did = True
    if not did:
        raise ConfigError("metrics: choose at least one of --eq1/--eq2/--eq3/--eq6/--arc-ranks/--welch")
    return 0


def cmd_abtest(cfg: RunConfig, args) -> int:
    if cfg.input is not None:
        log, inputs = _load_input(cfg)
    else:
        log = generate_synthetic_log(cfg.synth_config(), cfg.seed)
        inputs = {"synthetic_log.csv": serialize_transaction_log(log, "csv")}
    cutoff = cfg.cutoff or (log.last_timestamp.date() - timedelta(days=30))
    train, holdout = temporal_split(log, cutoff)
    ab = AbConfig(
        seed=cfg.seed,
        cutoff=cutoff,
        group_a_model=ModelSpec("egnn", egnn=cfg.egnn()),
        group_b_model=ModelSpec("cousin", cousin=cfg.cousin()),
        n_prefix_a=None,
        n_prefix_b=cfg.n_prefix,
        activity_days=cfg.activity_days,
        by_cluster=cfg.by_cluster,
    )
    report = replay_ab_test(train, holdout, ab)
    md = render_report(report, "markdown")
    _write_outputs(cfg.out, "abtest", cfg, inputs, {
        "ab_report.json": render_report(report, "json").encode("utf-8"),
        "ab_report.md": md.encode("utf-8"),
    })
    sys.stdout.write(md)
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    path = Path(args.report)
    if not path.is_file():
        raise ConfigError(f"report not found: {path}")
    try:
        report = AbReport.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"not an A/B report: {exc}") from None
    sys.stdout.write(render_report(report, args.format))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config")
    common.add_argument("--input")
    common.add_argument("--out")
    common.add_argument("--seed", type=int)
    common.add_argument("--cutoff", type=date.fromisoformat)
    common.add_argument("--tau", type=_optional_int)
    common.add_argument("--sigma", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--n-prefix", dest="n_prefix", type=int)

    parser = argparse.ArgumentParser(prog="grocer-rank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a seeded synthetic transaction log")
    p.add_argument("--name", default="synthetic_log.csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest-check", parents=[common], help="validate a log and print a summary")
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("train", parents=[common], help="write item and user similarity triples")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rank", parents=[common], help="write full-assortment rankings")
    p.add_argument("--model", choices=("cousin", "egnn"), default="cousin")
    p.add_argument("--users", help="comma-separated user ids (default: all)")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("metrics", parents=[common], help="decision-count and ARC arithmetic")
    p.add_argument("--eq1", action="store_true", help="best-case decisions for order size --s")
    p.add_argument("--eq2", action="store_true", help="worst-case decisions for --a, --s")
    p.add_argument("--eq3", action="store_true", help="minimal ranking length for --s, --accuracy")
    p.add_argument("--eq6", action="store_true", help="ARC lower bound for order size --s")
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--a", type=int, default=1)
    p.add_argument("--accuracy", type=float)
    p.add_argument("--arc-ranks", help="comma-separated ranks of one order")
    p.add_argument("--welch", nargs=2, metavar="N,MEAN,SD", help="one-sided Welch test on two summaries (top-k first)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("abtest", parents=[common], help="replay a top-k vs top-N experiment")
    p.set_defaults(func=cmd_abtest)

    p = sub.add_parser("report", parents=[common], help="render a saved A/B report")
    p.add_argument("--report", required=True)
    p.add_argument("--format", choices=("json", "markdown"), default="markdown")
    p.set_defaults(func=cmd_report)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        cfg = _apply_flags(load_config(args.config), args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ColdStartUser) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())
