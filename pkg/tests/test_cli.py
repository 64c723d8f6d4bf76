import json
import subprocess
import sys

import pytest

from grocer_rank.cli import load_config, run
from grocer_rank.errors import ConfigError

SYNTH = """\
seed = 5
top_m = 50

[synth]
n_users = 40
n_items = 120
n_clusters = 5
orders_per_user = 8
basket_mean = 7
span_days = 90
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(f"out = {tmp_path / 'out'}\n" + SYNTH)
    return path


def test_metrics_minimal_length(capsys):
    assert run(["metrics", "--eq3", "--s", "70", "--accuracy", "0.12"]) == 0
    assert capsys.readouterr().out.strip() == "584"


def test_metrics_other_quantities(capsys):
    assert run(["metrics", "--eq1", "--s", "1", "--eq2", "--a", "10", "--eq6"]) == 0
    assert capsys.readouterr().out.split() == ["1", "10", "1"]


def test_metrics_welch(capsys):
    assert run(["metrics", "--welch", "563,3454.4,2639.0", "608,2437.9,2084.0"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["statistic"] == pytest.approx(7.277, abs=1e-3)
    assert out["arc_reduction"] == pytest.approx(0.294, abs=5e-4)


def test_config_parsing(config):
    cfg = load_config(str(config))
    assert cfg.seed == 5 and cfg.top_m == 50 and cfg.synth["n_items"] == 120


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("colour = blue\n")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    assert run(["ingest-check", "--config", str(bad)]) == 1
    assert run(["ingest-check", "--config", str(tmp_path / "missing.ini")]) == 1


def test_exit_codes(tmp_path, capsys):
    assert run(["metrics"]) == 1
    broken = tmp_path / "broken.csv"
    broken.write_text("order_id,user_id,item_id,quantity,timestamp,category\no1,u1,A,zero,2017-01-01T00:00:00Z,c\n")
    assert run(["ingest-check", "--input", str(broken)]) == 2
    assert run(["nonsense"]) == 1


def test_synth_ingest_train_rank(config, tmp_path, capsys):
    out = tmp_path / "out"
    assert run(["synth", "--config", str(config)]) == 0
    first = (out / "synthetic_log.csv").read_bytes()
    assert run(["synth", "--config", str(config)]) == 0
    assert (out / "synthetic_log.csv").read_bytes() == first
    manifest = json.loads((out / "manifest_synth.json").read_text())
    assert set(manifest["outputs"]) == {"synthetic_log.csv"}

    log = str(out / "synthetic_log.csv")
    capsys.readouterr()
    assert run(["ingest-check", "--input", log]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["users"] == 40

    assert run(["train", "--config", str(config), "--input", log]) == 0
    assert (out / "item_similarity.csv").read_text().startswith("id_a,id_b,similarity")
    for model in ("cousin", "egnn"):
        assert run(["rank", "--config", str(config), "--input", log, "--model", model, "--users", "u01,u02"]) == 0
        rows = (out / f"rankings_{model}.csv").read_text().splitlines()
        assert len(rows) == 1 + 2 * 120
    assert run(["rank", "--config", str(config), "--input", log, "--users", "nobody"]) == 2


def test_abtest_and_report(config, tmp_path, capsys):
    out = tmp_path / "out"
    assert run(["abtest", "--config", str(config)]) == 0
    md = capsys.readouterr().out
    assert "| A | top-k |" in md and "| B | top-N |" in md
    first = (out / "ab_report.json").read_bytes()
    assert run(["abtest", "--config", str(config)]) == 0
    assert (out / "ab_report.json").read_bytes() == first
    capsys.readouterr()
    assert run(["report", "--report", str(out / "ab_report.json"), "--format", "markdown"]) == 0
    assert capsys.readouterr().out == (out / "ab_report.md").read_text()
    assert run(["report", "--report", str(out / "manifest_abtest.json")]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "grocer_rank", "metrics", "--eq1", "--s", "4"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "10"
