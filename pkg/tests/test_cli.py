import csv

import pytest

from ted.cli import main
from ted.config import ConfigError, known_keys, parse_config

TOY = """
# tiny end-to-end run
seed=3
bounds.p_min=4
bounds.p_max=19
bounds.mu_min=2
bounds.mu_max=4
bounds.K_max=2
bounds.L_max=2
dcl.iterations=2
dcl.samples=200
dcl.per_param=20
dcl.warmup=20
dcl.rollouts=8
dcl.depth=4
dcl.promising=4
train.hidden=16
train.max_epochs=5
train.patience=3
eval.runs=4
eval.horizon=120
eval.warmup=20
eval.case=0
eval.limit=2
ted.case=0
ted.limit=2
ted.runs=2
ted.horizons=50,120
oracle.trials=3
oracle.tiny=2
oracle.runs=40
"""


def _cfg(tmp_path, extra=""):
    path = tmp_path / "run.cfg"
    path.write_text(TOY + extra)
    return str(path)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parse_defaults_and_snapshot_round_trip():
    cfg = parse_config(TOY)
    assert cfg.seed == 3 and cfg.bounds.L_max == 2 and cfg["ted.horizons"] == (50, 120)
    assert cfg.dcl.samples == 200 and cfg.train.hidden == (16,)
    again = parse_config(cfg.snapshot())
    assert again.values == cfg.values
    assert set(known_keys()) == set(cfg.values)


@pytest.mark.parametrize("text,needle", [
    ("dcl.sample=5", "unknown config key 'dcl.sample'"),
    ("seed=abc", "bad value for 'seed'"),
    ("just words", "expected key=value"),
    ("bounds.p_min=0.5", "holding cost"),
    ("ted.demand_known=maybe", "not a boolean"),
])
def test_config_errors_name_the_problem(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_cli_errors_exit_with_two(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense.key=1\n")
    assert main(["train", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "unknown config key" in capsys.readouterr().err
    noseed = tmp_path / "noseed.cfg"
    noseed.write_text("dcl.samples=10\n")
    assert main(["train", "--config", str(noseed), "--out", str(tmp_path / "o2")]) == 2
    assert "needs a seed" in capsys.readouterr().err
    assert main(["evaluate", "--config", _cfg(tmp_path), "--out", str(tmp_path / "o3")]) == 2


def test_train_is_reproducible_and_resumable(tmp_path):
    cfg = _cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", cfg, "--out", str(a)]) == 0
    assert main(["train", "--config", cfg, "--out", str(b)]) == 0
    for name in ("iter_1.net", "iter_2.net", "metrics.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    # drop the last iteration and resume
    (b / "iter_2.net").unlink()
    assert main(["train", "--config", cfg, "--out", str(b)]) == 0
    assert (a / "iter_2.net").read_bytes() == (b / "iter_2.net").read_bytes()
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    # a different configuration may not reuse the directory
    assert main(["train", "--config", cfg, "--seed", "4", "--out", str(b)]) == 2


def test_evaluate_and_ted_run(tmp_path):
    cfg = _cfg(tmp_path)
    run = tmp_path / "train"
    assert main(["train", "--config", cfg, "--out", str(run)]) == 0
    weights = run / "iter_2.net"
    cfg = _cfg(tmp_path, f"eval.weights={weights}\nted.weights={weights}\n")
    out1, out2 = tmp_path / "e1", tmp_path / "e2"
    assert main(["evaluate", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["evaluate", "--config", cfg, "--out", str(out2)]) == 0
    assert (out1 / "evaluate.csv").read_bytes() == (out2 / "evaluate.csv").read_bytes()
    rows = _rows(out1 / "evaluate.csv")
    assert {r["policy"] for r in rows} == {"neural", "pi0", "bsp", "cbsp"} and len(rows) == 8
    for r in rows:
        if r["policy"] == "bsp":
            assert float(r["gap_vs_bsp"]) == 0.0
    ted = tmp_path / "t"
    assert main(["ted-run", "--config", cfg, "--out", str(ted)]) == 0
    rows = _rows(ted / "ted.csv")
    assert len(rows) == 4 and {r["horizon"] for r in rows} == {"50", "120"}


def test_oracle_command_exit_codes(tmp_path):
    cfg = _cfg(tmp_path)
    assert main(["oracle", "--config", cfg, "--out", str(tmp_path / "ok")]) == 0
    rows = _rows(tmp_path / "ok" / "oracle.csv")
    assert len(rows) == 2 + 3 + 1 and all(r["holds"] == "1" for r in rows)
    flipped = _cfg(tmp_path, "oracle.flip_distance=true\n")
    assert main(["oracle", "--config", flipped, "--out", str(tmp_path / "bad")]) == 1


def test_testbed_command(tmp_path):
    assert main(["testbed", "--out", str(tmp_path)]) == 0
    counts = [len((tmp_path / f"case{c}.txt").read_text().splitlines()) for c in (1, 2, 3)]
    assert counts == [320, 243, 240]
