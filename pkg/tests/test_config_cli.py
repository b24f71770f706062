import filecmp

import pytest

from niss.cli import main
from niss.config import ExperimentConfig, load_config, parse_config_text, render_config
from niss.errors import ConfigError
from niss.report import (
    ROUND_COLUMNS,
    RoundRow,
    SummaryRow,
    VarianceRow,
    read_rows,
    write_rows,
)

SMALL_TRAIN = """\
k = 4
c = 1.0
rounds = 3
local_epochs = 1
batch_size = 10
learning_rate = 0.05
mode = plain-fedavg, dp-fedavg, niss
tau_sq_sweep = 0, 1.0
unit_sigma_sq = 0.001
sensitivity = 0.1
num_classes = 3
input_dim = 4
train_size = 80
test_size = 40
trials = 1000
dim = 4
variance_k = 2, 3
variance_tau_sq = 0, 0.5
client_sigma_sq = 0.05, 0.1, 0.02
rho = 0, 1
collusion_v = 10
"""


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parse_values_and_aliases():
    cfg = parse_config_text("k = 5\neta = 0.2\nE = 3\nmode = niss, dp-fedavg  # two\nepsilon = 1, 2, 3, 4, 5\n")
    assert cfg.k == 5
    assert cfg.learning_rate == 0.2
    assert cfg.local_epochs == 3
    assert cfg.mode == ("niss", "dp-fedavg")
    assert cfg.epsilon == (1.0, 2.0, 3.0, 4.0, 5.0)


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("k = 5\nbogus = 1\n", ":2: unknown key"),
        ("k = 5\nk = 6\n", ":2: duplicate key"),
        ("k = five\n", ":1: bad value"),
        ("\n\nc = 2.0\n", ":3: c:"),
        ("just words\n", ":1: expected"),
        ("k = 3\nepsilon = 1, 2\n", ":2: epsilon"),
    ],
)
def test_parse_errors_name_the_line(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config_text(text, source="x.cfg")


def test_render_round_trip():
    cfg = parse_config_text(SMALL_TRAIN)
    assert parse_config_text(render_config(cfg)) == cfg
    assert parse_config_text(render_config(ExperimentConfig())) == ExperimentConfig()


def test_hash_ignores_out_dir():
    a = ExperimentConfig()
    assert a.config_hash() == a.with_overrides(out_dir="elsewhere").config_hash()
    assert a.config_hash() != a.with_overrides(seed=1).config_hash()


def test_relative_paths_resolve_against_config(tmp_path):
    text = "dataset = idx\ntrain_images = a\ntrain_labels = b\ntest_images = c\ntest_labels = d\n"
    cfg = load_config(_write(tmp_path, text))
    assert cfg.train_images == str(tmp_path / "a")


def test_shipped_configs_parse():
    from pathlib import Path
    for path in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.cfg")):
        load_config(path)


def test_csv_schema_round_trip(tmp_path):
    rows = [
        RoundRow("m/iid/niss/tau_sq=0.3", 1, "niss", 0.3, "iid", 0.1 + 0.2, 1e-300, 3.0, None),
        RoundRow("m/iid/plain-fedavg", 2, "plain-fedavg", None, "iid", 0.5, 0.0, 0.0, 12.5),
    ]
    write_rows(tmp_path / "r.csv", rows, RoundRow)
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == ",".join(ROUND_COLUMNS)
    assert read_rows(tmp_path / "r.csv", RoundRow) == rows
    v = [VarianceRow(2, 0.0, 1000, 8, 0.0, 1e-33, None)]
    write_rows(tmp_path / "v.csv", v, VarianceRow)
    assert read_rows(tmp_path / "v.csv", VarianceRow) == v
    with pytest.raises(ValueError):
        read_rows(tmp_path / "v.csv", SummaryRow)


def test_cli_train_writes_outputs(tmp_path):
    cfg = _write(tmp_path, SMALL_TRAIN)
    assert main(["train", "--config", str(cfg), "--out-dir", str(tmp_path / "out")]) == 0
    rounds = read_rows(tmp_path / "out" / "rounds.csv", RoundRow)
    summary = read_rows(tmp_path / "out" / "summary.csv", SummaryRow)
    # plain, dp and two niss levels, three rounds each
    assert len(rounds) == 12
    assert len(summary) == 4
    assert {r.scenario_id for r in summary} == {
        "softmax-regression/iid/plain-fedavg",
        "softmax-regression/iid/dp-fedavg",
        "softmax-regression/iid/niss/tau_sq=0.0",
        "softmax-regression/iid/niss/tau_sq=1.0",
    }
    assert all(r.wall_ms is None for r in rounds)
    assert all(r.tau_sq is None for r in rounds if r.mode != "niss")


def test_cli_zero_rounds(tmp_path):
    cfg = _write(tmp_path, SMALL_TRAIN.replace("rounds = 3", "rounds = 0"))
    assert main(["train", "--config", str(cfg), "--out-dir", str(tmp_path / "out")]) == 0
    assert read_rows(tmp_path / "out" / "summary.csv", SummaryRow) == []


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "missing.cfg")]) == 1
    assert main(["train", "--config", str(_write(tmp_path, "k = 0\n", "bad.cfg"))]) == 1
    assert "bad.cfg:1" in capsys.readouterr().err
    # a single participant per round cannot exchange shares: runtime failure
    text = SMALL_TRAIN.replace("c = 1.0", "c = 0.25").replace("mode = plain-fedavg, dp-fedavg, niss", "mode = niss")
    code = main(["train", "--config", str(_write(tmp_path, text, "one.cfg")), "--out-dir", str(tmp_path / "o")])
    assert code == 2
    assert "round 1" in capsys.readouterr().err


def test_cli_idx_missing_file_is_runtime_error(tmp_path):
    text = SMALL_TRAIN + "dataset = idx\ntrain_images = no\ntrain_labels = no\ntest_images = no\ntest_labels = no\n"
    assert main(["train", "--config", str(_write(tmp_path, text)), "--out-dir", str(tmp_path / "o")]) == 2


def test_cli_calibrate(capsys):
    assert main(["calibrate", "--epsilon", "10", "--delta", "1e-4", "--sensitivity", "3"]) == 0
    out = capsys.readouterr().out
    assert "sigma=1.30308" in out
    assert main(["calibrate", "--epsilon", "-1"]) == 1


@pytest.mark.parametrize("command,files", [("train", ["rounds.csv", "summary.csv"]),
                                           ("variance", ["variance.csv"]),
                                           ("collusion", ["collusion.csv"])])
def test_cli_outputs_are_reproducible(tmp_path, command, files):
    cfg = _write(tmp_path, SMALL_TRAIN)
    for d in ("a", "b"):
        assert main([command, "--config", str(cfg), "--seed", "42", "--out-dir", str(tmp_path / d)]) == 0
    for name in files:
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)


def test_cli_seed_changes_output(tmp_path):
    cfg = _write(tmp_path, SMALL_TRAIN)
    main(["variance", "--config", str(cfg), "--seed", "1", "--out-dir", str(tmp_path / "a")])
    main(["variance", "--config", str(cfg), "--seed", "2", "--out-dir", str(tmp_path / "b")])
    assert not filecmp.cmp(tmp_path / "a" / "variance.csv", tmp_path / "b" / "variance.csv", shallow=False)
