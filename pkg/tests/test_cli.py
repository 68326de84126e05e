import csv
from pathlib import Path

import pytest

from killedmc import cli, weights
from killedmc.cli import CSV_COLUMNS, main, table_configs

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "table1.cfg"


def test_document_round_trip():
    s = cli.load_settings(str(CONFIG), ["model.sigma_bar=0.2", "run.M=777"])
    doc = cli.document_from_settings(s)
    again = cli.settings_from_document(cli.parse_document(cli.dump_document(doc)))
    assert again == s
    assert again.run.samples == 777 and again.run.model.sigma_bar == 0.2


def test_overrides_need_a_section_and_a_value():
    with pytest.raises(cli.UsageError):
        cli.apply_overrides({}, ["sigma_bar=0.2"])
    with pytest.raises(cli.UsageError):
        cli.apply_overrides({}, ["model.sigma_bar"])


@pytest.mark.parametrize("argv", [
    ["estimate", "--config", "/nonexistent/x.cfg"],
    ["estimate", "--set", "run.M=0"],
    ["estimate", "--set", "model.volatility=0.2"],
    ["estimate", "--set", "nonsense"],
    ["estimate", "--set", "run.quantity=gamma"],
    ["estimate", "--workers", "0"],
    ["tables", "3"],
])
def test_usage_errors_exit_with_two(argv, capsys):
    assert main(argv) == 2


def test_rejected_model_exits_with_three(capsys):
    assert main(["estimate", "--set", "model.sigma_bar=0", "--set", "run.M=10"]) == 3
    assert "rejected" in capsys.readouterr().err


def test_estimate_with_the_example_config(tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert main(["estimate", "--config", str(CONFIG), "--set", "run.M=20000", "--seed", "4",
                 "--out", str(out)]) == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    row = rows[0]
    assert row["seed"] == "4" and row["M"] == "20000" and row["sampler"] == "beta1"
    assert abs(float(row["mean"]) - 2.0) <= 4 * float(row["stderr"])
    assert "mean" in capsys.readouterr().out


def test_worker_flag_does_not_change_numbers(tmp_path, capsys):
    rows = []
    for w in ("1", "2"):
        out = tmp_path / f"w{w}.csv"
        assert main(["estimate", "--set", "run.M=3000", "--workers", w, "--out", str(out)]) == 0
        with open(out, newline="") as fh:
            rows.append(next(csv.DictReader(fh)))
    assert rows[0]["mean"] == rows[1]["mean"] and rows[0]["variance"] == rows[1]["variance"]


def test_pilot_section_drives_the_sampler(capsys):
    assert main(["estimate", "--config", str(CONFIG), "--set", "pilot.enabled=true", "--set", "pilot.pilot_M=2000",
                 "--set", "run.M=2000"]) == 0
    assert capsys.readouterr().out.count("pilot ") == 3


def test_selftest_fast_passes(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out


def test_selftest_catches_a_broken_weight(monkeypatch, capsys):
    original = weights.kappa
    monkeypatch.setattr(weights, "kappa", lambda norm, step, is_last: 0.5 * original(norm, step, is_last))
    assert main(["selftest"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_table_grid():
    cells = list(table_configs(2, 100, 0, 1, 0))
    assert len(cells) == 6
    assert {c.quantity for _, _, c in cells} == {"bel"}
    assert [lv for lv, _, _ in cells] == [0.1, 0.1, 0.2, 0.2, 0.3, 0.3]


def test_tables_command(tmp_path, capsys):
    out = tmp_path / "t.csv"
    with pytest.warns(UserWarning):
        assert main(["tables", "1", "--M", "500", "--pilot-M", "0", "--out", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert sum(line.startswith(("0.1 ", "0.2 ", "0.3 ")) for line in lines) == 3
    assert len(out.read_text().splitlines()) == 7
