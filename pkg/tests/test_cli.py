import csv
from pathlib import Path

import pytest

from lp_tournament.cli import main


def _write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _rows(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


SINGLETON = """[experiment]
schema = 1

[triplet]
fixture = singleton

[procedure]
p = 6
M = 2
eps = 1.0

[run]
N = 12
trials = 5
"""


def test_run_singleton(tmp_path):
    cfg = _write(tmp_path, SINGLETON)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--no-figures"]) == 0
    trials = _rows(tmp_path / "o" / "run_trials.csv")
    assert len(trials) == 5
    assert all(float(r["excess_tournament"]) == 0.0 and float(r["excess_erm"]) == 0.0
               for r in trials)
    assert not (tmp_path / "o" / "run_excess.png").exists()
    head = (tmp_path / "o" / "run_trials.csv").read_text().splitlines()
    assert head[0].startswith("# lp-tournament v")
    assert head[1].startswith("# config_hash = ")
    assert head[2] == "# seed = 0"
    assert "#   fixture = singleton" in head


def test_run_writes_figure_by_default(tmp_path):
    cfg = _write(tmp_path, SINGLETON)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "run_excess.png").stat().st_size > 0


def test_run_failure_exit_code(tmp_path, capsys):
    text = """[experiment]
schema = 1
[triplet]
fixture = file
path = cls.txt
[procedure]
p = 6
M = 1
eps = 0.5
theta2 = 1e-9
theta4 = 1e9
[run]
N = 6
trials = 30
"""
    (tmp_path / "cls.txt").write_text(
        "backend = tabular\n[probs]\n0.5 0.5\n[members]\na 1.0 0.0\nb 0.0 1.0\n[target]\nY 0.0 0.0\n")
    cfg = _write(tmp_path, text)
    code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--no-figures"])
    assert code == 2
    assert "selection stage F1" in capsys.readouterr().err
    assert (tmp_path / "o" / "run_trials.csv").exists()


@pytest.mark.parametrize("text,msg", [
    ("[experiment]\nschema = 2\n", "schema"),
    ("[bogus]\nx = 1\n", "unknown section"),
    ("[run]\ntrails = 3\n", "unknown keys"),
    ("[triplet]\nfixture = nope\n", "fixture"),
])
def test_config_errors(tmp_path, capsys, text, msg):
    cfg = _write(tmp_path, text)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert msg in capsys.readouterr().err


def test_verify_and_calibrate_commands(tmp_path):
    text = """[experiment]
schema = 1
[triplet]
fixture = singleton
[procedure]
p = 6
M = 2
eps = 1.0
[verify]
properties = club, diamond, heart, spade, stable-lb, multiplier-norm
N = 30
trials = 10
stable_trials = 200
"""
    cfg = _write(tmp_path, text)
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "v"), "--no-figures"]) == 0
    props = [r["property"] for r in _rows(tmp_path / "v" / "verify_reports.csv")]
    assert props == ["club", "diamond", "heart", "spade", "stable-lb", "multiplier-norm"]
    assert main(["calibrate", "--config", str(cfg), "--out", str(tmp_path / "c"),
                 "--no-figures"]) == 0
    res = _rows(tmp_path / "c" / "calibrate_result.csv")[0]
    assert (float(res["alpha"]), float(res["beta"])) == (1.0, 1.25)


def test_fixed_point_command_modes(tmp_path):
    base = """[experiment]
schema = 1
[triplet]
fixture = heavy_tail_linear
n_members = 4
[complexity]
trials = 60
"""
    cfg = _write(tmp_path, base + "mode = fixed_point\nkind = multiplier\nN = 50\nkappa = 0.5\n")
    assert main(["fixed-point", "--config", str(cfg), "--out", str(tmp_path / "a"),
                 "--no-figures"]) == 0
    rows = _rows(tmp_path / "a" / "fixed_point.csv")
    assert rows[0]["kind"] == "multiplier" and float(rows[0]["value"]) > 0
    assert _rows(tmp_path / "a" / "phi_curve_multiplier.csv")
    cfg = _write(tmp_path, base + "mode = N0\nN_max = 4096\n", "n0.ini")
    assert main(["fixed-point", "--config", str(cfg), "--out", str(tmp_path / "b"),
                 "--no-figures"]) == 0
    q = {r["quantity"]: float(r["value"]) for r in _rows(tmp_path / "b" / "fixed_point.csv")}
    assert q["N0"] == pytest.approx(2 * max(q["N_Q"], q["N_M"]) + q["confidence"])


def test_theory_profile_flag(tmp_path):
    cfg = _write(tmp_path, SINGLETON)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--no-figures",
                 "--profile", "theory"]) == 0
    text = (tmp_path / "o" / "run_trials.csv").read_text()
    assert "procedure: profile = 'theory'" in text
    assert "flag: theory profile" in text
