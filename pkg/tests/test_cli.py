import json
import subprocess
import sys

import pytest

from ctxwb.cli import EXIT_ANCHOR, EXIT_ERROR, EXIT_OK, main, resolve_metric, resolve_scenario
from ctxwb.scenario import ScenarioError, build_632, save_metric, save_scenario, table1_metrics


@pytest.fixture
def files(tmp_path):
    sc, m = tmp_path / "632.json", tmp_path / "t1m2.json"
    save_scenario(build_632(), sc)
    save_metric(table1_metrics()[1], m)
    return str(sc), str(m)


def test_resolvers():
    sc, default = resolve_scenario("porac:3")
    assert sc.X == 8 and default == "porac:3"
    assert resolve_scenario("mporac23")[1] == "mporac23"
    assert resolve_scenario("ncycle:5")[0].Y == 5
    assert resolve_scenario("simplest:1/3")[0].V == 1
    assert resolve_metric("t1m3b", None).name == "t1m3b"
    assert resolve_metric(None, "porac:2").name == "porac2"
    with pytest.raises(ScenarioError):
        resolve_scenario("hexagon")
    with pytest.raises(ScenarioError):
        resolve_metric(None, None)


def test_bound_q1_from_files(files, capsys, tmp_path):
    sc, m = files
    out = tmp_path / "b.json"
    assert main(["bound", "--scenario", sc, "--metric", m, "--set", "q1", "--out", str(out)]) == EXIT_OK
    assert "Q1 = 2.86602" in capsys.readouterr().out
    data = json.loads(out.read_text())
    assert abs(data["value"] - 2.8660254) < 1e-5


def test_bound_nc_csv(files, tmp_path):
    sc, m = files
    out = tmp_path / "b.csv"
    assert main(["bound", "--scenario", sc, "--metric", m, "--set", "nc", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "set,value,status"
    assert abs(float(lines[1].split(",")[1]) - 2.5) < 1e-7


def test_bound_anchor_verdict(files, capsys):
    sc, m = files
    code = main(["bound", "--scenario", sc, "--metric", m, "--set", "c", "--anchor", "2.5", "--tol", "1e-7"])
    assert code == EXIT_ANCHOR
    assert "fail" in capsys.readouterr().out


def test_projective_bound_on_mporac23(capsys):
    code = main(["bound", "--scenario", "mporac23", "--set", "qpi"])
    assert code == EXIT_OK
    value = float(capsys.readouterr().out.split("=")[1].split()[0])
    assert value <= 1 / 3 + 1e-6


def test_usage_errors(capsys, tmp_path):
    assert main(["bound", "--scenario", "nowhere.json"]) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err
    broken = tmp_path / "bad.json"
    broken.write_text('{"X": 2, "Y": 1, "K": 2, "prep_equivalences": [[[1, 0], [1, 0]]]}')
    assert main(["bound", "--scenario", str(broken), "--metric", "t1m1"]) == EXIT_ERROR
    with pytest.raises(SystemExit) as exc:
        main(["bound", "--scenario", "632", "--set", "npa"])
    assert exc.value.code == 2


def test_seesaw_command(tmp_path, capsys):
    real = tmp_path / "real.json"
    code = main(["seesaw", "--scenario", "632", "--metric", "t1m1", "--restarts", "2", "--dump-realization",
                 str(real)])
    assert code == EXIT_OK
    assert "QL = " in capsys.readouterr().out
    assert json.loads(real.read_text())["dim"] == 2


def test_preset_writes_reports(tmp_path, capsys):
    assert main(["preset", "appendixB", "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "appendixB.json").read_text())
    assert report["passed"]
    assert (tmp_path / "appendixB.csv").read_text().startswith("label")


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "ctxwb", "--help"], capture_output=True, text=True)
    assert done.returncode == 0
    assert "preset" in done.stdout
