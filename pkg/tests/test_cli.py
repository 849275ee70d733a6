import json
import subprocess
import sys

import pytest

from fluxtorus.cli import main
from fluxtorus.report import GAP_HEADER, SCALING_HEADER, read_csv


@pytest.fixture
def hof_config(tmp_path):
    p = tmp_path / "hof.toml"
    p.write_text('model = "hofstadter-fermion"\nL = 3\np = 1\nq = 3\n')
    return p


def _run(args, out):
    return main(list(args) + ["--out", str(out)])


def test_trivial_chern(tmp_path, capsys):
    assert _run(["chern", "--model", "trivial-insulator", "--L", "4", "--grid", "4"], tmp_path) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["chern"] == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["passed"] and man["command"] == "chern" and len(man["config_hash"]) == 64


def test_unknown_config_key(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('model = "xxz-spin"\nL = 4\nbogus = 1\n')
    assert _run(["gap-scan", "--model", str(p)], tmp_path / "o") == 1
    assert "bogus" in capsys.readouterr().err


@pytest.mark.parametrize("extra", [["--tol", "nope=1"], ["--tol", "gap_min"], ["--phi", "1"], ["--L", "2"]])
def test_usage_errors(tmp_path, extra):
    assert _run(["gap-scan", "--model", "trivial-insulator", "--L", "4"] + extra, tmp_path) == 1


def test_bad_grid_exits_one(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["gap-scan", "--model", "trivial-insulator", "--grid", "x"])
    assert info.value.code == 1


def test_failed_check_exits_two(tmp_path):
    rc = _run(["gap-scan", "--model", "trivial-insulator", "--L", "4", "--grid", "4", "--tol", "gap_min=100"], tmp_path)
    assert rc == 2
    fails = json.loads((tmp_path / "failures.json").read_text())
    assert fails[0]["name"] == "min_gap"


def test_csv_identical_across_runs_and_threads(tmp_path, hof_config):
    outs = []
    for k, th in enumerate((1, 1, 3)):
        d = tmp_path / f"r{k}"
        assert _run(["curvature-scan", "--model", str(hof_config), "--grid", "4", "--threads", str(th)], d) == 0
        outs.append((d / "curvature.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_gap_scan_csv(tmp_path, hof_config):
    assert _run(["gap-scan", "--model", str(hof_config), "--grid", "4"], tmp_path) == 0
    assert len(read_csv(tmp_path / "gaps.csv", GAP_HEADER)) == 16


def test_small_scaling(tmp_path):
    rc = _run(["scaling", "--backend", "free-fermion", "--L", "4,8", "--grid", "8"], tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    rows = read_csv(tmp_path / "scaling.csv", SCALING_HEADER)
    assert [r["L"] for r in rows] == ["4", "8"]
    assert rc == (0 if man["passed"] else 2)
    assert {r["chern"] for r in rows} == {"1"}
    # kappa is far from flat at L=4, so no integer n0 exists there
    assert not man["passed"]


def test_qa_check_small(tmp_path, hof_config):
    assert _run(["qa-check", "--model", str(hof_config)], tmp_path) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert {"identity[j=1]", "identity[j=2]"} <= {c["name"] for c in man["checks"]}


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "fluxtorus", "chern", "--model", "trivial-insulator", "--L", "4",
                        "--grid", "4", "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
