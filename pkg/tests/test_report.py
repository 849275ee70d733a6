import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fluxtorus.report import GAP_HEADER, RunManifest, config_hash, dumps, read_csv, write_csv


@given(st.dictionaries(st.text(min_size=1, max_size=5), st.integers() | st.floats(allow_nan=False), max_size=6))
def test_hash_ignores_key_order(d):
    rev = dict(reversed(list(d.items())))
    assert config_hash(d) == config_hash(rev)


def test_hash_sees_values():
    assert config_hash({"L": 4}) != config_hash({"L": 6})
    assert len(config_hash({})) == 64


def test_dumps_handles_numpy_and_nonfinite():
    out = json.loads(dumps({"a": np.float64(0.5), "b": np.arange(3), "c": math.inf, "d": (1, 2)}))
    assert out == {"a": 0.5, "b": [0, 1, 2], "c": "inf", "d": [1, 2]}


def test_csv_roundtrip_is_exact(tmp_path):
    x = 0.1 + 0.2
    write_csv(tmp_path / "g.csv", GAP_HEADER, [(x, np.float64(1 / 3), 2)])
    rows = read_csv(tmp_path / "g.csv", GAP_HEADER)
    assert float(rows[0]["phi1"]) == x and float(rows[0]["phi2"]) == 1 / 3


def test_csv_schema_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("phi1,gap\n0,1\n")
    with pytest.raises(ValueError, match="header"):
        read_csv(p, GAP_HEADER)
    p.write_text("phi1,phi2,gap\n0,1\n")
    with pytest.raises(ValueError, match="row 2"):
        read_csv(p, GAP_HEADER)


def test_manifest(tmp_path):
    m = RunManifest("chern", {"L": 4}, {"model": "x"}, {"L1": 4}, "0")
    assert m.check("gap", 0.5, 1e-3, ">").passed
    with m.timer("step"):
        pass
    assert m.passed
    m.check("err", 0.2, 0.1, "<")
    m.require("admissible", False, "why")
    assert not m.passed
    assert [f["name"] for f in m.failures] == ["err", "admissible"]
    data = json.loads(m.write(tmp_path).read_text())
    assert data["config_hash"] == config_hash({"command": "chern", "L": 4})
    assert "step" in data["timings"] and data["passed"] is False
