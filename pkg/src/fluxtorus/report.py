"""Run manifests and CSV/JSON writers shared by the command-line driver."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

SITE_ORDER = "row-major: site = x1 * L2 + x2"
SCALING_HEADER = ("L", "chern", "spread", "qerror")
GAP_HEADER = ("phi1", "phi2", "gap")


def _plain(obj):
    """JSON default for numpy scalars/arrays, tuples and dataclasses."""
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if hasattr(obj, "to_json"):
        return obj.to_json()
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _finite(x):
    # json has no inf/nan; keep them readable
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def dumps(obj) -> str:
    return json.dumps(_finite(json.loads(json.dumps(obj, default=_plain, allow_nan=True))), indent=2, sort_keys=True)


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def read_csv(path, header) -> list[dict]:
    """Read a CSV and check every row against ``header``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != tuple(header):
        raise ValueError(f"header {rows[0]} does not match {list(header)}")
    for k, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise ValueError(f"row {k} has {len(r)} fields, expected {len(header)}")
    return [dict(zip(header, r)) for r in rows[1:]]


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_plain)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    relation: str  # "<", "<=", "==", ">" ...
    passed: bool
    detail: str = ""


_REL = {
    "<": lambda v, t: v < t,
    "<=": lambda v, t: v <= t,
    ">": lambda v, t: v > t,
    ">=": lambda v, t: v >= t,
    "==": lambda v, t: v == t,
}


@dataclass
class RunManifest:
    command: str
    config: dict
    model: dict
    geometry: dict
    version: str
    site_order: str = SITE_ORDER
    checks: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return config_hash({"command": self.command, **self.config})

    def check(self, name: str, value, tolerance, relation: str = "<", detail: str = "") -> Check:
        value = value if isinstance(value, bool) else float(value)
        c = Check(name, value, tolerance, relation, bool(_REL[relation](value, tolerance)), detail)
        self.checks.append(c)
        return c

    def require(self, name: str, ok: bool, detail: str = "") -> Check:
        c = Check(name, bool(ok), True, "==", bool(ok), detail)
        self.checks.append(c)
        return c

    @contextmanager
    def timer(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = round(time.perf_counter() - t0, 4)

    @property
    def failures(self) -> list:
        return [asdict(c) for c in self.checks if not c.passed]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "config": self.config,
            "model": self.model,
            "geometry": self.geometry,
            "version": self.version,
            "site_order": self.site_order,
            "checks": [asdict(c) for c in self.checks],
            "passed": self.passed,
            "timings": self.timings,
            "artifacts": self.artifacts,
            "warnings": self.warnings,
        }

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        write_json(path, self.to_json())
        return path
