"""Charge-conserving finite-range lattice models and their configuration files.

Available models:

``trivial-insulator``
    ``Phi({x}) = Q_x``; unique ground state is the empty lattice, gap 1.
``hofstadter-fermion``
    Spinless fermions hopping on the square lattice with ``p/q`` flux quanta
    per plaquette (Landau gauge, phases on the axis-2 bonds).
``hofstadter-fermion-interacting``
    The same plus a nearest-neighbour density-density repulsion ``V n_x n_y``.
``xxz-spin``
    Spin-1/2 XXZ model with a uniform field; charge ``(sigma^z + 1)/2``.  A
    nonzero ``p/q`` puts Peierls phases on the XY couplings (hard-core bosons
    in a background flux), which breaks time reversal.

Local basis on every site: ``|0>`` empty (spin down), ``|1>`` occupied (spin up).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import GeometryError, ModelSpecError
from .geometry import TorusGeometry, boundary_ribbon, diam, make_torus
from .operators import ChargeSpec, LocalTerm, OperatorSum

MODEL_NAMES = ("trivial-insulator", "hofstadter-fermion", "hofstadter-fermion-interacting", "xxz-spin")
CONFIG_KEYS = {"model", "L", "R", "p", "q", "t", "V", "fields"}
FIELD_KEYS = {
    "trivial-insulator": set(),
    "hofstadter-fermion": {"mu"},
    "hofstadter-fermion-interacting": {"mu"},
    "xxz-spin": {"J", "Jz", "h"},
}

# single-site building blocks
_A = np.array([[0.0, 1.0], [0.0, 0.0]])  # annihilation / sigma^-
_N = np.diag([0.0, 1.0])
_Z = np.diag([1.0, -1.0])
_I = np.eye(2)
_SZ = np.diag([-1.0, 1.0])  # sigma^z with |1> = up


@dataclass(frozen=True)
class ModelSpec:
    name: str
    R: int = 1
    p: int = 0
    q: int = 1
    t: float = 1.0
    V: float = 0.0
    fields: dict = field(default_factory=dict)
    L: object = None  # int, (L1, L2) or None

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise ModelSpecError(f"unknown model {self.name!r}; choose one of {MODEL_NAMES}")
        if int(self.R) != self.R or self.R < 1:
            raise ModelSpecError(f"range R must be an integer >= 1, got {self.R}")
        if int(self.q) != self.q or self.q < 1 or int(self.p) != self.p:
            raise ModelSpecError(f"flux p/q must be integers with q >= 1, got {self.p}/{self.q}")
        bad = set(self.fields) - FIELD_KEYS[self.name]
        if bad:
            raise ModelSpecError(f"unknown field(s) {sorted(bad)} for model {self.name}")
        if self.name != "hofstadter-fermion-interacting" and self.V != 0:
            raise ModelSpecError(f"V is only meaningful for the interacting model, got V={self.V}")

    @property
    def alpha(self) -> Fraction:
        return Fraction(int(self.p), int(self.q))

    @property
    def fermionic(self) -> bool:
        return self.name.startswith("hofstadter")

    def geometry(self, L=None) -> TorusGeometry:
        L = self.L if L is None else L
        if L is None:
            raise ModelSpecError("no torus size given")
        L1, L2 = (L, L) if np.isscalar(L) else tuple(L)
        return make_torus(L1, L2)

    def with_(self, **kw) -> "ModelSpec":
        d = asdict(self)
        d.update(kw)
        return ModelSpec(**d)

    def to_json(self) -> dict:
        d = asdict(self)
        if isinstance(d["L"], tuple):
            d["L"] = list(d["L"])
        return d

    def validate_on(self, g: TorusGeometry) -> None:
        for L in g.shape:
            if not L / 2 > self.R:
                raise GeometryError(f"range R={self.R} too large for side {L} (need L/2 > R)")
        if self.p:
            # the Landau-gauge phases close consistently around the x1 cycle only if
            # alpha * L1 is an integer (which also quantizes the total flux)
            if (self.alpha * g.L1).denominator != 1:
                raise ModelSpecError(f"background flux {self.alpha} per plaquette is not quantized on "
                                     f"a torus with L1={g.L1} (need p*L1/q integer)")


@dataclass(frozen=True)
class Bond:
    """Hopping ``amp * c_y^dagger c_x + h.c.`` between nearest neighbours."""

    x: int
    y: int
    amp: complex


@dataclass(frozen=True, eq=False)
class Model:
    """Materialization of a :class:`ModelSpec` on a torus."""

    spec: ModelSpec
    geometry: TorusGeometry
    H: OperatorSum
    charges: ChargeSpec
    bonds: tuple = ()
    onsite: np.ndarray = None

    @property
    def R(self) -> int:
        return self.spec.R

    @property
    def fermionic(self) -> bool:
        return self.spec.fermionic

    @property
    def n_sites(self) -> int:
        return self.geometry.n_sites


def _pair_ops(x: int, y: int):
    """Local annihilators of sites ``x`` and ``y`` on the sorted support, JW-ordered."""
    ca = np.kron(_A, _I)
    cb = np.kron(_Z, _A)
    return (ca, cb) if x < y else (cb, ca)


def hopping_matrix(x: int, y: int, amp: complex) -> tuple[tuple, np.ndarray]:
    cx, cy = _pair_ops(x, y)
    m = amp * cy.conj().T @ cx
    return (min(x, y), max(x, y)), m + m.conj().T


def nn_bonds(g: TorusGeometry):
    """Oriented bonds ``x -> x + e_j`` (one per site and direction)."""
    out = []
    for x in range(g.n_sites):
        x1, x2 = g.coords(x)
        out.append((x, g.index(x1 + 1, x2), 1))
        out.append((x, g.index(x1, x2 + 1), 2))
    return out


def _collect(terms: dict, support, m, fermionic):
    if support in terms:
        terms[support] = terms[support] + m
    else:
        terms[support] = np.array(m, dtype=complex)


def build_model(spec: ModelSpec, g: TorusGeometry | None = None) -> Model:
    g = spec.geometry() if g is None else g
    spec.validate_on(g)
    n = g.n_sites
    charges = ChargeSpec.number(n)
    terms: dict = {}
    bonds = []
    onsite = np.zeros(n)
    fermionic = spec.fermionic
    if spec.name == "trivial-insulator":
        for x in range(n):
            _collect(terms, (x,), _N, False)
        onsite[:] = 1.0
    elif spec.name.startswith("hofstadter"):
        alpha = float(spec.alpha)
        for x, y, j in nn_bonds(g):
            theta = 2 * np.pi * alpha * g.coords(x)[0] if j == 2 else 0.0
            amp = -spec.t * np.exp(1j * theta)
            bonds.append(Bond(x, y, amp))
            sup, m = hopping_matrix(x, y, amp)
            _collect(terms, sup, m, True)
            if spec.V:
                _collect(terms, sup, spec.V * np.kron(_N, _N), True)
        mu = spec.fields.get("mu", 0.0)
        if mu:
            onsite[:] = -mu
            for x in range(n):
                _collect(terms, (x,), -mu * _N, True)
    elif spec.name == "xxz-spin":
        J = spec.fields.get("J", 1.0)
        Jz = spec.fields.get("Jz", 1.0)
        h = spec.fields.get("h", 0.0)
        alpha = float(spec.alpha)
        for x, y, j in nn_bonds(g):
            # J (e^{i theta} s+_y s-_x + h.c.): hard-core bosons in a background flux
            theta = 2 * np.pi * alpha * g.coords(x)[0] if j == 2 else 0.0
            hop = np.exp(1j * theta) * (np.kron(_A, _A.T) if x < y else np.kron(_A.T, _A))
            sup = (min(x, y), max(x, y))
            _collect(terms, sup, J * (hop + hop.conj().T) + Jz * np.kron(_SZ, _SZ), False)
        if h:
            for x in range(n):
                _collect(terms, (x,), -h * _SZ, False)
    H = OperatorSum(n, tuple(LocalTerm(s, m, fermionic, _label(spec.name, s)) for s, m in sorted(terms.items())), g)
    H = H.nonzero(1e-15)
    check_range(H, g, spec.R)
    return Model(spec, g, H, charges, tuple(bonds), onsite)


def _label(name: str, support) -> str:
    return f"{name}:{'-'.join(map(str, support))}"


def build_interaction(spec: ModelSpec, g: TorusGeometry | None = None) -> tuple[OperatorSum, ChargeSpec]:
    m = build_model(spec, g)
    return m.H, m.charges


def check_range(H: OperatorSum, g: TorusGeometry, R: int) -> int:
    """Largest support diameter; raises if it exceeds ``R``."""
    dmax = max((diam(g, t.support) for t in H.terms), default=0)
    if dmax > R:
        raise ModelSpecError(f"interaction range {dmax} exceeds R={R}")
    return dmax


# --------------------------------------------------------------------------
# charge conservation and splits


@dataclass
class ConservationReport:
    norms: dict
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def max_norm(self) -> float:
        return max(self.norms.values(), default=0.0)


def check_charge_conservation(H: OperatorSum, Q: ChargeSpec, tol: float = 1e-12) -> ConservationReport:
    """``||[Q_X, Phi(X)]||`` for every term."""
    norms, bad = {}, []
    for t in H.terms:
        d = Q.local_charge(t.support).astype(float)
        c = d[:, None] * t.matrix - t.matrix * d[None, :]
        v = float(np.linalg.norm(c, 2)) if c.size else 0.0
        norms[t.support] = max(norms.get(t.support, 0.0), v)
        if v >= tol:
            bad.append({"support": list(t.support), "label": t.label, "norm": v})
    return ConservationReport(norms, bad)


def charge_commutator_support(H: OperatorSum, Q: ChargeSpec, X, tol: float = 1e-12) -> frozenset:
    """Sites carrying ``[Q_X, H]``: union of the supports of terms that fail to commute with ``Q_X``."""
    X = set(X)
    out = set()
    for t in H.terms:
        if not X & set(t.support):
            continue
        d = Q.local_charge(t.support, X).astype(float)
        c = d[:, None] * t.matrix - t.matrix * d[None, :]
        if np.abs(c).max(initial=0.0) > tol:
            out.update(t.support)
    return frozenset(out)


def restrict(H: OperatorSum, X) -> OperatorSum:
    """``H_X``: terms supported inside ``X``."""
    X = set(X)
    return H.replace(t for t in H.terms if set(t.support) <= X)


def boundary_part(H: OperatorSum, X) -> OperatorSum:
    """``H^X``: terms whose support meets ``X``."""
    X = set(X)
    return H.replace(t for t in H.terms if set(t.support) & X)


def split(H: OperatorSum, X, g: TorusGeometry) -> tuple[OperatorSum, OperatorSum]:
    """``(H^X, H_{complement})``; their term lists partition ``H``."""
    comp = set(range(g.n_sites)) - set(X)
    return boundary_part(H, X), restrict(H, comp)


def conservation_boundary_ok(H: OperatorSum, Q: ChargeSpec, X, g: TorusGeometry, R: int) -> bool:
    return charge_commutator_support(H, Q, X) <= boundary_ribbon(g, X, R).sites


# --------------------------------------------------------------------------
# configuration files


def _read_config(path: Path) -> dict:
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(text)
    raise ModelSpecError(f"config must be .json or .toml, got {path.name}")


def spec_from_dict(cfg: dict) -> ModelSpec:
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ModelSpecError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    if "model" not in cfg:
        raise ModelSpecError("config key 'model' is required")
    kw = {k: cfg[k] for k in ("R", "p", "q", "t", "V") if k in cfg}
    L = cfg.get("L")
    if isinstance(L, list):
        L = tuple(L)
    return ModelSpec(name=cfg["model"], fields=dict(cfg.get("fields", {})), L=L, **kw)


def load_config(path) -> ModelSpec:
    path = Path(path)
    try:
        cfg = _read_config(path)
    except (OSError, ValueError) as exc:
        if isinstance(exc, ModelSpecError):
            raise
        raise ModelSpecError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ModelSpecError("config must be a mapping")
    return spec_from_dict(cfg)
