"""Flux insertion: flux unitaries, twist and twist-antitwist Hamiltonians, flux derivatives.

Every flux Hamiltonian used here has the form

    H(theta) = sum_X  exp(i theta_X . Q_X) Phi(X) exp(-i theta_X . Q_X),

where ``Q_X = (Q_{X cap X1}, Q_{X cap X2})`` are the half-torus charges restricted
to the support of the term and ``theta_X`` is a per-term pair of angles.  For
the twist-antitwist Hamiltonian ``H(phi+, phi-)``

    theta_X = a_X * (phi+ + phi-) - phi-,

with ``a_X in {0, 1}^2`` the twist indicator of the term.  Conjugation by a
product of single-site unitaries never changes a support, and flux
derivatives are term-wise commutators ``i dtheta_X . [Q_X, .]``.

Twist indicator.  ``rule="seam"`` (default) twists a term in direction ``j``
iff its support lies in the minus ribbon of ``X_j``; since a term of range
``R`` crossing the minus seam of ``X_j`` always lies in that ribbon, this
threads flux ``phi_j`` through exactly one seam per direction.
``rule="ribbon"`` twists every term touching ``Sigma`` in both directions.
The two coincide on terms away from the crossing of the ribbons, but the
literal rule also twists the minus ribbon of ``X_1`` where it crosses the
plus seam of ``X_2`` (and vice versa), which leaves flux-tube defects there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConsistencyError
from .geometry import SigmaDelta, TorusGeometry, canonical_halves, diam, sigma_delta
from .models import Model
from .operators import (
    ChargeSpec,
    DenseOperator,
    OperatorSum,
    SectorBasis,
    _term_entries,
    materialize,
    op_norm,
)

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class FluxPoint:
    """``phi = (phi1, phi2)`` on the flux torus, stored reduced to ``[0, 2 pi)``."""

    phi1: float
    phi2: float

    def __post_init__(self):
        object.__setattr__(self, "phi1", float(np.mod(self.phi1, TWO_PI)))
        object.__setattr__(self, "phi2", float(np.mod(self.phi2, TWO_PI)))

    @classmethod
    def of(cls, phi) -> "FluxPoint":
        return phi if isinstance(phi, FluxPoint) else cls(*phi)

    def __array__(self, dtype=None, copy=None):
        return np.array([self.phi1, self.phi2], dtype=dtype)

    def __add__(self, other):
        o = FluxPoint.of(other)
        return FluxPoint(self.phi1 + o.phi1, self.phi2 + o.phi2)

    def __neg__(self):
        return FluxPoint(-self.phi1, -self.phi2)

    def __sub__(self, other):
        return self + (-FluxPoint.of(other))

    def isclose(self, other, atol: float = 1e-12) -> bool:
        d = np.asarray(self - FluxPoint.of(other))
        d = np.minimum(d, TWO_PI - d)
        return bool(np.all(d < atol))


@dataclass(frozen=True)
class FluxPair:
    plus: FluxPoint
    minus: FluxPoint

    @classmethod
    def of(cls, plus, minus) -> "FluxPair":
        return cls(FluxPoint.of(plus), FluxPoint.of(minus))


def _vec(phi) -> np.ndarray:
    """Unreduced flux vector (derivatives and paths need the raw value)."""
    if isinstance(phi, FluxPoint):
        return np.asarray(phi)
    return np.asarray(phi, dtype=float).reshape(2)


def flux_unitary(Q: ChargeSpec, halves, phi, dense: bool = False):
    """Per-site phase tables of ``U(phi) = exp(-i <phi, Q>)``.

    Returns an ``(n_sites, 2)`` array whose row ``x`` is the diagonal of the
    single-site factor; with ``dense=True`` the full diagonal unitary.
    """
    phi = _vec(phi)
    n = Q.n_sites
    w = np.zeros(n)
    for j, X in enumerate(halves):
        w[sorted(set(X))] += phi[j]
    phases = np.exp(-1j * w[:, None] * Q.values)
    if not dense:
        return phases
    diag = np.array([1.0 + 0j])
    for x in range(n):
        diag = np.kron(diag, phases[x])
    return DenseOperator(np.diag(diag), tuple(range(n)))


# --------------------------------------------------------------------------
# symbolic flux families


class FluxFamily:
    """Twist data attached to a model: ribbons, per-term indicators and charges."""

    def __init__(self, model: Model, R: int | None = None, rule: str = "seam"):
        if rule not in ("seam", "ribbon"):
            raise ValueError(f"unknown twist rule {rule!r}")
        self.model = model
        self.geometry: TorusGeometry = model.geometry
        self.R = model.R if R is None else R
        self.rule = rule
        self.sd: SigmaDelta = sigma_delta(self.geometry, self.R)
        self.halves = canonical_halves(self.geometry)
        self.charges = model.charges
        self.H = model.H
        self.terms = model.H.terms
        sigma = self.sd.sigma.sites
        a = np.zeros((len(self.terms), 2), dtype=np.int64)
        for k, t in enumerate(self.terms):
            s = set(t.support)
            if rule == "seam":
                a[k] = [s <= self.sd.minus[0].sites, s <= self.sd.minus[1].sites]
            elif s & sigma:
                a[k] = [1, 1]
        self.twist_indicator = a
        # local half-torus charges per term: (2, 2^k) integer arrays
        self._qloc = [np.stack([self.charges.local_charge(t.support, X.sites) for X in self.halves])
                      for t in self.terms]

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    # angles -------------------------------------------------------------
    def theta_pair(self, plus, minus) -> np.ndarray:
        return self.twist_indicator * (_vec(plus) + _vec(minus))[None, :] - _vec(minus)[None, :]

    def theta_twist(self, phi) -> np.ndarray:
        return self.twist_indicator * _vec(phi)[None, :]

    def theta_uniform(self, phi) -> np.ndarray:
        return np.broadcast_to(_vec(phi), (self.n_terms, 2)).copy()

    # symbolic operators -------------------------------------------------
    def _phase(self, k: int, theta) -> np.ndarray:
        q = self._qloc[k]
        ph = np.exp(1j * (theta[0] * q[0] + theta[1] * q[1]))
        return ph[:, None] * ph.conj()[None, :]

    def _dq(self, k: int, dtheta) -> np.ndarray:
        q = self._qloc[k]
        w = dtheta[0] * q[0] + dtheta[1] * q[1]
        return 1j * (w[:, None] - w[None, :])

    def terms_at(self, theta: np.ndarray, mask=None) -> OperatorSum:
        out = []
        for k, t in enumerate(self.terms):
            if mask is not None and not mask[k]:
                continue
            out.append(t.with_matrix(t.matrix * self._phase(k, theta[k])))
        return self.H.replace(out)

    def dterms_at(self, theta: np.ndarray, dtheta: np.ndarray, mask=None, tol: float = 0.0) -> OperatorSum:
        out = []
        for k, t in enumerate(self.terms):
            if mask is not None and not mask[k]:
                continue
            m = t.matrix * self._phase(k, theta[k]) * self._dq(k, dtheta[k])
            if np.abs(m).max(initial=0.0) > tol:
                out.append(t.with_matrix(m))
        return self.H.replace(out)

    def mask_inside(self, X) -> np.ndarray:
        X = set(X)
        return np.array([set(t.support) <= X for t in self.terms])

    # named families -----------------------------------------------------
    def twist(self, phi) -> OperatorSum:
        return self.terms_at(self.theta_twist(phi))

    def twist_antitwist(self, plus, minus) -> OperatorSum:
        return self.terms_at(self.theta_pair(plus, minus))

    def antitwist(self, phi) -> OperatorSum:
        """``H(phi, -phi) = U(phi)* H U(phi)``."""
        return self.terms_at(self.theta_uniform(phi))

    def twist_derivative(self, phi, j: int, mask=None) -> OperatorSum:
        d = np.zeros((self.n_terms, 2))
        d[:, j - 1] = self.twist_indicator[:, j - 1]
        return self.dterms_at(self.theta_twist(phi), d, mask, tol=0.0).nonzero()

    def antitwist_derivative(self, phi, j: int, mask=None) -> OperatorSum:
        d = np.zeros((self.n_terms, 2))
        d[:, j - 1] = 1.0
        return self.dterms_at(self.theta_uniform(phi), d, mask).nonzero()


def twist_hamiltonian(model: Model, phi, rule: str = "seam") -> OperatorSum:
    return FluxFamily(model, rule=rule).twist(phi)


def twist_antitwist(model: Model, pair: FluxPair, rule: str = "seam") -> OperatorSum:
    return FluxFamily(model, rule=rule).twist_antitwist(pair.plus, pair.minus)


def flux_derivative(fam: FluxFamily, phi, j: int) -> OperatorSum:
    """``d H~(phi) / d phi_j`` as a term list."""
    if j not in (1, 2):
        raise ValueError("direction must be 1 or 2")
    return fam.twist_derivative(phi, j)


def restricted_flux_derivative(fam: FluxFamily, phi, j: int, X, line: str = "twist") -> OperatorSum:
    """Derivative of the sum of the terms supported inside ``X``.

    ``line="twist"`` differentiates ``H~_X(phi)``; ``line="antitwist"``
    differentiates ``H_X(phi, -phi)``.  The two agree whenever every term inside
    ``X`` carries both twist indicators (e.g. ``X`` a small fattening of the corner).
    """
    mask = fam.mask_inside(X)
    if line == "twist":
        return fam.twist_derivative(phi, j, mask)
    return fam.antitwist_derivative(phi, j, mask)


def finite_difference_terms(fam: FluxFamily, phi, j: int, h: float = 1e-5) -> OperatorSum:
    e = np.zeros(2)
    e[j - 1] = h
    p, m = fam.twist(_vec(phi) + e), fam.twist(_vec(phi) - e)
    return fam.H.replace(a.with_matrix((a.matrix - b.matrix) / (2 * h)) for a, b in zip(p.terms, m.terms))


def term_support_union(H: OperatorSum, tol: float = 1e-14) -> frozenset:
    return frozenset(s for t in H.terms if not t.is_zero(tol) for s in t.support)


def term_difference(A: OperatorSum, B: OperatorSum) -> OperatorSum:
    """Term-wise ``A - B`` for two term lists with identical supports."""
    if len(A.terms) != len(B.terms):
        raise ValueError("term lists differ in length")
    out = []
    for a, b in zip(A.terms, B.terms):
        if a.support != b.support:
            raise ValueError("term supports differ")
        out.append(a.with_matrix(a.matrix - b.matrix))
    return A.replace(out)


# --------------------------------------------------------------------------
# gauge distribution of the twist


@dataclass
class GaugeRemainder:
    terms: list
    norms: list
    residual: float
    R: int

    @property
    def max_term_norm(self) -> float:
        return max(self.norms, default=0.0)

    def max_diam(self, g: TorusGeometry) -> int:
        return max((diam(g, t.support) for t in self.terms), default=0)


def gauge_function(g: TorusGeometry, phi) -> np.ndarray:
    """``alpha(x) = (1 - x2/L2) phi1 + (1 - x1/L1) phi2`` per site.

    Each ``alpha_j`` jumps by ``phi_j`` (up to the uniform slope) exactly at the
    minus seam of ``X_j``, where it compensates the twist.
    """
    phi = _vec(phi)
    xy = g.xy
    return (1 - xy[:, 1] / g.L2) * phi[0] + (1 - xy[:, 0] / g.L1) * phi[1]


def gauge_distribute(fam: FluxFamily, phi, sector: int | None = None, tol: float = 1e-12) -> GaugeRemainder:
    """Spread the twist ``H~(phi)`` uniformly over the torus with ``U_alpha``.

    Returns the local remainder terms ``W(X) = U_alpha Phi~(X) U_alpha* - Phi(X)``
    and the residual of the operator identity ``U_alpha H~ U_alpha* = H + sum W``
    evaluated with a global diagonal conjugation in one charge sector.
    """
    g = fam.geometry
    alpha = gauge_function(g, phi)
    Htw = fam.twist(phi)
    W = []
    for t_tw, t0 in zip(Htw.terms, fam.terms):
        d = fam.charges.values[list(t0.support)]
        # local alpha.Q per local configuration
        k = len(t0.support)
        loc = np.arange(2**k)
        aq = np.zeros(2**k)
        for i, s in enumerate(t0.support):
            aq += alpha[s] * d[i][(loc >> (k - 1 - i)) & 1]
        ph = np.exp(-1j * aq)
        conj = ph[:, None] * t_tw.matrix * ph.conj()[None, :]
        W.append(t0.with_matrix(conj - t0.matrix))
    if sector is None:
        sector = max(1, min(2, g.n_sites // 2))
    basis = SectorBasis(fam.charges, sector)
    aq_state = basis.site_charges() @ alpha
    lhs = materialize(Htw, basis).matrix
    D = sp.diags(np.exp(-1j * aq_state))
    lhs = D @ lhs @ D.conj()
    rhs = materialize(list(fam.terms) + W, basis).matrix
    diff = (lhs - rhs).tocsr()
    residual = float(op_norm(diff.toarray())) if diff.shape[0] <= 4000 else float(abs(diff).max())
    norms = [float(np.linalg.norm(w.matrix, 2)) for w in W]
    rem = GaugeRemainder(W, norms, residual, fam.R)
    if residual > tol:
        raise ConsistencyError(f"gauge identity residual {residual:.2e} above {tol:.0e}")
    return rem


# --------------------------------------------------------------------------
# materialized families (fast re-materialization on flux grids)


class SectorFamily:
    """Sparse sector matrices of a flux family, re-phased without rebuilding.

    ``kind`` selects the one-parameter-pair family ``phi -> H``:

    * ``"twist"``: ``H~(phi)``;
    * ``"antitwist"``: ``H(phi, -phi)``;
    * ``"pair"``: ``H(phi+, phi-)``, called with ``matrix_pair``.

    ``mask`` keeps only a subset of the terms (for restricted Hamiltonians).
    """

    def __init__(self, fam: FluxFamily, basis: SectorBasis, kind: str = "twist", mask=None):
        if kind not in ("twist", "antitwist", "pair"):
            raise ValueError(f"unknown family kind {kind!r}")
        self.fam = fam
        self.basis = basis
        self.kind = kind
        self.dim = basis.dim
        rows, cols, vals, tid = [], [], [], []
        for k, t in enumerate(fam.terms):
            if mask is not None and not mask[k]:
                continue
            r, c, v = _term_entries(t, basis)
            for rr, cc, vv in zip(r, c, v):
                rows.append(rr)
                cols.append(cc)
                vals.append(vv)
                tid.append(np.full(len(rr), k))
        cat = (lambda a, dt: np.concatenate(a) if a else np.zeros(0, dtype=dt))
        self.rows, self.cols = cat(rows, np.int64), cat(cols, np.int64)
        self.vals, self.tid = cat(vals, complex), cat(tid, np.int64)
        qs = np.stack([basis.region_charge(X.sites) for X in fam.halves], axis=1)
        self.dq = (qs[self.rows] - qs[self.cols]).astype(float)  # (nnz, 2)

    def _build(self, theta: np.ndarray, dtheta: np.ndarray | None = None) -> sp.csr_matrix:
        th = theta[self.tid]
        v = self.vals * np.exp(1j * (th * self.dq).sum(axis=1))
        if dtheta is not None:
            v = v * 1j * (dtheta[self.tid] * self.dq).sum(axis=1)
        M = sp.csr_matrix((v, (self.rows, self.cols)), shape=(self.dim, self.dim))
        M.sum_duplicates()
        return M

    def theta(self, phi) -> np.ndarray:
        if self.kind == "twist":
            return self.fam.theta_twist(phi)
        if self.kind == "antitwist":
            return self.fam.theta_uniform(phi)
        raise ValueError("pair family needs matrix_pair")

    def dtheta(self, j: int) -> np.ndarray:
        d = np.zeros((self.fam.n_terms, 2))
        d[:, j - 1] = self.fam.twist_indicator[:, j - 1] if self.kind == "twist" else 1.0
        return d

    def matrix(self, phi) -> sp.csr_matrix:
        return self._build(self.theta(phi))

    def dmatrix(self, phi, j: int) -> sp.csr_matrix:
        return self._build(self.theta(phi), self.dtheta(j))

    def matrix_pair(self, plus, minus) -> sp.csr_matrix:
        return self._build(self.fam.theta_pair(plus, minus))

    def matrix_theta(self, theta, dtheta=None) -> sp.csr_matrix:
        return self._build(theta, dtheta)

    def phase_diagonal(self, phi) -> np.ndarray:
        """Diagonal of ``exp(i <phi, Q>)`` on the basis (``U(phi)*`` in the sector)."""
        phi = _vec(phi)
        qs = np.stack([self.basis.region_charge(X.sites) for X in self.fam.halves], axis=1)
        return np.exp(1j * qs @ phi)


class FluxPath:
    """``s -> H(theta(s))`` with ``theta(s) = theta0 + s * dtheta`` term-wise."""

    def __init__(self, family: SectorFamily, theta0: np.ndarray, dtheta: np.ndarray):
        self.family = family
        self.theta0 = theta0
        self.dtheta_ = dtheta

    @classmethod
    def antitwist_to_twist(cls, family: SectorFamily, phi) -> "FluxPath":
        """``s -> H(phi, (s - 1) phi)``: ``U(phi)* H U(phi)`` at ``s = 0``, the twist ``H~(phi)`` at ``s = 1``."""
        fam = family.fam
        a = fam.twist_indicator * _vec(phi)[None, :]
        u = fam.theta_uniform(phi)
        # theta(s) = a (s phi) - (s - 1) phi = phi + s (a phi - phi)
        return cls(family, u, a - u)

    def matrix(self, s: float) -> sp.csr_matrix:
        return self.family.matrix_theta(self.theta0 + s * self.dtheta_)

    def dmatrix(self, s: float) -> sp.csr_matrix:
        return self.family.matrix_theta(self.theta0 + s * self.dtheta_, self.dtheta_)


class BlockFamily:
    """Direct sum of sector families (e.g. to see excitations in neighbouring sectors)."""

    def __init__(self, families: Sequence[SectorFamily]):
        self.families = list(families)
        self.dim = sum(f.dim for f in self.families)

    def matrix(self, phi) -> sp.csr_matrix:
        return sp.block_diag([f.matrix(phi) for f in self.families], format="csr")

    def dmatrix(self, phi, j: int) -> sp.csr_matrix:
        return sp.block_diag([f.dmatrix(phi, j) for f in self.families], format="csr")
