"""Many-body operators on qubit / spinless-fermion lattices.

Two representations coexist:

* symbolic: :class:`OperatorSum`, a list of :class:`LocalTerm` objects each
  carrying a small dense matrix on its support;
* materialized: :class:`SectorMatrix` (sparse, one charge sector) and
  :class:`DenseOperator` (dense on the full tensor space of a set of sites).

Basis convention.  A configuration of ``n`` sites is an integer whose bit at
position ``n - 1 - i`` is the occupation of site ``i``; site 0 is the most
significant factor of the tensor product.  Local matrices use the same
convention restricted to their (sorted) support.

Fermionic terms are even operators written in the local Fock basis of their
support.  When they are placed into a larger set of sites the Jordan-Wigner
sign for the fixed row-major mode ordering is applied, so supports stay local.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ChargeViolationError, DenseLimitError, ToleranceNotMetError

LOCAL_DIM = 2
DENSE_LIMIT = 2**14
EXACT_NORM_LIMIT = 4000
EIG_EVOLVE_LIMIT = 4000


# --------------------------------------------------------------------------
# charges


@dataclass(frozen=True, eq=False)
class ChargeSpec:
    """Diagonal integer charge ``Q_x`` on every site (``values[x] = diag(Q_x)``)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[1] != LOCAL_DIM:
            raise ValueError("charge values must have shape (n_sites, 2)")
        if not np.allclose(v, np.round(v), atol=1e-12):
            raise ValueError("charge spectrum must be integer")
        object.__setattr__(self, "values", np.round(v).astype(np.int64))

    @classmethod
    def number(cls, n_sites: int) -> "ChargeSpec":
        """Particle number / ``(sigma^z + 1)/2`` on every site."""
        return cls(np.tile([0, 1], (n_sites, 1)))

    @property
    def n_sites(self) -> int:
        return len(self.values)

    def matrix(self, x: int) -> np.ndarray:
        return np.diag(self.values[x].astype(float))

    def local_charge(self, support: Sequence[int], region=None) -> np.ndarray:
        """Total charge in ``support`` (optionally only sites in ``region``) per local config."""
        k = len(support)
        loc = np.arange(LOCAL_DIM**k)
        out = np.zeros(len(loc), dtype=np.int64)
        for i, s in enumerate(support):
            if region is not None and s not in region:
                continue
            occ = (loc >> (k - 1 - i)) & 1
            out += self.values[s][occ]
        return out


# --------------------------------------------------------------------------
# symbolic terms


@dataclass(frozen=True, eq=False)
class LocalTerm:
    """Operator ``matrix`` acting on the sites ``support`` (sorted ascending)."""

    support: tuple
    matrix: np.ndarray
    fermionic: bool = False
    label: str = ""

    def __post_init__(self):
        sup = tuple(int(s) for s in self.support)
        if list(sup) != sorted(set(sup)):
            raise ValueError(f"support must be sorted and unique, got {sup}")
        m = np.asarray(self.matrix, dtype=complex)
        d = LOCAL_DIM ** len(sup)
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} does not match support of size {len(sup)}")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "matrix", m)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.abs(self.matrix - self.matrix.conj().T).max(initial=0.0) < tol)

    def with_matrix(self, m: np.ndarray) -> "LocalTerm":
        return LocalTerm(self.support, m, self.fermionic, self.label)

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2)) if self.matrix.size else 0.0

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.abs(self.matrix).max(initial=0.0) <= tol)

    def extend(self, sites: Sequence[int]) -> "LocalTerm":
        sites = tuple(sorted(set(sites)))
        return LocalTerm(sites, extend_matrix(self.matrix, self.support, sites, self.fermionic),
                         self.fermionic, self.label)


@dataclass(frozen=True)
class OperatorSum:
    """``sum_X Phi(X)``, each term embedded by tensoring with the identity."""

    n_sites: int
    terms: tuple = ()
    geometry: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            if t.support and max(t.support) >= self.n_sites:
                raise ValueError(f"term support {t.support} outside {self.n_sites} sites")

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __add__(self, other: "OperatorSum") -> "OperatorSum":
        return OperatorSum(self.n_sites, self.terms + other.terms, self.geometry)

    def scaled(self, c: complex) -> "OperatorSum":
        return self.replace([t.with_matrix(c * t.matrix) for t in self.terms])

    def replace(self, terms: Iterable[LocalTerm]) -> "OperatorSum":
        return OperatorSum(self.n_sites, tuple(terms), self.geometry)

    def nonzero(self, tol: float = 0.0) -> "OperatorSum":
        return self.replace([t for t in self.terms if not t.is_zero(tol)])

    def support(self) -> frozenset:
        out = set()
        for t in self.terms:
            out.update(t.support)
        return frozenset(out)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return all(t.is_hermitian(tol) for t in self.terms)


# --------------------------------------------------------------------------
# embedding of small matrices into larger site sets


def _fermion_sign(configs: np.ndarray, n: int, support: Sequence[int], rest_mask: int) -> np.ndarray:
    """Jordan-Wigner reorder sign moving ``support`` modes in front of the rest."""
    parity = np.zeros(len(configs), dtype=np.int64)
    rest = configs & rest_mask
    for s in support:
        p = n - 1 - s
        occ = (configs >> p) & 1
        above = rest >> (p + 1)
        parity += occ * np.bitwise_count(above).astype(np.int64)
    return 1 - 2 * (parity & 1)


def extend_matrix(m: np.ndarray, support: Sequence[int], sites: Sequence[int], fermionic: bool = False) -> np.ndarray:
    """Matrix of ``m`` (on ``support``) acting on the ordered set ``sites``."""
    support, sites = list(support), list(sites)
    if not set(support) <= set(sites):
        raise ValueError("target sites must contain the support")
    k, n = len(support), len(sites)
    if LOCAL_DIM**n > DENSE_LIMIT:
        raise DenseLimitError(f"dense dimension 2^{n} exceeds limit {DENSE_LIMIT}")
    if k == n:
        return np.array(m, dtype=complex)
    pos = {s: i for i, s in enumerate(sites)}
    order = [pos[s] for s in support] + [i for i, s in enumerate(sites) if s not in set(support)]
    full = np.kron(m, np.eye(LOCAL_DIM ** (n - k)))
    perm = list(np.argsort(order))
    full = full.reshape([LOCAL_DIM] * (2 * n)).transpose(perm + [n + p for p in perm])
    full = full.reshape(LOCAL_DIM**n, LOCAL_DIM**n)
    if fermionic:
        local_support = [pos[s] for s in support]
        rest_mask = sum(1 << (n - 1 - i) for i in range(n) if i not in set(local_support))
        eps = _fermion_sign(np.arange(LOCAL_DIM**n), n, local_support, rest_mask)
        full = eps[:, None] * full * eps[None, :]
    return full


# --------------------------------------------------------------------------
# dense operators and partial traces


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """Dense matrix on the tensor space of ``sites`` (ascending order)."""

    matrix: np.ndarray
    sites: tuple

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        d = LOCAL_DIM ** len(self.sites)
        if self.matrix.shape != (d, d):
            raise ValueError("matrix dimension does not match sites")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def extend(self, sites: Sequence[int]) -> "DenseOperator":
        sites = tuple(sorted(set(sites)))
        return DenseOperator(extend_matrix(self.matrix, self.sites, sites), sites)

    def __sub__(self, other: "DenseOperator") -> "DenseOperator":
        if self.sites != other.sites:
            allsites = sorted(set(self.sites) | set(other.sites))
            return self.extend(allsites) - other.extend(allsites)
        return DenseOperator(self.matrix - other.matrix, self.sites)


def embed(term: LocalTerm, n_sites, dense_limit: int = DENSE_LIMIT) -> DenseOperator:
    """Trivial extension of ``term`` to all sites (accepts a geometry or a site count)."""
    n = getattr(n_sites, "n_sites", n_sites)
    if LOCAL_DIM**n > dense_limit:
        raise DenseLimitError(f"dense dimension 2^{n} exceeds limit {dense_limit}")
    sites = tuple(range(n))
    return DenseOperator(extend_matrix(term.matrix, term.support, sites, term.fermionic), sites)


def dense_sum(H: OperatorSum, dense_limit: int = DENSE_LIMIT) -> DenseOperator:
    n = H.n_sites
    if LOCAL_DIM**n > dense_limit:
        raise DenseLimitError(f"dense dimension 2^{n} exceeds limit {dense_limit}")
    out = np.zeros((LOCAL_DIM**n,) * 2, dtype=complex)
    for t in H.terms:
        out += extend_matrix(t.matrix, t.support, range(n), t.fermionic)
    return DenseOperator(out, tuple(range(n)))


def partial_trace(A: DenseOperator, X: Iterable[int]) -> DenseOperator:
    """Normalized partial trace ``Tr_X(A) / dim H_X``; returns the operator on the remaining sites."""
    X = set(int(x) for x in X) & set(A.sites)
    k = len(A.sites)
    traced = sorted((A.sites.index(s) for s in X), reverse=True)
    T = A.matrix.reshape([LOCAL_DIM] * (2 * k))
    cur = k
    for p in traced:
        T = np.trace(T, axis1=p, axis2=p + cur)
        cur -= 1
    keep = tuple(s for s in A.sites if s not in X)
    d = LOCAL_DIM ** len(keep)
    return DenseOperator(T.reshape(d, d) / LOCAL_DIM ** len(X), keep)


# --------------------------------------------------------------------------
# charge sectors


class SectorBasis:
    """Configurations of ``n_sites`` qubits with total charge ``sector``.

    ``sector=None`` keeps every configuration (the full tensor space).
    """

    def __init__(self, charges: ChargeSpec, sector: int | None):
        self.charges = charges
        self.n_sites = charges.n_sites
        self.sector = None if sector is None else int(sector)
        if self.sector is None:
            if LOCAL_DIM**self.n_sites > DENSE_LIMIT:
                raise DenseLimitError(f"full space of {self.n_sites} sites exceeds limit {DENSE_LIMIT}")
            self.configs = np.arange(LOCAL_DIM**self.n_sites, dtype=np.uint64)
        else:
            self.configs = self._enumerate()
        self._plans: dict = {}
        if len(self.configs) == 0:
            raise ValueError(f"charge sector {sector} is empty")

    def _enumerate(self) -> np.ndarray:
        vals = self.charges.values
        n = self.n_sites
        lo = np.concatenate([np.cumsum(vals.min(axis=1)[::-1])[::-1], [0]])
        hi = np.concatenate([np.cumsum(vals.max(axis=1)[::-1])[::-1], [0]])
        if n > 64:
            raise DenseLimitError("at most 64 sites are supported")
        one = np.uint64(1)
        cfg = np.zeros(1, dtype=np.uint64)
        tot = np.zeros(1, dtype=np.int64)
        for x in range(n):
            cfg = np.concatenate([cfg << one, (cfg << one) | one])
            tot = np.concatenate([tot + vals[x, 0], tot + vals[x, 1]])
            ok = (tot + lo[x + 1] <= self.sector) & (tot + hi[x + 1] >= self.sector)
            cfg, tot = cfg[ok], tot[ok]
        return np.sort(cfg)

    @property
    def dim(self) -> int:
        return len(self.configs)

    def index(self, cfgs: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.configs, cfgs)
        pos = np.minimum(pos, self.dim - 1)
        return np.where(self.configs[pos] == cfgs, pos, -1)

    def occupations(self) -> np.ndarray:
        n = self.n_sites
        shifts = (n - 1 - np.arange(n)).astype(np.uint64)
        return ((self.configs[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.int64)

    def region_charge(self, region) -> np.ndarray:
        """Charge inside ``region`` for every basis state."""
        idx = sorted(set(region))
        if not idx:
            return np.zeros(self.dim, dtype=np.int64)
        return self.site_charges()[:, idx].sum(axis=1)

    def site_charges(self) -> np.ndarray:
        occ = self.occupations()
        q = self.charges.values
        return q[:, 0][None, :] * (1 - occ) + q[:, 1][None, :] * occ

    def _plan(self, support: tuple, fermionic: bool):
        key = (support, fermionic)
        plan = self._plans.get(key)
        if plan is not None:
            return plan
        n, k = self.n_sites, len(support)
        cfg = self.configs
        u = np.uint64
        smask = u(sum(1 << (n - 1 - s) for s in support))
        rest = cfg & ~smask
        loc_in = np.zeros(self.dim, dtype=np.int64)
        for i, s in enumerate(support):
            loc_in |= ((cfg >> u(n - 1 - s)) & u(1)).astype(np.int64) << (k - 1 - i)
        if fermionic:
            # modes of the rest that precede each support mode in the JW order
            cnt = np.stack([np.bitwise_count(rest >> u(n - s)).astype(np.int64) & 1 if s > 0
                            else np.zeros(self.dim, dtype=np.int64) for s in support], axis=1)
            nin = np.stack([(loc_in >> (k - 1 - i)) & 1 for i in range(k)], axis=1)
        targets, signs = [], []
        for m in range(LOCAL_DIM**k):
            tgt = rest.copy()
            for i, s in enumerate(support):
                if (m >> (k - 1 - i)) & 1:
                    tgt |= u(1 << (n - 1 - s))
            targets.append(self.index(tgt))
            if fermionic:
                mbits = np.array([(m >> (k - 1 - i)) & 1 for i in range(k)])
                par = ((nin + mbits[None, :]) * cnt).sum(axis=1)
                signs.append(1 - 2 * (par & 1))
            else:
                signs.append(None)
        plan = (loc_in, targets, signs)
        self._plans[key] = plan
        return plan


@dataclass(eq=False)
class SectorMatrix:
    """Sparse matrix of an operator restricted to one charge sector."""

    basis: SectorBasis
    matrix: sp.csr_matrix

    @property
    def sector(self) -> int:
        return self.basis.sector

    @property
    def dim(self) -> int:
        return self.basis.dim

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        d = self.matrix - self.matrix.conj().T
        return bool(abs(d).max() < tol) if d.nnz else True


def _term_entries(term: LocalTerm, basis: SectorBasis, scale=None):
    loc_in, targets, signs = basis._plan(term.support, term.fermionic)
    cols = np.arange(basis.dim)
    rows_l, cols_l, vals_l = [], [], []
    M = term.matrix if scale is None else term.matrix * scale
    for m, (tgt, sgn) in enumerate(zip(targets, signs)):
        v = M[m, loc_in]
        nz = v != 0
        if not nz.any():
            continue
        if (tgt[nz] < 0).any():
            raise ChargeViolationError(f"term on support {term.support} ({term.label}) leaves charge sector")
        if sgn is not None:
            v = v * sgn
        rows_l.append(tgt[nz])
        cols_l.append(cols[nz])
        vals_l.append(v[nz])
    return rows_l, cols_l, vals_l


def materialize(H, basis: SectorBasis) -> SectorMatrix:
    """Sparse sector matrix of an :class:`OperatorSum` (or iterable of terms)."""
    terms = H.terms if isinstance(H, OperatorSum) else tuple(H)
    rows, cols, vals = [], [], []
    for t in terms:
        r, c, v = _term_entries(t, basis)
        rows += r
        cols += c
        vals += v
    d = basis.dim
    if rows:
        M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(d, d))
        M = M.tocsr()
        M.sum_duplicates()
    else:
        M = sp.csr_matrix((d, d), dtype=complex)
    return SectorMatrix(basis, M.astype(complex))


# --------------------------------------------------------------------------
# algebra helpers


def _as_array(A):
    if isinstance(A, SectorMatrix):
        return A.matrix
    if isinstance(A, DenseOperator):
        return A.matrix
    return A


def commutator(A, B):
    """``[A, B]`` in the representation of the inputs."""
    if isinstance(A, LocalTerm) and isinstance(B, LocalTerm):
        if A.fermionic != B.fermionic:
            raise ValueError("cannot mix fermionic and spin terms")
        sites = sorted(set(A.support) | set(B.support))
        a = extend_matrix(A.matrix, A.support, sites, A.fermionic)
        b = extend_matrix(B.matrix, B.support, sites, B.fermionic)
        return LocalTerm(tuple(sites), a @ b - b @ a, A.fermionic, f"[{A.label},{B.label}]")
    if isinstance(A, OperatorSum) and isinstance(B, OperatorSum):
        out = []
        for a in A.terms:
            for b in B.terms:
                if set(a.support) & set(b.support):
                    c = commutator(a, b)
                    if not c.is_zero(1e-15):
                        out.append(c)
        return OperatorSum(A.n_sites, tuple(out), A.geometry)
    if isinstance(A, SectorMatrix) and isinstance(B, SectorMatrix):
        return SectorMatrix(A.basis, (A.matrix @ B.matrix - B.matrix @ A.matrix).tocsr())
    if isinstance(A, DenseOperator) and isinstance(B, DenseOperator):
        sites = tuple(sorted(set(A.sites) | set(B.sites)))
        a, b = A.extend(sites).matrix, B.extend(sites).matrix
        return DenseOperator(a @ b - b @ a, sites)
    a, b = _as_array(A), _as_array(B)
    return a @ b - b @ a


@dataclass(frozen=True)
class NormEstimate:
    value: float
    method: str
    converged: bool = True

    @property
    def lower_bound(self) -> bool:
        return not self.converged


def op_norm(A, tol: float = 1e-8, maxiter: int = 2000, return_info: bool = False,
            exact_limit: int = EXACT_NORM_LIMIT):
    """Operator norm (largest singular value).

    Dense inputs up to ``exact_limit`` are handled exactly; larger or
    matrix-free inputs use Lanczos iterations on ``A^dagger A``.  A
    non-converged estimate is flagged as a lower bound.
    """
    A = _as_array(A)
    if isinstance(A, np.ndarray) and A.shape[0] <= exact_limit:
        if A.size == 0:
            est = NormEstimate(0.0, "exact")
        elif A.shape[0] == A.shape[1] and np.allclose(A, A.conj().T, atol=1e-13 * max(1.0, np.abs(A).max())):
            est = NormEstimate(float(np.abs(np.linalg.eigvalsh(A)).max()), "exact-eigh")
        elif A.shape[0] == A.shape[1] and np.allclose(A, -A.conj().T, atol=1e-13 * max(1.0, np.abs(A).max())):
            est = NormEstimate(float(np.abs(np.linalg.eigvalsh(1j * A)).max()), "exact-eigh")
        else:
            est = NormEstimate(float(sla.svdvals(A)[0]), "exact-svd")
        return est if return_info else est.value
    if sp.issparse(A) and A.shape[0] <= 64:
        return op_norm(A.toarray(), tol, maxiter, return_info, exact_limit)
    Aop = spla.aslinearoperator(A)
    n = Aop.shape[1]
    AhA = spla.LinearOperator((n, n), matvec=lambda v: Aop.rmatvec(Aop.matvec(v)), dtype=complex)
    v0 = np.random.default_rng(12345).standard_normal(n) + 0j
    try:
        w = spla.eigsh(AhA, k=1, which="LA", v0=v0, tol=tol, maxiter=maxiter, return_eigenvectors=False)
        est = NormEstimate(float(np.sqrt(max(w[0].real, 0.0))), "lanczos")
    except spla.ArpackNoConvergence as exc:
        w = exc.eigenvalues
        val = float(np.sqrt(max(w[0].real, 0.0))) if len(w) else 0.0
        est = NormEstimate(val, "lanczos", converged=False)
    return est if return_info else est.value


# --------------------------------------------------------------------------
# Heisenberg evolution


def dense_eigh(A: np.ndarray):
    """Full Hermitian eigendecomposition (MRRR driver, about twice as fast as divide and conquer here)."""
    return sla.eigh(A, driver="evr")


class Propagator:
    """Heisenberg evolution ``tau_t(O) = exp(iHt) O exp(-iHt)`` for one Hermitian matrix.

    Dimensions up to ``eig_limit`` use a cached eigendecomposition, larger ones
    Krylov propagation of the operator columns.
    """

    def __init__(self, H, eig_limit: int = EIG_EVOLVE_LIMIT):
        H = _as_array(H)
        self.dim = H.shape[0]
        self.H = H
        if self.dim <= eig_limit:
            dense = H.toarray() if sp.issparse(H) else np.asarray(H)
            self.energies, self.vectors = dense_eigh(dense)
            self.method = "eigh"
        else:
            self.energies = self.vectors = None
            self.H = sp.csr_matrix(H)
            self.method = "krylov"

    def to_eigenbasis(self, O: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ O @ self.vectors

    def from_eigenbasis(self, O: np.ndarray) -> np.ndarray:
        return self.vectors @ O @ self.vectors.conj().T

    def evolve(self, O, t: float) -> np.ndarray:
        O = _as_array(O)
        O = O.toarray() if sp.issparse(O) else np.asarray(O, dtype=complex)
        if t == 0:
            return O.copy()
        if self.method == "eigh":
            Ot = self.to_eigenbasis(O)
            ph = np.exp(1j * self.energies * t)
            return self.from_eigenbasis(ph[:, None] * Ot * ph.conj()[None, :])
        # exp(iHt) O exp(-iHt) = (exp(iHt) (exp(iHt) O)^dagger)^dagger
        A = spla.expm_multiply(1j * t * self.H, O)
        B = spla.expm_multiply(1j * t * self.H, A.conj().T)
        return B.conj().T

    def evolve_vector(self, v: np.ndarray, t: float) -> np.ndarray:
        """``exp(-iHt) v``."""
        if self.method == "eigh":
            c = self.vectors.conj().T @ v
            return self.vectors @ (np.exp(-1j * self.energies * t) * c)
        return spla.expm_multiply(-1j * t * self.H, v)


def heisenberg_apply(H, O, t: float, eig_limit: int = EIG_EVOLVE_LIMIT) -> np.ndarray:
    return Propagator(H, eig_limit).evolve(O, t)


def check_unitary(V: np.ndarray, tol: float = 1e-9) -> None:
    err = np.abs(V.conj().T @ V - np.eye(V.shape[0])).max()
    if err > tol:
        raise ToleranceNotMetError(f"matrix not unitary: {err:.2e}", achieved=err)
