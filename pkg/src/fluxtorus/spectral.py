"""Ground states, gaps, spectral projectors and projector derivatives."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ClusterError, GapError, NearDegeneracyError, ToleranceNotMetError
from .operators import SectorMatrix, dense_eigh
from .parallel import parallel_map

DEGENERACY_TOL = 1e-8
RESOLVENT_GAP_MIN = 1e-6
DENSE_EIG_LIMIT = 1000
_SEED = 20240611


def _matrix(H):
    if isinstance(H, SectorMatrix):
        return H.matrix
    return H


def fix_phase(v: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component real and positive (column-wise)."""
    v = np.array(v, dtype=complex)
    cols = v if v.ndim == 2 else v[:, None]
    idx = np.argmax(np.abs(cols), axis=0)
    ph = cols[idx, np.arange(cols.shape[1])]
    cols /= ph / np.abs(ph)
    return cols if v.ndim == 2 else cols[:, 0]


def lowest_eigenpairs(H, k: int, dense_limit: int = DENSE_EIG_LIMIT):
    """``k`` lowest eigenpairs, ascending; dense below ``dense_limit``, Lanczos above."""
    M = _matrix(H)
    n = M.shape[0]
    if n <= dense_limit or k >= n - 1:
        dense = M.toarray() if sp.issparse(M) else np.asarray(M)
        E, V = dense_eigh(dense)
        return E[:k], V[:, :k], "dense"
    v0 = np.random.default_rng(_SEED).standard_normal(n).astype(complex)
    E, V = spla.eigsh(sp.csr_matrix(M), k=k, which="SA", v0=v0, tol=0, ncv=max(2 * k + 1, 20))
    order = np.argsort(E)
    return E[order], V[:, order], "lanczos"


@dataclass
class GroundStateData:
    energy: float
    gap: float
    vector: np.ndarray
    method: str
    residual: float
    energies: np.ndarray = field(repr=False, default=None)


def ground_state(H, degeneracy_tol: float = DEGENERACY_TOL, dense_limit: int = DENSE_EIG_LIMIT,
                 require_gap: bool = True) -> GroundStateData:
    """Lowest eigenpair, first excitation energy and residual of a Hermitian matrix."""
    M = _matrix(H)
    n = M.shape[0]
    if n == 1:
        e = complex(M.toarray()[0, 0] if sp.issparse(M) else M[0, 0]).real
        return GroundStateData(e, np.inf, np.ones(1, dtype=complex), "dense", 0.0, np.array([e]))
    E, V, method = lowest_eigenpairs(M, 2, dense_limit)
    psi = fix_phase(V[:, 0])
    psi /= np.linalg.norm(psi)
    res = float(np.linalg.norm(M @ psi - E[0] * psi))
    gap = float(E[1] - E[0])
    if res > 1e-9 * max(1.0, abs(E[0])):
        raise ToleranceNotMetError(f"ground-state residual {res:.2e}", achieved=res)
    if require_gap and gap < degeneracy_tol:
        raise NearDegeneracyError(f"ground state degenerate within {gap:.2e}")
    return GroundStateData(float(E[0]), gap, psi, method, res, E)


@dataclass
class GapScan:
    phis: np.ndarray  # (N, N, 2)
    gaps: np.ndarray  # (N, N)
    threshold: float

    @property
    def min_gap(self) -> float:
        return float(self.gaps.min())

    @property
    def flagged(self) -> list:
        idx = np.argwhere(self.gaps < self.threshold)
        return [tuple(self.phis[i, j]) for i, j in idx]

    @property
    def open(self) -> bool:
        return not self.flagged


def flux_grid(N: int, offset: float = 0.0) -> np.ndarray:
    """``(N, N, 2)`` uniform grid on ``[0, 2 pi)^2``; ``offset`` in units of the step."""
    s = 2 * np.pi * (np.arange(N) + offset) / N
    return np.stack(np.meshgrid(s, s, indexing="ij"), axis=-1)


def gap_scan(family, N: int = 8, threshold: float = 1e-3, threads: int | None = None,
             dense_limit: int = DENSE_EIG_LIMIT) -> GapScan:
    """Spectral gap above the ground state at every point of an ``N x N`` flux grid."""
    if N < 4:
        raise ValueError("gap scans need at least a 4x4 grid")
    phis = flux_grid(N)
    pts = phis.reshape(-1, 2)

    def one(phi):
        E, _, _ = lowest_eigenpairs(family.matrix(phi), 2, dense_limit)
        return E[1] - E[0] if len(E) > 1 else np.inf

    gaps = np.array(parallel_map(one, pts, threads)).reshape(N, N)
    return GapScan(phis, gaps, threshold)


# --------------------------------------------------------------------------
# projectors


@dataclass
class ProjectorHandle:
    """Spectral projector onto the lowest ``rank`` eigenvectors."""

    rank: int
    vectors: np.ndarray  # (dim, rank), orthonormal columns
    energies: np.ndarray
    gap: float

    def matrix(self) -> np.ndarray:
        return self.vectors @ self.vectors.conj().T


def degenerate_projector(H, q: int, cluster_tol: float = DEGENERACY_TOL,
                         dense_limit: int = DENSE_EIG_LIMIT) -> ProjectorHandle:
    M = _matrix(H)
    n = M.shape[0]
    if not 1 <= q <= n:
        raise ValueError(f"rank {q} outside 1..{n}")
    E, V, _ = lowest_eigenpairs(M, min(q + 1, n), dense_limit)
    gap = float(E[q] - E[q - 1]) if q < n else np.inf
    if gap < cluster_tol:
        raise ClusterError(f"cluster boundary ambiguous: E_q - E_(q-1) = {gap:.2e}")
    return ProjectorHandle(q, V[:, :q], E[:q], gap)


def state_derivative(H, gs: GroundStateData, dH, gap_min: float = RESOLVENT_GAP_MIN) -> np.ndarray:
    """``d psi = (E0 - H)^{-1} Q dH psi`` with ``Q = 1 - |psi><psi|`` (so ``<psi|d psi> = 0``).

    Solved through the bordered system ``[[H - E0, psi], [psi^dagger, 0]]``,
    which is non-singular when the ground state is simple.
    """
    if gs.gap < gap_min:
        raise GapError(f"gap {gs.gap:.2e} too small for the reduced resolvent")
    M = _matrix(H)
    psi = gs.vector
    b = _matrix(dH) @ psi
    b = b - np.vdot(psi, b) * psi
    n = M.shape[0]
    if n <= DENSE_EIG_LIMIT:
        A = np.zeros((n + 1, n + 1), dtype=complex)
        A[:n, :n] = M.toarray() if sp.issparse(M) else M
        A[:n, :n] -= gs.energy * np.eye(n)
        A[:n, n] = psi
        A[n, :n] = psi.conj()
        x = np.linalg.solve(A, np.concatenate([-b, [0]]))
    else:
        A = sp.bmat([[sp.csr_matrix(M) - gs.energy * sp.identity(n), sp.csr_matrix(psi[:, None])],
                     [sp.csr_matrix(psi.conj()[None, :]), None]], format="csc")
        x = spla.splu(A).solve(np.concatenate([-b, [0]]).astype(complex))
    return x[:n]


def projector_derivative(family, phi, j: int, gs: GroundStateData | None = None) -> np.ndarray:
    """Dense ``d_j P(phi)`` for a non-degenerate ground state."""
    H = family.matrix(phi)
    gs = ground_state(H) if gs is None else gs
    dpsi = state_derivative(H, gs, family.dmatrix(phi, j))
    return np.outer(dpsi, gs.vector.conj()) + np.outer(gs.vector, dpsi.conj())


def projector_fd(family, phi, j: int, h: float = 1e-4) -> np.ndarray:
    """Central finite difference of the ground-state projector."""
    e = np.zeros(2)
    e[j - 1] = h
    phi = np.asarray(phi, dtype=float)
    Pp = ground_state(family.matrix(phi + e)).vector
    Pm = ground_state(family.matrix(phi - e)).vector
    return (np.outer(Pp, Pp.conj()) - np.outer(Pm, Pm.conj())) / (2 * h)


def isospectral_error(A, B, k: int | None = None) -> float:
    """Largest difference of the sorted spectra of two Hermitian matrices."""
    a = _matrix(A)
    b = _matrix(B)
    a = a.toarray() if sp.issparse(a) else a
    b = b.toarray() if sp.issparse(b) else b
    ea, eb = np.linalg.eigvalsh(a), np.linalg.eigvalsh(b)
    if k is not None:
        ea, eb = ea[:k], eb[:k]
    return float(np.abs(ea - eb).max())
