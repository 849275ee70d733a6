"""Single-particle backend for non-interacting fermion models.

The hopping matrix ``h(phi)`` is built from the same bond list and the same
per-term twist indicators as the many-body twist Hamiltonian, so its second
quantization is exactly ``H~(phi)``.  A Slater determinant filling the lowest
``n`` orbitals has curvature ``kappa = i tr(p [d1 p, d2 p])`` with ``p`` the
occupied-orbital projector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curvature import CurvatureMap, constancy_spread, fhs_from_vectors, quantization_error
from .errors import GapError, ModelSpecError
from .flux import FluxFamily, _vec
from .geometry import make_torus
from .models import Model, ModelSpec, build_model
from .parallel import parallel_map
from .spectral import flux_grid

SP_GAP_MIN = 1e-6


class SingleParticleFamily:
    """``phi -> h(phi)`` for the twist (``kind="twist"``) or antitwist family."""

    def __init__(self, model: Model, rule: str = "seam", kind: str = "twist"):
        if not model.fermionic or model.spec.V:
            raise ModelSpecError("the single-particle backend needs a non-interacting fermion model")
        self.model = model
        self.kind = kind
        self.n = model.n_sites
        fam = FluxFamily(model, rule=rule)
        self.fam = fam
        ind = {t.support: fam.twist_indicator[k] for k, t in enumerate(fam.terms)}
        inX = np.stack([X.mask for X in fam.halves], axis=1).astype(float)  # (n, 2)
        b = model.bonds
        self.bx = np.array([bd.x for bd in b])
        self.by = np.array([bd.y for bd in b])
        self.amp = np.array([bd.amp for bd in b])
        self.a = np.array([ind[(min(bd.x, bd.y), max(bd.x, bd.y))] for bd in b], dtype=float)
        self.dq = inX[self.by] - inX[self.bx]
        self.onsite = np.asarray(model.onsite, dtype=float)

    def _theta(self, phi) -> np.ndarray:
        phi = _vec(phi)
        return self.a * phi[None, :] if self.kind == "twist" else np.broadcast_to(phi, self.a.shape)

    def _assemble(self, vals: np.ndarray, diag: np.ndarray | None) -> np.ndarray:
        h = np.zeros((self.n, self.n), dtype=complex)
        np.add.at(h, (self.by, self.bx), vals)
        h = h + h.conj().T
        if diag is not None:
            h[np.diag_indices(self.n)] += diag
        return h

    def matrix(self, phi) -> np.ndarray:
        ph = np.exp(1j * (self._theta(phi) * self.dq).sum(axis=1))
        return self._assemble(self.amp * ph, self.onsite)

    def dmatrix(self, phi, j: int) -> np.ndarray:
        ph = np.exp(1j * (self._theta(phi) * self.dq).sum(axis=1))
        w = self.a[:, j - 1] if self.kind == "twist" else 1.0
        return self._assemble(self.amp * ph * 1j * w * self.dq[:, j - 1], None)


def sp_build(model: Model, phi, rule: str = "seam") -> np.ndarray:
    return SingleParticleFamily(model, rule).matrix(phi)


def _occupied(h: np.ndarray, n_occ: int):
    E, U = np.linalg.eigh(h)
    if 0 < n_occ < len(E):
        gap = E[n_occ] - E[n_occ - 1]
        if gap < SP_GAP_MIN:
            raise GapError(f"single-particle gap {gap:.2e} closes at filling {n_occ}")
    else:
        gap = np.inf
    return E, U, gap


def sp_kappa(spf: SingleParticleFamily, phi, n_occ: int) -> float:
    """Slater-determinant curvature from single-particle perturbation theory."""
    E, U, _ = _occupied(spf.matrix(phi), n_occ)
    o, u = slice(0, n_occ), slice(n_occ, None)
    M1 = U.conj().T @ spf.dmatrix(phi, 1) @ U
    M2 = U.conj().T @ spf.dmatrix(phi, 2) @ U
    den = (E[o][:, None] - E[u][None, :]) ** 2
    S = np.sum(M1[o, u] * M2[u, o].T / den)
    return float(-2 * S.imag)


def sp_kappa_fd(spf: SingleParticleFamily, phi, n_occ: int, h: float = 1e-4) -> float:
    """Same curvature with projector derivatives by central differences (independent route)."""
    phi = _vec(phi)

    def proj(p):
        _, U, _ = _occupied(spf.matrix(p), n_occ)
        return U[:, :n_occ] @ U[:, :n_occ].conj().T

    P = proj(phi)
    d = []
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        d.append((proj(phi + e) - proj(phi - e)) / (2 * h))
    return float((1j * np.trace(P @ (d[0] @ d[1] - d[1] @ d[0]))).real)


def sp_gap(spf: SingleParticleFamily, phi, n_occ: int) -> float:
    E = np.linalg.eigvalsh(spf.matrix(phi))
    return float(E[n_occ] - E[n_occ - 1])


def sp_curvature_map(spf: SingleParticleFamily, n_occ: int, N: int = 24, offset: float = 0.0,
                     error_bars: bool = True, threads: int | None = None) -> CurvatureMap:
    phis = flux_grid(N, offset)

    def one(phi):
        E, U, gap = _occupied(spf.matrix(phi), n_occ)
        k = sp_kappa(spf, phi, n_occ)
        kfd = sp_kappa_fd(spf, phi, n_occ) if error_bars else np.nan
        return k, gap, kfd

    out = parallel_map(one, phis.reshape(-1, 2), threads)
    kap = np.array([o[0] for o in out]).reshape(N, N)
    gap = np.array([o[1] for o in out]).reshape(N, N)
    kfd = np.array([o[2] for o in out]).reshape(N, N)
    meta = {"n_occ": n_occ, "L": spf.model.geometry.shape}
    if error_bars:
        meta["method_error"] = float(np.abs(kap - kfd).max())
    return CurvatureMap(phis, kap, gap, "sp-perturbation", backend="free-fermion", meta=meta)


def sp_frames(spf: SingleParticleFamily, n_occ: int, N: int, threads: int | None = None):
    phis = flux_grid(N).reshape(-1, 2)

    def one(phi):
        _, U, _ = _occupied(spf.matrix(phi), n_occ)
        return U[:, :n_occ]

    flat = parallel_map(one, phis, threads)
    return [flat[i * N:(i + 1) * N] for i in range(N)]


def sp_chern(spf: SingleParticleFamily, n_occ: int, N: int = 24, threads: int | None = None):
    return fhs_from_vectors(sp_frames(spf, n_occ, N, threads))


def many_body_spectrum(h: np.ndarray, N: int, k: int | None = None) -> np.ndarray:
    """Sorted sums of ``N`` distinct single-particle energies (small systems only)."""
    from itertools import combinations

    E = np.linalg.eigvalsh(h)
    sums = np.sort([sum(c) for c in combinations(E, N)])
    return sums if k is None else sums[:k]


@dataclass
class ScalingRow:
    L: int
    chern: int
    chern_2N: int
    spread: float
    qerror: float
    method_error: float
    n0: int | None
    kappa0: float
    min_gap: float
    seconds: float


@dataclass
class ScalingReport:
    rows: list
    p: int
    q: int
    filling: float
    N: int
    maps: dict = field(default_factory=dict, repr=False)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_json(self) -> dict:
        return {"p": self.p, "q": self.q, "filling": self.filling, "grid": self.N,
                "rows": [dict(r.__dict__) for r in self.rows]}


def sp_scaling(L_values, p: int = 1, q: int = 4, filling: float = 0.25, N: int = 24, t: float = 1.0,
               threads: int | None = None, refine: bool = True) -> ScalingReport:
    """Curvature maps, spreads, quantization errors and plaquette Chern numbers vs ``L``."""
    import time

    rows, maps = [], {}
    for L in L_values:
        t0 = time.perf_counter()
        spec = ModelSpec("hofstadter-fermion", p=p, q=q, t=t, L=L)
        model = build_model(spec, make_torus(L, L))
        n_occ = int(round(filling * L * L))
        if abs(n_occ - filling * L * L) > 1e-9:
            raise ModelSpecError(f"filling {filling} is not commensurate with L={L}")
        spf = SingleParticleFamily(model)
        cmap = sp_curvature_map(spf, n_occ, N, threads=threads)
        c1 = fhs_from_vectors(sp_frames(spf, n_occ, N, threads))
        c2 = fhs_from_vectors(sp_frames(spf, n_occ, 2 * N, threads)) if refine else c1
        qe = quantization_error(cmap)
        k0 = sp_kappa(spf, (0.0, 0.0), n_occ)
        rows.append(ScalingRow(L, c1.n, c2.n, constancy_spread(cmap), qe.max_error,
                               cmap.meta["method_error"], qe.n0, k0, float(cmap.gap.min()),
                               time.perf_counter() - t0))
        maps[L] = cmap
    return ScalingReport(rows, p, q, filling, N, maps)
