"""Adiabatic curvature over the flux torus, Chern numbers and constancy diagnostics.

Normalization: ``kappa(phi) = i Tr P [d1 P, d2 P]`` is the Berry curvature of
the ground-state bundle, so ``int kappa = 2 pi n`` over ``[0, 2 pi]^2`` and a
constant curvature equals ``n / (2 pi)``.  The quantization error of a single
sample is therefore measured on ``(2 pi)^2 kappa``, the integral the torus
would carry if the curvature were constant:

    qerr(phi) = min_n | 4 pi^2 kappa(phi) - 2 pi n |,   n0 = round(2 pi kappa).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ClusterError, RefineGridError
from .parallel import parallel_map
from .quasiadiabatic import EigenSystem, WeightFunction, generator, kubo_from_generators
from .spectral import (
    degenerate_projector,
    flux_grid,
    ground_state,
    lowest_eigenpairs,
    state_derivative,
)

CURVATURE_HEADER = ("phi1", "phi2", "kappa", "gap", "method")


def kappa_resolvent(family, phi) -> float:
    """``kappa = -2 Im <d1 psi | d2 psi>`` from first-order perturbation theory."""
    H = family.matrix(phi)
    gs = ground_state(H)
    d1 = state_derivative(H, gs, family.dmatrix(phi, 1))
    d2 = state_derivative(H, gs, family.dmatrix(phi, 2))
    z = 1j * (np.vdot(d1, d2) - np.vdot(d2, d1))
    if abs(z.imag) > 1e-10:
        raise ArithmeticError(f"curvature has imaginary part {z.imag:.2e}")
    return float(z.real)


def kappa_kubo(family, phi, W: WeightFunction, q: int = 1, method: str = "eigen") -> float:
    """``kappa = (i/q) Tr(P [K1, K2])`` from the quasi-adiabatic generators."""
    H = family.matrix(phi)
    eig = EigenSystem.of(H)
    if q < len(eig.energies):
        gap = eig.energies[q] - eig.energies[q - 1]
        if gap < W.gamma:
            raise ClusterError(f"gap {gap:.3g} above the lowest {q} levels is below gamma={W.gamma:.3g}")
    K1 = generator(H, family.dmatrix(phi, 1), W, method, eig)
    K2 = generator(H, family.dmatrix(phi, 2), W, method, eig)
    z = kubo_from_generators(K1, K2, eig.vectors[:, :q])
    if abs(z.imag) > 1e-10:
        raise ArithmeticError(f"curvature has imaginary part {z.imag:.2e}")
    return float(z.real)


def fractional_kappa(family, phi, q: int, W: WeightFunction) -> float:
    """Curvature of the normalized state ``P/q`` on a ``q``-dimensional ground cluster."""
    degenerate_projector(family.matrix(phi), q)  # raises on ambiguous clusters
    return kappa_kubo(family, phi, W, q=q)


# --------------------------------------------------------------------------
# curvature maps


@dataclass
class CurvatureMap:
    phis: np.ndarray  # (N, N, 2)
    kappa: np.ndarray  # (N, N)
    gap: np.ndarray  # (N, N)
    method: str
    backend: str = "many-body"
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.kappa.shape[0]

    def rows(self):
        for (i, j), k in np.ndenumerate(self.kappa):
            yield (float(self.phis[i, j, 0]), float(self.phis[i, j, 1]), float(k), float(self.gap[i, j]), self.method)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CURVATURE_HEADER)
            for r in self.rows():
                w.writerow([repr(r[0]), repr(r[1]), repr(r[2]), repr(r[3]), r[4]])

    def summary(self) -> dict:
        q = quantization_error(self)
        return {
            "backend": self.backend,
            "grid": self.N,
            "method": self.method,
            "mean_kappa": float(self.kappa.mean()),
            "spread": constancy_spread(self),
            "max_qerror": q.max_error,
            "n0": q.n0,
            "min_gap": float(self.gap.min()),
        }


def curvature_map(family, N: int = 8, method: str = "resolvent", W: WeightFunction | None = None,
                  offset: float = 0.0, threads: int | None = None) -> CurvatureMap:
    """Sample ``kappa`` and the gap on an ``N x N`` flux grid."""
    phis = flux_grid(N, offset)

    def one(phi):
        E, _, _ = lowest_eigenpairs(family.matrix(phi), 2)
        gap = E[1] - E[0] if len(E) > 1 else np.inf
        if method == "resolvent":
            k = kappa_resolvent(family, phi)
        elif method == "kubo":
            k = kappa_kubo(family, phi, W)
        else:
            raise ValueError(f"unknown method {method!r}")
        return k, gap

    out = parallel_map(one, phis.reshape(-1, 2), threads)
    kap = np.array([o[0] for o in out]).reshape(N, N)
    gap = np.array([o[1] for o in out]).reshape(N, N)
    return CurvatureMap(phis, kap, gap, method)


def constancy_spread(cmap: CurvatureMap) -> float:
    return float(cmap.kappa.max() - cmap.kappa.min())


@dataclass
class QuantizationReport:
    errors: np.ndarray
    n_min: np.ndarray
    n0: int | None
    offending: list

    @property
    def max_error(self) -> float:
        return float(self.errors.max())

    @property
    def n0_constant(self) -> bool:
        return self.n0 is not None


def quantization_error(cmap: CurvatureMap) -> QuantizationReport:
    total = 4 * np.pi**2 * cmap.kappa
    n = np.rint(total / (2 * np.pi)).astype(int)
    err = np.abs(total - 2 * np.pi * n)
    values, counts = np.unique(n, return_counts=True)
    if len(values) == 1:
        return QuantizationReport(err, n, int(values[0]), [])
    major = values[np.argmax(counts)]
    bad = [tuple(cmap.phis[i, j]) for i, j in np.argwhere(n != major)]
    return QuantizationReport(err, n, None, bad)


# --------------------------------------------------------------------------
# plaquette Chern number


@dataclass
class ChernResult:
    n: int
    fluxes: np.ndarray  # (N, N) plaquette Berry fluxes
    admissible: bool
    raw: float
    N: int
    min_link: float = 1.0

    def to_json(self) -> dict:
        return {"chern": self.n, "raw": self.raw, "admissible": self.admissible, "grid": self.N,
                "max_plaquette_flux": float(np.abs(self.fluxes).max()), "min_link": self.min_link}


def _link(a: np.ndarray, b: np.ndarray) -> complex:
    if a.ndim == 1:
        return np.vdot(a, b)
    return np.linalg.det(a.conj().T @ b)


FLUX_MAX = np.pi / 2  # admissible plaquette flux
LINK_MIN = 0.2  # admissible overlap modulus between neighbouring grid points


def fhs_from_vectors(vecs, flux_max: float = FLUX_MAX, link_min: float = LINK_MIN) -> ChernResult:
    """Plaquette Chern number from ground vectors (or orthonormal frames) on a periodic grid.

    ``vecs[i][j]`` belongs to ``phi = 2 pi (i, j) / N``.  The plaquette flux is
    ``-arg`` of the oriented overlap product so that it approximates
    ``kappa`` times the plaquette area.  The sum is an exact integer for any
    grid; it equals the Chern number once the grid resolves the bundle, which
    is judged by small plaquette fluxes and non-degenerate link overlaps.
    """
    N = len(vecs)
    F = np.zeros((N, N))
    links = []
    for i in range(N):
        for j in range(N):
            a = vecs[i][j]
            b = vecs[(i + 1) % N][j]
            c = vecs[(i + 1) % N][(j + 1) % N]
            d = vecs[i][(j + 1) % N]
            u = (_link(a, b), _link(b, c), _link(c, d), _link(d, a))
            links.extend(abs(x) for x in u[:2])
            F[i, j] = -np.angle(u[0] * u[1] * u[2] * u[3])
    raw = float(F.sum() / (2 * np.pi))
    admissible = bool(np.abs(F).max() < flux_max and min(links) > link_min)
    return ChernResult(int(np.rint(raw)), F, admissible, raw, N, float(min(links)))


def ground_frames(family, N: int, q: int = 1, threads: int | None = None):
    phis = flux_grid(N).reshape(-1, 2)

    def one(phi):
        H = family.matrix(phi)
        if q == 1:
            return ground_state(H).vector
        return degenerate_projector(H, q).vectors

    flat = parallel_map(one, phis, threads)
    return [flat[i * N:(i + 1) * N] for i in range(N)]


def chern_fhs(family, N: int = 8, q: int = 1, auto_refine: bool = True, max_N: int = 96,
              threads: int | None = None) -> ChernResult:
    while True:
        res = fhs_from_vectors(ground_frames(family, N, q, threads))
        if res.admissible:
            if abs(res.raw - res.n) > 1e-9:
                raise ArithmeticError(f"plaquette sum {res.raw} not integral")
            return res
        if not auto_refine or 2 * N > max_N:
            i, j = np.unravel_index(np.argmax(np.abs(res.fluxes)), res.fluxes.shape)
            raise RefineGridError(f"plaquette ({i}, {j}) carries flux {res.fluxes[i, j]:.3f}; refine the grid",
                                  plaquette=(int(i), int(j)))
        N *= 2


# --------------------------------------------------------------------------
# size extrapolation


@dataclass
class ExtrapolationReport:
    L: list
    kappa0: list
    distance: list  # |4 pi^2 kappa(0) - 2 pi n0|
    n0: int
    slope: float | None

    @property
    def decreasing(self) -> bool:
        d = self.distance
        return all(b < a for a, b in zip(d, d[1:]))

    def to_json(self) -> dict:
        return dict(self.__dict__)


def thermodynamic_extrapolation(L_values, kappa0_values) -> ExtrapolationReport:
    """Distance of ``kappa(0)`` from its quantized value vs ``L`` with a log-log slope."""
    if len(L_values) < 3:
        raise ValueError("need at least three system sizes")
    k = np.asarray(kappa0_values, dtype=float)
    n0 = int(np.rint(2 * np.pi * k[-1]))
    d = np.abs(4 * np.pi**2 * k - 2 * np.pi * n0)
    pos = d > 0
    slope = None
    if pos.sum() >= 2:
        slope = float(np.polyfit(np.log(np.asarray(L_values, dtype=float)[pos]), np.log(d[pos]), 1)[0])
    return ExtrapolationReport(list(L_values), k.tolist(), d.tolist(), n0, slope)


__all__ = [
    "CURVATURE_HEADER",
    "ChernResult",
    "CurvatureMap",
    "ExtrapolationReport",
    "QuantizationReport",
    "chern_fhs",
    "constancy_spread",
    "curvature_map",
    "fhs_from_vectors",
    "fractional_kappa",
    "ground_frames",
    "kappa_kubo",
    "kappa_resolvent",
    "quantization_error",
    "thermodynamic_extrapolation",
]
