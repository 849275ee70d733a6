"""Locality of the Heisenberg dynamics: light cones, evolution differences, localization.

All three experiments work with charge-conserving observables, so the
evolution can be carried out sector by sector.  Partial traces need the full
tensor space, which is assembled from the sector blocks (dense, at most
``2^14`` states).  Use spin models here: the Jordan-Wigner representation of
fermions is not local under partial traces.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss

from .errors import DenseLimitError, FitUndeterminedError
from .geometry import TorusGeometry, fatten
from .operators import (
    DENSE_LIMIT,
    ChargeSpec,
    DenseOperator,
    LocalTerm,
    Propagator,
    SectorBasis,
    extend_matrix,
    materialize,
    op_norm,
    partial_trace,
)

CONE_HEADER = ("t", "d", "norm")
N_OP = np.diag([0.0, 1.0])


def geometric_times(k_max: int = 5, t0: float = 0.125) -> np.ndarray:
    return t0 * 2.0 ** np.arange(k_max + 1)


def site_operator(basis: SectorBasis, x: int, m: np.ndarray = N_OP, fermionic: bool = False) -> np.ndarray:
    """Dense sector matrix of a single-site operator."""
    return materialize([LocalTerm((x,), m, fermionic)], basis).dense()


# --------------------------------------------------------------------------
# light cone


@dataclass
class ConeSample:
    t: float
    d: int
    norm: float
    inside: bool = False


@dataclass
class ConeFit:
    v: float
    a: float
    C: float
    residual: float
    n_used: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ConeProfile:
    samples: list
    fit: ConeFit | None
    bound: float  # 2 ||O_X|| ||O_Y||

    def norm_at(self, t: float, d: int) -> float:
        for s in self.samples:
            if np.isclose(s.t, t) and s.d == d:
                return s.norm
        raise KeyError((t, d))

    def decay_slope(self, t: float) -> float:
        """Least-squares slope of ``log norm`` against ``d`` at fixed ``t``."""
        pts = [(s.d, s.norm) for s in self.samples if np.isclose(s.t, t) and s.norm > 0]
        if len(pts) < 2:
            raise FitUndeterminedError("need two nonzero samples for a slope")
        d, n = np.array(pts).T
        return float(np.polyfit(d, np.log(n), 1)[0])

    def n_inside(self) -> int:
        return sum(s.inside for s in self.samples)

    def within_bound(self) -> bool:
        return all(s.norm <= self.bound * (1 + 1e-9) for s in self.samples)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CONE_HEADER)
            for s in self.samples:
                w.writerow([repr(float(s.t)), s.d, repr(float(s.norm))])


def fit_cone(samples, floor: float = 1e-13) -> ConeFit:
    """Fit ``log n = log C - a d + a v t`` to samples with ``t > 0`` above the noise floor."""
    use = [s for s in samples if s.t > 0 and s.norm > floor]
    if len(use) < 3 or len({s.d for s in use}) < 2 or len({s.t for s in use}) < 2:
        raise FitUndeterminedError("not enough informative samples for a cone fit")
    A = np.array([[1.0, s.d, s.t] for s in use])
    y = np.log([s.norm for s in use])
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    a = -coef[1]
    if a <= 0:
        raise FitUndeterminedError("no decay in distance; choose larger separations")
    v = coef[2] / a
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return ConeFit(float(v), float(a), float(np.exp(coef[0])), resid, len(use))


def lr_cone(H, O_X: np.ndarray, O_Y: dict, times, fit: bool = True) -> ConeProfile:
    """``||[tau_t(O_X), O_Y(d)]||`` on a ``(t, d)`` grid; ``O_Y`` maps distance to operator."""
    prop = Propagator(H)
    nx = op_norm(O_X)
    bound = 2 * nx * max(op_norm(o) for o in O_Y.values())
    samples = []
    for t in times:
        Ot = prop.evolve(O_X, t)
        for d, Oy in sorted(O_Y.items()):
            Oy = Oy.toarray() if sp.issparse(Oy) else Oy
            samples.append(ConeSample(float(t), int(d), op_norm(Ot @ Oy - Oy @ Ot)))
    cfit = None
    if fit:
        cfit = fit_cone(samples)
        for s in samples:
            s.inside = s.d < cfit.v * s.t
        if all(s.inside for s in samples if s.t > 0):
            raise FitUndeterminedError("all samples inside the cone; choose larger separations")
    return ConeProfile(samples, cfit, bound)


def cone_along_axis(H, basis: SectorBasis, g: TorusGeometry, origin=(0, 0), axis: int = 0,
                    times=None, fit: bool = True) -> ConeProfile:
    """Charge-density cone between ``origin`` and sites displaced along one axis."""
    times = geometric_times() if times is None else times
    x = g.site(origin)
    O_X = site_operator(basis, x)
    O_Y = {}
    for d in range(1, g.shape[axis] // 2 + 1):
        y = list(origin)
        y[axis] += d
        O_Y[d] = site_operator(basis, g.site(tuple(y)))
    return lr_cone(H, O_X, O_Y, times, fit)


# --------------------------------------------------------------------------
# evolution difference


@dataclass
class EvolutionDifference:
    value: float
    duhamel: float | None = None  # norm of the Duhamel integral (cross-check of the value)


def evolution_difference(H1, H2, O: np.ndarray, t: float, duhamel: bool = False,
                         nodes: int = 24) -> EvolutionDifference:
    """``||tau_t^{H1}(O) - tau_t^{H2}(O)||``, optionally with the Duhamel representation

        tau_t^{H1}(O) - tau_t^{H2}(O) = int_0^t tau_s^{H1}(i [H1 - H2, tau_{t-s}^{H2}(O)]) ds.
    """
    p1, p2 = Propagator(H1), Propagator(H2)
    diff = p1.evolve(O, t) - p2.evolve(O, t)
    val = op_norm(diff)
    duh = None
    if duhamel:
        D = (H1 - H2)
        D = D.toarray() if sp.issparse(D) else np.asarray(D)
        x, w = leggauss(nodes)
        s_k, w_k = 0.5 * t * (x + 1), 0.5 * t * w
        acc = np.zeros_like(diff)
        for s, ws in zip(s_k, w_k):
            inner = p2.evolve(O, t - s)
            acc += ws * p1.evolve(1j * (D @ inner - inner @ D), s)
        duh = op_norm(acc - diff)
    return EvolutionDifference(val, duh)


# --------------------------------------------------------------------------
# localization by partial trace


class FullSpaceEvolution:
    """Heisenberg evolution of charge-conserving operators on the full tensor space.

    ``matrix_of(basis)`` returns the (sparse) Hamiltonian block of a sector.
    """

    def __init__(self, charges: ChargeSpec, matrix_of):
        n = charges.n_sites
        if 2**n > DENSE_LIMIT:
            raise DenseLimitError(f"full space of {n} sites exceeds {DENSE_LIMIT}; shrink the geometry")
        self.n = n
        vals = charges.values
        lo, hi = int(vals.min(axis=1).sum()), int(vals.max(axis=1).sum())
        self.blocks = []
        for N in range(lo, hi + 1):
            basis = SectorBasis(charges, N)
            self.blocks.append((basis.configs.astype(np.int64), Propagator(matrix_of(basis))))

    def evolve(self, O: np.ndarray, t: float) -> np.ndarray:
        out = np.zeros_like(O, dtype=complex)
        for idx, prop in self.blocks:
            out[np.ix_(idx, idx)] = prop.evolve(O[np.ix_(idx, idx)], t)
        return out

    def block_norm(self, A: np.ndarray) -> float:
        """Operator norm of a charge-conserving full-space matrix, block by block."""
        return max(op_norm(A[np.ix_(idx, idx)]) for idx, _ in self.blocks)


def localization_error(evo: FullSpaceEvolution, g: TorusGeometry, O_X: DenseOperator, t: float, r: int) -> float:
    """``|| tau_t(O_X) - tr_{complement of X^r}(tau_t(O_X)) ||``."""
    n = g.n_sites
    full = extend_matrix(O_X.matrix, O_X.sites, range(n))
    Ot = evo.evolve(full, t)
    Xr = fatten(g, O_X.sites, r).sorted()
    outside = [s for s in range(n) if s not in set(Xr)]
    if not outside:
        return 0.0
    reduced = partial_trace(DenseOperator(Ot, tuple(range(n))), outside)
    back = extend_matrix(reduced.matrix, reduced.sites, range(n))
    return float(evo.block_norm(Ot - back))


@dataclass
class LocalizationProfile:
    t: float
    radii: list
    errors: list
    region_sizes: list = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        e = self.errors
        return all(b <= a * (1 + 1e-9) + 1e-14 for a, b in zip(e, e[1:]))

    def slope(self) -> float:
        pts = [(r, e) for r, e in zip(self.radii, self.errors) if e > 1e-14]
        if len(pts) < 2:
            raise FitUndeterminedError("need two nonzero errors for a slope")
        r, e = np.array(pts).T
        return float(np.polyfit(r, np.log(e), 1)[0])


def localization_profile(evo: FullSpaceEvolution, g: TorusGeometry, O_X: DenseOperator, t: float,
                         radii) -> LocalizationProfile:
    errs = [localization_error(evo, g, O_X, t, r) for r in radii]
    sizes = [len(fatten(g, O_X.sites, r)) for r in radii]
    return LocalizationProfile(float(t), list(radii), errs, sizes)
