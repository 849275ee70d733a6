"""Quasi-adiabatic generators, spectral flow, corner operators and local approximants.

Weight function
---------------
``W`` is odd and real with Fourier transform (``W^(w) = int W(t) e^{iwt} dt``)

    W^(w) = i (1 - g(w)) / w,

where ``g`` is a smooth even bump with ``g(0) = 1`` supported in ``(-gamma, gamma)``:

    g(w) = exp(a - a / (1 - (w/gamma)^2)).

For a Hamiltonian with gap at least ``gamma`` above a spectral patch with
projector ``P`` this gives the generator of parallel transport,

    K = int W(t) e^{iHt} dH e^{-iHt} dt,      dP = i [K, P],

with eigenbasis matrix elements ``K_nm = W^(E_n - E_m) dH_nm``.  In the time
domain, for ``t > 0``,

    W(t) = 1/2 - (1/pi) int_0^gamma g(w) sin(wt) / w dw,

evaluated by Gauss-Legendre quadrature in frequency.  Because ``g`` has no
plateau the tail decays quickly: with ``a = 8``, ``|W(t)| < 1e-6 max|W|``
beyond ``t = 40/gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp

from .errors import GapError, ToleranceNotMetError
from .geometry import fatten
from .operators import DenseOperator, SectorBasis, dense_eigh, op_norm, partial_trace
from .spectral import RESOLVENT_GAP_MIN, ground_state


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


@dataclass(eq=False)
class WeightFunction:
    gamma: float
    a: float = 8.0
    n_freq: int = 3000
    horizon: float = 100.0  # truncation T = horizon / gamma

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gap parameter gamma must be positive")
        x, w = leggauss(self.n_freq)
        self._om = 0.5 * self.gamma * (x + 1)
        self._wq = 0.5 * self.gamma * w * self.g(self._om) / self._om

    @property
    def t_max(self) -> float:
        return self.horizon / self.gamma

    def g(self, omega) -> np.ndarray:
        x = np.abs(np.asarray(omega, dtype=float)) / self.gamma
        out = np.zeros_like(x)
        inside = x < 1
        out[inside] = np.exp(self.a - self.a / (1 - x[inside] ** 2))
        return out

    def one_minus_g(self, omega) -> np.ndarray:
        x = np.abs(np.asarray(omega, dtype=float)) / self.gamma
        out = np.ones_like(x)
        inside = x < 1
        out[inside] = -np.expm1(self.a - self.a / (1 - x[inside] ** 2))
        return out

    def hat(self, omega) -> np.ndarray:
        """``W^(omega)``; purely imaginary, odd, equal to ``i/omega`` outside the gap."""
        om = np.asarray(omega, dtype=float)
        safe = np.where(om == 0, 1.0, om)
        return np.where(om == 0, 0.0, 1j * self.one_minus_g(om) / safe)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        flat = np.abs(t.ravel())
        out = np.empty(flat.shape)
        for s in range(0, len(flat), 2048):
            blk = flat[s:s + 2048]
            out[s:s + 2048] = 0.5 - np.sin(np.outer(blk, self._om)) @ self._wq / np.pi
        out = np.sign(t.ravel()) * out
        return out.reshape(t.shape)

    @cached_property
    def _grid(self):
        t = np.linspace(0, 1.2 * self.t_max, 24001)[1:]
        return t, self(t)

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self._grid[1]).max())

    @property
    def l1_norm(self) -> float:
        t, w = self._grid
        return float(2 * np.trapezoid(np.abs(w), t))

    def tail(self, t0: float) -> float:
        """``max_{t > t0} |W(t)|`` on the sampling grid."""
        t, w = self._grid
        sel = t > t0
        return float(np.abs(w[sel]).max()) if sel.any() else 0.0

    def samples(self, n: int = 2001) -> tuple[np.ndarray, np.ndarray]:
        """Symmetric sample grid on ``[-T, T]`` (``W(0) = 0`` at the jump)."""
        t = np.linspace(-self.t_max, self.t_max, n)
        return t, self(t)

    def time_factor(self, omega, panels: int | None = None, order: int = 16) -> np.ndarray:
        """``int_{-T}^{T} W(t) e^{i omega t} dt`` by panel Gauss-Legendre quadrature in time."""
        omega = np.asarray(omega, dtype=float)
        T = self.t_max
        wmax = max(float(np.abs(omega).max(initial=0.0)), self.gamma)
        if panels is None:
            panels = int(np.ceil(T * wmax / 2.0)) + 8
        x, w = leggauss(order)
        edges = np.linspace(0, T, panels + 1)
        mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
        tk = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        wk = (half[:, None] * w[None, :]).ravel() * self(tk)
        flat = omega.ravel()
        out = np.empty(flat.shape, dtype=complex)
        for s in range(0, len(flat), 4096):
            blk = flat[s:s + 4096]
            out[s:s + 4096] = 2j * np.sin(np.outer(blk, tk)) @ wk
        return out.reshape(omega.shape)


def make_weight(gamma: float, a: float = 8.0, tail_time: float = 40.0, tail_tol: float = 1e-6) -> WeightFunction:
    W = WeightFunction(gamma, a)
    tail = W.tail(tail_time / gamma)
    if tail >= tail_tol * W.sup_norm:
        raise ToleranceNotMetError(f"weight tail {tail:.1e} beyond t={tail_time}/gamma; enlarge the grid", achieved=tail)
    return W


# --------------------------------------------------------------------------
# generators


@dataclass(eq=False)
class EigenSystem:
    energies: np.ndarray
    vectors: np.ndarray

    @classmethod
    def of(cls, H) -> "EigenSystem":
        E, V = dense_eigh(_dense(H))
        return cls(E, V)

    def to(self, A) -> np.ndarray:
        return self.vectors.conj().T @ _dense(A) @ self.vectors

    def back(self, A) -> np.ndarray:
        return self.vectors @ A @ self.vectors.conj().T

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0]) if len(self.energies) > 1 else np.inf


def generator(H, dH, W: WeightFunction, method: str = "eigen", eig: EigenSystem | None = None,
              basis_out: str = "site") -> np.ndarray:
    """``K = int W(t) tau_t(dH) dt`` as a dense matrix.

    ``method="eigen"`` uses the exact factor ``W^(E_n - E_m)``; ``"quadrature"``
    integrates the Heisenberg-evolved derivative in time over ``[-T, T]``.
    """
    eig = EigenSystem.of(H) if eig is None else eig
    omega = eig.energies[:, None] - eig.energies[None, :]
    if method == "eigen":
        fac = W.hat(omega)
    elif method == "quadrature":
        if len(eig.energies) > 200:
            raise ValueError("time quadrature of K is limited to dimension 200")
        fac = W.time_factor(omega)
    else:
        raise ValueError(f"unknown method {method!r}")
    Kt = fac * eig.to(dH)
    return Kt if basis_out == "eigen" else eig.back(Kt)


def qa_generator(family, phi, j: int, W: WeightFunction, method: str = "eigen",
                 eig: EigenSystem | None = None, check_gap: bool = True) -> np.ndarray:
    H = family.matrix(phi)
    eig = EigenSystem.of(H) if eig is None else eig
    if check_gap and eig.gap < W.gamma:
        raise GapError(f"gap {eig.gap:.3g} below the weight-function gap {W.gamma:.3g}")
    return generator(H, family.dmatrix(phi, j), W, method, eig)


def generator_identity_error(family, phi, j: int, W: WeightFunction) -> float:
    """``|| d_j P - i [K_j, P] ||`` with ``d_j P`` from the reduced resolvent."""
    from .spectral import projector_derivative

    H = family.matrix(phi)
    gs = ground_state(H)
    dP = projector_derivative(family, phi, j, gs)
    K = qa_generator(family, phi, j, W)
    P = np.outer(gs.vector, gs.vector.conj())
    return float(op_norm(dP - 1j * (K @ P - P @ K)))


def kubo_from_generators(K1: np.ndarray, K2: np.ndarray, vectors: np.ndarray) -> complex:
    """``i Tr(P [K1, K2]) / q`` for the projector onto the columns of ``vectors``."""
    C = K1 @ K2 - K2 @ K1
    q = vectors.shape[1]
    return 1j * np.trace(vectors.conj().T @ C @ vectors) / q


# --------------------------------------------------------------------------
# spectral flow


@dataclass
class FlowResult:
    s: np.ndarray
    unitaries: list = field(repr=False)
    errors: np.ndarray = None
    unitarity: np.ndarray = None

    @property
    def final_error(self) -> float:
        return float(self.errors[-1])

    @property
    def max_error(self) -> float:
        return float(self.errors.max())


def spectral_flow(path, W: WeightFunction, s_values=None, rtol: float = 1e-10, atol: float = 1e-12,
                  method: str = "rk45", n_steps: int = 10) -> FlowResult:
    """Integrate ``-i dV/ds = K(s) V`` with ``V(0) = 1`` and compare ``V P(0) V*`` with ``P(s)``.

    ``path`` provides ``matrix(s)`` and ``dmatrix(s)`` (e.g. :class:`fluxtorus.flux.FluxPath`).

    Parameters
    ----------
    method : {"rk45", "rk4"}
        Adaptive Runge-Kutta with ``rtol``/``atol``, or classical RK4 with
        ``n_steps`` equal steps.  RK4 needs ``2 n_steps + 1`` eigendecompositions
        and is the practical choice for sector dimensions in the thousands;
        ``s_values`` are then the step nodes.
    """
    cache = {}

    def eig_at(s):
        key = round(float(s), 14)
        if key not in cache:
            cache[key] = EigenSystem.of(path.matrix(s))
        return cache[key]

    def K(s):
        eig = eig_at(s)
        if eig.gap < W.gamma:
            raise GapError(f"gap {eig.gap:.3g} closes below {W.gamma:.3g} at s={s:.4f}")
        return generator(None, path.dmatrix(s), W, eig=eig)

    if method == "rk45":
        s_values = np.linspace(0, 1, 11) if s_values is None else np.asarray(s_values, dtype=float)
        n = path.matrix(0.0).shape[0]

        def rhs(s, y):
            V = y.reshape(n, n)
            return (1j * K(s) @ V).ravel()

        sol = solve_ivp(rhs, (s_values[0], s_values[-1]), np.eye(n, dtype=complex).ravel(), method="RK45",
                        t_eval=s_values, rtol=rtol, atol=atol)
        if not sol.success:
            raise ToleranceNotMetError(f"flow integration failed: {sol.message}")
        Vs = [sol.y[:, k].reshape(n, n) for k in range(len(s_values))]
    elif method == "rk4":
        s_values = np.linspace(0, 1, n_steps + 1)
        h = 1.0 / n_steps
        V = np.eye(path.matrix(0.0).shape[0], dtype=complex)
        Vs = [V]
        for s in s_values[:-1]:
            Km = K(s + h / 2)
            k1 = 1j * K(s) @ V
            k2 = 1j * Km @ (V + h / 2 * k1)
            k3 = 1j * Km @ (V + h / 2 * k2)
            k4 = 1j * K(s + h) @ (V + h * k3)
            V = V + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            Vs.append(V)
    else:
        raise ValueError(f"unknown method {method!r}")

    psi0 = eig_at(s_values[0]).vectors[:, 0]
    errs, unit = [], []
    for s, V in zip(s_values, Vs):
        psi = eig_at(s).vectors[:, 0]
        moved = V @ psi0
        errs.append(op_norm(np.outer(psi, psi.conj()) - np.outer(moved, moved.conj())))
        unit.append(float(np.abs(V.conj().T @ V - np.eye(len(psi0))).max()))
    return FlowResult(s_values, Vs, np.array(errs), np.array(unit))


# --------------------------------------------------------------------------
# corner operator


@dataclass
class CornerOperator:
    G: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    region: frozenset
    ell: int


def corner_region(fam, ell: int) -> frozenset:
    return fatten(fam.geometry, fam.sd.delta, ell).sites


def corner_operator(fam, basis: SectorBasis, phi, W: WeightFunction, ell: int | None = None,
                    check_gap: bool = True, eig: EigenSystem | None = None) -> CornerOperator:
    """``G = [K1^D, K2^D]`` with ``K_j^D = int W(t) tau_t(d_j H_D(phi)) dt``.

    The dynamics is generated by ``H(phi) = H(phi, -phi)`` and ``D`` is the
    corner fattened by ``ell`` (default ``L // 8``).  The double time integral
    factorizes into the product of the two single integrals, each evaluated
    exactly in the eigenbasis (the full quadrature horizon exceeds the
    light-cone horizon at every size reachable here).
    """
    from .flux import SectorFamily

    ell = min(fam.geometry.shape) // 8 if ell is None else ell
    region = corner_region(fam, ell)
    full = SectorFamily(fam, basis, "antitwist")
    restricted = SectorFamily(fam, basis, "antitwist", mask=fam.mask_inside(region))
    eig = EigenSystem.of(full.matrix(phi)) if eig is None else eig
    if check_gap and eig.gap < W.gamma:
        raise GapError(f"gap {eig.gap:.3g} below the weight-function gap {W.gamma:.3g}")
    K1 = generator(None, restricted.dmatrix(phi, 1), W, eig=eig)
    K2 = generator(None, restricted.dmatrix(phi, 2), W, eig=eig)
    return CornerOperator(K1 @ K2 - K2 @ K1, K1, K2, region, ell)


@dataclass
class CornerReport:
    L: tuple
    phi: tuple
    ell: int
    commutator_norm: float
    corner_error: float  # ||[K1~, K2~] - G|| / ||[K1~, K2~]||
    covariance: float  # ||G(phi) - U* G(0) U||
    anti_hermiticity: float
    kappa_twist: float
    kappa_corner: float
    skipped: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def corner_check(fam, basis: SectorBasis, phi=(0.0, 0.0), W: WeightFunction | None = None,
                 ell: int | None = None) -> CornerReport:
    """Compare the twist curvature commutator with the corner operator at one flux point."""
    from .flux import SectorFamily

    phi = np.asarray(phi, dtype=float)
    tw = SectorFamily(fam, basis, "twist")
    eig = EigenSystem.of(tw.matrix(phi))
    eig_a = EigenSystem.of(SectorFamily(fam, basis, "antitwist").matrix(phi))
    if W is None:
        W = make_weight(0.9 * min(eig.gap, eig_a.gap))
    if eig.gap < W.gamma:
        raise GapError(f"twist gap {eig.gap:.3g} below the weight-function gap {W.gamma:.3g}")
    K1 = generator(None, tw.dmatrix(phi, 1), W, eig=eig)
    K2 = generator(None, tw.dmatrix(phi, 2), W, eig=eig)
    C = K1 @ K2 - K2 @ K1
    corner = corner_operator(fam, basis, phi, W, ell, eig=eig_a)
    corner0 = corner_operator(fam, basis, np.zeros(2), W, ell)
    D = tw.phase_diagonal(phi)  # U(phi)* on the basis
    cov = op_norm(corner.G - D[:, None] * corner0.G * D.conj()[None, :])
    cn = op_norm(C)
    psi = eig.vectors[:, :1]
    kap_t = kubo_from_generators(K1, K2, psi).real
    kap_c = (1j * np.vdot(eig_a.vectors[:, 0], corner.G @ eig_a.vectors[:, 0])).real
    return CornerReport(
        L=fam.geometry.shape,
        phi=tuple(phi),
        ell=corner.ell,
        commutator_norm=cn,
        corner_error=op_norm(C - corner.G) / cn if cn > 0 else 0.0,
        covariance=cov,
        anti_hermiticity=op_norm(corner.G + corner.G.conj().T),
        kappa_twist=float(kap_t),
        kappa_corner=float(kap_c),
        skipped=["partial-trace localization needs the full tensor space (see local_approximant)"],
    )


# --------------------------------------------------------------------------
# local approximant on the full tensor space (spin models)


def reduced_density(psi: np.ndarray, keep, n_sites: int) -> np.ndarray:
    """Reduced density matrix of a full-space vector on the sites ``keep`` (ascending)."""
    keep = sorted(keep)
    rest = [s for s in range(n_sites) if s not in set(keep)]
    T = psi.reshape([2] * n_sites).transpose(keep + rest).reshape(2 ** len(keep), -1)
    return T @ T.conj().T


@dataclass
class FullSpaceCurvature:
    """Twist generators assembled block by block over all charge sectors."""

    C: np.ndarray  # [K1~, K2~] on the full tensor space
    psi: np.ndarray  # full-space ground vector
    kappa: float
    gap: float
    sector: int
    W: WeightFunction | None = None


def full_space_commutator(fam, phi, W: WeightFunction | None = None) -> FullSpaceCurvature:
    """``[K1~, K2~]`` on the full tensor space of a spin model.

    Without ``W`` the weight function is built for ``0.9`` times the full-space gap.
    """
    from .flux import SectorFamily

    n = fam.geometry.n_sites
    if fam.model.fermionic:
        raise ValueError("full-space partial traces are only meaningful for spin models")
    vals = fam.charges.values
    lo, hi = int(vals.min(axis=1).sum()), int(vals.max(axis=1).sum())
    sectors = []
    for N in range(lo, hi + 1):
        basis = SectorBasis(fam.charges, N)
        sf = SectorFamily(fam, basis, "twist")
        sectors.append((N, basis, sf, EigenSystem.of(sf.matrix(phi))))
    lows = sorted((e, N) for N, _, _, eig in sectors for e in eig.energies[:2])
    gap = lows[1][0] - lows[0][0]
    if gap < RESOLVENT_GAP_MIN:
        raise GapError(f"full-space ground state is degenerate (gap {gap:.2e})")
    if W is None:
        W = make_weight(0.9 * gap)
    if gap < W.gamma:
        raise GapError(f"full-space gap {gap:.3g} below the weight-function gap {W.gamma:.3g}")
    C = np.zeros((2**n, 2**n), dtype=complex)
    psi = np.zeros(2**n, dtype=complex)
    for N, basis, sf, eig in sectors:
        K1 = generator(None, sf.dmatrix(phi, 1), W, eig=eig)
        K2 = generator(None, sf.dmatrix(phi, 2), W, eig=eig)
        idx = basis.configs.astype(np.int64)
        C[np.ix_(idx, idx)] = K1 @ K2 - K2 @ K1
        if N == lows[0][1]:
            psi[idx] = eig.vectors[:, 0]
    kappa = (1j * np.vdot(psi, C @ psi)).real
    return FullSpaceCurvature(C, psi, float(kappa), float(gap), int(lows[0][1]), W)


@dataclass
class ApproximantRow:
    ell: int
    region_size: int
    value: float  # i omega(Upsilon_ell)
    error: float  # |value - kappa|


def local_approximant(fam, phi, W: WeightFunction | None = None, ells=None, data: FullSpaceCurvature | None = None):
    """``i omega(tr_{complement}([K1~, K2~]))`` on the fattened corners ``Delta^ell``."""
    g = fam.geometry
    data = full_space_commutator(fam, phi, W) if data is None else data
    n = g.n_sites
    ells = range(0, max(g.shape)) if ells is None else ells
    full = DenseOperator(data.C, tuple(range(n)))
    rows = []
    for ell in ells:
        region = sorted(corner_region(fam, ell))
        outside = [s for s in range(n) if s not in set(region)]
        U = partial_trace(full, outside)
        rho = reduced_density(data.psi, region, n)
        val = (1j * np.trace(rho @ U.matrix)).real
        rows.append(ApproximantRow(ell, len(region), float(val), float(abs(val - data.kappa))))
        if len(region) == n:
            break
    return rows, data
