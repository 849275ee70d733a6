"""Acceptance suite: one test and one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` (the lines are printed even
without ``-s``).  The whole file needs roughly 12 minutes on one core.
"""

import time

import numpy as np
import pytest

from fluxtorus.curvature import (
    chern_fhs,
    curvature_map,
    kappa_kubo,
    kappa_resolvent,
)
from fluxtorus.flux import FluxFamily, FluxPath, SectorFamily, gauge_distribute, term_difference, term_support_union
from fluxtorus.freefermion import SingleParticleFamily, sp_kappa, sp_scaling
from fluxtorus.geometry import dist_to_region, make_torus
from fluxtorus.locality import (
    FullSpaceEvolution,
    N_OP,
    cone_along_axis,
    evolution_difference,
    geometric_times,
    localization_profile,
    site_operator,
)
from fluxtorus.models import ModelSpec, build_model
from fluxtorus.operators import DenseOperator, SectorBasis, materialize
from fluxtorus.quasiadiabatic import (
    EigenSystem,
    corner_check,
    generator,
    generator_identity_error,
    local_approximant,
    make_weight,
    spectral_flow,
)
from fluxtorus.spectral import flux_grid, gap_scan

pytestmark = pytest.mark.acceptance

PHI = (0.7, 2.1)


@pytest.fixture
def verdict(capsys):
    """Collect named sub-checks, print one line for the criterion, then assert."""
    def _emit(number: int, title: str, checks: dict):
        ok = all(bool(v[0]) for v in checks.values())
        parts = "; ".join(f"{k}={v[1]}{'' if v[0] else ' (FAIL)'}" for k, v in checks.items())
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {title}: {parts}")
        failed = [k for k, v in checks.items() if not v[0]]
        assert not failed, f"criterion {number} failed: {failed}"

    return _emit


def _hof44(V: float = 0.0):
    name = "hofstadter-fermion-interacting" if V else "hofstadter-fermion"
    spec = ModelSpec(name, p=1, q=4, V=V)
    m = build_model(spec, spec.geometry(4))
    fam = FluxFamily(m)
    basis = SectorBasis(m.charges, 4)
    return fam, basis, SectorFamily(fam, basis)


@pytest.fixture(scope="module")
def hof44():
    return _hof44()


def test_criterion_1_trivial_insulator(verdict):
    from fluxtorus.flux import BlockFamily

    t0 = time.perf_counter()
    spec = ModelSpec("trivial-insulator")
    m = build_model(spec, spec.geometry(4))
    fam = FluxFamily(m)
    blocks = BlockFamily([SectorFamily(fam, SectorBasis(m.charges, q)) for q in (0, 1)])
    cmap = curvature_map(blocks, N=8)
    kmax = float(np.abs(cmap.kappa).max())
    gdev = float(np.abs(cmap.gap - 1.0).max())
    n = chern_fhs(blocks, N=8).n
    dt = time.perf_counter() - t0
    verdict(1, "trivial insulator, L=4, 8x8 grid", {
        "max|kappa|": (kmax < 1e-10, f"{kmax:.1e}"),
        "chern": (n == 0, n),
        "max|gap-1|": (gdev < 1e-12, f"{gdev:.1e}"),
        "runtime": (dt < 60, f"{dt:.1f}s"),
    })


@pytest.fixture(scope="module")
def scaling():
    t0 = time.perf_counter()
    rep = sp_scaling([8, 12, 16], p=1, q=4, filling=0.25, N=24)
    return rep, time.perf_counter() - t0


def test_criterion_2_quantization(verdict, scaling):
    rep, dt = scaling
    rows = rep.rows
    q = [r.qerror for r in rows]
    verdict(2, "free-fermion quantization, L=8,12,16", {
        "chern(N)==chern(2N)": (all(r.chern == r.chern_2N for r in rows), [(r.chern, r.chern_2N) for r in rows]),
        "qerror decreasing": (all(b < a for a, b in zip(q, q[1:])), [f"{v:.2e}" for v in q]),
        "n0 constant over grid": (all(r.n0 is not None for r in rows), [r.n0 for r in rows]),
        "n0==FHS": (all(r.n0 == r.chern for r in rows), [(r.n0, r.chern) for r in rows]),
        "runtime": (dt < 600, f"{dt:.0f}s"),
    })


def test_criterion_3_constancy(verdict, scaling):
    rep, _ = scaling
    by_L = {r.L: r for r in rep.rows}
    s8, s16 = by_L[8].spread, by_L[16].spread
    frac = {r.L: r.method_error / r.spread for r in rep.rows}
    verdict(3, "curvature spread shrinks with L", {
        "spread(16)<spread(8)": (s16 < s8, f"{s16:.2e} vs {s8:.2e}"),
        "method error / spread < 0.1": (all(v < 0.1 for v in frac.values()),
                                        {L: f"{v:.1e}" for L, v in frac.items()}),
    })


def test_criterion_4_cross_methods(verdict, hof3, hof44):
    worst_rk = 0.0
    for sf in (hof3[2], hof44[2]):
        for phi in [(0.0, 0.0), PHI]:
            W = make_weight(0.9 * EigenSystem.of(sf.matrix(phi)).gap)
            worst_rk = max(worst_rk, abs(kappa_resolvent(sf, phi) - kappa_kubo(sf, phi, W)))
    fam, _, sf = hof44
    spf = SingleParticleFamily(fam.model)
    worst_sp = max(abs(kappa_resolvent(sf, p) - sp_kappa(spf, p, 4)) for p in flux_grid(4).reshape(-1, 2))
    verdict(4, "resolvent/Kubo and many-body/single-particle", {
        "|resolvent-kubo|": (worst_rk < 1e-5, f"{worst_rk:.1e}"),
        "|many-body-single-particle| (4x4 sample)": (worst_sp < 1e-8, f"{worst_sp:.1e}"),
    })


def test_criterion_5_gauge_distribution(verdict):
    spec = ModelSpec("hofstadter-fermion", p=1, q=2)
    res, scaled, diam_ok = [], [], True
    for L in (4, 6, 8):
        m = build_model(spec, spec.geometry(L))
        rem = gauge_distribute(FluxFamily(m), PHI, tol=np.inf)
        res.append(rem.residual)
        scaled.append(rem.max_term_norm * L)
        diam_ok &= rem.max_diam(m.geometry) <= m.spec.R
    ratio = max(scaled) / min(scaled)
    verdict(5, "gauge distribution, L=4,6,8", {
        "residual": (max(res) < 1e-12, f"{max(res):.1e}"),
        "max||W(X)||*L ratio": (ratio <= 2, f"{ratio:.3f}"),
        "diam<=R": (diam_ok, diam_ok),
    })


def test_criterion_6_quasiadiabatic(verdict, hof3, hof44):
    ident = []
    for sf in (hof3[2], hof44[2]):
        W = make_weight(0.9 * EigenSystem.of(sf.matrix(PHI)).gap)
        ident += [generator_identity_error(sf, PHI, j, W) for j in (1, 2)]
    sf3 = hof3[2]
    eig = EigenSystem.of(sf3.matrix(PHI))
    W3 = make_weight(0.9 * eig.gap)
    quad = max(float(np.abs(generator(None, sf3.dmatrix(PHI, j), W3, "eigen", eig)
                            - generator(None, sf3.dmatrix(PHI, j), W3, "quadrature", eig)).max()) for j in (1, 2))
    path = FluxPath.antitwist_to_twist(hof44[2], PHI)
    gap = min(EigenSystem.of(path.matrix(s)).gap for s in (0.0, 0.5, 1.0))
    flow = spectral_flow(path, make_weight(0.9 * gap), method="rk4", n_steps=8)
    verdict(6, "quasi-adiabatic generator and spectral flow", {
        "identity": (max(ident) < 1e-6, f"{max(ident):.1e}"),
        "eigen vs quadrature": (quad < 1e-7, f"{quad:.1e}"),
        "flow 4x4": (flow.max_error < 1e-4, f"{flow.max_error:.1e}"),
    })


def test_criterion_7_locality(verdict):
    xxz = ModelSpec("xxz-spin", fields={"J": 1.0, "Jz": 1.0})
    # cone: d=4 needs a side of 8
    g = make_torus(8, 3)
    m = build_model(xxz, g)
    b = SectorBasis(m.charges, 2)
    prof = cone_along_axis(materialize(m.H, b).dense(), b, g, times=geometric_times())
    ratio = prof.norm_at(0.5, 4) / prof.norm_at(0.5, 2)
    cone_slope = prof.decay_slope(0.5)

    # evolution difference against the pi-twisted Hamiltonian, vs distance from the seam
    fam = FluxFamily(m)
    sf = SectorFamily(fam, b)
    H1, H2 = sf.matrix((0.0, 0.0)).toarray(), sf.matrix((0.0, np.pi)).toarray()
    seam = term_support_union(term_difference(fam.twist((0.0, np.pi)), fam.H))
    dist = dist_to_region(g, seam)
    worst = {}  # largest difference over the probed sites at each distance
    for x1 in range(5):
        x = g.index(x1, 0)
        val = evolution_difference(H1, H2, site_operator(b, x), 0.5).value
        worst[int(dist[x])] = max(val, worst.get(int(dist[x]), 0.0))
    pts = sorted(worst.items())
    ev = [v for _, v in pts]
    ev_slope = float(np.polyfit([d for d, _ in pts], np.log(ev), 1)[0])

    # localization on the 4x3 micro torus
    g4 = make_torus(4, 3)
    m4 = build_model(xxz, g4)
    evo = FullSpaceEvolution(m4.charges, lambda basis: materialize(m4.H, basis).matrix)
    loc = localization_profile(evo, g4, DenseOperator(N_OP, (0,)), 0.5, [0, 1, 2, 3])
    e = loc.errors
    verdict(7, "locality (cone 8x3, localization 4x3, evolution difference 8x3)", {
        "cone ratio d4/d2 at t=0.5": (ratio < 0.2, f"{ratio:.3f}"),
        "cone slope": (cone_slope < 0, f"{cone_slope:.2f}"),
        "localization non-increasing": (loc.monotone, [f"{v:.3f}" for v in e]),
        "err(3)<0.3 err(1)": (e[3] < 0.3 * e[1], f"{e[3]:.2e} vs {e[1]:.2e}"),
        "localization slope": (loc.slope() < 0, f"{loc.slope():.2f}"),
        "evolution difference decreasing": (all(b_ < a_ for a_, b_ in zip(ev, ev[1:])),
                                            [(d, f"{v:.3f}") for d, v in pts]),
        "evolution difference slope": (ev_slope < 0, f"{ev_slope:.2f}"),
    })


def test_criterion_8_corner(verdict, hof44):
    fam, basis, _ = hof44
    rep = corner_check(fam, basis, (0.0, 0.0))
    spec = ModelSpec("xxz-spin", p=1, q=4, fields={"J": -1.0, "Jz": 0.0, "h": 0.5})
    bos = FluxFamily(build_model(spec, spec.geometry((4, 3))))
    rows, data = local_approximant(bos, PHI)
    errs = [r.error for r in rows]
    verdict(8, "corner localization", {
        "relative corner error (4x4, N=4)": (rep.corner_error < 0.5, f"{rep.corner_error:.3f}"),
        "covariance": (rep.covariance < 1e-8, f"{rep.covariance:.1e}"),
        "approximant non-increasing (4x3 bosons)": (all(b <= a + 1e-12 for a, b in zip(errs, errs[1:])),
                                                     [f"{v:.2e}" for v in errs]),
    })


def test_criterion_9_interacting(verdict):
    gaps, cherns = {}, {}
    for V in (0.0, 0.05, 0.1, 0.15, 0.2):
        sf = _hof44(V)[2]
        N = 8 if V in (0.0, 0.2) else 4
        gaps[V] = gap_scan(sf, N=N).min_gap
        if V in (0.0, 0.2):
            cherns[V] = chern_fhs(sf, N=8)
    verdict(9, "interacting Hofstadter V=0.2t at L=4", {
        "min gap on 8x8 grid (V=0.2)": (gaps[0.2] > 1e-3, f"{gaps[0.2]:.3f}"),
        "chern(V=0.2)==chern(V=0)": (cherns[0.2].n == cherns[0.0].n and cherns[0.2].admissible,
                                     (cherns[0.2].n, cherns[0.0].n)),
        "gap open over V sweep": (min(gaps.values()) > 1e-3, {V: f"{gv:.3f}" for V, gv in gaps.items()}),
    })
