import numpy as np
import pytest
import scipy.linalg as sla

from fluxtorus.errors import FitUndeterminedError
from fluxtorus.geometry import make_torus
from fluxtorus.locality import (
    CONE_HEADER,
    ConeSample,
    FullSpaceEvolution,
    N_OP,
    cone_along_axis,
    evolution_difference,
    fit_cone,
    geometric_times,
    localization_error,
    localization_profile,
    site_operator,
)
from fluxtorus.models import ModelSpec, build_model
from fluxtorus.operators import DenseOperator, SectorBasis, dense_sum, materialize
from fluxtorus.report import read_csv


def test_fit_recovers_planted_cone():
    v, a, C = 1.5, 0.8, 0.3
    samples = [ConeSample(t, d, C * np.exp(-a * (d - v * t))) for t in (0.25, 0.5, 1.0) for d in (1, 2, 3, 4)]
    fit = fit_cone(samples)
    assert np.isclose(fit.v, v) and np.isclose(fit.a, a) and np.isclose(fit.C, C)
    assert fit.residual < 1e-12 and fit.n_used == 12


def test_fit_rejects_growth_and_sparse_data():
    grow = [ConeSample(t, d, np.exp(0.5 * d + t)) for t in (0.5, 1.0) for d in (1, 2)]
    with pytest.raises(FitUndeterminedError):
        fit_cone(grow)
    with pytest.raises(FitUndeterminedError):
        fit_cone([ConeSample(1.0, 1, 0.1), ConeSample(1.0, 2, 0.01)])
    # values under the floor are dropped
    with pytest.raises(FitUndeterminedError):
        fit_cone([ConeSample(t, d, 1e-15) for t in (1, 2) for d in (1, 2)])


def test_geometric_times():
    assert np.allclose(geometric_times(3), [0.125, 0.25, 0.5, 1.0])


@pytest.fixture(scope="module")
def xxz63():
    spec = ModelSpec("xxz-spin", fields={"J": 1.0, "Jz": 1.0})
    g = make_torus(6, 3)
    return build_model(spec, g), g


def test_small_cone(xxz63, tmp_path):
    m, g = xxz63
    basis = SectorBasis(m.charges, 2)
    H = materialize(m.H, basis).dense()
    prof = cone_along_axis(H, basis, g, times=geometric_times(4))
    assert prof.within_bound()
    assert prof.norm_at(0.5, 3) < prof.norm_at(0.5, 1)
    assert prof.decay_slope(0.5) < 0
    assert prof.fit.v > 0
    prof.write_csv(tmp_path / "c.csv")
    rows = read_csv(tmp_path / "c.csv", CONE_HEADER)
    assert len(rows) == 5 * 3


def test_commutator_vanishes_at_time_zero(xxz63):
    m, g = xxz63
    basis = SectorBasis(m.charges, 2)
    H = materialize(m.H, basis).dense()
    prof = cone_along_axis(H, basis, g, times=[0.0], fit=False)
    assert max(s.norm for s in prof.samples) < 1e-14


def test_evolution_difference(xxz63):
    m, g = xxz63
    basis = SectorBasis(m.charges, 2)
    H = materialize(m.H, basis).dense()
    O = site_operator(basis, 0)
    assert evolution_difference(H, H, O, 1.0).value < 1e-13
    H2 = H + 0.3 * site_operator(basis, 3)
    res = evolution_difference(H, H2, O, 0.7, duhamel=True)
    assert res.value > 1e-4
    assert res.duhamel < 1e-10


@pytest.fixture(scope="module")
def evo33():
    spec = ModelSpec("xxz-spin", p=1, q=3, fields={"J": -1.0, "Jz": 0.5, "h": 1.0})
    g = spec.geometry(3)
    m = build_model(spec, g)
    return m, g, FullSpaceEvolution(m.charges, lambda b: materialize(m.H, b).matrix)


def test_full_space_evolution_matches_expm(evo33):
    m, g, evo = evo33
    H = dense_sum(m.H).matrix
    O = DenseOperator(N_OP, (4,)).extend(range(9)).matrix
    U = sla.expm(-1j * 0.6 * H)
    ref = U.conj().T @ O @ U
    assert np.abs(evo.evolve(O, 0.6) - ref).max() < 1e-10


def test_localization(evo33):
    m, g, evo = evo33
    O = DenseOperator(N_OP, (0,))
    assert localization_error(evo, g, O, 0.0, 0) < 1e-14
    prof = localization_profile(evo, g, O, 0.5, [0, 1])
    # radius 1 covers the whole 3x3 torus
    assert prof.region_sizes == [1, 9]
    assert prof.errors[0] > 1e-3 and prof.errors[1] == 0.0
    assert prof.monotone
