import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluxtorus.curvature import kappa_kubo, kappa_resolvent
from fluxtorus.errors import GapError
from fluxtorus.flux import FluxFamily, FluxPath
from fluxtorus.models import ModelSpec, build_model
from fluxtorus.quasiadiabatic import (
    EigenSystem,
    WeightFunction,
    corner_check,
    generator,
    generator_identity_error,
    local_approximant,
    make_weight,
    spectral_flow,
)


@pytest.fixture(scope="module")
def W():
    return make_weight(1.0)


def test_weight_is_odd_and_bounded(W):
    t = np.linspace(0.01, 30, 200)
    assert np.allclose(W(-t), -W(t))
    assert W.sup_norm <= 0.5 + 1e-12
    assert W.tail(40.0) < 1e-6 * W.sup_norm
    assert 3.0 < W.l1_norm < 3.6


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 20.0))
def test_hat_is_inverse_frequency_outside_gap(w):
    Wf = WeightFunction(1.0)
    assert np.isclose(Wf.hat(w), 1j / w)
    assert np.isclose(Wf.hat(-w), -1j / w)


def test_time_domain_reproduces_hat(W):
    om = np.array([0.0, 0.3, 0.8, 1.0, 1.7, 4.0])
    assert np.abs(W.time_factor(om) - W.hat(om)).max() < 1e-8


def test_weight_needs_positive_gap():
    with pytest.raises(ValueError):
        WeightFunction(0.0)


def test_generator_is_hermitian(hof3, W):
    _, _, tw = hof3
    K = generator(tw.matrix((0.2, 0.5)), tw.dmatrix((0.2, 0.5), 1), W)
    assert np.abs(K - K.conj().T).max() < 1e-12


@pytest.mark.parametrize("j", [1, 2])
def test_generator_transports_projector(hof3, W, j):
    _, _, tw = hof3
    assert generator_identity_error(tw, (0.7, 2.1), j, W) < 1e-8


def test_eigen_and_quadrature_generators_agree(hof3, W):
    _, _, tw = hof3
    phi = (0.7, 2.1)
    eig = EigenSystem.of(tw.matrix(phi))
    dH = tw.dmatrix(phi, 2)
    Ke = generator(None, dH, W, "eigen", eig)
    Kq = generator(None, dH, W, "quadrature", eig)
    assert np.abs(Ke - Kq).max() < 1e-7


def test_kubo_equals_resolvent(hof3, W):
    _, _, tw = hof3
    for phi in [(0.0, 0.0), (0.7, 2.1), (3.0, 5.5)]:
        assert abs(kappa_kubo(tw, phi, W) - kappa_resolvent(tw, phi)) < 1e-10


def test_gap_below_gamma_rejected(hof3):
    _, _, tw = hof3
    from fluxtorus.errors import ClusterError

    with pytest.raises(ClusterError):
        kappa_kubo(tw, (0.0, 0.0), make_weight(50.0))


@pytest.mark.parametrize("method,tol", [("rk45", 1e-8), ("rk4", 1e-4)])
def test_spectral_flow_transports_ground_state(hof3, W, method, tol):
    _, _, tw = hof3
    path = FluxPath.antitwist_to_twist(tw, (0.7, 2.1))
    res = spectral_flow(path, W, method=method, n_steps=10)
    assert res.max_error < tol
    assert res.unitarity.max() < 10 * tol


def test_corner_operator_identities(hof3):
    fam, basis, _ = hof3
    rep = corner_check(fam, basis, (0.7, 2.1))
    assert rep.covariance < 1e-8
    assert rep.anti_hermiticity < 1e-10
    assert 0 < rep.corner_error < 2.0


@pytest.fixture(scope="module")
def boson3():
    spec = ModelSpec("xxz-spin", p=1, q=3, fields={"J": -1.0, "Jz": 0.5, "h": 1.0})
    return FluxFamily(build_model(spec, spec.geometry(3)))


def test_local_approximant_converges_to_kappa(boson3):
    rows, data = local_approximant(boson3, (0.7, 2.1))
    assert abs(data.kappa) > 1e-3
    errs = [r.error for r in rows]
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert rows[-1].region_size == 9 and errs[-1] < 1e-12


def test_full_space_needs_unique_ground_state():
    spec = ModelSpec("xxz-spin", fields={"J": 1.0, "Jz": 1.0})
    with pytest.raises(GapError):
        local_approximant(FluxFamily(build_model(spec, spec.geometry(3))), (0.7, 2.1))


def test_fermions_rejected_for_partial_traces(hof3):
    fam, _, _ = hof3
    with pytest.raises(ValueError):
        local_approximant(fam, (0.0, 0.0))


def test_sector_gap_guard(hof3):
    fam, basis, _ = hof3
    with pytest.raises(GapError):
        corner_check(fam, basis, (0.7, 2.1), W=make_weight(30.0))
