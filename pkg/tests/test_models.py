import json

import numpy as np
import pytest

from fluxtorus.errors import GeometryError, ModelSpecError
from fluxtorus.geometry import canonical_halves, make_torus
from fluxtorus.models import (
    ModelSpec,
    build_model,
    charge_commutator_support,
    check_charge_conservation,
    conservation_boundary_ok,
    load_config,
    spec_from_dict,
    split,
)
from fluxtorus.operators import SectorBasis, materialize


@pytest.mark.parametrize(
    "spec,L",
    [
        (ModelSpec("trivial-insulator"), 4),
        (ModelSpec("hofstadter-fermion", p=1, q=4), 4),
        (ModelSpec("hofstadter-fermion-interacting", p=1, q=4, V=0.2), 4),
        (ModelSpec("xxz-spin", fields={"J": 1.0, "Jz": 0.5, "h": 0.1}), 4),
    ],
)
def test_models_conserve_charge_and_are_hermitian(spec, L):
    m = build_model(spec, make_torus(L, L))
    assert m.H.is_hermitian()
    rep = check_charge_conservation(m.H, m.charges)
    assert rep.passed and rep.max_norm < 1e-14


def test_hofstadter_plaquette_flux():
    spec = ModelSpec("hofstadter-fermion", p=1, q=4)
    m = build_model(spec, make_torus(8, 8))
    g = m.geometry
    amp = {(b.x, b.y): b.amp for b in m.bonds}
    for x in range(g.n_sites):
        x1, x2 = g.coords(x)
        a, b = x, g.index(x1 + 1, x2)
        c, d = g.index(x1 + 1, x2 + 1), g.index(x1, x2 + 1)
        loop = amp[(a, b)] * amp[(b, c)] * np.conj(amp[(d, c)]) * np.conj(amp[(a, d)])
        assert np.isclose(loop / abs(loop), np.exp(2j * np.pi / 4))


def test_unquantized_flux_rejected():
    with pytest.raises(ModelSpecError):
        build_model(ModelSpec("hofstadter-fermion", p=1, q=3), make_torus(4, 4))


def test_range_must_fit():
    with pytest.raises(GeometryError):
        build_model(ModelSpec("xxz-spin"), make_torus(2, 4))


def test_trivial_insulator_spectrum():
    m = build_model(ModelSpec("trivial-insulator"), make_torus(4, 4))
    for N in (0, 1, 2):
        H = materialize(m.H, SectorBasis(m.charges, N)).dense()
        assert np.allclose(H, N * np.eye(len(H)))


def test_polarized_xxz_energy():
    g = make_torus(4, 4)
    m = build_model(ModelSpec("xxz-spin", fields={"J": 1.0, "Jz": 0.7}), g)
    H = materialize(m.H, SectorBasis(m.charges, g.n_sites)).dense()
    assert np.isclose(H[0, 0].real, 0.7 * 2 * g.n_sites)


def test_charge_commutator_lives_on_boundary():
    spec = ModelSpec("hofstadter-fermion", p=1, q=2)
    m = build_model(spec, make_torus(6, 6))
    X1, _ = canonical_halves(m.geometry)
    sup = charge_commutator_support(m.H, m.charges, X1)
    assert sup
    assert conservation_boundary_ok(m.H, m.charges, X1, m.geometry, 1)


def test_split_partitions_terms():
    m = build_model(ModelSpec("xxz-spin"), make_torus(4, 4))
    X = [0, 1, 4, 5]
    a, b = split(m.H, X, m.geometry)
    assert len(a) + len(b) == len(m.H)


def test_config_roundtrip_json_and_toml(tmp_path):
    j = tmp_path / "m.json"
    j.write_text(json.dumps({"model": "hofstadter-fermion", "L": 8, "p": 1, "q": 4, "t": 1.0}))
    spec = load_config(j)
    assert spec.p == 1 and spec.q == 4 and spec.L == 8
    t = tmp_path / "m.toml"
    t.write_text('model = "xxz-spin"\nL = [4, 3]\n[fields]\nJ = 1.0\nJz = 0.5\n')
    spec = load_config(t)
    assert spec.L == (4, 3) and spec.fields["Jz"] == 0.5


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ModelSpecError, match="colour"):
        spec_from_dict({"model": "xxz-spin", "colour": 3})
    with pytest.raises(ModelSpecError, match="mu"):
        spec_from_dict({"model": "xxz-spin", "fields": {"mu": 1.0}})
    with pytest.raises(ModelSpecError):
        spec_from_dict({"model": "xxz-spin", "V": 1.0})
    with pytest.raises(ModelSpecError):
        ModelSpec("graphene")
