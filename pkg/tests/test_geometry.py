import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluxtorus.errors import GeometryError
from fluxtorus.geometry import (
    boundary_ribbon,
    canonical_halves,
    connected_components,
    diam,
    distance,
    fatten,
    inner_ring,
    make_torus,
    sigma_delta,
)


def test_site_count_and_flags():
    g = make_torus(8, 8)
    assert g.n_sites == 64
    assert g.conforming and not g.warnings


def test_odd_and_rectangular_are_flagged():
    assert make_torus(7, 7).warnings
    g = make_torus(4, 3)
    assert g.n_sites == 12
    assert g.rectangular and g.flags()["rectangular"]


@pytest.mark.parametrize("L1,L2", [(0, 4), (1, 3), (4, -2), (2.5, 4)])
def test_invalid_dimensions(L1, L2):
    with pytest.raises(GeometryError):
        make_torus(L1, L2)


def test_periodic_distance_examples():
    g = make_torus(8, 8)
    assert distance(g, (0, 0), (7, 0)) == 1
    assert distance(g, (0, 0), (4, 4)) == 4


sides = st.integers(2, 7)


@settings(max_examples=40, deadline=None)
@given(sides, sides, st.data())
def test_distance_is_a_metric(L1, L2, data):
    g = make_torus(L1, L2)
    site = st.integers(0, g.n_sites - 1)
    x, y, z = data.draw(site), data.draw(site), data.draw(site)
    D = g.distance_matrix
    assert D[x, y] == D[y, x]
    assert D[x, z] <= D[x, y] + D[y, z]
    assert (D[x, y] == 0) == (x == y)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 6), st.integers(3, 6), st.data())
def test_fatten_monotone_and_ribbon_inside(L1, L2, data):
    g = make_torus(L1, L2)
    X = data.draw(st.sets(st.integers(0, g.n_sites - 1), min_size=1, max_size=g.n_sites - 1))
    prev = set(X)
    for r in range(0, 3):
        Xr = set(fatten(g, X, r))
        assert prev <= Xr
        prev = Xr
    rib = boundary_ribbon(g, X, 1)
    assert set(rib) <= set(fatten(g, X, 1)) & set(inner_ring(g, X, 1))


def test_ribbon_of_empty_and_full_is_empty():
    g = make_torus(4, 4)
    assert len(boundary_ribbon(g, [], 1)) == 0
    assert len(boundary_ribbon(g, range(16), 1)) == 0


def test_halves_and_corner():
    g = make_torus(8, 8)
    X1, X2 = canonical_halves(g)
    assert len(X1) == 8 * 5 and len(X2) == 5 * 8
    sd = sigma_delta(g, 1)
    assert sd.ribbons_disjoint
    # corner = 2R x 2R block at the origin seam
    assert len(sd.delta) == 4
    assert sd.delta == sd.minus[0] & sd.minus[1]
    assert diam(g, sd.delta) == 1


def test_sigma_delta_rejects_wide_range():
    with pytest.raises(GeometryError):
        sigma_delta(make_torus(4, 4), 2)


def test_components():
    g = make_torus(6, 6)
    X = [g.index(0, 0), g.index(0, 1), g.index(3, 3)]
    comps = connected_components(g, X)
    assert sorted(len(c) for c in comps) == [1, 2]
    # wraparound adjacency
    assert len(connected_components(g, [g.index(0, 0), g.index(5, 0)])) == 1


def test_region_algebra():
    g = make_torus(4, 4)
    A, B = g.region([0, 1, 2]), g.region([2, 3])
    assert (A | B).sorted() == [0, 1, 2, 3]
    assert (A & B).sorted() == [2]
    assert (A - B).sorted() == [0, 1]
    assert len(A.complement()) == 13
    assert np.array_equal(A.mask[:3], [True, True, True])
