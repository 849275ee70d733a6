import numpy as np
import pytest

from fluxtorus.flux import FluxFamily, SectorFamily
from fluxtorus.models import ModelSpec, build_model
from fluxtorus.operators import SectorBasis


@pytest.fixture(scope="session")
def hof3():
    """3x3 Hofstadter torus at flux 1/3 with three fermions: dimension 84, gap ~1.3."""
    spec = ModelSpec("hofstadter-fermion", p=1, q=3)
    m = build_model(spec, spec.geometry(3))
    fam = FluxFamily(m)
    basis = SectorBasis(m.charges, 3)
    return fam, basis, SectorFamily(fam, basis)


@pytest.fixture(scope="session")
def trivial4():
    from fluxtorus.flux import BlockFamily

    spec = ModelSpec("trivial-insulator")
    m = build_model(spec, spec.geometry(4))
    fam = FluxFamily(m)
    return BlockFamily([SectorFamily(fam, SectorBasis(m.charges, q)) for q in (0, 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(7)
