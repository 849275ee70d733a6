"""Transport a ground state with the quasi-adiabatic generator.

The generator ``K`` is a filtered time average of the flux derivative of the
Hamiltonian.  Its defining property is that ``i[K, P]`` reproduces the
derivative of the ground-state projector.  Integrating it along the path from
the antitwisted to the twisted Hamiltonian carries one ground state onto the
other.

    python tutorials/03_quasiadiabatic_transport.py
"""

from fluxtorus import ModelSpec, build_model
from fluxtorus.curvature import kappa_kubo, kappa_resolvent
from fluxtorus.flux import FluxFamily, FluxPath, SectorFamily
from fluxtorus.operators import SectorBasis
from fluxtorus.quasiadiabatic import EigenSystem, generator_identity_error, make_weight, spectral_flow

spec = ModelSpec("hofstadter-fermion", p=1, q=3)
model = build_model(spec, spec.geometry(3))
family = SectorFamily(FluxFamily(model), SectorBasis(model.charges, 3))
phi = (0.7, 2.1)

gap = EigenSystem.of(family.matrix(phi)).gap
W = make_weight(0.9 * gap)  # the filter must invert the frequency beyond this scale
print(f"gap {gap:.3f}, filter scale {W.gamma:.3f}, ||W||_1 = {W.l1_norm:.3f}")

for j in (1, 2):
    print(f"||dP - i[K_{j}, P]|| = {generator_identity_error(family, phi, j, W):.1e}")

print(f"curvature from the resolvent: {kappa_resolvent(family, phi):.10f}")
print(f"curvature from the generators: {kappa_kubo(family, phi, W):.10f}")

path = FluxPath.antitwist_to_twist(family, phi)
flow = spectral_flow(path, W)
print(f"transported projector error along the path: {flow.max_error:.1e}")
