"""Light cones and localization in a spin model.

On an 8x3 Heisenberg torus with two flipped spins we measure how fast the
commutator of a density at the origin with a distant density grows, and fit a
velocity.  On a 4x3 torus the whole Hilbert space fits in memory, so we can
also trace out everything beyond a radius ``r`` and see how much of an evolved
operator is lost.

    python tutorials/04_light_cones.py
"""

from fluxtorus import ModelSpec, build_model
from fluxtorus.geometry import make_torus
from fluxtorus.locality import N_OP, FullSpaceEvolution, cone_along_axis, localization_profile
from fluxtorus.operators import DenseOperator, SectorBasis, materialize

spec = ModelSpec("xxz-spin", fields={"J": 1.0, "Jz": 1.0})

g = make_torus(8, 3)
m = build_model(spec, g)
b = SectorBasis(m.charges, 2)
prof = cone_along_axis(materialize(m.H, b).dense(), b, g)
print("commutator norms at t=0.5:", {d: f"{prof.norm_at(0.5, d):.2e}" for d in range(1, 5)})
print(f"fitted velocity {prof.fit.v:.2f}, decay rate {prof.fit.a:.2f}")

g4 = make_torus(4, 3)
m4 = build_model(spec, g4)
evo = FullSpaceEvolution(m4.charges, lambda basis: materialize(m4.H, basis).matrix)
loc = localization_profile(evo, g4, DenseOperator(N_OP, (0,)), 0.5, [0, 1, 2])
for r, size, e in zip(loc.radii, loc.region_sizes, loc.errors):
    print(f"r={r}: region of {size:2d} sites, localization error {e:.3f}")
