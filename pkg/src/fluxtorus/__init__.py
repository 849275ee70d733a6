"""Flux threading on small discrete tori: twist Hamiltonians, adiabatic curvature and locality checks."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .geometry import Region, TorusGeometry, canonical_halves, distance, fatten, make_torus, sigma_delta
from .models import Model, ModelSpec, build_model, load_config
from .operators import ChargeSpec, LocalTerm, OperatorSum, SectorBasis, materialize, op_norm, partial_trace
from .flux import (
    BlockFamily,
    FluxFamily,
    FluxPath,
    SectorFamily,
    gauge_distribute,
    twist_antitwist,
    twist_hamiltonian,
)
from .spectral import gap_scan, ground_state
from .quasiadiabatic import (
    WeightFunction,
    corner_check,
    generator,
    local_approximant,
    make_weight,
    spectral_flow,
)
from .curvature import chern_fhs, curvature_map, kappa_kubo, kappa_resolvent, quantization_error
from .freefermion import SingleParticleFamily, sp_chern, sp_curvature_map, sp_scaling
from .locality import evolution_difference, localization_error, lr_cone
