"""Quench dynamics of spin-1/2 chains with MPS evolution and distance-revival analysis."""

__version__ = "0.1.0"

from .model import (
    HamiltonianParams,
    HamiltonianSpec,
    TrotterScheme,
    build_hamiltonian,
    build_trotter_gates,
)
from .mps import (
    DensityMatrix,
    MpsState,
    TruncationPolicy,
    all_plus_state,
    all_up_state,
    product_state,
    reduce_density_matrix,
)
from .dmrg import DmrgSettings, GroundStateResult, ground_state
from .tebd import EvolutionRecord, QuenchProtocol, evolve
from .analysis import (
    DegreeCurve,
    DistanceSeries,
    degree,
    degree_vs_delta,
    distance_series,
    extrema_gaps,
    slope_series,
    total_variation_distance,
    trace_distance,
)

__all__ = [
    "HamiltonianParams",
    "HamiltonianSpec",
    "TrotterScheme",
    "build_hamiltonian",
    "build_trotter_gates",
    "DensityMatrix",
    "MpsState",
    "TruncationPolicy",
    "all_plus_state",
    "all_up_state",
    "product_state",
    "reduce_density_matrix",
    "DmrgSettings",
    "GroundStateResult",
    "ground_state",
    "EvolutionRecord",
    "QuenchProtocol",
    "evolve",
    "DegreeCurve",
    "DistanceSeries",
    "degree",
    "degree_vs_delta",
    "distance_series",
    "extrema_gaps",
    "slope_series",
    "total_variation_distance",
    "trace_distance",
    "__version__",
]
