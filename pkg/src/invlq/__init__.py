"""Direct and inverse linear-quadratic optimal control."""

from .autonomous import (
    AutonomousLqProblem,
    BoundaryData,
    CanonicalCost,
    SynthesisPair,
    Trajectory,
    canonical_cost_of,
    cost_of,
    lyapunov_residuals,
    optimal_trajectory,
    riccati_residual,
    synthesis_pair,
    validate,
)
from .errors import (
    IntegrationError,
    LqError,
    NumericsError,
    ReconstructionError,
    ValidationError,
)
from .inverse import (
    TrajectoryBundle,
    bundle_from_boundaries,
    detect_product_structure,
    identify_and_reconstruct,
    recover_delta,
    reconstruct_cost,
)
from .timevarying import (
    TimeVaryingLqProblem,
    antistabilizing_periodic,
    decomposition_solve,
    pvw_solve,
    solve_Z_equation,
    stabilizing_periodic,
)

__version__ = "0.1.0"

__all__ = [
    "AutonomousLqProblem",
    "BoundaryData",
    "CanonicalCost",
    "SynthesisPair",
    "Trajectory",
    "TrajectoryBundle",
    "TimeVaryingLqProblem",
    "LqError",
    "NumericsError",
    "ValidationError",
    "ReconstructionError",
    "IntegrationError",
    "validate",
    "synthesis_pair",
    "optimal_trajectory",
    "canonical_cost_of",
    "identify_and_reconstruct",
    "recover_delta",
    "reconstruct_cost",
    "detect_product_structure",
    "stabilizing_periodic",
    "antistabilizing_periodic",
    "pvw_solve",
    "decomposition_solve",
    "solve_Z_equation",
]
