"""Opinion dynamics with a stubborn agent: DeGroot and random-action models."""

__version__ = "0.1.0"

from .core import (
    Classification,
    HypothesisViolated,
    OpinionState,
    StubbornPartition,
    TrustMatrix,
    is_irreducible,
    partition_stubborn,
    stubborn_influence_exists,
    validate_trust_matrix,
)
from .dynamics import (
    EnsembleSummary,
    RAConfig,
    Trajectory,
    degroot_run,
    degroot_step,
    ra_run,
    ra_step,
    run_ensemble,
    sample_actions,
    trial_seed,
)
from .spectral import consensus_gain, limit_power, neumann_partial_sum, spectral_radius

__all__ = [
    "Classification", "HypothesisViolated", "OpinionState", "StubbornPartition", "TrustMatrix",
    "is_irreducible", "partition_stubborn", "stubborn_influence_exists", "validate_trust_matrix",
    "EnsembleSummary", "RAConfig", "Trajectory", "degroot_run", "degroot_step", "ra_run", "ra_step",
    "run_ensemble", "sample_actions", "trial_seed",
    "consensus_gain", "limit_power", "neumann_partial_sum", "spectral_radius",
]
