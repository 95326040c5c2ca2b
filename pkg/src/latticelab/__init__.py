"""Local times of planar lattice random walks.

Exact kernels and local-time laws, seeded Monte Carlo for annealed and
quenched collision local times, numerical checks of kernel bounds, and two
catalytic models (moving-source heat equation, pinning).
"""
__version__ = "0.1.0"

from ._backend import BACKEND
from .walk import (
    CovarianceMatrix,
    LatticeMap,
    StepDistribution,
    WalkSpec,
    covariance,
    difference_walk,
    et_constant,
    load_walk,
    preset,
    sublattice_reduce,
)
from .exact import (
    KernelTable,
    LocalTimePMF,
    build_kernel_table,
    continuous_kernel,
    exact_moments,
    exact_moments_continuous,
    lclt_leading,
    local_time_pmf,
)
from .mc import (
    EnvironmentPath,
    EstimateWithCI,
    QuenchedScanResult,
    annealed_moments,
    joint_conditional_moments,
    local_time_two_walks,
    quenched_moments,
    quenched_variance_scan,
    sample_environment,
)
from .lemmas import RatioReport, check_gradpot, check_rearrangement, check_rwconv, moment_convergence_scan
from .catalyst import (
    PamConfig,
    PinningConfig,
    free_energy_estimate,
    pam_feynman_kac,
    pam_solve,
    pinning_partition,
)
