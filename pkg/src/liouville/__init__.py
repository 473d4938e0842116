"""Degree counting and spectral solving for 2x2 singular Liouville systems.

Two halves that check each other: exact rational combinatorics turns a
surface, a set of singular-source strengths and a coupling matrix into a
solution count, and a spectral fixed-point solver on the unit flat torus
produces the solutions that count promises, with local-mass diagnostics
near the critical parameter set.
"""

from .coupling import (
    CouplingMatrix,
    HypothesisError,
    HypothesisVerdict,
    InvalidRhoError,
    RankClass,
    RhoVector,
    SingularMatrixError,
    SymmetrizedSystem,
    intrinsic_rho,
    linear_form,
    quadratic_form,
    rank_class,
    symmetrize,
    validate_hypothesis,
)
from .counting import (
    CriticalSpectrum,
    GeneratingSeries,
    OnCriticalSetError,
    PartialSum,
    RegionClassification,
    SingularProfile,
    Topology,
    classify,
    degree,
    enumerate_spectrum,
    expand_series,
    positivity_scan,
    torus_odd_degree,
)
from .fields import (
    GreenField,
    ScalarField,
    TorusGrid,
    ball_integral,
    build_weights,
    export_csv,
    green,
    inv_laplacian,
    neg_laplacian,
    project_mean_zero,
    quadrature,
)
from .solver import (
    LocalMass,
    LocalMassReport,
    NonConvergenceError,
    SolutionPair,
    SolveConfig,
    SweepRecord,
    energy,
    fixed_point_map,
    linear_rho_path,
    local_masses,
    reconstruct_original,
    residual,
    solve,
    sweep,
    sweep_csv,
)

__version__ = "0.1.0"
