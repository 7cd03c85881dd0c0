"""Effective Hamiltonians of periodic Hamilton-Jacobi equations.

Solvers for the ergodic constant of convex periodic Hamiltonians, exact 1D
branch-inversion machinery, a discounted Lax-Friedrichs grid solver,
weak-KAM diagnostics, and Monte Carlo estimates for Bernoulli-thinned
lattice perturbations.
"""

from .errors import (
    HJHomogError,
    NoSingleBranchError,
    BranchExitError,
    DegenerateBranchError,
    SupportError,
    WindowError,
    DivergenceError,
    StepSizeError,
    LegendreConvergenceError,
    ConfigError,
)
from .hamiltonian import (
    HamiltonianSpec,
    PotentialField,
    BumpProfile,
    LagrangianEval,
    quadratic_spec,
    eval_H,
    grad_p_H,
    legendre,
    zeta_R,
    zeta_inf,
    zeta_eta,
    wrap_Q,
    problem_from_json,
)
from .homog1d import (
    ErgodicConstant1D,
    solve_hbar_1d,
    solve_hbar_R_1d,
    solve_hbar_eta_exact_1d,
    invariant_density_1d,
    corrector_1d,
    limit_formula_1d,
)
from .cellpde import (
    PeriodicGrid,
    GridField,
    DiscountedSolveConfig,
    ErgodicResult,
    default_delta_schedule,
    solve_discounted,
    estimate_hbar_grid,
    corrector_from_discounted,
    compute_chi_infty,
)
from .weakkam import (
    Trajectory,
    RotationEstimate,
    OccupationalMeasure,
    ChiInftyStructureReport,
    flow_trajectory,
    rotation_number,
    occupational_measure,
    check_invariance,
    verify_value_identity,
    chi_infty_structure,
    pairing_integral,
)
from .randomfield import (
    BernoulliField,
    MCEstimate,
    sample_field,
    mc_estimate_hbar_eta_1d,
    mc_estimate_hbar_eta_grid,
    hat_f,
)
from .expcli import ExperimentConfig, RateFit

__version__ = "0.1.0"

__all__ = [
    "HJHomogError", "NoSingleBranchError", "BranchExitError",
    "DegenerateBranchError", "SupportError", "WindowError", "DivergenceError",
    "StepSizeError", "LegendreConvergenceError", "ConfigError",
    "HamiltonianSpec", "PotentialField", "BumpProfile", "LagrangianEval",
    "quadratic_spec", "eval_H", "grad_p_H", "legendre",
    "zeta_R", "zeta_inf", "zeta_eta", "wrap_Q", "problem_from_json",
    "ErgodicConstant1D", "solve_hbar_1d", "solve_hbar_R_1d",
    "solve_hbar_eta_exact_1d", "invariant_density_1d", "corrector_1d",
    "limit_formula_1d",
    "PeriodicGrid", "GridField", "DiscountedSolveConfig", "ErgodicResult",
    "default_delta_schedule", "solve_discounted", "estimate_hbar_grid",
    "corrector_from_discounted", "compute_chi_infty",
    "Trajectory", "RotationEstimate", "OccupationalMeasure",
    "ChiInftyStructureReport", "flow_trajectory", "rotation_number",
    "occupational_measure", "check_invariance", "verify_value_identity",
    "chi_infty_structure", "pairing_integral",
    "BernoulliField", "MCEstimate", "sample_field",
    "mc_estimate_hbar_eta_1d", "mc_estimate_hbar_eta_grid", "hat_f",
    "ExperimentConfig", "RateFit",
    "__version__",
]
