"""Equilibrium strategies for time-inconsistent mean-variance stopping.

Numerical toolkit for the entropy-regularized extended HJB system of the
mean-variance optimal stopping problem, its vanishing-regularization
limit (a variational inequality with free boundary), a discrete-time
stopping-game cross-check, Monte-Carlo verification via randomized
(Cox-process) stopping, and a closed-form geometric-Brownian-motion
benchmark.
"""

__version__ = "0.1.0"

from .model import (CoefficientSpec, Grid, GeneralObjective, ModelError,
                    ProblemSpec, ValidationReport, affine, build_grid,
                    constant, evaluate_coefficient, gbm, validate_problem)
from .pde_kernel import GridField, KernelError, PecletWarning, \
    apply_generator, solve_linear_pde, step_backward
from .hjb_regularized import HJBSolution, extract_intensity, hjb_residual, solve_extended_hjb
from .vi_limit import ContinuationLadder, VISolution, check_boundary_inequality, \
    continuation_elliptic_residual, extract_boundary, general_g_residual, \
    lambda_continuation, obstacle_residual, solve_vi
from .discrete_game import DiscreteEquilibrium, backward_recursion, compare_to_vi
from .gbm_benchmark import GBMClosedForm, boundary_jump_quantities, closed_form_eval, \
    verify_elliptic_system
from .simulate import (CoxStoppingSample, MCConfig, MCEstimate, ObjectiveEstimate,
                 StopRegion, estimate_hitting_objective,
                 estimate_local_time_relation, estimate_objective,
                 sample_cox_stopping, simulate_paths)
from .verify import (DEFAULT_PROBES, PerturbationResult,
                     analytic_perturbation_regularized, certification_ok,
                     mc_perturbation_regularized, vi_boundary_perturbation,
                     vi_interior_perturbation)

__all__ = [
    "CoefficientSpec", "Grid", "GeneralObjective", "ModelError", "ProblemSpec",
    "ValidationReport", "affine", "build_grid", "constant",
    "evaluate_coefficient", "gbm", "validate_problem",
    "GridField", "KernelError", "PecletWarning", "apply_generator",
    "solve_linear_pde", "step_backward",
    "HJBSolution", "extract_intensity", "hjb_residual", "solve_extended_hjb",
    "ContinuationLadder", "VISolution", "check_boundary_inequality",
    "continuation_elliptic_residual", "extract_boundary", "general_g_residual",
    "lambda_continuation", "obstacle_residual", "solve_vi",
    "DiscreteEquilibrium", "backward_recursion", "compare_to_vi",
    "GBMClosedForm", "boundary_jump_quantities", "closed_form_eval",
    "verify_elliptic_system",
    "CoxStoppingSample", "MCConfig", "MCEstimate", "ObjectiveEstimate",
    "StopRegion", "estimate_hitting_objective", "estimate_local_time_relation",
    "estimate_objective", "sample_cox_stopping", "simulate_paths",
    "DEFAULT_PROBES", "PerturbationResult", "analytic_perturbation_regularized",
    "certification_ok", "mc_perturbation_regularized",
    "vi_boundary_perturbation", "vi_interior_perturbation",
    "__version__",
]
