"""Sub-sampled Newton methods with global convergence guarantees."""

from .data import generate_synthetic, load_dataset, save_dataset
from .linesearch import LineSearchParams, armijo
from .linsolve import InexactnessSpec, solve_exact, solve_inexact, verify_inexact
from .model import ConditionEstimates, Dataset, ObjectiveModel
from .regularize import min_eigenvalue, ridge, spectral_floor
from .sampling import SampleSet, draw, gradient_sample_size, hessian_sample_size, \
    subsampled_gradient, subsampled_hessian
from .solvers import SolverConfig, Trace, TraceRecord, run, run_baseline, \
    run_newton, run_ssn_full, run_ssn_hessian, run_ssn_ridge, run_ssn_spectral
from .theory import RatePrediction, local_iteration_count, rate_alg1, \
    rate_alg1_inexact, rate_alg4, rate_ridge, rate_spectral

__all__ = [
    "ConditionEstimates", "Dataset", "InexactnessSpec", "LineSearchParams",
    "ObjectiveModel", "RatePrediction", "SampleSet", "SolverConfig", "Trace",
    "TraceRecord", "armijo", "draw", "generate_synthetic",
    "gradient_sample_size", "hessian_sample_size", "load_dataset",
    "local_iteration_count", "min_eigenvalue", "rate_alg1",
    "rate_alg1_inexact", "rate_alg4", "rate_ridge", "rate_spectral", "ridge",
    "run", "run_baseline", "run_newton", "run_ssn_full", "run_ssn_hessian",
    "run_ssn_ridge", "run_ssn_spectral", "save_dataset", "solve_exact",
    "solve_inexact", "spectral_floor", "subsampled_gradient",
    "subsampled_hessian", "verify_inexact",
]

__version__ = "0.1.0"
