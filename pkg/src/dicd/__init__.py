"""Differentiable invariant causal discovery from multi-environment data."""
from .acyclicity import acyclicity_h, expm
from .graphs import MetricsReport, gen_er_dag, gen_sf_dag, is_acyclic, metrics, threshold
from .linear import LinearFitConfig, LinearFitResult, fit_linear, penalty_env, population_ols
from .nonlinear import MlpFitConfig, MlpFitResult, MlpSem, fit_mlp, wtheta
from .simdata import EnvSpec, MultiEnvDataset, generate, load_dataset, save_dataset
from .solver import DivergenceError, Schedule, SolverConfig, augmented_lagrangian_solve, lambda_schedule

__all__ = [
    "acyclicity_h", "expm", "MetricsReport", "gen_er_dag", "gen_sf_dag", "is_acyclic", "metrics",
    "threshold", "LinearFitConfig", "LinearFitResult", "fit_linear", "penalty_env", "population_ols",
    "MlpFitConfig", "MlpFitResult", "MlpSem", "fit_mlp", "wtheta", "EnvSpec", "MultiEnvDataset",
    "generate", "load_dataset", "save_dataset", "DivergenceError", "Schedule", "SolverConfig",
    "augmented_lagrangian_solve", "lambda_schedule",
]
