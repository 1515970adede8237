"""Transfer learning for high-dimensional semiparametric survival models via
smoothed partial-rank estimation."""
from .data import (
    PerturbationParams,
    ScenarioSpec,
    SurvivalDataset,
    generate_scenario,
    load_dataset_csv,
    simulate_cohort,
    write_dataset_csv,
)
from .detection import DetectionReport, detect
from .estimators import DesparsifiedSPR, SPRSurvival, TransferSPR
from .fabs import fabs_solve, select_bic
from .inference import InferenceResult, clime_inverse, infer
from .kernels import c_index, pr_objective, spr_gradient, spr_hessian, spr_objective
from .metrics import f1_score, logrank_statistic, rmse
from .transfer import Method, SolverConfig, estimate, estimate_many

__version__ = "0.1.0"

__all__ = [
    "PerturbationParams", "ScenarioSpec", "SurvivalDataset", "generate_scenario",
    "load_dataset_csv", "simulate_cohort", "write_dataset_csv", "DetectionReport", "detect",
    "DesparsifiedSPR", "SPRSurvival", "TransferSPR", "fabs_solve", "select_bic",
    "InferenceResult", "clime_inverse", "infer", "c_index", "pr_objective", "spr_gradient",
    "spr_hessian", "spr_objective", "f1_score", "logrank_statistic", "rmse", "Method",
    "SolverConfig", "estimate", "estimate_many",
]
