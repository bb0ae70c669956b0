"""Doubly robust estimation of direct and spillover effects on a single network."""

from .automodel import (FittedNuisance, ModelSpec, fit_logistic_pl, fit_nuisance,
                        outcome_spec, treatment_spec, with_noise_covariates)
from .chainsim import Dataset, SimParams, simulate_stream
from .estimator import EstimandRequest, EstimateReport, auto_g_estimate, estimate
from .harness import MCResult, ScenarioConfig, compute_truth, run_experiment
from .inference import KernelSpec, confidence_interval, hac_variance, if_corrected_scores
from .netgraph import Network, generate_ba_capped
from .propensity import AllocationPolicy, EnergySpec

__all__ = [
    "AllocationPolicy", "Dataset", "EnergySpec", "EstimandRequest", "EstimateReport",
    "FittedNuisance", "KernelSpec", "MCResult", "ModelSpec", "Network", "ScenarioConfig",
    "SimParams", "auto_g_estimate", "compute_truth", "confidence_interval", "estimate",
    "fit_logistic_pl", "fit_nuisance", "generate_ba_capped", "hac_variance",
    "if_corrected_scores", "outcome_spec", "run_experiment", "simulate_stream",
    "treatment_spec", "with_noise_covariates",
]
