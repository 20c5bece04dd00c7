"""Relapse-time estimation from noisy biomarker trajectories modelled as a PDMP."""

__version__ = "0.1.0"

from .estimate import EstimationFailure, JumpEstimate, estimate_cohort, estimate_jumps
from .model import ModelParams, PdmpState
from .simulate import GroundTruth, ScenarioConfig, Trajectory, simulate_batch, simulate_trajectory
from .survival import SurvivalFit, fit_weibull_censored, kaplan_meier

__all__ = [
    "EstimationFailure",
    "GroundTruth",
    "JumpEstimate",
    "ModelParams",
    "PdmpState",
    "ScenarioConfig",
    "SurvivalFit",
    "Trajectory",
    "estimate_cohort",
    "estimate_jumps",
    "fit_weibull_censored",
    "kaplan_meier",
    "simulate_batch",
    "simulate_trajectory",
]
