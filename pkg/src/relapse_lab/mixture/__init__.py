"""Bayesian skew-Student mixture over joint log covariates and log time."""

from .density import joint_log_density, joint_log_density_terms
from .diagnostics import geweke_z, log_posterior_trace
from .params import ChainConfig, HyperParams, MixtureSample
from .predict import predictive_curve, predictive_curves
from .sampler import run_mcmc
from .serialize import samples_from_dict, samples_to_dict

__all__ = [
    "ChainConfig",
    "HyperParams",
    "MixtureSample",
    "geweke_z",
    "joint_log_density",
    "joint_log_density_terms",
    "log_posterior_trace",
    "predictive_curve",
    "predictive_curves",
    "run_mcmc",
    "samples_from_dict",
    "samples_to_dict",
]
