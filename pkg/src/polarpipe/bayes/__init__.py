"""Bayesian inference: samplers, diagnostics, rate tests and hierarchical models."""

from .diagnostics import PosteriorSummary, ess, rhat, summarize_draws
from .mcmc import Chains, MCMCConfig, SamplerError, run_mcmc, sample_hmc
from .models import (
    EngagementRow, FittedModel, NPRow, engagement_ratio, fit_engagement, fit_np_propensity,
    np_probability_by_party,
)
from .rates import RateTestResult, poisson_rate_test

__all__ = [
    "PosteriorSummary", "ess", "rhat", "summarize_draws",
    "Chains", "MCMCConfig", "SamplerError", "run_mcmc", "sample_hmc",
    "EngagementRow", "FittedModel", "NPRow", "engagement_ratio", "fit_engagement",
    "fit_np_propensity", "np_probability_by_party",
    "RateTestResult", "poisson_rate_test",
]
