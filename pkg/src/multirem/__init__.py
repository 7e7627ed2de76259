"""Multiplicative latent factor model for relational events with multiple receivers."""

from .model import (
    BetaPrior,
    EventDataset,
    LatentState,
    Message,
    ModelConfig,
    SimulationDesign,
    inclusion_probability,
    marginal_covariance,
    mean_suitability,
    simulate_dataset,
    simulate_event,
    with_intercept,
)
from .mcmc import GibbsSampler, McmcSettings, PosteriorDraws, run_chain
from .ppc import PpcReport, replicate, run_ppc, stat_t1, stat_t2, stat_t3, stat_t4

__version__ = "0.1.0"

__all__ = [
    "BetaPrior",
    "EventDataset",
    "GibbsSampler",
    "LatentState",
    "McmcSettings",
    "Message",
    "ModelConfig",
    "PosteriorDraws",
    "PpcReport",
    "SimulationDesign",
    "inclusion_probability",
    "marginal_covariance",
    "mean_suitability",
    "replicate",
    "run_chain",
    "run_ppc",
    "simulate_dataset",
    "simulate_event",
    "stat_t1",
    "stat_t2",
    "stat_t3",
    "stat_t4",
    "with_intercept",
    "__version__",
]
