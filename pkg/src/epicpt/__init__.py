"""Bayesian change-point inference for time-varying SIR transmission rates."""

from .diagnostics import (ChainSet, PredictiveBand, changepoint_marginals,
                          credible_interval, ess, ess_per_second, gelman_rubin,
                          posterior_predictive)
from .errors import (ConfigError, DomainError, EpicptError,
                     InfeasibleProposalError, InvalidTrajectoryError,
                     LikelihoodNumericsError)
from .mcmc import (PI01_PRIOR_PRESETS, Hyperparams, PosteriorSamples,
                   SamplerConfig, TransitionMatrix, run_chain, run_chains)
from .pdsir import ProposalDraw, log_proposal_density, propose_latent
from .simulate import (SimConfig, SimResult, SmoothRate, aggregate_incidence,
                       simulate_sir)
from .sir import (ChangePointVector, IncidenceSeries, LatentTrajectory,
                  ModelParams, ObservationGrid, SegmentStats, TransmissionRate,
                  compartments_at, effective_R, log_complete_likelihood,
                  rate_at, segments_from_indicators, sufficient_stats)

__version__ = "0.1.0"

__all__ = [
    "ChainSet", "PredictiveBand", "changepoint_marginals", "credible_interval",
    "ess", "ess_per_second", "gelman_rubin", "posterior_predictive",
    "ConfigError", "DomainError", "EpicptError", "InfeasibleProposalError",
    "InvalidTrajectoryError", "LikelihoodNumericsError",
    "PI01_PRIOR_PRESETS", "Hyperparams", "PosteriorSamples", "SamplerConfig",
    "TransitionMatrix", "run_chain", "run_chains",
    "ProposalDraw", "log_proposal_density", "propose_latent",
    "SimConfig", "SimResult", "SmoothRate", "aggregate_incidence",
    "simulate_sir",
    "ChangePointVector", "IncidenceSeries", "LatentTrajectory", "ModelParams",
    "ObservationGrid", "SegmentStats", "TransmissionRate", "compartments_at",
    "effective_R", "log_complete_likelihood", "rate_at",
    "segments_from_indicators", "sufficient_stats",
]
