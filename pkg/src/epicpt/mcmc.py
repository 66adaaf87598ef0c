"""Three-block Metropolis-within-Gibbs sampler for the change-point SIR model.

Per iteration: (1) conjugate Gibbs draw of the 2x2 indicator transition matrix,
(2) joint Metropolis-Hastings move on the change-point indicators and all
segment rates, with indicators re-proposed from the exact two-state Markov
bridge conditional given their fixed neighbours and rates drawn from their
conjugate Gamma full conditionals, (3) independence Metropolis-Hastings move
on the latent event times using the piecewise-decoupled proposal.

All probability arithmetic is in log space. Acceptance ratios evaluate the
indicator prior and bridge-proposal terms explicitly even though they cancel
algebraically, so each factor can be audited in isolation.
"""
from __future__ import annotations

import dataclasses
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import EpicptError, InfeasibleProposalError, InvalidTrajectoryError, \
    LikelihoodNumericsError
from .pdsir import (log_proposal_density, propose_infection_times,
                    propose_latent, propose_latent_block, propose_periods)
from .sir import (ChangePointVector, IncidenceSeries, LatentTrajectory,
                  ModelParams, ObservationGrid, SegmentStats,
                  log_complete_likelihood, segments_from_indicators,
                  sufficient_stats)

log = logging.getLogger(__name__)

# Prior presets for pi01 explored in sensitivity studies: the Jeffreys default
# plus two increasingly sparsity-favouring choices.
PI01_PRIOR_PRESETS = {
    "jeffreys": (0.5, 0.5),
    "sparse": (1.0, 5.0),
    "very_sparse": (5.0, 50.0),
}

MAX_BLOCK_SIZE = 16


@dataclass(frozen=True)
class TransitionMatrix:
    """Rows of the 2x2 indicator transition matrix; pi_ij = P(i -> j)."""

    pi01: float
    pi11: float

    def __post_init__(self):
        for name in ("pi01", "pi11"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie strictly in (0, 1)")

    @property
    def pi00(self) -> float:
        return 1.0 - self.pi01

    @property
    def pi10(self) -> float:
        return 1.0 - self.pi11

    def log_matrix(self) -> np.ndarray:
        return np.log([[self.pi00, self.pi01], [self.pi10, self.pi11]])


@dataclass(frozen=True)
class Hyperparams:
    """Gamma prior on segment rates, Beta priors on pi01/pi11, and an optional
    Gamma prior on the removal rate."""

    a0: float = 1.0
    b0: float = 1.0
    a01: float = 0.5
    b01: float = 0.5
    a11: float = 0.5
    b11: float = 0.5
    gamma_shape: float = 1.0
    gamma_rate: float = 1.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")


@dataclass(frozen=True)
class SamplerConfig:
    s0: int
    i0: int
    iterations: int = 50_000
    burn_in: int | None = None  # default: 20% of iterations
    thin: int = 1
    delta_block_size: int = 1
    delta_proposal: str = "flip"  # flip | bridge
    joint_flip_moves: int = 0   # joint (flip, rates, latent-block) moves per iteration
    latent_time_subset: int = 6     # infection times re-drawn per interval move
    latent_intervals_per_iter: int | None = None  # None = every interval each iteration
    latent_period_moves: int = 4    # period moves per iteration
    latent_period_subset: int = 8   # individuals re-drawn per period move
    latent_block_size: int | None = None  # optional whole-interval independence sweep
    mode: str = "learn"  # learn | homogeneous | fixed
    fixed_delta: tuple[int, ...] | None = None
    gamma_mode: str = "fixed"  # fixed | estimate
    gamma: float = 1.0
    seed: int = 0
    init_beta: tuple[float, ...] | None = None
    init_delta: tuple[int, ...] | None = None
    init_pi: tuple[float, float] | None = None
    debug_checks: bool = False
    max_infeasible_streak: int = 10_000

    def __post_init__(self):
        burn = self.resolved_burn_in
        if not (self.iterations > burn >= 0):
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1 or self.delta_block_size < 1:
            raise ValueError("thin and delta_block_size must be >= 1")
        if self.latent_block_size is not None and self.latent_block_size < 1:
            raise ValueError("latent_block_size must be >= 1 or None")
        if self.latent_time_subset < 1 or self.latent_period_subset < 1:
            raise ValueError("latent subset sizes must be >= 1")
        if self.latent_period_moves < 0:
            raise ValueError("latent_period_moves must be >= 0")
        if self.joint_flip_moves < 0:
            raise ValueError("joint_flip_moves must be >= 0")
        if self.delta_block_size > MAX_BLOCK_SIZE:
            raise ValueError(f"delta_block_size capped at {MAX_BLOCK_SIZE}")
        if self.mode not in ("learn", "homogeneous", "fixed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.delta_proposal not in ("flip", "bridge"):
            raise ValueError(f"unknown delta_proposal {self.delta_proposal!r}")
        if self.mode == "fixed" and self.fixed_delta is None:
            raise ValueError("mode='fixed' requires fixed_delta")
        if self.gamma_mode not in ("fixed", "estimate"):
            raise ValueError(f"unknown gamma_mode {self.gamma_mode!r}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def resolved_burn_in(self) -> int:
        return self.iterations // 5 if self.burn_in is None else self.burn_in


@dataclass
class SamplerState:
    """Mutable chain state; cached stats are always consistent with
    (latent, delta)."""

    pi: TransitionMatrix
    delta: ChangePointVector
    beta: np.ndarray
    gamma: float
    latent: LatentTrajectory
    stats: SegmentStats
    log_lik: float

    def params(self, grid: ObservationGrid) -> ModelParams:
        rate = segments_from_indicators(self.delta, grid, self.beta)
        return ModelParams(rate, self.gamma)


@dataclass
class PosteriorSamples:
    """Retained draws of one chain plus acceptance bookkeeping.

    ``beta_interval`` expands the variable-length segment rates onto the fixed
    per-observation-interval coordinate system; ``beta_segments`` keeps the raw
    per-segment values of each draw.
    """

    grid_times: np.ndarray
    delta: np.ndarray          # (draws, K-1)
    beta_interval: np.ndarray  # (draws, K)
    beta_segments: list
    pi01: np.ndarray
    pi11: np.ndarray
    gamma: np.ndarray
    log_lik: np.ndarray
    acceptance: dict
    iterations: int
    burn_in: int
    thin: int
    seed: int
    mode: str
    chain_id: int = 0
    wall_clock_s: float = 0.0

    @property
    def n_draws(self) -> int:
        return self.delta.shape[0]

    @property
    def n_intervals(self) -> int:
        return self.beta_interval.shape[1]


# ---------------------------------------------------------------------------
# block 1: transition matrix
# ---------------------------------------------------------------------------

def transition_counts(delta: ChangePointVector) -> np.ndarray:
    """2x2 matrix n[i, j] of i->j transitions in delta, including the initial
    step out of the implicit pre-window state 0 (so the initial distribution
    nu(1) = pi01 is conjugate as well)."""
    ext = np.concatenate(([0], delta.delta)).astype(np.int64)
    prev, cur = ext[:-1], ext[1:]
    n = np.zeros((2, 2), dtype=np.int64)
    np.add.at(n, (prev, cur), 1)
    return n


def update_pi(delta: ChangePointVector, hyper: Hyperparams,
              rng: np.random.Generator) -> TransitionMatrix:
    """Conjugate Beta draw of (pi01, pi11) given the indicator sequence."""
    n = transition_counts(delta)
    pi01 = rng.beta(hyper.a01 + n[0, 1], hyper.b01 + n[0, 0])
    pi11 = rng.beta(hyper.a11 + n[1, 1], hyper.b11 + n[1, 0])
    eps = np.finfo(float).tiny
    return TransitionMatrix(min(max(pi01, eps), 1 - 1e-15),
                            min(max(pi11, eps), 1 - 1e-15))


def delta_log_prior(delta: ChangePointVector, pi: TransitionMatrix) -> float:
    """Log P(delta | pi) under the two-state Markov prior started from state 0."""
    n = transition_counts(delta)
    return float(np.sum(n * pi.log_matrix()))


# ---------------------------------------------------------------------------
# block 2: joint move on (delta, beta)
# ---------------------------------------------------------------------------

def _runs(positions: np.ndarray) -> list[tuple[int, int]]:
    """Split sorted positions into maximal consecutive runs (start, length)."""
    runs = []
    start = prev = int(positions[0])
    for p in positions[1:]:
        p = int(p)
        if p == prev + 1:
            prev = p
            continue
        runs.append((start, prev - start + 1))
        start = prev = p
    runs.append((start, prev - start + 1))
    return runs


def _run_conditional(delta: np.ndarray, start: int, length: int,
                     pi: TransitionMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Exact conditional of a consecutive indicator run given its fixed
    neighbours: (2^m assignment matrix, log probabilities)."""
    logpi = pi.log_matrix()
    left = 0 if start == 0 else int(delta[start - 1])
    end = start + length
    right = int(delta[end]) if end < delta.size else None
    m = length
    patterns = ((np.arange(2 ** m)[:, None] >> np.arange(m)[None, :]) & 1).astype(np.int64)
    lw = logpi[left, patterns[:, 0]]
    for i in range(1, m):
        lw = lw + logpi[patterns[:, i - 1], patterns[:, i]]
    if right is not None:
        lw = lw + logpi[patterns[:, -1], right]
    lw = lw - _logsumexp(lw)
    return patterns, lw


def _logsumexp(x: np.ndarray) -> float:
    m = np.max(x)
    return float(m + np.log(np.sum(np.exp(x - m))))


def propose_delta_indicators(delta: ChangePointVector, positions: np.ndarray,
                             pi: TransitionMatrix, rng: np.random.Generator):
    """Re-draw the selected indicator components from their exact Markov-bridge
    conditional. Returns (delta*, log q(new block | rest), log q(old block | rest))."""
    cur = delta.delta.copy()
    new = cur.copy()
    lq_fwd = 0.0
    lq_rev = 0.0
    for start, length in _runs(np.sort(positions)):
        patterns, lw = _run_conditional(cur, start, length, pi)
        p = np.exp(lw)
        pick = int(rng.choice(patterns.shape[0], p=p / p.sum()))
        new[start:start + length] = patterns[pick]
        lq_fwd += float(lw[pick])
        old_idx = int(np.dot(cur[start:start + length], 1 << np.arange(length)))
        lq_rev += float(lw[old_idx])
    return ChangePointVector(new), lq_fwd, lq_rev


def propose_delta_flip(delta: ChangePointVector, positions: np.ndarray,
                       rng: np.random.Generator):
    """Keep-or-flip proposal: each selected indicator is flipped independently
    with probability 1/2. Symmetric, so both proposal log-densities are equal
    and cancel in the acceptance ratio."""
    new = delta.delta.copy()
    toggle = rng.random(positions.size) < 0.5
    pos = positions[toggle]
    new[pos] = 1 - new[pos]
    return ChangePointVector(new), 0.0, 0.0


def segment_conditionals(hyper: Hyperparams, stats: SegmentStats):
    """Conjugate Gamma(shape, rate) full-conditional parameters per segment."""
    return hyper.a0 + stats.n_inf, hyper.b0 + stats.int_si


def _gamma_logpdf(x, shape, rate) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(shape * np.log(rate) - gammaln(shape)
                        + (shape - 1.0) * np.log(x) - rate * x))


@dataclass
class DeltaBetaProposal:
    delta: ChangePointVector
    beta: np.ndarray
    stats: SegmentStats
    log_q_forward: float
    log_q_reverse: float
    changed_delta: bool


def propose_delta_beta(state: SamplerState, grid: ObservationGrid,
                       hyper: Hyperparams, positions: np.ndarray,
                       rng: np.random.Generator,
                       style: str = "flip") -> DeltaBetaProposal:
    """Joint proposal: indicator block re-proposal (symmetric keep-or-flip or
    the exact Markov-bridge conditional) plus fresh conjugate Gamma draws for
    every segment rate under the proposed segmentation."""
    if positions.size and style == "flip":
        delta_star, lq_fwd, lq_rev = propose_delta_flip(
            state.delta, positions, rng)
    elif positions.size:
        delta_star, lq_fwd, lq_rev = propose_delta_indicators(
            state.delta, positions, state.pi, rng)
    else:
        delta_star, lq_fwd, lq_rev = state.delta, 0.0, 0.0
    changed = not np.array_equal(delta_star.delta, state.delta.delta)
    stats_star = (sufficient_stats(state.latent, grid, delta_star)
                  if changed else state.stats)
    shape_star, rate_star = segment_conditionals(hyper, stats_star)
    beta_star = rng.gamma(shape_star, 1.0 / rate_star)
    lq_fwd += _gamma_logpdf(beta_star, shape_star, rate_star)
    shape_cur, rate_cur = segment_conditionals(hyper, state.stats)
    lq_rev += _gamma_logpdf(state.beta, shape_cur, rate_cur)
    return DeltaBetaProposal(delta_star, beta_star, stats_star, lq_fwd, lq_rev, changed)


def accept_delta_beta(state: SamplerState, proposal: DeltaBetaProposal,
                      hyper: Hyperparams, grid: ObservationGrid,
                      rng: np.random.Generator) -> bool:
    """Evaluate the joint acceptance ratio; refresh caches on acceptance."""
    try:
        rate_star = segments_from_indicators(proposal.delta, grid, proposal.beta)
        log_lik_star = log_complete_likelihood(
            ModelParams(rate_star, state.gamma), proposal.stats)
    except (LikelihoodNumericsError, ValueError):
        log.warning("non-finite (delta, beta) acceptance ratio; move rejected")
        return False

    log_ratio = (log_lik_star
                 + delta_log_prior(proposal.delta, state.pi)
                 + _gamma_logpdf(proposal.beta, hyper.a0, hyper.b0)
                 + proposal.log_q_reverse
                 - state.log_lik
                 - delta_log_prior(state.delta, state.pi)
                 - _gamma_logpdf(state.beta, hyper.a0, hyper.b0)
                 - proposal.log_q_forward)
    if not np.isfinite(log_ratio):
        log.warning("non-finite (delta, beta) acceptance ratio; move rejected")
        return False
    if np.log(1.0 - rng.random()) < log_ratio:
        state.delta = proposal.delta
        state.beta = proposal.beta
        state.stats = proposal.stats
        state.log_lik = log_lik_star
        return True
    return False


# ---------------------------------------------------------------------------
# block 3: latent data
# ---------------------------------------------------------------------------

def update_latent(state: SamplerState, grid: ObservationGrid,
                  obs: IncidenceSeries, config: SamplerConfig,
                  rng: np.random.Generator,
                  block: tuple[int, int] | None = None) -> tuple[bool, bool]:
    """Independence MH move on the latent trajectory, either whole (block=None)
    or restricted to a range of observation intervals conditional on the rest.

    Returns (accepted, infeasible); an infeasible or invalid proposal counts
    as a rejection.
    """
    params = state.params(grid)
    try:
        if block is None:
            draw = propose_latent(params, state.delta, grid, obs,
                                  config.s0, config.i0, rng)
        else:
            draw = propose_latent_block(params, state.delta, grid, obs,
                                        state.latent, block, rng)
    except (InfeasibleProposalError, InvalidTrajectoryError):
        return False, True
    try:
        stats_star = sufficient_stats(draw.trajectory, grid, state.delta)
        log_lik_star = log_complete_likelihood(params, stats_star)
    except (LikelihoodNumericsError, InvalidTrajectoryError):
        return False, True
    log_q_old = log_proposal_density(state.latent, params, state.delta, grid,
                                     obs, block=block)
    log_alpha = (log_lik_star + log_q_old) - (state.log_lik + draw.log_q)
    if np.log(1.0 - rng.random()) < log_alpha:
        state.latent = draw.trajectory
        state.stats = stats_star
        state.log_lik = log_lik_star
        return True, False
    return False, False


def _try_latent_move(state: SamplerState, grid: ObservationGrid,
                     proposal, rng: np.random.Generator) -> tuple[bool, bool]:
    """Shared accept/reject for conditional latent moves.

    ``proposal`` is a thunk returning (trajectory, log_q_fwd, log_q_rev).
    Returns (accepted, infeasible).
    """
    try:
        traj, lq_fwd, lq_rev = proposal()
    except (InfeasibleProposalError, InvalidTrajectoryError):
        return False, True
    try:
        stats_star = sufficient_stats(traj, grid, state.delta)
        log_lik_star = log_complete_likelihood(state.params(grid), stats_star)
    except (LikelihoodNumericsError, InvalidTrajectoryError):
        return False, True
    log_alpha = (log_lik_star + lq_rev) - (state.log_lik + lq_fwd)
    if np.log(1.0 - rng.random()) < log_alpha:
        state.latent = traj
        state.stats = stats_star
        state.log_lik = log_lik_star
        return True, False
    return False, False


def update_latent_times(state: SamplerState, grid: ObservationGrid,
                        obs: IncidenceSeries, k: int, config: SamplerConfig,
                        rng: np.random.Generator) -> tuple[bool, bool]:
    """MH move re-drawing a random subset of interval k's infection times
    while holding every removal time fixed."""
    cum = np.concatenate(([0], np.cumsum(obs.counts)))
    n_k = int(obs.counts[k])
    if n_k == 0:
        return False, False
    m = min(n_k, config.latent_time_subset)
    positions = cum[k] + rng.choice(n_k, size=m, replace=False)

    def proposal():
        return propose_infection_times(state.params(grid), grid, state.latent,
                                       k, positions, rng)

    return _try_latent_move(state, grid, proposal, rng)


def update_latent_periods(state: SamplerState, grid: ObservationGrid,
                          config: SamplerConfig,
                          rng: np.random.Generator) -> tuple[bool, bool]:
    """MH move re-drawing the infectious periods of a few random individuals."""
    n_total = state.latent.removal_times.size
    m = min(n_total, config.latent_period_subset)
    individuals = rng.choice(n_total, size=m, replace=False)

    def proposal():
        return propose_periods(state.params(grid), grid, state.latent,
                               individuals, rng)

    return _try_latent_move(state, grid, proposal, rng)


def update_delta_beta_latent(state: SamplerState, grid: ObservationGrid,
                             obs: IncidenceSeries, hyper: Hyperparams,
                             config: SamplerConfig, site: int,
                             rng: np.random.Generator) -> tuple[bool, bool]:
    """Joint MH move: flip one indicator, redraw every segment rate from its
    conjugate conditional under the flipped segmentation, and refresh the
    latent data of the two observation intervals adjacent to the flip time —
    all in a single accept/reject step.

    Segmentations with different change points favour different latent event
    histories, so the single-site flip move and the latent moves each see the
    other's current state as evidence against moving: the chain can only cross
    between such modes through rare fluctuations. This composite kernel
    proposes the latent re-adaptation together with the flip, which raises the
    crossing rate by an order of magnitude where the change-point posterior is
    genuinely bimodal. Returns (accepted, infeasible).
    """
    new = state.delta.delta.copy()
    new[site] = 1 - new[site]
    delta_star = ChangePointVector(new)

    # beta* from its conjugate conditional under (delta*, current latent)
    stats_mid = sufficient_stats(state.latent, grid, delta_star)
    shape_f, rate_f = segment_conditionals(hyper, stats_mid)
    beta_star = rng.gamma(shape_f, 1.0 / rate_f)
    lq_beta_fwd = _gamma_logpdf(beta_star, shape_f, rate_f)

    # latent block refresh around the flip time under (delta*, beta*)
    block = (site, min(site + 2, grid.n_intervals))
    params_star = ModelParams(
        segments_from_indicators(delta_star, grid, beta_star), state.gamma)
    try:
        draw = propose_latent_block(params_star, delta_star, grid, obs,
                                    state.latent, block, rng)
        stats_star = sufficient_stats(draw.trajectory, grid, delta_star)
        log_lik_star = log_complete_likelihood(params_star, stats_star)
    except (InfeasibleProposalError, InvalidTrajectoryError,
            LikelihoodNumericsError):
        return False, True

    # reverse-move densities: beta from its conditional under (delta, latent*),
    # and the current block under the current parameters
    stats_rev = sufficient_stats(draw.trajectory, grid, state.delta)
    shape_r, rate_r = segment_conditionals(hyper, stats_rev)
    lq_beta_rev = _gamma_logpdf(state.beta, shape_r, rate_r)
    lq_block_rev = log_proposal_density(state.latent, state.params(grid),
                                        state.delta, grid, obs, block=block)

    log_alpha = (log_lik_star
                 + delta_log_prior(delta_star, state.pi)
                 + _gamma_logpdf(beta_star, hyper.a0, hyper.b0)
                 + lq_beta_rev + lq_block_rev
                 - state.log_lik
                 - delta_log_prior(state.delta, state.pi)
                 - _gamma_logpdf(state.beta, hyper.a0, hyper.b0)
                 - lq_beta_fwd - draw.log_q)
    if not np.isfinite(log_alpha):
        log.warning("non-finite joint flip acceptance ratio; move rejected")
        return False, False
    if np.log(1.0 - rng.random()) < log_alpha:
        state.delta = delta_star
        state.beta = beta_star
        state.latent = draw.trajectory
        state.stats = stats_star
        state.log_lik = log_lik_star
        return True, False
    return False, False


def update_gamma(state: SamplerState, hyper: Hyperparams,
                 rng: np.random.Generator) -> float:
    """Conjugate Gibbs draw of the removal rate given the latent data."""
    shape = hyper.gamma_shape + state.stats.n_rem
    rate = hyper.gamma_rate + state.stats.total_int_i
    return float(rng.gamma(shape, 1.0 / rate))


# ---------------------------------------------------------------------------
# chain driver
# ---------------------------------------------------------------------------

def _expand_to_intervals(delta: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Map per-segment values onto the fixed per-interval coordinate system."""
    seg_of_interval = np.concatenate(([0], np.cumsum(delta)))
    return beta[seg_of_interval]


def _initial_delta(config: SamplerConfig, n_interior: int) -> ChangePointVector:
    if config.mode == "homogeneous":
        return ChangePointVector.zeros(n_interior)
    if config.mode == "fixed":
        fixed = np.asarray(config.fixed_delta, dtype=np.int8)
        if fixed.size != n_interior:
            raise ValueError(
                f"fixed_delta length {fixed.size} != interior grid size {n_interior}")
        return ChangePointVector(fixed)
    if config.init_delta is not None:
        init = np.asarray(config.init_delta, dtype=np.int8)
        if init.size != n_interior:
            raise ValueError("init_delta length mismatch")
        return ChangePointVector(init)
    # Start saturated (every interior time a change point): per-interval rates
    # adapt to the data immediately and the sampler prunes unsupported change
    # points, which mixes far better than growing them from the all-zero state.
    return ChangePointVector(np.ones(n_interior, dtype=np.int8))


def run_chain(data: IncidenceSeries, grid: ObservationGrid, hyper: Hyperparams,
              config: SamplerConfig, rng: np.random.Generator | None = None,
              chain_id: int = 0) -> PosteriorSamples:
    """Run one chain of the three-block sampler and return retained draws."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if len(data) != grid.n_intervals:
        raise ValueError("incidence length must match the number of grid intervals")
    if data.total > config.s0:
        raise ValueError("observed infections exceed the initial susceptible count")

    t_start = time.perf_counter()
    n_interior = grid.n_intervals - 1
    delta = _initial_delta(config, n_interior)
    if config.init_pi is not None:
        pi = TransitionMatrix(*config.init_pi)
    else:
        pi = TransitionMatrix(hyper.a01 / (hyper.a01 + hyper.b01),
                              hyper.a11 / (hyper.a11 + hyper.b11))
    if config.init_beta is not None:
        beta = np.asarray(config.init_beta, dtype=float)
        if beta.size == 1:
            beta = np.full(delta.n_segments, float(beta[0]))
        if beta.size != delta.n_segments:
            raise ValueError("init_beta length must match the initial segmentation")
    else:
        beta = np.full(delta.n_segments, hyper.a0 / hyper.b0)
    gamma = config.gamma

    params0 = ModelParams(segments_from_indicators(delta, grid, beta), gamma)
    draw0 = None
    for _ in range(100):
        try:
            draw0 = propose_latent(params0, delta, grid, data,
                                   config.s0, config.i0, rng)
            break
        except (InfeasibleProposalError, InvalidTrajectoryError):
            continue
    if draw0 is None:
        raise EpicptError("could not initialize latent data; check counts, "
                          "initial values and priors")
    stats0 = sufficient_stats(draw0.trajectory, grid, delta)
    log_lik0 = log_complete_likelihood(params0, stats0)
    state = SamplerState(pi, delta, beta, gamma, draw0.trajectory, stats0, log_lik0)

    burn_in = config.resolved_burn_in
    n_draws = (config.iterations - burn_in) // config.thin
    out_delta = np.empty((n_draws, n_interior), dtype=np.int8)
    out_beta_iv = np.empty((n_draws, grid.n_intervals))
    out_beta_segments: list[np.ndarray] = []
    out_pi01 = np.empty(n_draws)
    out_pi11 = np.empty(n_draws)
    out_gamma = np.empty(n_draws)
    out_ll = np.empty(n_draws)
    counters = {k: 0 for k in ("delta_beta_proposed", "delta_beta_accepted",
                               "delta_flip_proposed", "delta_flip_accepted",
                               "joint_flip_proposed", "joint_flip_accepted",
                               "latent_proposed", "latent_accepted",
                               "latent_time_proposed", "latent_time_accepted",
                               "latent_period_proposed", "latent_period_accepted",
                               "latent_infeasible")}

    learn_delta = config.mode == "learn"
    sweep_ptr = 0
    joint_ptr = 0
    latent_ptr = 0
    infeasible_streak = 0
    kept = 0
    for it in range(config.iterations):
        post_burn = it >= burn_in
        state.pi = update_pi(state.delta, hyper, rng)

        if learn_delta and n_interior > 0:
            n_blocks = -(-n_interior // config.delta_block_size)
            block_positions = [
                np.unique((sweep_ptr + b * config.delta_block_size
                           + np.arange(config.delta_block_size)) % n_interior)
                for b in range(n_blocks)]
            sweep_ptr = (sweep_ptr + 1) % n_interior
        else:
            block_positions = [np.empty(0, dtype=int)]
        for positions in block_positions:
            proposal = propose_delta_beta(state, grid, hyper, positions, rng,
                                          style=config.delta_proposal)
            accepted = accept_delta_beta(state, proposal, hyper, grid, rng)
            if post_burn:
                counters["delta_beta_proposed"] += 1
                counters["delta_beta_accepted"] += accepted
                if proposal.changed_delta:
                    counters["delta_flip_proposed"] += 1
                    counters["delta_flip_accepted"] += accepted

        if learn_delta and n_interior > 0:
            for _ in range(config.joint_flip_moves):
                joint_accepted, joint_infeasible = update_delta_beta_latent(
                    state, grid, data, hyper, config, joint_ptr, rng)
                joint_ptr = (joint_ptr + 1) % n_interior
                if post_burn:
                    counters["joint_flip_proposed"] += 1
                    counters["joint_flip_accepted"] += joint_accepted
                    counters["latent_infeasible"] += joint_infeasible

        moves: list[tuple[str, object]] = []
        if config.latent_intervals_per_iter is None:
            time_intervals = range(grid.n_intervals)
        else:
            m = config.latent_intervals_per_iter
            time_intervals = [(latent_ptr + j) % grid.n_intervals for j in range(m)]
            latent_ptr = (latent_ptr + m) % grid.n_intervals
        moves += [("time", k) for k in time_intervals]
        moves += [("period", None)] * config.latent_period_moves
        if config.latent_block_size is not None:
            s = config.latent_block_size
            moves += [("block", (k, min(k + s, grid.n_intervals)))
                      for k in range(0, grid.n_intervals, s)]
        for kind, arg in moves:
            if kind == "time":
                if int(data.counts[arg]) == 0:
                    continue  # nothing to move in an empty interval
                lat_accepted, infeasible = update_latent_times(
                    state, grid, data, arg, config, rng)
            elif kind == "period":
                lat_accepted, infeasible = update_latent_periods(
                    state, grid, config, rng)
            else:
                lat_accepted, infeasible = update_latent(state, grid, data,
                                                         config, rng, block=arg)
            if post_burn:
                counters["latent_proposed"] += 1
                counters["latent_accepted"] += lat_accepted
                counters["latent_infeasible"] += infeasible
                if kind == "time":
                    counters["latent_time_proposed"] += 1
                    counters["latent_time_accepted"] += lat_accepted
                elif kind == "period":
                    counters["latent_period_proposed"] += 1
                    counters["latent_period_accepted"] += lat_accepted
            infeasible_streak = infeasible_streak + 1 if infeasible else 0
            if infeasible_streak > config.max_infeasible_streak:
                raise EpicptError("latent proposals infeasible for "
                                  f"{infeasible_streak} consecutive moves; "
                                  "review priors and initialization")

        if config.gamma_mode == "estimate":
            state.gamma = update_gamma(state, hyper, rng)
            state.log_lik = log_complete_likelihood(state.params(grid), state.stats)

        if config.debug_checks:
            _debug_check(state, grid, data)

        if post_burn and (it - burn_in) % config.thin == 0 and kept < n_draws:
            out_delta[kept] = state.delta.delta
            out_beta_iv[kept] = _expand_to_intervals(state.delta.delta, state.beta)
            out_beta_segments.append(state.beta.copy())
            out_pi01[kept] = state.pi.pi01
            out_pi11[kept] = state.pi.pi11
            out_gamma[kept] = state.gamma
            out_ll[kept] = state.log_lik
            kept += 1

    acceptance = dict(counters)
    if counters["delta_beta_proposed"]:
        acceptance["delta_beta_rate"] = (
            counters["delta_beta_accepted"] / counters["delta_beta_proposed"])
        acceptance["latent_rate"] = (
            counters["latent_accepted"] / max(counters["latent_proposed"], 1))
        for key in ("latent_time", "latent_period"):
            if counters[f"{key}_proposed"]:
                acceptance[f"{key}_rate"] = (
                    counters[f"{key}_accepted"] / counters[f"{key}_proposed"])
    if not learn_delta:
        acceptance["delta_flip_rate"] = None  # indicators never re-proposed
    elif counters["delta_flip_proposed"]:
        acceptance["delta_flip_rate"] = (
            counters["delta_flip_accepted"] / counters["delta_flip_proposed"])
    if counters["joint_flip_proposed"]:
        acceptance["joint_flip_rate"] = (
            counters["joint_flip_accepted"] / counters["joint_flip_proposed"])

    return PosteriorSamples(
        grid_times=grid.times.copy(),
        delta=out_delta[:kept],
        beta_interval=out_beta_iv[:kept],
        beta_segments=out_beta_segments,
        pi01=out_pi01[:kept], pi11=out_pi11[:kept],
        gamma=out_gamma[:kept], log_lik=out_ll[:kept],
        acceptance=acceptance,
        iterations=config.iterations, burn_in=burn_in, thin=config.thin,
        seed=config.seed, mode=config.mode, chain_id=chain_id,
        wall_clock_s=time.perf_counter() - t_start)


def _debug_check(state: SamplerState, grid: ObservationGrid,
                 data: IncidenceSeries) -> None:
    from .simulate import aggregate_incidence

    fresh = sufficient_stats(state.latent, grid, state.delta)
    assert np.allclose(fresh.int_si, state.stats.int_si)
    assert np.allclose(fresh.int_i, state.stats.int_i)
    assert np.array_equal(fresh.n_inf, state.stats.n_inf)
    assert fresh.n_rem == state.stats.n_rem
    agg = aggregate_incidence(state.latent, grid)
    assert np.array_equal(agg.counts, data.counts), "latent counts drifted from data"


def _chain_worker(args):
    data, grid, hyper, config, seed_seq, chain_id = args
    rng = np.random.default_rng(seed_seq)
    return run_chain(data, grid, hyper, config, rng, chain_id=chain_id)


def max_workers() -> int:
    cap = os.environ.get("EPICPT_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def run_chains(data: IncidenceSeries, grid: ObservationGrid, hyper: Hyperparams,
               config: SamplerConfig, n_chains: int = 1,
               init_betas: list | None = None) -> list[PosteriorSamples]:
    """Run several independent chains with RNG streams spawned from config.seed.

    ``init_betas`` optionally overrides the starting rate vector per chain
    (for over-dispersed starts). Chains run in parallel processes, capped by
    the EPICPT_THREADS environment variable.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(n_chains)
    jobs = []
    for c in range(n_chains):
        cfg = config
        if init_betas is not None:
            cfg = dataclasses.replace(config, init_beta=tuple(np.atleast_1d(init_betas[c])))
        jobs.append((data, grid, hyper, cfg, seeds[c], c))
    workers = min(n_chains, max_workers())
    if workers <= 1 or n_chains == 1:
        return [_chain_worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_chain_worker, jobs))
