"""Piecewise-decoupled proposal for latent SIR event times given incidence counts.

Within each observation interval the infectious count is frozen at its value
at the interval's left endpoint, so conditional on the observed count the
infection times are i.i.d. truncated-exponential on the interval and every
infectious period is an independent Exp(gamma) draw. The resulting proposal
density is available in closed form, which is what makes the
Metropolis-Hastings correction in the sampler exact.

Infectious periods running past the observation horizon are retained on the
trajectory; the density accounts for them through the censoring probability
exp(-gamma (t_K - tau)) rather than the full exponential density, so that the
proposal lives on the same space as the truncated complete-data likelihood.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleProposalError
from .sir import (ChangePointVector, IncidenceSeries, LatentTrajectory,
                  ModelParams, ObservationGrid, compartments_at)

__all__ = ["ProposalDraw", "propose_latent", "propose_latent_block",
           "propose_infection_times", "propose_periods", "log_proposal_density"]


@dataclass(frozen=True)
class ProposalDraw:
    trajectory: LatentTrajectory
    log_q: float


def _rate_pieces(params: ModelParams, a: float, b: float, i_left: int):
    """Piecewise-constant infection intensity beta(t) * i_left on (a, b)."""
    cps = params.rate.change_points
    inner = cps[(cps > a) & (cps < b)]
    edges = np.concatenate(([a], inner, [b]))
    idx = np.searchsorted(cps, edges[:-1], side="right")
    rates = params.rate.values[idx] * i_left
    return edges, rates


def _trunc_exp_sample(edges: np.ndarray, rates: np.ndarray, n: int, rng) -> np.ndarray:
    """n i.i.d. draws from the exponential with piecewise-constant rate,
    truncated to (edges[0], edges[-1]], by inversion of the cumulative hazard."""
    haz = rates * np.diff(edges)
    h_edges = np.concatenate(([0.0], np.cumsum(haz)))
    z = -np.expm1(-h_edges[-1])
    v = 1.0 - rng.random(n)  # in (0, 1], keeps draws strictly inside the interval
    h = -np.log1p(-v * z)
    j = np.clip(np.searchsorted(h_edges, h, side="right") - 1, 0, rates.size - 1)
    return edges[j] + (h - h_edges[j]) / rates[j]


def trunc_exp_log_density(taus: np.ndarray, edges: np.ndarray,
                          rates: np.ndarray) -> np.ndarray:
    """Log density of the truncated piecewise-rate exponential at each tau."""
    haz = rates * np.diff(edges)
    h_edges = np.concatenate(([0.0], np.cumsum(haz)))
    log_z = np.log(-np.expm1(-h_edges[-1]))
    j = np.clip(np.searchsorted(edges, taus, side="right") - 1, 0, rates.size - 1)
    return np.log(rates[j]) - (h_edges[j] + rates[j] * (taus - edges[j])) - log_z


def _period_log_density(tau, removal, gamma: float, t_end: float):
    """Exp(gamma) infectious-period log density, censored at the horizon."""
    tau = np.asarray(tau, dtype=float)
    removal = np.asarray(removal, dtype=float)
    observed = removal <= t_end
    return np.where(observed,
                    np.log(gamma) - gamma * (removal - tau),
                    -gamma * (t_end - tau))


def propose_latent(params: ModelParams, delta: ChangePointVector,
                   grid: ObservationGrid, obs: IncidenceSeries,
                   s0: int, i0: int, rng: np.random.Generator) -> ProposalDraw:
    """Draw a complete trajectory matching the observed counts exactly.

    Raises InfeasibleProposalError when the decoupled process cannot realize
    the counts (no infectious individual present, or susceptibles exhausted);
    the sampler treats that as an automatic rejection.
    """
    counts = obs.counts
    if counts.size != grid.n_intervals:
        raise ValueError("incidence length must match the number of grid intervals")
    if counts.sum() > s0:
        raise InfeasibleProposalError("observed infections exceed initial susceptibles")

    gamma = params.gamma
    t0 = grid.t_start
    inf_times: list[np.ndarray] = []
    rem_times = [t0 + rng.exponential(1.0 / gamma, size=i0)]
    cum_inf = 0
    for k in range(grid.n_intervals):
        a, b = grid.times[k], grid.times[k + 1]
        drawn_rem = np.concatenate(rem_times)
        i_left = i0 + cum_inf - int(np.sum(drawn_rem <= a))
        n = int(counts[k])
        if n > 0:
            if i_left <= 0:
                raise InfeasibleProposalError(
                    f"interval {k + 1} needs infections but no infectious individuals remain")
            edges, rates = _rate_pieces(params, a, b, i_left)
            taus = np.sort(_trunc_exp_sample(edges, rates, n, rng))
            inf_times.append(taus)
            rem_times.append(taus + rng.exponential(1.0 / gamma, size=n))
        cum_inf += n

    inf = np.concatenate(inf_times) if inf_times else np.empty(0)
    rem = np.concatenate(rem_times)
    traj = LatentTrajectory(inf, rem, s0=s0, i0=i0, t0=t0)
    log_q = log_proposal_density(traj, params, delta, grid, obs)
    return ProposalDraw(traj, log_q)


def propose_latent_block(params: ModelParams, delta: ChangePointVector,
                         grid: ObservationGrid, obs: IncidenceSeries,
                         base: LatentTrajectory, block: tuple[int, int],
                         rng: np.random.Generator) -> ProposalDraw:
    """Re-draw the latent data of the observation intervals block = [k0, k1)
    conditional on the rest of ``base``.

    Infection times and infectious periods of the block's infections are
    regenerated; when the block contains the first interval the initial
    infectives' periods are regenerated too. log_q is the density of the new
    block only, so it pairs with ``log_proposal_density(..., block=block)``.
    """
    k0, k1 = block
    if not 0 <= k0 < k1 <= grid.n_intervals:
        raise ValueError("block must be a non-empty range of interval indices")
    counts = obs.counts
    gamma = params.gamma
    inf = base.infection_times
    iv = np.searchsorted(grid.times, inf, side="left") - 1
    in_block = (iv >= k0) & (iv < k1)
    kept_inf = inf[~in_block]
    kept_rem = base.removal_times[base.i0:][~in_block]
    pre_inf = inf[iv < k0]
    pre_rem = base.removal_times[base.i0:][iv < k0]
    if k0 == 0:
        init_rem = base.t0 + rng.exponential(1.0 / gamma, size=base.i0)
    else:
        init_rem = base.removal_times[: base.i0]

    new_inf: list[np.ndarray] = []
    new_rem: list[np.ndarray] = []
    for k in range(k0, k1):
        n = int(counts[k])
        if n == 0:
            continue
        a, b = grid.times[k], grid.times[k + 1]
        known_inf = np.concatenate([pre_inf] + new_inf)
        known_rem = np.concatenate([init_rem, pre_rem] + new_rem)
        i_left = base.i0 + int(np.sum(known_inf <= a)) - int(np.sum(known_rem <= a))
        if i_left <= 0:
            raise InfeasibleProposalError(
                f"interval {k + 1} needs infections but no infectious individuals remain")
        edges, rates = _rate_pieces(params, a, b, i_left)
        taus = np.sort(_trunc_exp_sample(edges, rates, n, rng))
        new_inf.append(taus)
        new_rem.append(taus + rng.exponential(1.0 / gamma, size=n))

    all_inf = np.concatenate([kept_inf] + new_inf)
    all_rem = np.concatenate([init_rem, kept_rem] + new_rem)
    traj = LatentTrajectory(all_inf, all_rem, s0=base.s0, i0=base.i0, t0=base.t0)
    log_q = log_proposal_density(traj, params, delta, grid, obs, block=block)
    return ProposalDraw(traj, log_q)


def propose_infection_times(params: ModelParams, grid: ObservationGrid,
                            base: LatentTrajectory, k: int,
                            positions: np.ndarray, rng: np.random.Generator):
    """Re-draw the infection times at the given positions (indices into the
    sorted infection list, all lying in observation interval k), keeping every
    removal time fixed.

    The decoupled rate beta(t) * I(t_k) is invariant under the move, so the
    forward and reverse truncated-exponential densities share parameters.
    Returns (trajectory, log_q_forward, log_q_reverse); raises
    InfeasibleProposalError when a new time lands at or after its removal.
    """
    a, b = grid.times[k], grid.times[k + 1]
    i_left = compartments_at(base, a)[1]
    if i_left <= 0:
        raise InfeasibleProposalError("no infectious individuals at the interval start")
    edges, rates = _rate_pieces(params, a, b, i_left)
    taus = _trunc_exp_sample(edges, rates, positions.size, rng)
    rem = base.removal_times[base.i0 + positions]
    if np.any(taus >= rem):
        raise InfeasibleProposalError("proposed infection time at or after removal")
    lq_fwd = float(np.sum(trunc_exp_log_density(taus, edges, rates)))
    old = base.infection_times[positions]
    lq_rev = float(np.sum(trunc_exp_log_density(old, edges, rates)))
    inf = base.infection_times.copy()
    inf[positions] = taus
    traj = LatentTrajectory(inf, base.removal_times, s0=base.s0, i0=base.i0,
                            t0=base.t0)
    return traj, lq_fwd, lq_rev


def propose_periods(params: ModelParams, grid: ObservationGrid,
                    base: LatentTrajectory, individuals: np.ndarray,
                    rng: np.random.Generator):
    """Re-draw the infectious periods of the given individuals (indices into
    removal_times; the first i0 are the initial infectives) as fresh
    exponentials from their infection origins.

    Returns (trajectory, log_q_forward, log_q_reverse) with the censored
    period densities on both sides.
    """
    gamma = params.gamma
    origins = np.where(individuals < base.i0, base.t0,
                       base.infection_times[np.maximum(individuals - base.i0, 0)])
    new_rem = origins + rng.exponential(1.0 / gamma, size=individuals.size)
    lq_fwd = float(np.sum(_period_log_density(origins, new_rem, gamma, grid.t_end)))
    old_rem = base.removal_times[individuals]
    lq_rev = float(np.sum(_period_log_density(origins, old_rem, gamma, grid.t_end)))
    rem = base.removal_times.copy()
    rem[individuals] = new_rem
    traj = LatentTrajectory(base.infection_times, rem, s0=base.s0, i0=base.i0,
                            t0=base.t0)
    return traj, lq_fwd, lq_rev


def log_proposal_density(X: LatentTrajectory, params: ModelParams,
                         delta: ChangePointVector, grid: ObservationGrid,
                         obs: IncidenceSeries,
                         block: tuple[int, int] | None = None) -> float:
    """Density the generators above assign to X; -inf when X is inconsistent
    with the observed counts.

    With ``block=(k0, k1)`` only the terms belonging to that interval range
    are summed (the block's infection times and periods, plus the initial
    infectives' periods when k0 == 0): the conditional density of the block
    given the rest of the trajectory.
    """
    counts = obs.counts
    if counts.size != grid.n_intervals:
        raise ValueError("incidence length must match the number of grid intervals")
    inf = X.infection_times
    if inf.size != counts.sum():
        return -np.inf
    if inf.size and (inf[0] <= grid.t_start or inf[-1] > grid.t_end):
        return -np.inf
    cum = np.concatenate(([0], np.cumsum(counts)))
    per_interval = np.diff(np.searchsorted(inf, grid.times, side="right"))
    if np.any(per_interval != counts):
        return -np.inf
    k0, k1 = (0, grid.n_intervals) if block is None else block

    log_q = 0.0
    for k in range(k0, k1):
        n = int(counts[k])
        if n == 0:
            continue
        a, b = grid.times[k], grid.times[k + 1]
        i_left = compartments_at(X, a)[1]
        if i_left <= 0:
            return -np.inf
        edges, rates = _rate_pieces(params, a, b, i_left)
        log_q += float(np.sum(trunc_exp_log_density(inf[cum[k]:cum[k + 1]],
                                                    edges, rates)))

    pos0, pos1 = int(cum[k0]), int(cum[k1])
    origins = inf[pos0:pos1]
    removals = X.removal_times[X.i0 + pos0: X.i0 + pos1]
    if k0 == 0:
        origins = np.concatenate((np.full(X.i0, X.t0), origins))
        removals = np.concatenate((X.removal_times[: X.i0], removals))
    log_q += float(np.sum(_period_log_density(origins, removals,
                                              params.gamma, grid.t_end)))
    return log_q
