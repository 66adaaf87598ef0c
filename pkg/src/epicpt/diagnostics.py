"""Convergence diagnostics and posterior summaries.

Quantiles use linear interpolation between order statistics throughout.
The multivariate potential scale reduction factor follows Brooks & Gelman;
per-coordinate factors are reported alongside it.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .mcmc import PosteriorSamples
from .simulate import SimConfig, aggregate_incidence, simulate_sir
from .sir import ObservationGrid, TransmissionRate


@dataclass(frozen=True)
class ChainSet:
    """Posterior samples from one or more chains with identical schemas."""

    chains: tuple[PosteriorSamples, ...]

    def __post_init__(self):
        chains = tuple(self.chains)
        if not chains:
            raise ValueError("need at least one chain")
        first = chains[0]
        for c in chains[1:]:
            if c.n_draws != first.n_draws or c.n_intervals != first.n_intervals:
                raise ValueError("chains must have equal lengths and column schemas")
            if not np.array_equal(c.grid_times, first.grid_times):
                raise ValueError("chains were run on different grids")
        object.__setattr__(self, "chains", chains)

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    @property
    def grid_times(self) -> np.ndarray:
        return self.chains[0].grid_times

    def pooled(self, column: str) -> np.ndarray:
        return np.concatenate([getattr(c, column) for c in self.chains], axis=0)

    def stacked(self, column: str) -> np.ndarray:
        """(n_chains, n_draws, ...) array of one column."""
        return np.stack([getattr(c, column) for c in self.chains], axis=0)


def changepoint_marginals(chains: ChainSet) -> np.ndarray:
    """Pooled frequency of an indicator being 1 at each interior grid time."""
    return chains.pooled("delta").mean(axis=0)


def ess(series) -> float:
    """Effective sample size via Geyer's initial monotone sequence estimator.

    The paired autocorrelation sums are truncated at the first negative pair
    and forced monotone, and the autocorrelation time is floored at 1, so the
    estimate never exceeds the number of draws. A constant series is flagged
    degenerate and reported as 0.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 10:
        raise ValueError("need at least 10 draws to estimate ESS")
    var = x.var()
    if var == 0:
        warnings.warn("degenerate (constant) series; ESS reported as 0")
        return 0.0
    centered = x - x.mean()
    acov = np.correlate(centered, centered, mode="full")[n - 1:] / n
    rho = acov / acov[0]
    pair_sums = rho[1:-1:2] + rho[2::2]
    tau = 1.0
    running_min = np.inf
    for s in pair_sums:
        if s < 0:
            break
        running_min = min(running_min, s)  # enforce monotone decrease
        tau += 2.0 * running_min
    return n / max(tau, 1.0)


def ess_per_second(series, wall_clock_s: float) -> float:
    return ess(series) / wall_clock_s if wall_clock_s > 0 else float("nan")


def _psrf_univariate(x: np.ndarray) -> float:
    """Potential scale reduction for one coordinate; x is (chains, draws)."""
    m, n = x.shape
    w = x.var(axis=1, ddof=1).mean()
    b_over_n = x.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0 if b_over_n == 0 else np.inf
    var_hat = (n - 1) / n * w + b_over_n
    return float(np.sqrt(var_hat / w))


def gelman_rubin(chains: ChainSet, columns: str | list[str] = "beta_interval"
                 ) -> tuple[float, np.ndarray]:
    """Brooks-Gelman multivariate PSRF plus per-coordinate univariate PSRFs.

    Operates on fixed-width continuous columns; segment rates enter through
    their per-interval expansion. Falls back to the maximum univariate factor
    with a warning when the within-chain covariance is singular.
    """
    if chains.n_chains < 2:
        raise ValueError("need at least two chains")
    if isinstance(columns, str):
        columns = [columns]
    mats = []
    for col in columns:
        arr = chains.stacked(col)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        mats.append(arr)
    x = np.concatenate(mats, axis=2)  # (m, n, d)
    m, n, d = x.shape

    univariate = np.array([_psrf_univariate(x[:, :, j]) for j in range(d)])

    chain_means = x.mean(axis=1)  # (m, d)
    w = np.zeros((d, d))
    for c in range(m):
        dev = x[c] - chain_means[c]
        w += dev.T @ dev
    w /= m * (n - 1)
    grand = chain_means.mean(axis=0)
    dev = chain_means - grand
    b_over_n = dev.T @ dev / (m - 1)

    try:
        lam = np.linalg.eigvals(np.linalg.solve(w, b_over_n))
        lam1 = float(np.max(lam.real))
        mpsrf = float(np.sqrt((n - 1) / n + (m + 1) / m * lam1))
    except np.linalg.LinAlgError:
        warnings.warn("singular within-chain covariance; "
                      "falling back to max univariate PSRF")
        mpsrf = float(np.max(univariate))
    return mpsrf, univariate


def credible_interval(series, level: float = 0.95) -> tuple[float, float]:
    """Equal-tailed interval from empirical quantiles (linear interpolation)."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("empty series")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(x, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


@dataclass(frozen=True)
class PredictiveBand:
    """Per-interval posterior predictive quantiles of new cases."""

    lower: np.ndarray
    mean: np.ndarray
    upper: np.ndarray
    level: float

    def __post_init__(self):
        if np.any(self.lower > self.upper):
            raise ValueError("lower quantile above upper quantile")

    def coverage(self, observed) -> int:
        obs = np.asarray(observed, dtype=float)
        return int(np.sum((obs >= self.lower) & (obs <= self.upper)))


def _rate_from_draw(delta_row: np.ndarray, beta_iv_row: np.ndarray,
                    grid: ObservationGrid) -> TransmissionRate:
    seg_start = np.concatenate(([0], np.flatnonzero(delta_row) + 1))
    return TransmissionRate(grid.interior_times[delta_row == 1],
                            beta_iv_row[seg_start],
                            window=(grid.t_start, grid.t_end))


def posterior_predictive(chains: ChainSet, grid: ObservationGrid, s0: int,
                         i0: int, draws: int, rng: np.random.Generator,
                         level: float = 0.95) -> PredictiveBand:
    """Simulate new epidemics from sampled posterior parameters and summarize
    per-interval incidence quantiles."""
    if draws < 100:
        raise ValueError("need at least 100 predictive draws")
    delta = chains.pooled("delta")
    beta_iv = chains.pooled("beta_interval")
    gamma = chains.pooled("gamma")
    idx = rng.integers(delta.shape[0], size=draws)
    sims = np.empty((draws, grid.n_intervals))
    for r, i in enumerate(idx):
        rate = _rate_from_draw(delta[i], beta_iv[i], grid)
        cfg = SimConfig(s0=s0, i0=i0, rate=rate, gamma=float(gamma[i]),
                        t_end=grid.t_end, t0=grid.t_start)
        res = simulate_sir(cfg, rng)
        sims[r] = aggregate_incidence(res.trajectory, grid).counts
    alpha = (1.0 - level) / 2.0
    lower, upper = np.quantile(sims, [alpha, 1.0 - alpha], axis=0)
    return PredictiveBand(lower, sims.mean(axis=0), upper, level)
