"""Core types and exact complete-data likelihood for the stochastic SIR model
with a piecewise-constant transmission rate.

All types are immutable values; operations are pure functions. Compartment
counts are piecewise constant between events, so every integral here is an
exact finite sum over the event-time partition.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidTrajectoryError, LikelihoodNumericsError

INFECTION = 1
REMOVAL = 0


@dataclass(frozen=True)
class ObservationGrid:
    """Strictly increasing observation times t_0 < t_1 < ... < t_K.

    Intervals need not be equal length. All events considered by the model
    lie in (t_0, t_K]; removal times are allowed to run past t_K and are
    censored by the likelihood.
    """

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("grid needs at least two time points (K >= 1)")
        if not np.all(np.diff(times) > 0):
            raise ValueError("grid times must be strictly increasing")
        object.__setattr__(self, "times", times)

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def n_intervals(self) -> int:
        return self.times.size - 1

    @property
    def interior_times(self) -> np.ndarray:
        """Times t_1 .. t_{K-1}, the admissible change-point locations."""
        return self.times[1:-1]

    @classmethod
    def regular(cls, t_start: float, t_end: float, n_intervals: int) -> "ObservationGrid":
        return cls(np.linspace(t_start, t_end, n_intervals + 1))


@dataclass(frozen=True)
class IncidenceSeries:
    """Observed counts of new infections per grid interval (t_{k-1}, t_k]."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size < 1:
            raise ValueError("counts must be a non-empty 1-d sequence")
        if np.any(counts < 0) or not np.issubdtype(counts.dtype, np.integer):
            counts = counts.astype(float)
            if np.any(counts < 0) or np.any(counts != np.round(counts)):
                raise ValueError("counts must be non-negative integers")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __len__(self) -> int:
        return self.counts.size


@dataclass(frozen=True)
class ChangePointVector:
    """Binary indicators over interior grid times t_1 .. t_{K-1}.

    A 1 at position i marks a jump in the transmission rate at t_{i+1};
    the number of rate segments is popcount + 1.
    """

    delta: np.ndarray

    def __post_init__(self):
        delta = np.asarray(self.delta)
        if delta.ndim != 1:
            raise ValueError("delta must be 1-d")
        if not np.all((delta == 0) | (delta == 1)):
            raise ValueError("delta entries must be 0 or 1")
        object.__setattr__(self, "delta", delta.astype(np.int8))

    @property
    def n_segments(self) -> int:
        return int(self.delta.sum()) + 1

    def __len__(self) -> int:
        return self.delta.size

    @classmethod
    def zeros(cls, n: int) -> "ChangePointVector":
        return cls(np.zeros(n, dtype=np.int8))


@dataclass(frozen=True)
class TransmissionRate:
    """Piecewise-constant rate: values[k] on [c_k, c_{k+1}).

    Evaluation is right-continuous at change points: a change at time c takes
    effect from c onward. ``window`` (when set) bounds the valid domain.
    """

    change_points: np.ndarray
    values: np.ndarray
    window: tuple[float, float] | None = None

    def __post_init__(self):
        cps = np.asarray(self.change_points, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if cps.ndim != 1 or vals.ndim != 1:
            raise ValueError("change_points and values must be 1-d")
        if vals.size != cps.size + 1:
            raise ValueError("need exactly one more value than change points")
        if np.any(vals <= 0):
            raise ValueError("rate values must be strictly positive")
        if cps.size and not np.all(np.diff(cps) > 0):
            raise ValueError("change points must be strictly increasing")
        object.__setattr__(self, "change_points", cps)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value: float, window=None) -> "TransmissionRate":
        return cls(np.empty(0), np.array([value]), window)


def rate_at(rate: TransmissionRate, t):
    """Evaluate the piecewise-constant rate at time(s) t (right-continuous)."""
    t_arr = np.asarray(t, dtype=float)
    if rate.window is not None:
        lo, hi = rate.window
        if np.any(t_arr < lo) or np.any(t_arr > hi):
            raise DomainError(f"time outside observation window [{lo}, {hi}]")
    idx = np.searchsorted(rate.change_points, t_arr, side="right")
    out = rate.values[idx]
    return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


def segments_from_indicators(delta: ChangePointVector, grid: ObservationGrid,
                             values) -> TransmissionRate:
    """Build a TransmissionRate whose change points sit at the interior grid
    times flagged by delta."""
    values = np.asarray(values, dtype=float)
    if len(delta) != grid.n_intervals - 1:
        raise ValueError("delta length must equal the number of interior grid times")
    if values.size != delta.n_segments:
        raise ValueError(
            f"expected {delta.n_segments} segment values, got {values.size}")
    cps = grid.interior_times[delta.delta == 1]
    return TransmissionRate(cps, values, window=(grid.t_start, grid.t_end))


def segment_boundaries(grid: ObservationGrid, delta: ChangePointVector) -> np.ndarray:
    """Segment cut times [t_0, c_1, ..., c_J, t_K] implied by delta."""
    if len(delta) != grid.n_intervals - 1:
        raise ValueError("delta length must equal the number of interior grid times")
    cps = grid.interior_times[delta.delta == 1]
    return np.concatenate(([grid.t_start], cps, [grid.t_end]))


@dataclass(frozen=True)
class Event:
    time: float
    kind: int  # INFECTION or REMOVAL


@dataclass(frozen=True)
class LatentTrajectory:
    """Complete-data epidemic: per-individual infection and removal times.

    Individuals 0 .. i0-1 are the initial infectives (infected at t0, which is
    bookkeeping rather than an event); individual i0+j is the j-th new
    infection in time order. ``removal_times[i]`` is individual i's removal
    and may exceed the observation horizon, in which case the likelihood
    treats it as censored.
    """

    infection_times: np.ndarray
    removal_times: np.ndarray
    s0: int
    i0: int
    r0: int = 0
    t0: float = 0.0

    def __post_init__(self):
        inf = np.asarray(self.infection_times, dtype=float).copy()
        rem = np.asarray(self.removal_times, dtype=float).copy()
        if rem.size != self.i0 + inf.size:
            raise InvalidTrajectoryError(
                "need one removal time per initial infective and per infection")
        if self.s0 < 0 or self.i0 < 0 or self.r0 < 0:
            raise InvalidTrajectoryError("initial counts must be non-negative")
        if inf.size > self.s0:
            raise InvalidTrajectoryError("more infections than initial susceptibles")
        order = np.argsort(inf, kind="stable")
        inf = inf[order]
        rem = np.concatenate((rem[: self.i0], rem[self.i0:][order]))
        if np.any(inf <= self.t0):
            raise InvalidTrajectoryError("infection times must lie strictly after t0")
        if np.any(rem[: self.i0] <= self.t0):
            raise InvalidTrajectoryError("initial infectives must be removed after t0")
        if np.any(rem[self.i0:] <= inf):
            raise InvalidTrajectoryError("each removal must follow its infection")

        times = np.concatenate((inf, rem))
        is_inf = np.zeros(times.size, dtype=bool)
        is_inf[: inf.size] = True
        order = np.argsort(times, kind="stable")
        times = times[order]
        is_inf = is_inf[order]
        # Exact ties have probability zero under the model; perturb and warn.
        if times.size > 1 and np.any(np.diff(times) == 0):
            warnings.warn("tied event times perturbed by one ulp", stacklevel=2)
            for i in range(1, times.size):
                if times[i] <= times[i - 1]:
                    times[i] = np.nextafter(times[i - 1], np.inf)

        d_i = np.where(is_inf, 1, -1)
        i_after = self.i0 + np.cumsum(d_i)
        i_before = i_after - d_i
        if np.any(i_before[is_inf] < 1):
            raise InvalidTrajectoryError("infection requires an infectious individual present")
        if np.any(i_before[~is_inf] < 1):
            raise InvalidTrajectoryError("removal requires an infectious individual present")

        object.__setattr__(self, "infection_times", inf)
        object.__setattr__(self, "removal_times", rem)
        object.__setattr__(self, "_ev_times", times)
        object.__setattr__(self, "_ev_is_inf", is_inf)
        object.__setattr__(self, "_i_before", i_before)
        object.__setattr__(self, "_cum_inf", np.cumsum(is_inf))
        object.__setattr__(self, "_cum_rem", np.cumsum(~is_inf))

    @property
    def n_infections(self) -> int:
        return self.infection_times.size

    @property
    def population(self) -> int:
        return self.s0 + self.i0 + self.r0

    def event_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """All events as (sorted times, kind flags with INFECTION==1)."""
        return self._ev_times, self._ev_is_inf.astype(np.int8)

    def iter_events(self):
        for t, k in zip(self._ev_times, self._ev_is_inf):
            yield Event(float(t), INFECTION if k else REMOVAL)


def compartments_at(X: LatentTrajectory, t: float) -> tuple[int, int, int]:
    """Compartment counts (S, I, R) after replaying events up to and including t."""
    if t < X.t0:
        raise DomainError("t precedes the observation start")
    idx = int(np.searchsorted(X._ev_times, t, side="right"))
    n_inf = int(X._cum_inf[idx - 1]) if idx else 0
    n_rem = int(X._cum_rem[idx - 1]) if idx else 0
    return X.s0 - n_inf, X.i0 + n_inf - n_rem, X.r0 + n_rem


@dataclass(frozen=True)
class SegmentStats:
    """Exact per-segment sufficient statistics of the complete data.

    n_inf[k]       infections in (c_k, c_{k+1}]
    int_si[k]      integral of S(t) I(t) over the segment
    int_i[k]       integral of I(t) over the segment
    sum_log_si[k]  sum of log S(tau-) + log I(tau-) over infections in the segment
    n_rem          removals in (t_0, t_K] (censored removals excluded)
    """

    n_inf: np.ndarray
    int_si: np.ndarray
    int_i: np.ndarray
    sum_log_si: np.ndarray
    n_rem: int

    @property
    def n_segments(self) -> int:
        return self.n_inf.size

    @property
    def total_int_i(self) -> float:
        return float(self.int_i.sum())


def _stats_on_boundaries(X: LatentTrajectory, bounds: np.ndarray) -> SegmentStats:
    t0, t_end = bounds[0], bounds[-1]
    times, is_inf = X._ev_times, X._ev_is_inf
    # events beyond the horizon are censored removals; drop them
    n_window = int(np.searchsorted(times, t_end, side="right"))
    times = times[:n_window]
    is_inf = is_inf[:n_window]
    i_before = X._i_before[:n_window]

    n_rem = int(np.sum(~is_inf))
    d_i = np.where(is_inf, 1, -1)
    i_after = X.i0 + np.cumsum(d_i)
    s_after = X.s0 - np.cumsum(is_inf)

    knots = np.concatenate(([t0], times, [t_end]))
    si_vals = np.concatenate(([X.s0 * X.i0], s_after * i_after)).astype(float)
    i_vals = np.concatenate(([X.i0], i_after)).astype(float)
    widths = np.diff(knots)
    cum_si = np.concatenate(([0.0], np.cumsum(si_vals * widths)))
    cum_i = np.concatenate(([0.0], np.cumsum(i_vals * widths)))

    # cumulative integrals evaluated at each segment boundary
    j = np.searchsorted(knots, bounds, side="right") - 1
    j = np.clip(j, 0, widths.size - 1)
    g_si = cum_si[j] + si_vals[j] * (bounds - knots[j])
    g_i = cum_i[j] + i_vals[j] * (bounds - knots[j])
    int_si = np.diff(g_si)
    int_i = np.diff(g_i)

    inf_t = X.infection_times
    seg_of_inf = np.searchsorted(bounds, inf_t, side="left") - 1
    n_seg = bounds.size - 1
    n_inf = np.bincount(seg_of_inf, minlength=n_seg).astype(np.int64)
    s_before = X.s0 - (np.cumsum(is_inf) - is_inf)
    log_si = np.log(s_before[is_inf].astype(float) * i_before[is_inf])
    sum_log_si = np.bincount(seg_of_inf, weights=log_si, minlength=n_seg)
    return SegmentStats(n_inf, int_si, int_i, sum_log_si, n_rem)


def sufficient_stats(X: LatentTrajectory, grid: ObservationGrid,
                     delta: ChangePointVector) -> SegmentStats:
    """Exact sufficient statistics under the segmentation implied by delta."""
    if np.any(X.infection_times > grid.t_end):
        raise InvalidTrajectoryError("infection beyond the observation horizon")
    return _stats_on_boundaries(X, segment_boundaries(grid, delta))


@dataclass(frozen=True)
class ModelParams:
    """Transmission rate function plus the removal rate gamma."""

    rate: TransmissionRate
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


def log_complete_likelihood(params: ModelParams, stats: SegmentStats) -> float:
    """Log complete-data likelihood of the piecewise-rate SIR.

    The latent state pairs every infection time with the removal time of the
    same individual, so removal clocks are individual: each infection at tau
    contributes log(beta_k S(tau-) I(tau-)), each individual's infectious
    period contributes gamma e^{-gamma * period} (censored at the horizon),
    which collapses to n_rem * log(gamma) - gamma * int_I, plus the infection
    survival exponent -sum_k beta_k int_SI_k.
    """
    beta = params.rate.values
    if beta.size != stats.n_segments:
        raise ValueError("stats were computed under a different segmentation")
    val = stats.n_rem * np.log(params.gamma)
    val += float(np.sum(stats.n_inf * np.log(beta) + stats.sum_log_si
                        - beta * stats.int_si - params.gamma * stats.int_i))
    if not np.isfinite(val):
        raise LikelihoodNumericsError(
            "non-finite log-likelihood: trajectory inconsistent with parameters")
    return val


def effective_R(params: ModelParams, X: LatentTrajectory,
                grid: ObservationGrid) -> np.ndarray:
    """Effective reproduction number beta(t) S(t) / gamma at each grid time."""
    betas = rate_at(params.rate, grid.times)
    s = np.array([compartments_at(X, t)[0] for t in grid.times], dtype=float)
    return betas * s / params.gamma
