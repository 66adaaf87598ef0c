"""Ready-made simulation configurations used by the CLI demos and tests."""
from __future__ import annotations

import numpy as np

from .simulate import SimConfig, SmoothRate
from .sir import ObservationGrid, TransmissionRate


def weekly_grid(n_weeks: int = 12, t_start: float = 0.0) -> ObservationGrid:
    return ObservationGrid.regular(t_start, t_start + n_weeks, n_weeks)


def two_changepoint_example(seed: int | None = 1) -> tuple[SimConfig, ObservationGrid]:
    """Epidemic with two downward jumps in the transmission rate.

    S0=10000, I0=10, gamma=1, beta dropping 1.75e-4 -> 1.25e-4 -> 0.75e-4 at
    weeks 3 and 10, observed weekly for 12 weeks.
    """
    grid = weekly_grid(12)
    rate = TransmissionRate(np.array([3.0, 10.0]),
                            np.array([1.75e-4, 1.25e-4, 0.75e-4]),
                            window=(grid.t_start, grid.t_end))
    cfg = SimConfig(s0=10000, i0=10, rate=rate, gamma=1.0,
                    t_end=grid.t_end, t0=grid.t_start, seed=seed)
    return cfg, grid


def smooth_decline_example(seed: int | None = 1) -> tuple[SimConfig, ObservationGrid]:
    """Epidemic whose rate declines smoothly (misspecified for a step model).

    Cubic B-spline with interior cut points at 2, 2.5, 3, 3.5, 4, 9, 9.5, 10,
    10.5 and 11; coefficients chosen to fall from ~1.75e-4 to ~0.75e-4.
    """
    grid = weekly_grid(12)
    cuts = np.array([2.0, 2.5, 3.0, 3.5, 4.0, 9.0, 9.5, 10.0, 10.5, 11.0])
    coef = 1e-4 * np.array([1.75, 1.75, 1.75, 1.60, 1.40, 1.25, 1.25,
                            1.25, 1.25, 1.15, 0.95, 0.80, 0.75, 0.75])
    rate = SmoothRate(cuts, coef, window=(grid.t_start, grid.t_end))
    cfg = SimConfig(s0=10000, i0=10, rate=rate, gamma=1.0,
                    t_end=grid.t_end, t0=grid.t_start, seed=seed)
    return cfg, grid
