import numpy as np
import pytest

from epicpt.presets import two_changepoint_example
from epicpt.simulate import aggregate_incidence, simulate_sir
from epicpt.sir import (ChangePointVector, LatentTrajectory, ModelParams,
                        ObservationGrid, TransmissionRate)


@pytest.fixture(scope="session")
def setting1():
    """One realization of the two-change-point epidemic plus its weekly counts."""
    cfg, grid = two_changepoint_example(seed=1)
    result = simulate_sir(cfg, np.random.default_rng(1))
    data = aggregate_incidence(result.trajectory, grid)
    return cfg, grid, result, data


@pytest.fixture
def tiny_grid():
    return ObservationGrid(np.array([0.0, 1.0, 2.0]))


@pytest.fixture
def hand_trajectory():
    """Small trajectory with hand-checkable compartment paths.

    s0=5, i0=1: infections at 0.5, 1.2; removals at 2.5 (initial), 0.9 and 1.8.
    """
    return LatentTrajectory(np.array([0.5, 1.2]), np.array([2.5, 0.9, 1.8]),
                            s0=5, i0=1)


@pytest.fixture
def constant_params():
    return ModelParams(TransmissionRate.constant(0.1, window=(0.0, 2.0)), 0.5)
