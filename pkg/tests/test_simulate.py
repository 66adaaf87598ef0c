import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from epicpt.simulate import SimConfig, SmoothRate, aggregate_incidence, simulate_sir
from epicpt.sir import LatentTrajectory, ObservationGrid, TransmissionRate, rate_at


def _config(beta=2.0, gamma=1.0, s0=30, i0=3, t_end=2.0, rate=None):
    if rate is None:
        rate = TransmissionRate.constant(beta / (s0 + i0), window=(0.0, t_end))
    return SimConfig(s0=s0, i0=i0, rate=rate, gamma=gamma, t_end=t_end)


class TestSmoothRate:
    def test_coefficient_count_enforced(self):
        with pytest.raises(ValueError):
            SmoothRate(np.array([1.0]), np.ones(3), window=(0.0, 2.0))

    def test_positive_coefficients_required(self):
        with pytest.raises(ValueError):
            SmoothRate(np.array([1.0]), np.array([1.0, 1.0, -1.0, 1.0, 1.0]),
                       window=(0.0, 2.0))

    def test_envelope_dominates(self):
        cuts = np.array([2.0, 5.0, 8.0])
        coef = np.array([1.0, 3.0, 2.0, 0.5, 1.5, 2.5, 0.7])
        r = SmoothRate(cuts, coef, window=(0.0, 10.0))
        ts = np.linspace(0.0, 10.0, 5001)
        assert np.all(r.at(ts) <= r.envelope + 1e-12)
        assert np.all(r.at(ts) > 0)

    def test_interpolates_constant(self):
        # all-equal coefficients give a constant spline
        r = SmoothRate(np.array([1.0]), np.full(5, 2.5), window=(0.0, 2.0))
        np.testing.assert_allclose(r.at(np.linspace(0, 2, 50)), 2.5)

    def test_outside_window_raises(self):
        r = SmoothRate(np.empty(0), np.full(4, 1.0), window=(0.0, 2.0))
        with pytest.raises(ValueError):
            r.at(2.5)


class TestSimulateSir:
    def test_deterministic_under_seed(self):
        cfg = _config()
        r1 = simulate_sir(cfg, np.random.default_rng(5))
        r2 = simulate_sir(cfg, np.random.default_rng(5))
        np.testing.assert_array_equal(r1.trajectory.infection_times,
                                      r2.trajectory.infection_times)
        np.testing.assert_array_equal(r1.trajectory.removal_times,
                                      r2.trajectory.removal_times)

    def test_counts_bookkeeping(self):
        cfg = _config(s0=100, i0=5, beta=3.0, t_end=4.0)
        res = simulate_sir(cfg, np.random.default_rng(7))
        X = res.trajectory
        assert X.n_infections <= cfg.s0
        assert X.removal_times.size == cfg.i0 + X.n_infections
        assert np.all(X.infection_times > 0)
        assert np.all(X.infection_times <= cfg.t_end)

    def test_no_infection_when_rate_zero_susceptibles(self):
        cfg = _config(s0=0, i0=4, t_end=3.0,
                      rate=TransmissionRate.constant(1.0, window=(0.0, 3.0)))
        res = simulate_sir(cfg, np.random.default_rng(1))
        assert res.trajectory.n_infections == 0

    def test_extinction_flag(self):
        # gamma huge relative to infection pressure: epidemic dies fast
        cfg = SimConfig(s0=10, i0=1, gamma=50.0, t_end=100.0,
                        rate=TransmissionRate.constant(1e-4, window=(0.0, 100.0)))
        res = simulate_sir(cfg, np.random.default_rng(2))
        assert res.extinct
        assert res.extinction_time is not None
        assert res.extinction_time < 100.0

    def test_final_size_moment_birth_free(self):
        """With s0=0 the infectious count is a pure death process; the number
        removed by time t is Binomial(i0, 1 - exp(-gamma t))."""
        gamma, t_end, i0 = 0.7, 1.3, 6
        cfg = SimConfig(s0=0, i0=i0, gamma=gamma, t_end=t_end,
                        rate=TransmissionRate.constant(1.0, window=(0.0, t_end)))
        rng = np.random.default_rng(11)
        n = 4000
        removed = np.array([
            np.sum(simulate_sir(cfg, rng).trajectory.removal_times <= t_end)
            for _ in range(n)])
        p = 1.0 - np.exp(-gamma * t_end)
        se = np.sqrt(i0 * p * (1 - p) / n)
        assert abs(removed.mean() - i0 * p) < 4 * se

    def test_first_event_time_distribution(self):
        """Time of the first event is Exp(beta*s0*i0 + gamma*i0) while no event
        has occurred; compare against the analytic CDF."""
        beta, gamma, s0, i0 = 0.01, 0.5, 40, 3
        lam = beta * s0 * i0 + gamma * i0
        cfg = SimConfig(s0=s0, i0=i0, gamma=gamma, t_end=50.0,
                        rate=TransmissionRate.constant(beta, window=(0.0, 50.0)))
        rng = np.random.default_rng(13)
        firsts = []
        for _ in range(3000):
            X = simulate_sir(cfg, rng).trajectory
            times, _ = X.event_arrays()
            times = times[times <= 50.0]
            if times.size:
                firsts.append(times[0])
        res = sps.kstest(firsts, sps.expon(scale=1.0 / lam).cdf)
        assert res.pvalue > 1e-3

    def test_piecewise_and_thinning_agree_on_constant_rate(self):
        """A flat spline and a constant piecewise rate give statistically
        matching final infection counts."""
        s0, i0, t_end = 200, 5, 3.0
        beta = 0.004
        flat = SmoothRate(np.empty(0), np.full(4, beta), window=(0.0, t_end))
        piece = TransmissionRate.constant(beta, window=(0.0, t_end))
        rng = np.random.default_rng(17)
        n = 600
        tot_p = np.array([simulate_sir(SimConfig(s0, i0, piece, 1.0, t_end), rng)
                          .trajectory.n_infections for _ in range(n)])
        tot_s = np.array([simulate_sir(SimConfig(s0, i0, flat, 1.0, t_end), rng)
                          .trajectory.n_infections for _ in range(n)])
        res = sps.mannwhitneyu(tot_p, tot_s)
        assert res.pvalue > 1e-3


class TestAggregateIncidence:
    def test_hand_counts(self):
        X = LatentTrajectory(np.array([0.2, 0.8, 1.0, 1.7]),
                             np.array([5.0, 5.1, 5.2, 5.3, 5.4]), s0=10, i0=1)
        grid = ObservationGrid(np.array([0.0, 1.0, 2.0]))
        counts = aggregate_incidence(X, grid).counts
        np.testing.assert_array_equal(counts, [3, 1])  # 1.0 belongs to (0, 1]

    @given(st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_total_matches_infections(self, seed):
        cfg = _config(s0=50, i0=2, beta=2.5, t_end=3.0)
        res = simulate_sir(cfg, np.random.default_rng(seed))
        grid = ObservationGrid(np.linspace(0.0, 3.0, 7))
        assert aggregate_incidence(res.trajectory, grid).total == \
            res.trajectory.n_infections
