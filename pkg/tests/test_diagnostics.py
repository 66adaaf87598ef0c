import dataclasses

import numpy as np
import pytest

from epicpt.diagnostics import (ChainSet, PredictiveBand, changepoint_marginals,
                                credible_interval, ess, ess_per_second,
                                gelman_rubin, posterior_predictive)
from epicpt.mcmc import PosteriorSamples
from epicpt.sir import ObservationGrid


def _samples(delta, beta_iv, chain_id=0, gamma=None, grid_times=None, **kw):
    delta = np.asarray(delta)
    beta_iv = np.asarray(beta_iv)
    n = delta.shape[0]
    if grid_times is None:
        grid_times = np.arange(beta_iv.shape[1] + 1, dtype=float)
    base = dict(grid_times=np.asarray(grid_times, dtype=float),
                delta=delta, beta_interval=beta_iv, beta_segments=[],
                pi01=np.full(n, 0.1), pi11=np.full(n, 0.5),
                gamma=np.ones(n) if gamma is None else gamma,
                log_lik=np.zeros(n), acceptance={}, iterations=n, burn_in=0,
                thin=1, seed=0, mode="learn", chain_id=chain_id,
                wall_clock_s=1.0)
    base.update(kw)
    return PosteriorSamples(**base)


class TestChainSet:
    def test_rejects_mismatched_lengths(self):
        a = _samples(np.zeros((10, 2), dtype=np.int8), np.ones((10, 3)))
        b = _samples(np.zeros((8, 2), dtype=np.int8), np.ones((8, 3)))
        with pytest.raises(ValueError):
            ChainSet((a, b))

    def test_rejects_mismatched_grids(self):
        a = _samples(np.zeros((10, 2), dtype=np.int8), np.ones((10, 3)))
        b = _samples(np.zeros((10, 2), dtype=np.int8), np.ones((10, 3)),
                     grid_times=[0.0, 2.0, 4.0, 6.0])
        with pytest.raises(ValueError):
            ChainSet((a, b))

    def test_pooled_concatenates(self):
        a = _samples(np.zeros((4, 2), dtype=np.int8), np.ones((4, 3)))
        b = _samples(np.ones((4, 2), dtype=np.int8), np.ones((4, 3)))
        cs = ChainSet((a, b))
        assert cs.pooled("delta").shape == (8, 2)
        assert cs.stacked("delta").shape == (2, 4, 2)


class TestChangepointMarginals:
    def test_pooled_frequency(self):
        a = _samples(np.array([[1, 0], [1, 0], [0, 0], [1, 0]], dtype=np.int8),
                     np.ones((4, 3)))
        b = _samples(np.array([[0, 1], [0, 0], [0, 0], [0, 0]], dtype=np.int8),
                     np.ones((4, 3)))
        np.testing.assert_allclose(changepoint_marginals(ChainSet((a, b))),
                                   [3 / 8, 1 / 8])


class TestEss:
    def test_iid_series_near_n(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=20_000)
        assert 0.9 * x.size < ess(x) <= x.size

    def test_ar1_matches_analytic_autocorrelation_time(self):
        """AR(1) with coefficient phi has tau = (1 + phi) / (1 - phi)."""
        rng = np.random.default_rng(1)
        phi = 0.8
        n = 200_000
        eps = rng.normal(size=n)
        x = np.empty(n)
        x[0] = eps[0]
        for i in range(1, n):
            x[i] = phi * x[i - 1] + eps[i]
        tau = (1 + phi) / (1 - phi)
        est = n / ess(x)
        assert abs(est - tau) / tau < 0.15

    def test_constant_series_reports_zero(self):
        with pytest.warns(UserWarning, match="degenerate"):
            assert ess(np.ones(100)) == 0.0

    def test_short_series_rejected(self):
        with pytest.raises(ValueError):
            ess(np.arange(5))

    def test_never_exceeds_draw_count(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = rng.normal(size=500)
            assert ess(x) <= 500

    def test_per_second(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=1000)
        assert ess_per_second(x, 2.0) == pytest.approx(ess(x) / 2.0)


class TestGelmanRubin:
    def _chains(self, shift=0.0, seed=0, n=4000, d=3, m=3):
        rng = np.random.default_rng(seed)
        out = []
        for c in range(m):
            beta = rng.normal(loc=c * shift, size=(n, d)) + 5.0
            out.append(_samples(np.zeros((n, d - 1), dtype=np.int8), beta,
                                chain_id=c))
        return ChainSet(tuple(out))

    def test_mixed_chains_near_one(self):
        mpsrf, univ = gelman_rubin(self._chains(shift=0.0))
        assert mpsrf < 1.05
        assert np.all(univ < 1.05)

    def test_separated_chains_flagged(self):
        mpsrf, univ = gelman_rubin(self._chains(shift=3.0))
        assert mpsrf > 1.5
        assert np.max(univ) > 1.5

    def test_requires_two_chains(self):
        cs = ChainSet((_samples(np.zeros((50, 2), dtype=np.int8),
                                np.ones((50, 3))),))
        with pytest.raises(ValueError):
            gelman_rubin(cs)


class TestCredibleInterval:
    def test_nesting(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=10_000)
        lo80, hi80 = credible_interval(x, 0.80)
        lo95, hi95 = credible_interval(x, 0.95)
        assert lo95 < lo80 < hi80 < hi95

    def test_uniform_quantiles(self):
        x = np.linspace(0.0, 1.0, 100_001)
        lo, hi = credible_interval(x, 0.90)
        assert lo == pytest.approx(0.05, abs=1e-3)
        assert hi == pytest.approx(0.95, abs=1e-3)

    def test_level_validated(self):
        with pytest.raises(ValueError):
            credible_interval(np.ones(10), 1.0)


class TestPredictiveBand:
    def test_coverage_counts(self):
        band = PredictiveBand(np.array([0.0, 10.0]), np.array([5.0, 20.0]),
                              np.array([10.0, 30.0]), level=0.95)
        assert band.coverage([5.0, 31.0]) == 1
        assert band.coverage([0.0, 10.0]) == 2

    def test_rejects_crossed_quantiles(self):
        with pytest.raises(ValueError):
            PredictiveBand(np.array([1.0]), np.array([0.5]), np.array([0.0]),
                           level=0.9)


class TestPosteriorPredictive:
    def test_band_brackets_data_generated_from_posterior_truth(self):
        """Posterior mass on the true parameters makes the band cover typical
        data simulated from those parameters."""
        grid = ObservationGrid.regular(0.0, 4.0, 4)
        n = 300
        delta = np.tile(np.array([0, 1, 0], dtype=np.int8), (n, 1))
        beta_iv = np.tile(np.array([2e-3, 2e-3, 1e-3, 1e-3]), (n, 1))
        cs = ChainSet((_samples(delta, beta_iv,
                                grid_times=grid.times),))
        rng = np.random.default_rng(5)
        band = posterior_predictive(cs, grid, s0=300, i0=5, draws=400, rng=rng)
        from epicpt.simulate import SimConfig, aggregate_incidence, simulate_sir
        from epicpt.sir import TransmissionRate
        rate = TransmissionRate(np.array([2.0]), np.array([2e-3, 1e-3]),
                                window=(0.0, 4.0))
        hits = []
        for seed in range(20):
            res = simulate_sir(SimConfig(s0=300, i0=5, rate=rate, gamma=1.0,
                                         t_end=4.0), np.random.default_rng(seed))
            obs = aggregate_incidence(res.trajectory, grid).counts
            hits.append(band.coverage(obs))
        assert np.mean(hits) > 0.8 * grid.n_intervals

    def test_requires_enough_draws(self):
        grid = ObservationGrid.regular(0.0, 4.0, 4)
        cs = ChainSet((_samples(np.zeros((200, 3), dtype=np.int8),
                                np.full((200, 4), 1e-3),
                                grid_times=grid.times),))
        with pytest.raises(ValueError):
            posterior_predictive(cs, grid, s0=100, i0=2, draws=50,
                                 rng=np.random.default_rng(0))
