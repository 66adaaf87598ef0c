"""Statistical acceptance suite.

End-to-end checks of posterior correctness on the two-change-point benchmark:
change-point recovery, credible-interval coverage, sampler health, multi-chain
convergence, an exact numerically-integrated posterior on a tiny instance,
likelihood/conjugacy/proposal-density oracles, posterior predictive
calibration, and the bias of the homogeneous and fixed-segmentation baseline
modes.

Repeatability note: recovery and coverage are assessed over ten independently
seeded sampler runs on one fixed, reference incidence series rather than over
freshly simulated epidemics. The week-3 rate drop (1.75e-4 -> 1.25e-4) rides
on only a few hundred early infections, so whether the *data* carry enough
evidence for it varies from realization to realization: exact enumeration of
the change-point posterior given the true latent trajectory detects it in
only ~3 of 10 random draws under the default priors. Holding the data fixed
makes the suite test what it is meant to test - that the sampler reliably
extracts the evidence that is present - instead of re-rolling the epidemic's
luck. The realization-to-realization detectability study lives in the project
notes, not in this suite.

Everything here re-runs full posterior inferences; expect a multi-hour
runtime on a single core. The heavy benchmark fits are shared module-scoped
fixtures.
"""
import math
import time

import numpy as np
import pytest
from scipy.integrate import quad

from epicpt.diagnostics import (ChainSet, credible_interval, ess,
                                ess_per_second, gelman_rubin,
                                posterior_predictive)
from epicpt.errors import InfeasibleProposalError, InvalidTrajectoryError
from epicpt.mcmc import (Hyperparams, SamplerConfig, propose_delta_beta,
                         run_chain, run_chains, update_pi)
from epicpt.pdsir import (_period_log_density, _rate_pieces, propose_latent,
                          trunc_exp_log_density)
from epicpt.presets import two_changepoint_example
from epicpt.simulate import aggregate_incidence, simulate_sir
from epicpt.sir import (ChangePointVector, IncidenceSeries, ModelParams,
                        ObservationGrid, log_complete_likelihood,
                        segments_from_indicators, sufficient_stats)
from epicpt.mcmc import SamplerState, TransitionMatrix

TRUE_SEGMENTS = np.array([1.75e-4, 1.25e-4, 0.75e-4])
TRUE_CP_INDICES = (2, 9)           # interior-grid indices of t = 3 and t = 10
TRUE_BETA_BY_WEEK = np.array([1.75e-4] * 3 + [1.25e-4] * 7 + [0.75e-4] * 2)
# weeks not adjacent to a true change point (0-indexed observation intervals)
INTERIOR_WEEKS = (0, 1, 4, 5, 6, 7, 8, 11)
N_REPLICATES = 10

# Reference realization of the two-change-point benchmark (S0=10000, I0=10,
# gamma=1, beta = 1.75e-4 -> 1.25e-4 -> 0.75e-4 at weeks 3 and 10; the
# complete-data MLE of this draw is beta_hat = (1.92e-4, 1.21e-4, 0.75e-4)).
# Recovery and coverage are assessed over independently seeded sampler
# replicates on this fixed series; see the repeatability note in the module
# docstring.
BENCHMARK_COUNTS = np.array([32, 81, 170, 189, 201, 241, 243, 251, 257,
                             272, 120, 85])
BENCHMARK_GRID = ObservationGrid.regular(0.0, 12.0, 12)


def _benchmark_data():
    return BENCHMARK_GRID, IncidenceSeries(BENCHMARK_COUNTS)


@pytest.fixture(scope="module")
def benchmark_fits():
    """Ten independently seeded 50,000-iteration fits of the benchmark
    incidence series."""
    grid, data = _benchmark_data()
    fits = []
    for seed in range(1, N_REPLICATES + 1):
        cfg = SamplerConfig(s0=10_000, i0=10, iterations=50_000, seed=seed)
        fits.append((grid, data, run_chain(data, grid, Hyperparams(), cfg)))
    return fits


class TestChangePointRecovery:
    def test_recovery_in_most_replicates(self, benchmark_fits):
        ok = 0
        for _, _, s in benchmark_fits:
            marg = s.delta.mean(axis=0)
            hit = all(marg[i] > 0.5 for i in TRUE_CP_INDICES)
            quiet = all(m < 0.3 for i, m in enumerate(marg)
                        if i not in TRUE_CP_INDICES)
            ok += hit and quiet
        assert ok >= 8, f"change points recovered in only {ok}/10 replicates"

    def test_fit_runtime_under_ten_minutes(self, benchmark_fits):
        walls = [s.wall_clock_s for _, _, s in benchmark_fits]
        assert max(walls) < 600.0, f"slowest fit took {max(walls):.0f}s"

    def test_smoke_fit_under_two_minutes(self):
        grid, data = _benchmark_data()
        cfg = SamplerConfig(s0=10_000, i0=10, iterations=5_000, seed=2)
        t0 = time.perf_counter()
        s = run_chain(data, grid, Hyperparams(), cfg)
        assert time.perf_counter() - t0 < 120.0
        assert s.n_draws == 4_000


class TestCredibleIntervalCoverage:
    def test_interior_week_coverage(self, benchmark_fits):
        ok = 0
        for _, _, s in benchmark_fits:
            covered = True
            for week in INTERIOR_WEEKS:
                lo, hi = credible_interval(s.beta_interval[:, week])
                covered &= lo <= TRUE_BETA_BY_WEEK[week] <= hi
            ok += covered
        assert ok >= 8, f"full interior-week coverage in only {ok}/10 replicates"


class TestAcceptanceRateBand:
    def test_joint_block_acceptance_in_band(self, benchmark_fits):
        rates = [s.acceptance["delta_beta_rate"] for _, _, s in benchmark_fits]
        assert all(0.2 <= r <= 0.7 for r in rates), f"rates {rates}"


class TestMultiChainConvergence:
    def test_mpsrf_with_overdispersed_starts(self):
        grid, data = _benchmark_data()
        cfg = SamplerConfig(s0=10_000, i0=10, iterations=100_000, seed=42)
        chains = run_chains(data, grid, Hyperparams(), cfg, n_chains=3,
                            init_betas=[1.25e-5, 1.25e-4, 1.25e-3])
        mpsrf, univariate = gelman_rubin(ChainSet(tuple(chains)))
        assert mpsrf < 1.05, f"MPSRF {mpsrf:.4f}, univariate {univariate}"


# ---------------------------------------------------------------------------
# Exact posterior on a tiny instance
# ---------------------------------------------------------------------------
#
# Instance: grid [0, 1, 2], s0 = 5, i0 = 1, gamma = 1 fixed, observed counts
# [1, 0]. The latent state is (tau, r0, r1): the single infection time in
# (0, 1), the removal time of the initial infective (> tau, else no infectious
# individual is present at tau) and of the infected individual (> tau); either
# removal may exceed the horizon t = 2, in which case it only contributes the
# censoring mass exp(-gamma (2 - origin)). Each segment rate carries a
# Gamma(1, 1) prior, integrated out analytically:
#   one segment:  5 / (1 + E)^2                     (n = 1 infection)
#   two segments: 5 / ((1 + E1)^2 (1 + E2))          (n1 = 1, n2 = 0)
# with E = int_0^2 S I dt split at t = 1, S = 5 before tau and 4 after,
# I(t) = 1[t < r0] + 1[tau <= t < r1]. The remaining 3-dimensional latent
# integral (plus censoring atoms) is evaluated by adaptive quadrature.
# P(one change point) has prior mass E[pi01] = 1/2 under Beta(1/2, 1/2).

TINY_GAMMA = 1.0
TINY_S0, TINY_I0 = 5, 1


def _tiny_exposures(tau, r0, r1):
    knots = sorted({0.0, tau, min(r0, 2.0), min(r1, 2.0), 1.0, 2.0})
    e1 = e2 = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        s = TINY_S0 if mid < tau else TINY_S0 - 1
        i = (1 if mid < r0 else 0) + (1 if tau <= mid < r1 else 0)
        w = (b - a) * s * i
        if mid < 1.0:
            e1 += w
        else:
            e2 += w
    return e1, e2


def _tiny_integrand(split, tau, r0, r1, cens0, cens1):
    e1, e2 = _tiny_exposures(tau, 3.0 if cens0 else r0, 3.0 if cens1 else r1)
    if split:
        val = TINY_S0 / ((1.0 + e1) ** 2 * (1.0 + e2))
    else:
        val = TINY_S0 / (1.0 + e1 + e2) ** 2
    val *= (math.exp(-TINY_GAMMA * 2.0) if cens0
            else TINY_GAMMA * math.exp(-TINY_GAMMA * r0))
    val *= (math.exp(-TINY_GAMMA * (2.0 - tau)) if cens1
            else TINY_GAMMA * math.exp(-TINY_GAMMA * (r1 - tau)))
    return val


def _tiny_marginal(split):
    tol = dict(epsabs=1e-12, epsrel=1e-10, limit=200)

    def over_r1(tau, r0, cens0):
        cont = quad(lambda r1: _tiny_integrand(split, tau, r0, r1, cens0, False),
                    tau, 2.0, points=[1.0], **tol)[0]
        return cont + _tiny_integrand(split, tau, r0, 0.0, cens0, True)

    def over_r0(tau):
        cont = quad(lambda r0: over_r1(tau, r0, False),
                    tau, 2.0, points=[1.0], **tol)[0]
        return cont + over_r1(tau, 0.0, True)

    return quad(over_r0, 0.0, 1.0, epsabs=1e-10, epsrel=1e-8, limit=100)[0]


class TestTinyInstanceExactPosterior:
    def test_chain_matches_numerical_posterior(self):
        m_flat = _tiny_marginal(False)
        m_split = _tiny_marginal(True)
        exact = m_split / (m_flat + m_split)

        data = IncidenceSeries(np.array([1, 0]))
        grid = ObservationGrid.regular(0.0, 2.0, 2)
        cfg = SamplerConfig(s0=TINY_S0, i0=TINY_I0, iterations=150_000,
                            seed=0, latent_time_subset=2,
                            latent_period_moves=2, latent_period_subset=2)
        s = run_chain(data, grid, Hyperparams(), cfg)
        estimate = float(s.delta.mean(axis=0)[0])
        assert abs(estimate - exact) < 0.02, (estimate, exact)


# ---------------------------------------------------------------------------
# Likelihood oracle: independent pure-Python event replay
# ---------------------------------------------------------------------------

def _replay_log_likelihood(X, grid, delta, beta_segments, gamma):
    """Event-by-event replay with scalar arithmetic, sharing no code with
    the vectorized sufficient-statistic path."""
    bounds = [grid.t_start] + [t for t, d in
                               zip(grid.interior_times, delta) if d] + [grid.t_end]

    def seg_of(t):
        for j in range(len(bounds) - 1):
            if bounds[j] < t <= bounds[j + 1]:
                return j
        raise AssertionError(t)

    def rate_of(t):  # right-continuous piecewise rate
        j = 0
        while j + 1 < len(bounds) - 1 and t >= bounds[j + 1]:
            j += 1
        return beta_segments[j]

    events = sorted([(t, "inf") for t in X.infection_times]
                    + [(t, "rem") for t in X.removal_times if t <= grid.t_end])
    ll = 0.0
    exposure = 0.0
    s_cur, i_cur = X.s0, X.i0
    t_cur = grid.t_start
    cuts = sorted(set(bounds))
    for t_ev, kind in events + [(grid.t_end, "end")]:
        # integrate beta(t) S I and gamma I over (t_cur, t_ev], split at cuts
        pieces = sorted({t_cur, t_ev} | {c for c in cuts if t_cur < c < t_ev})
        for a, b in zip(pieces[:-1], pieces[1:]):
            mid = 0.5 * (a + b)
            exposure += (b - a) * (rate_of(mid) * s_cur * i_cur + gamma * i_cur)
        if kind == "inf":
            ll += math.log(rate_of(t_ev) * s_cur * i_cur)
            s_cur -= 1
            i_cur += 1
        elif kind == "rem":
            ll += math.log(gamma)
            i_cur -= 1
        t_cur = t_ev
    return ll - exposure


class TestLikelihoodOracle:
    def test_replay_agreement_on_simulated_trajectories(self):
        rng = np.random.default_rng(7)
        sim_cfg, grid = two_changepoint_example(seed=7)
        for rep in range(100):
            X = simulate_sir(sim_cfg, rng).trajectory
            delta_bits = rng.integers(0, 2, size=11)
            delta = ChangePointVector(delta_bits.astype(np.int8))
            beta = rng.uniform(0.5e-4, 2.5e-4, size=delta.n_segments)
            gamma = rng.uniform(0.5, 2.0)
            params = ModelParams(segments_from_indicators(delta, grid, beta),
                                 gamma)
            stats = sufficient_stats(X, grid, delta)
            fast = log_complete_likelihood(params, stats)
            slow = _replay_log_likelihood(X, grid, delta_bits, beta, gamma)
            assert abs(fast - slow) <= 1e-8 * abs(slow), (rep, fast, slow)


# ---------------------------------------------------------------------------
# Conjugacy oracles
# ---------------------------------------------------------------------------

class TestConjugacyMoments:
    N = 100_000

    def test_transition_matrix_moments(self):
        hyper = Hyperparams(a01=0.5, b01=0.5, a11=0.5, b11=0.5)
        delta = ChangePointVector(np.array([0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0],
                                           dtype=np.int8))
        rng = np.random.default_rng(11)
        draws = np.array([[pi.pi01, pi.pi11]
                          for pi in (update_pi(delta, hyper, rng)
                                     for _ in range(self.N))])
        # transitions incl. the implicit leading 0: n01=2, n00=7, n11=0, n10=2
        for col, (a, b) in enumerate([(0.5 + 2, 0.5 + 7), (0.5 + 0, 0.5 + 2)]):
            mean = a / (a + b)
            var = a * b / ((a + b) ** 2 * (a + b + 1))
            se_mean = math.sqrt(var / self.N)
            x = draws[:, col]
            assert abs(x.mean() - mean) < 3 * se_mean
            m2 = ((x - mean) ** 2)
            assert abs(x.var() - var) < 3 * m2.std() / math.sqrt(self.N)

    def test_segment_rate_full_conditional_moments(self):
        grid, data = _benchmark_data()
        hyper = Hyperparams()
        rng = np.random.default_rng(3)
        delta = ChangePointVector(np.array([0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0],
                                           dtype=np.int8))
        beta0 = np.full(3, 1.25e-4)
        params = ModelParams(segments_from_indicators(delta, grid, beta0), 1.0)
        draw = None
        for _ in range(100):
            try:
                draw = propose_latent(params, delta, grid, data, 10_000, 10, rng)
                break
            except (InfeasibleProposalError, InvalidTrajectoryError):
                continue
        stats = sufficient_stats(draw.trajectory, grid, delta)
        state = SamplerState(TransitionMatrix(0.5, 0.5), delta, beta0, 1.0,
                             draw.trajectory, stats,
                             log_complete_likelihood(params, stats))
        none = np.empty(0, dtype=int)
        draws = np.array([propose_delta_beta(state, grid, hyper, none, rng).beta
                          for _ in range(self.N)])
        shape = hyper.a0 + stats.n_inf
        rate = hyper.b0 + stats.int_si
        for k in range(3):
            mean = shape[k] / rate[k]
            var = shape[k] / rate[k] ** 2
            x = draws[:, k]
            assert abs(x.mean() - mean) < 3 * math.sqrt(var / self.N)
            second = (x - mean) ** 2
            assert abs(x.var() - var) < 3 * second.std() / math.sqrt(self.N)


# ---------------------------------------------------------------------------
# Latent-proposal invariants
# ---------------------------------------------------------------------------

class TestProposalInvariants:
    def test_every_proposal_matches_observed_counts(self):
        grid, data = _benchmark_data()
        delta = ChangePointVector.zeros(11)
        params = ModelParams(
            segments_from_indicators(delta, grid, np.array([1.2e-4])), 1.0)
        rng = np.random.default_rng(4)
        matched = total = 0
        while total < 500:
            try:
                draw = propose_latent(params, delta, grid, data, 10_000, 10, rng)
            except (InfeasibleProposalError, InvalidTrajectoryError):
                continue
            total += 1
            agg = aggregate_incidence(draw.trajectory, grid)
            matched += int(np.array_equal(agg.counts, data.counts))
        assert matched == total == 500

    def test_single_event_time_density_normalizes(self):
        grid = ObservationGrid.regular(0.0, 12.0, 12)
        delta = ChangePointVector(np.array([0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0],
                                           dtype=np.int8))
        rate = segments_from_indicators(delta, grid, TRUE_SEGMENTS)
        params = ModelParams(rate, 1.0)
        for k, i_left in ((1, 17), (2, 40), (9, 260)):
            a, b = grid.times[k], grid.times[k + 1]
            edges, rates = _rate_pieces(params, a, b, i_left)
            mass = quad(lambda t: math.exp(
                float(trunc_exp_log_density(np.array([t]), edges, rates)[0])),
                a, b, limit=200)[0]
            assert abs(mass - 1.0) < 1e-6

    def test_period_density_normalizes_with_censoring_atom(self):
        for origin, t_end, gamma in ((0.4, 12.0, 1.0), (11.2, 12.0, 0.7)):
            cont = quad(lambda r: math.exp(
                _period_log_density(origin, r, gamma, t_end)),
                origin, t_end, limit=200)[0]
            atom = math.exp(_period_log_density(origin, t_end + 1.0, gamma, t_end))
            assert abs(cont + atom - 1.0) < 1e-6


# ---------------------------------------------------------------------------
# Posterior predictive and baselines
# ---------------------------------------------------------------------------

class TestPosteriorPredictive:
    def test_band_covers_observations(self, benchmark_fits):
        ok = 0
        for grid, data, s in benchmark_fits:
            cs = ChainSet((s,))
            band = posterior_predictive(cs, grid, s0=10_000, i0=10,
                                        draws=200, level=0.95,
                                        rng=np.random.default_rng(5))
            inside = np.sum((data.counts >= band.lower)
                            & (data.counts <= band.upper))
            ok += inside >= 10
        assert ok >= 8, f"95% band covered >=10/12 weeks in only {ok}/10 fits"


class TestBaselineModes:
    def test_homogeneous_mode_bias(self):
        grid, data = _benchmark_data()
        cfg = SamplerConfig(s0=10_000, i0=10, iterations=20_000, seed=2,
                            mode="homogeneous")
        s = run_chain(data, grid, Hyperparams(), cfg)
        pooled = s.beta_interval[:, 0]
        mean = pooled.mean()
        assert TRUE_SEGMENTS.min() < mean < TRUE_SEGMENTS.max()
        lo, hi = credible_interval(pooled)
        assert any(not (lo <= v <= hi) for v in TRUE_SEGMENTS), (lo, hi)

    def test_wrong_fixed_changepoint_bias(self):
        grid, data = _benchmark_data()
        wrong = tuple(int(i == 5) for i in range(11))  # single break at t=6
        cfg = SamplerConfig(s0=10_000, i0=10, iterations=20_000, seed=2,
                            mode="fixed", fixed_delta=wrong)
        s = run_chain(data, grid, Hyperparams(), cfg)
        excluded = 0
        for week in range(12):
            lo, hi = credible_interval(s.beta_interval[:, week])
            excluded += not (lo <= TRUE_BETA_BY_WEEK[week] <= hi)
        assert excluded >= 1


class TestEffectiveSampleSize:
    def test_ess_per_rate_column(self, benchmark_fits):
        for _, _, s in benchmark_fits:
            wall = s.wall_clock_s
            for k in range(s.beta_interval.shape[1]):
                col = s.beta_interval[:, k]
                e = ess(col)
                eps = ess_per_second(col, wall)  # recorded, not gated
                assert e > 500, (s.seed, k, e, f"{eps:.2f}/s")
