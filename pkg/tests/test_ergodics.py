import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchsde import (
    DecaySeries,
    EmpiricalMeasure1D,
    SeriesEnsemble,
    bootstrap_threshold,
    fit_exponential_rate,
    invariant_sampler,
    rho_series,
    stationarity_diagnostic,
    stationary_distribution,
    theoretical_rate,
    wasserstein1_sorted,
)
from switchsde.errors import (
    DomainViolation,
    InsufficientData,
    NonPositiveMeans,
    SizeMismatch,
)


def make_series(times, means, ses=None, n=100):
    times = np.asarray(times, float)
    means = np.asarray(means, float)
    if ses is None:
        ses = np.zeros_like(means)
    return DecaySeries(times=times, means=means, std_errors=np.asarray(ses, float), n_paths=n)


class TestFitExponentialRate:
    def test_exact_exponential(self):
        t = np.linspace(0, 10, 21)
        fit = fit_exponential_rate(make_series(t, 5.0 * np.exp(-0.7 * t)), burn_in=0.0)
        assert abs(fit.rate - 0.7) < 1e-12
        assert abs(fit.intercept - math.log(5.0)) < 1e-12
        assert fit.ci_halfwidth < 1e-12

    def test_constant_series_rate_zero(self):
        t = np.linspace(0, 10, 11)
        fit = fit_exponential_rate(make_series(t, np.full(11, 2.0)), burn_in=0.0)
        assert abs(fit.rate) <= fit.ci_halfwidth + 1e-12

    def test_synthetic_noise_coverage(self):
        # 100 replications of 5 exp(-0.7 t) (1 + eps): the CI should cover
        # the true rate in at least 90 of them
        rng = np.random.default_rng(99)
        t = np.linspace(0, 10, 21)
        hits = 0
        for _ in range(100):
            means = 5.0 * np.exp(-0.7 * t) * (1.0 + rng.normal(0, 0.05, t.size))
            fit = fit_exponential_rate(make_series(t, means), burn_in=0.0)
            if abs(fit.rate - 0.7) <= fit.ci_halfwidth:
                hits += 1
        assert hits >= 90

    def test_rescaling_invariance(self):
        # rate invariant, intercept shifted by log c; the log of rescaled
        # means rounds differently, so equality holds to float precision
        t = np.linspace(0, 6, 13)
        means = 2.0 * np.exp(-1.1 * t)
        base = fit_exponential_rate(make_series(t, means), burn_in=0.0)
        scaled = fit_exponential_rate(make_series(t, 37.5 * means), burn_in=0.0)
        assert abs(scaled.rate - base.rate) < 1e-12
        assert abs((scaled.intercept - base.intercept) - math.log(37.5)) < 1e-12

    def test_burn_in_and_noise_floor_window(self):
        t = np.arange(0.0, 12.0)
        means = np.exp(-t)
        ses = np.full(t.size, 1e-4)  # floor crossed once exp(-t) < 1e-3
        fit = fit_exponential_rate(make_series(t, means, ses), burn_in=2.0)
        assert fit.window == (2.0, 6.0)
        assert fit.n_points == 5

    def test_insufficient_data(self):
        t = np.array([0.0, 1.0, 2.0, 3.0])
        with pytest.raises(InsufficientData):
            fit_exponential_rate(make_series(t, np.exp(-t)), burn_in=0.0)

    def test_non_positive_means(self):
        t = np.linspace(0, 5, 6)
        means = np.array([1.0, 0.5, 0.0, 0.2, 0.1, 0.05])
        with pytest.raises(NonPositiveMeans):
            fit_exponential_rate(make_series(t, means), burn_in=0.0)


class TestTheoreticalRate:
    def test_equal_arguments(self):
        assert theoretical_rate(2.0, 2.0) == pytest.approx(0.5, abs=1e-15)

    def test_large_theta_limit(self):
        eta = 0.8
        assert theoretical_rate(1e6 * eta, eta) == pytest.approx(eta / 2, rel=1e-5)

    def test_direct_value(self):
        assert theoretical_rate(3.0, 1.0) == pytest.approx(3.0 / 8.0, abs=1e-15)

    def test_domain(self):
        with pytest.raises(DomainViolation):
            theoretical_rate(0.0, 1.0)
        with pytest.raises(DomainViolation):
            theoretical_rate(1.0, -2.0)

    @given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
    @settings(max_examples=100, deadline=None)
    def test_below_half_minimum_and_symmetric(self, theta, eta):
        r = theoretical_rate(theta, eta)
        assert r < min(theta, eta) / 2.0 + 1e-15
        assert r == pytest.approx(theoretical_rate(eta, theta), rel=1e-12)


class TestWasserstein1:
    def test_identical(self):
        a = EmpiricalMeasure1D([3.0, -1.0, 2.0])
        assert wasserstein1_sorted(a, a) == 0.0

    def test_translation(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=200)
        assert wasserstein1_sorted(x, x + 1.7) == pytest.approx(1.7, abs=1e-12)

    def test_hand_value(self):
        assert wasserstein1_sorted([0.0, 1.0, 2.0], [0.0, 2.0, 4.0]) == pytest.approx(1.0)

    def test_size_mismatch(self):
        with pytest.raises(SizeMismatch):
            wasserstein1_sorted([0.0, 1.0], [0.0])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = rng.normal(size=(3, 50))
        ab = wasserstein1_sorted(a, b)
        bc = wasserstein1_sorted(b, c)
        ac = wasserstein1_sorted(a, c)
        assert ac <= ab + bc + 1e-12


class TestRhoSeries:
    def test_aggregates_mean_and_se(self):
        values = np.array([[4.0, 2.0], [0.0, 0.0]])
        series = rho_series(SeriesEnsemble(times=np.array([0.0, 1.0]), values=values))
        assert np.allclose(series.means, [2.0, 1.0])
        assert series.n_paths == 2
        assert np.allclose(series.std_errors, np.std(values, axis=0, ddof=1) / math.sqrt(2))


class TestStationarityDiagnostic:
    def test_identical_blocks_zero_matrix(self):
        block = np.arange(10.0)
        mat = stationarity_diagnostic([block, block.copy(), block.copy()])
        assert np.all(mat == 0.0)

    def test_iid_blocks_below_threshold(self):
        rng = np.random.default_rng(5)
        samples = rng.normal(size=4000)
        blocks = samples.reshape(4, -1)
        mat = stationarity_diagnostic(list(blocks))
        thr = bootstrap_threshold(samples, blocks.shape[1], seed=7)
        assert float(mat.max()) <= thr

    def test_shifted_block_detected(self):
        rng = np.random.default_rng(6)
        samples = rng.normal(size=4000)
        blocks = list(samples.reshape(4, -1))
        blocks[-1] = blocks[-1] + 1.0  # injected drift
        mat = stationarity_diagnostic(blocks)
        thr = bootstrap_threshold(samples, 1000, seed=7)
        assert np.all(mat[-1, :-1] > thr)

    def test_block_size_must_match(self):
        with pytest.raises(SizeMismatch):
            stationarity_diagnostic([np.zeros(4), np.zeros(5)])


class TestInvariantSampler:
    def test_regime_frequencies_match_stationary(self, q_t2_gamma2, example1_model,
                                                  constant_segment):
        n = 3000
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            samp = invariant_sampler(
                example1_model, q_t2_gamma2, constant_segment(0.0), 0, 0.1,
                t_burn=20.0, n_samples=n, stride=5.0, seed=17,
            )
        pi = stationary_distribution(q_t2_gamma2)
        se = np.sqrt(pi * (1 - pi) / n)
        assert np.all(np.abs(samp.frequencies - pi) <= 3 * se)
        assert len(samp.pooled) == n
        assert sum(len(m) for m in samp.per_regime) == n

    def test_warns_without_certificate(self, q_symmetric, example1_model, constant_segment):
        with pytest.warns(UserWarning, match="certificate"):
            invariant_sampler(
                example1_model, q_symmetric, constant_segment(0.0), 0, 0.1,
                t_burn=1.0, n_samples=50, stride=1.0, seed=3,
            )

    def test_stride_must_cover_delay(self, q_symmetric, example1_model, constant_segment):
        with pytest.raises(ValueError):
            invariant_sampler(
                example1_model, q_symmetric, constant_segment(0.0), 0, 0.1,
                t_burn=1.0, n_samples=10, stride=0.5, seed=3, certified_eta=1.0,
            )
