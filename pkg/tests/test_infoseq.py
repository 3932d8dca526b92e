"""Information/MMSE sequence estimation and the sequence inequalities."""

import math

import numpy as np
import pytest

from slmlab import (
    ScalarPrior,
    check_card_bound,
    check_theorem_ip_ub,
    check_theorem_mmse_lb,
    check_theorem_monotone,
    conditional_mmse_function,
    discretize_bg,
    estimate_sequences,
    exact_mmse_mc,
    mean_squared_covariance,
    prior_moments,
    scalar_mi,
)

RAD = ScalarPrior.rademacher()


@pytest.fixture(scope="module")
def binary_seq():
    """The workhorse configuration: N=4 binary signal, 12 observations."""
    return estimate_sequences(RAD, 4, 12, trials=2000, seed=0)


def _gauss_like():
    nodes, wts = np.polynomial.hermite_e.hermegauss(5)
    return ScalarPrior.finite_atoms(tuple(nodes), tuple(wts / wts.sum()))


class TestSequenceEstimates:
    def test_information_starts_at_zero(self, binary_seq):
        info, _ = binary_seq
        assert info.I[0] == 0.0
        assert np.all(info.per_trial[:, 0] == 0.0)

    def test_information_nondecreasing(self, binary_seq):
        info, _ = binary_seq
        assert np.all(np.diff(info.I) >= -3.0 * info.I_prime_se)

    def test_entropy_ceiling(self, binary_seq):
        info, _ = binary_seq
        assert info.I[-1] <= 4 * math.log(2.0)

    def test_mmse_starts_at_variance_exactly(self, binary_seq):
        _, mmse = binary_seq
        assert mmse.M[0] == pytest.approx(prior_moments(RAD)[1], abs=1e-12)
        assert mmse.std_err[0] == pytest.approx(0.0, abs=1e-12)

    def test_mmse_nonincreasing_within_noise(self, binary_seq):
        _, mmse = binary_seq
        d = np.diff(mmse.M)
        se = np.diff(mmse.per_trial, axis=1).std(axis=0, ddof=1) / math.sqrt(mmse.trials)
        assert np.all(d <= 3.0 * se)

    def test_single_obs_matches_conditional_snr_oracle(self):
        # N=1: I_1 = E_a[I_X(a^2)] with a ~ N(0,1); quadrature oracle
        info, _ = estimate_sequences(RAD, 1, 1, trials=4000, seed=3)
        nodes, wts = np.polynomial.hermite_e.hermegauss(41)
        wts = wts / wts.sum()
        oracle = float(sum(w * scalar_mi(RAD, float(a) ** 2) for a, w in zip(nodes, wts)))
        se = info.std_err[1]
        assert abs(info.I[1] - oracle) < 3.0 * se

    def test_final_mmse_matches_enumeration_oracle(self):
        # independent trials of the same functional through the other module
        _, mmse = estimate_sequences(RAD, 4, 8, trials=1200, seed=4)
        est, se_mc = exact_mmse_mc(RAD, 4, 8, trials=600, seed=99)
        combined = math.hypot(mmse.std_err[8], se_mc)
        assert abs(mmse.M[8] - est) < 3.0 * combined

    def test_bg_discretized_sequences(self):
        prior = discretize_bg(ScalarPrior.bernoulli_gaussian(0.0, 1.0, 0.3), 5)
        info, mmse = estimate_sequences(prior, 2, 8, trials=800, seed=5)
        assert check_theorem_monotone(info).passed
        assert mmse.M[0] == pytest.approx(prior_moments(prior)[1], abs=1e-12)


class TestMonotoneIncrements:
    def test_binary_passes(self, binary_seq):
        info, _ = binary_seq
        res = check_theorem_monotone(info)
        assert res.passed
        assert res.worst <= 0.0

    def test_degenerate_prior_all_zero(self):
        const = ScalarPrior.finite_atoms((2.0,), (1.0,))
        info, _ = estimate_sequences(const, 3, 5, trials=50, seed=6)
        assert np.max(np.abs(info.I)) < 1e-9  # exact up to rounding in y - Ax
        assert check_theorem_monotone(info).passed


class TestIncrementUpperBound:
    def test_binary_passes_at_all_m(self, binary_seq):
        info, mmse = binary_seq
        assert check_theorem_ip_ub(info, mmse).passed

    def test_m0_bound_binary(self, binary_seq):
        # I'_0 <= log(1 + M_0)/2 = log(2)/2 for unit-variance signals
        info, _ = binary_seq
        assert info.I_prime[0] <= 0.5 * math.log(2.0) + 3.0 * info.I_prime_se[0]

    def test_gaussian_like_prior_near_equality(self):
        # the slack at m=0 is dominated by the fluctuation of the
        # measurement norm (order 1/N); at N=4 that is a few times 0.01
        info, mmse = estimate_sequences(_gauss_like(), 4, 4, trials=4000, seed=7)
        gap = 0.5 * math.log1p(mmse.M[0]) - info.I_prime[0]
        assert abs(gap) < 0.05

    def test_mismatched_estimates_rejected(self, binary_seq):
        info, _ = binary_seq
        _, other = estimate_sequences(RAD, 4, 12, trials=500, seed=1)
        with pytest.raises(ValueError):
            check_theorem_ip_ub(info, other)


class TestMMSELowerBound:
    @pytest.mark.parametrize("k,m", [(2, 10), (5, 6), (0, 12), (0, 3)])
    def test_binary_holds(self, binary_seq, k, m):
        info, mmse = binary_seq
        assert check_theorem_mmse_lb(info, mmse, k, m)

    def test_invalid_pair_rejected(self, binary_seq):
        info, mmse = binary_seq
        with pytest.raises(ValueError):
            check_theorem_mmse_lb(info, mmse, 5, 5)
        with pytest.raises(ValueError):
            check_theorem_mmse_lb(info, mmse, 3, 42)


class TestCardinalityBound:
    def test_binary_moderate_threshold(self, binary_seq):
        info, _ = binary_seq
        res = check_card_bound(info, 0.05)
        assert res.passed
        assert res.significant_count <= res.bound

    def test_threshold_above_first_information(self, binary_seq):
        # bound below one forces an (effectively) empty exceedance set
        info, _ = binary_seq
        T = info.I[1] + 0.2
        res = check_card_bound(info, T)
        assert res.bound < 1.0
        assert res.count == 0

    def test_tiny_threshold_vacuous(self, binary_seq):
        info, _ = binary_seq
        res = check_card_bound(info, 1e-9)
        assert res.bound > 1e6
        assert res.passed

    def test_nonpositive_threshold_rejected(self, binary_seq):
        info, _ = binary_seq
        with pytest.raises(ValueError):
            check_card_bound(info, 0.0)


@pytest.fixture(scope="module")
def stats():
    return mean_squared_covariance(RAD, 4, 6, trials=1500, seed=2)


class TestMeanSquaredCovariance:

    def test_terms_nonnegative(self, stats):
        assert stats.term_mean_sq >= -1e-12
        assert stats.term_trace_var >= -1e-12
        assert stats.term_eigen_spread >= -1e-12

    def test_decomposition_identity(self, stats):
        assert stats.decomposition_residual() < 1e-9

    def test_frobenius_sandwich(self, stats):
        # (mmse per dim)^2 <= N^2 msc / N and msc <= B
        B = prior_moments(RAD)[2]
        assert stats.term_mean_sq <= stats.N**2 * stats.msc + 1e-12
        assert stats.msc <= B

    def test_near_gaussian_trace_variance_is_small(self):
        # the trace-variance term vanishes for jointly Gaussian pairs;
        # a moment-matched Gaussian stand-in should sit close to zero
        # while the hard binary prior does not
        sparse = mean_squared_covariance(RAD, 4, 6, trials=1000, seed=8)
        gauss = mean_squared_covariance(_gauss_like(), 4, 6, trials=1000, seed=8)
        assert gauss.term_trace_var / gauss.term_mean_sq < 0.1
        assert sparse.term_trace_var / sparse.term_mean_sq > 0.1

    def test_co_movement_scatter_available(self, binary_seq):
        # the curvature of the information sequence and the mean-squared
        # covariance are reported side by side; both columns must exist
        # for every m (the proportionality constant is not checkable)
        info, _ = binary_seq
        msc = [mean_squared_covariance(RAD, 4, m, trials=200, seed=9).msc for m in (2, 6, 10)]
        assert all(v > 0.0 for v in msc)
        assert len(info.I_dprime) == 11


@pytest.fixture(scope="module")
def cond_result():
    return conditional_mmse_function(
        RAD, 4, 6, [0.0, 0.02, 0.1, 0.3, 1.0, 3.0, 30.0], trials=1500, seed=2
    )


class TestConditionalMMSE:

    def test_zero_snr_matches_base_mmse(self, cond_result):
        _, mmse = estimate_sequences(RAD, 4, 6, trials=1500, seed=2)
        assert cond_result.values[0] == pytest.approx(mmse.M[6], rel=1e-10)

    def test_nonincreasing(self, cond_result):
        assert np.all(np.diff(cond_result.values) <= 1e-12)

    def test_large_snr_vanishes(self, cond_result):
        assert cond_result.values[-1] < 1e-4

    def test_derivative_matches_mean_squared_covariance(self, cond_result):
        stats = mean_squared_covariance(RAD, 4, 6, trials=1500, seed=2)
        target = -stats.N * stats.msc
        combined = math.hypot(cond_result.deriv_se, stats.N * stats.msc_se)
        assert abs(cond_result.deriv_at_zero - target) < 3.0 * combined

    def test_grid_must_start_at_zero(self):
        with pytest.raises(ValueError):
            conditional_mmse_function(RAD, 3, 4, [0.1, 0.2], trials=10, seed=0)
