"""Exact enumeration oracles: support posterior, marginals, detection,
codebooks and the near-capacity MMSE sandwich."""

import math

import numpy as np
import pytest

from slmlab import (
    ScalarPrior,
    amp_run,
    codebook_mmse_mi,
    detection_roc,
    exact_marginals,
    exact_mmse_mc,
    generate_instance,
    good_code_bounds,
    prior_moments,
    random_codebook,
    replica_solution,
    scalar_mi,
    scalar_mmse,
    support_posterior,
)
from slmlab.exact import Codebook, _Shim, atom_posterior, enumerate_configs

BG_UNIT = ScalarPrior.bernoulli_gaussian(0.0, 1.0, 0.2)


def _log_norm_pdf(y, mean, cov):
    k = len(y)
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    r = y - mean
    return -0.5 * (k * math.log(2 * math.pi) + logdet + r @ np.linalg.solve(cov, r))


class TestSupportPosterior:
    def test_zero_matrix_returns_prior(self):
        inst = _Shim(A=np.zeros((3, 4)), y=np.array([0.5, -1.0, 2.0]))
        prior = ScalarPrior.bernoulli_gaussian(0.0, 2.0, 0.3)
        post = support_posterior(inst, prior)
        w = post.weights()
        k = post.supports.sum(axis=1)
        expect = 0.3**k * 0.7 ** (4 - k)
        assert np.allclose(w, expect, atol=1e-12)

    def test_n2_matches_direct_bayes(self):
        # independent oracle: enumerate the four component evidences with
        # a dense multivariate normal
        rng = np.random.default_rng(0)
        N, M = 2, 3
        prior = ScalarPrior.bernoulli_gaussian(0.5, 2.0, 0.5)
        A = rng.standard_normal((M, N)) / math.sqrt(N)
        x = prior.sample(N, rng)
        y = A @ x + rng.standard_normal(M)
        post = support_posterior(_Shim(A, y), prior)
        logw = np.empty(4)
        for idx, u in enumerate(post.supports):
            Au = A[:, u]
            cov = np.eye(M) + 2.0 * Au @ Au.T
            mean = 0.5 * Au.sum(axis=1)
            k = int(u.sum())
            logw[idx] = k * math.log(0.5) + (N - k) * math.log(0.5) + _log_norm_pdf(y, mean, cov)
        logw -= logw.max()
        expect = np.exp(logw) / np.exp(logw).sum()
        assert np.allclose(post.weights(), expect, atol=1e-12)

    def test_gamma_near_one_selects_full_support(self):
        rng = np.random.default_rng(1)
        N, M = 4, 8
        prior = ScalarPrior.bernoulli_gaussian(0.0, 1.0, 1.0 - 1e-9)
        A = rng.standard_normal((M, N)) / math.sqrt(N)
        y = rng.standard_normal(M)
        post = support_posterior(_Shim(A, y), prior)
        full = int(np.argmax(post.supports.sum(axis=1)))
        assert post.weights()[full] > 1.0 - 1e-6

    def test_weights_normalize(self):
        inst = generate_instance(BG_UNIT, 10, 15, seed=3)
        post = support_posterior(inst, BG_UNIT)
        assert abs(post.weights().sum() - 1.0) < 1e-10

    def test_size_guard(self):
        inst = generate_instance(BG_UNIT, 21, 4, seed=0)
        with pytest.raises(ValueError):
            support_posterior(inst, BG_UNIT)


class TestExactMarginals:
    def test_exchangeable_columns_give_equal_gammas(self):
        rng = np.random.default_rng(2)
        col = rng.standard_normal(6)[:, None] / math.sqrt(3.0)
        A = np.repeat(col, 3, axis=1)
        y = rng.standard_normal(6)
        post = support_posterior(_Shim(A, y), BG_UNIT)
        _, _, gammas = exact_marginals(post)
        assert np.allclose(gammas, gammas[0], atol=1e-10)

    def test_variances_nonnegative(self):
        inst = generate_instance(BG_UNIT, 9, 14, seed=5)
        _, variances, gammas = exact_marginals(support_posterior(inst, BG_UNIT))
        assert np.all(variances >= 0.0)
        assert np.all((gammas >= 0.0) & (gammas <= 1.0))

    def test_means_match_precision_form_conditioning(self):
        # same conditional moments through the other linear-algebra route:
        # active-block precision sigma^-2 I + A_u^T A_u
        prior = ScalarPrior.bernoulli_gaussian(0.3, 100.0, 0.25)
        inst = generate_instance(prior, 8, 16, seed=7)
        post = support_posterior(inst, prior)
        w = post.weights()
        means_alt = np.zeros((len(w), 8))
        for idx, u in enumerate(post.supports):
            k = int(u.sum())
            if k == 0:
                continue
            Au = inst.A[:, u]
            lam = np.eye(k) / 100.0 + Au.T @ Au
            h = np.full(k, 0.3 / 100.0) + Au.T @ inst.y
            means_alt[idx, u] = np.linalg.solve(lam, h)
        mean_direct = w @ post.cond_means
        mean_alt = w @ means_alt
        assert np.max(np.abs(mean_direct - mean_alt)) < 1e-6

    def test_amp_agrees_in_easy_regime(self):
        prior = BG_UNIT
        inst = generate_instance(prior, 12, 18, seed=11)  # delta = 1.5
        post = support_posterior(inst, prior)
        _, _, gamma_exact = exact_marginals(post)
        out = amp_run(inst, prior)
        assert np.max(np.abs(out.gamma - gamma_exact)) < 0.25  # single instance

    def test_amp_gamma_gap_shrinks_with_delta(self):
        prior = BG_UNIT
        devs = []
        for delta in (1.0, 1.5, 2.0):
            gaps = []
            for seed in range(8):
                inst = generate_instance(prior, 10, int(10 * delta), seed=100 + seed)
                _, _, g_exact = exact_marginals(support_posterior(inst, prior))
                out = amp_run(inst, prior)
                gaps.append(float(np.max(np.abs(out.gamma - g_exact))))
            devs.append(np.mean(gaps))
        assert devs[2] < devs[0]


class TestAtomPosterior:
    def test_no_observations_returns_prior(self):
        prior = ScalarPrior.finite_atoms((-1.0, 1.0), (0.4, 0.6))
        post = atom_posterior(np.zeros((0, 3)), np.zeros(0), prior)
        configs, log_prior = enumerate_configs(prior, 3)
        assert np.allclose(post.weights(), np.exp(log_prior), atol=1e-12)

    def test_posterior_mean_matches_bruteforce(self):
        rng = np.random.default_rng(3)
        prior = ScalarPrior.rademacher()
        A = rng.standard_normal((6, 4)) / 2.0
        x = prior.sample(4, rng)
        y = A @ x + rng.standard_normal(6)
        post = atom_posterior(A, y, prior)
        # brute force over all 16 sign patterns
        best = None
        total = np.zeros(4)
        norm = 0.0
        for bits in range(16):
            cfg = np.array([1.0 if bits >> i & 1 else -1.0 for i in range(4)])
            like = math.exp(-0.5 * float(np.sum((y - A @ cfg) ** 2))) * (0.5**4)
            total += like * cfg
            norm += like
        assert np.allclose(post.posterior_mean(), total / norm, atol=1e-10)

    def test_guard(self):
        prior = ScalarPrior.rademacher()
        with pytest.raises(ValueError):
            enumerate_configs(prior, 21)


class TestExactMMSEMC:
    def test_no_observations_exact_variance(self):
        est, se = exact_mmse_mc(BG_UNIT, 6, 0, trials=8, seed=0)
        assert est == pytest.approx(prior_moments(BG_UNIT)[1], abs=1e-12)
        assert se == pytest.approx(0.0, abs=1e-12)

    def test_nonincreasing_in_observations(self):
        prior = ScalarPrior.bernoulli_gaussian(0.0, 100.0, 0.2)
        ests, ses = [], []
        for M in (2, 6, 12, 24):
            e, s = exact_mmse_mc(prior, 12, M, trials=60, seed=1)
            ests.append(e)
            ses.append(s)
        for i in range(3):
            slack = 3.0 * math.hypot(ses[i], ses[i + 1])
            assert ests[i + 1] <= ests[i] + slack

    def test_finite_size_error_above_replica(self):
        prior = ScalarPrior.bernoulli_gaussian(0.0, 100.0, 0.2)
        delta = 1.0
        est, se = exact_mmse_mc(prior, 12, 12, trials=80, seed=2)
        limit = replica_solution(prior, delta).M_delta
        assert est > limit - 3.0 * se  # finite N sits above the asymptote

    def test_atom_prior_supported(self):
        est, _ = exact_mmse_mc(ScalarPrior.rademacher(), 4, 8, trials=40, seed=3)
        assert 0.0 < est < 1.0


class TestDetectionROC:
    def test_endpoints(self):
        g = np.array([0.1, 0.9, 0.4])
        truth = np.array([False, True, False])
        rows = detection_roc(g, truth, [0.0, 1.1])
        assert tuple(rows[0][1:]) == (1.0, 1.0)
        assert tuple(rows[1][1:]) == (0.0, 0.0)

    def test_perfect_separation_hits_corner(self):
        g = np.array([0.05, 0.1, 0.95, 0.99])
        truth = np.array([False, False, True, True])
        rows = detection_roc(g, truth, np.linspace(0.0, 1.0, 21))
        fpr, tpr = rows[:, 1], rows[:, 2]
        assert np.any((fpr == 0.0) & (tpr == 1.0))

    def test_monotone_after_sorting(self):
        rng = np.random.default_rng(4)
        g = rng.random(200)
        truth = rng.random(200) < 0.3
        rows = detection_roc(g, truth, np.linspace(0, 1.0001, 64))
        order = np.lexsort((rows[:, 2], rows[:, 1]))
        assert np.all(np.diff(rows[order, 2]) >= -1e-12)

    def test_empty_class_reports_nan(self):
        rows = detection_roc([0.2, 0.7], [True, True], [0.5])
        assert math.isnan(rows[0][1])


class TestCodebook:
    def test_single_codeword(self):
        cb = Codebook(codewords=np.array([[1.0, 2.0]]))
        est = codebook_mmse_mi(cb, 1.0, trials=64, seed=0)
        assert est.mmse == pytest.approx(0.0, abs=1e-12)
        assert est.mi == pytest.approx(0.0, abs=1e-12)

    def test_antipodal_matches_scalar_atoms(self):
        c = 1.3
        cb = Codebook(codewords=np.array([[c], [-c]]))
        snr = 0.8
        est = codebook_mmse_mi(cb, snr, trials=200_000, seed=1)
        prior = ScalarPrior.finite_atoms((-c, c), (0.5, 0.5))
        assert abs(est.mmse - scalar_mmse(prior, snr)) < 3.0 * est.mmse_se
        assert abs(est.mi - scalar_mi(prior, snr)) < 3.0 * est.mi_se

    def test_orthogonal_high_snr_entropy_ceiling(self):
        L = 8
        cb = Codebook(codewords=np.eye(L) * math.sqrt(L))
        est = codebook_mmse_mi(cb, 500.0, trials=4000, seed=2)
        assert est.mi == pytest.approx(math.log(L) / L, rel=1e-3)

    def test_power_constraint_enforced(self):
        with pytest.raises(ValueError):
            Codebook(codewords=np.full((2, 2), 5.0), power_constrained=True)

    def test_random_codebook_power(self):
        cb = random_codebook(8, 64, seed=3)
        avg = float(np.mean(np.sum(cb.codewords**2, axis=1))) / 8
        assert avg == pytest.approx(1.0, abs=1e-12)

    def test_codebook_k_transform_nondecreasing(self):
        # the 1/M - s transform is monotone for arbitrary signal laws,
        # codebooks included; checked within Monte Carlo noise
        cb = random_codebook(6, 128, seed=4)
        s_grid = [0.5, 1.5, 3.0, 6.0]
        ks, sigmas = [], []
        for s in s_grid:
            est = codebook_mmse_mi(cb, s, trials=60_000, seed=5)
            ks.append(1.0 / est.mmse - s)
            sigmas.append(est.mmse_se / est.mmse**2)
        for i in range(len(ks) - 1):
            slack = 3.0 * math.hypot(sigmas[i], sigmas[i + 1])
            assert ks[i + 1] >= ks[i] - slack


class TestGoodCodeBounds:
    def test_zero_epsilon_collapse(self):
        lo, hi = good_code_bounds(2.0, 0.0, 0.7)
        assert lo == hi == 1.0 / 1.7

    def test_numeric_pair(self):
        lo, hi = good_code_bounds(1.0, 0.1, 0.5)
        e = math.exp(-0.2)
        assert lo == pytest.approx(e / 1.5 - (1 - e) / 0.5, abs=1e-15)
        assert hi == pytest.approx(1.0 / 1.5, abs=1e-15)

    def test_domain_rejected(self):
        with pytest.raises(ValueError):
            good_code_bounds(1.0, 0.1, 1.0)
        with pytest.raises(ValueError):
            good_code_bounds(1.0, -0.1, 0.5)

    def test_sandwich_on_random_codebooks(self):
        # measure the information deficit at snr, then check the MMSE
        # sandwich at every smaller test snr within Monte Carlo slack
        snr = 3.0
        for seed, (N, L) in enumerate([(6, 512), (8, 4096)]):
            cb = random_codebook(N, L, seed=seed)
            ref = codebook_mmse_mi(cb, snr, trials=40_000, seed=10 + seed)
            eps = max(0.5 * math.log1p(snr) - ref.mi, 0.0) + 3.0 * ref.mi_se
            for s in (0.0, 0.8, 1.8):
                est = codebook_mmse_mi(cb, s, trials=40_000, seed=20 + seed)
                lo, hi = good_code_bounds(snr, eps, s)
                assert est.mmse <= hi + 3.0 * est.mmse_se
                assert est.mmse >= lo - 3.0 * est.mmse_se


class TestCovarianceBounds:
    def test_frobenius_sandwich_on_enumerated_posteriors(self):
        # (tr C)^2 / N <= ||C||_F^2 pointwise and E||C||_F^2 <= N^2 B
        prior = ScalarPrior.bernoulli_gaussian(0.0, 2.0, 0.3)
        B = prior_moments(prior)[2]
        frobs = []
        N = 6
        for seed in range(12):
            inst = generate_instance(prior, N, 6, seed=seed)
            post = support_posterior(inst, prior)
            C = post.posterior_cov()
            fro = float(np.sum(C**2))
            assert fro >= (np.trace(C)) ** 2 / N - 1e-12
            frobs.append(fro)
        assert np.mean(frobs) <= N**2 * B
