"""AMP engine: instance generation, recursion, diagnostics, prediction."""

import math

import numpy as np
import pytest

from slmlab import (
    ScalarPrior,
    amp_diagnostics,
    amp_run,
    generate_instance,
    predict_new_observation,
    prior_moments,
    state_evolution,
)

BG_FLAGSHIP = ScalarPrior.bernoulli_gaussian(0.0, 1e6, 0.2)
BG_UNIT = ScalarPrior.bernoulli_gaussian(0.0, 1.0, 0.2)


class TestGenerateInstance:
    def test_determinism(self):
        a = generate_instance(BG_UNIT, 50, 30, seed=42)
        b = generate_instance(BG_UNIT, 50, 30, seed=42)
        assert np.array_equal(a.A, b.A)
        assert np.array_equal(a.x_true, b.x_true)
        assert np.array_equal(a.w, b.w)
        assert np.array_equal(a.y, b.y)

    def test_seed_changes_instance(self):
        a = generate_instance(BG_UNIT, 50, 30, seed=1)
        b = generate_instance(BG_UNIT, 50, 30, seed=2)
        assert not np.array_equal(a.A, b.A)

    def test_tiny_instance(self):
        inst = generate_instance(BG_UNIT, 8, 4, seed=0)
        assert inst.A.shape == (4, 8)
        assert inst.y.shape == (4,)
        assert np.allclose(inst.y, inst.A @ inst.x_true + inst.w)

    def test_row_norm_concentration(self):
        # rows are N(0, I/N): unit norm up to 5/sqrt(N) fluctuations
        inst = generate_instance(BG_UNIT, 4000, 800, seed=3)
        row_norms = np.linalg.norm(inst.A, axis=1)
        assert np.all(np.abs(row_norms - 1.0) < 5.0 / math.sqrt(4000))

    def test_matrix_entry_scale(self):
        inst = generate_instance(BG_UNIT, 2000, 500, seed=4)
        assert inst.A.std() == pytest.approx(1.0 / math.sqrt(2000), rel=5e-2)

    def test_flagship_shape(self):
        inst = generate_instance(BG_FLAGSHIP, 10_000, 3_000, seed=0)
        assert inst.delta == pytest.approx(0.3)
        frac = np.mean(inst.x_true != 0.0)
        assert frac == pytest.approx(0.2, abs=0.02)


class TestAMPRun:
    def test_se_agreement_easy_regime(self):
        # delta = 2: single fixed point, error lands on the SE limit
        inst = generate_instance(BG_FLAGSHIP, 2000, 4000, seed=7)
        out = amp_run(inst, BG_FLAGSHIP)
        assert out.converged and not out.diverged
        se_limit = state_evolution(BG_FLAGSHIP, 2.0, tol=1e-12).limit
        err, _ = amp_diagnostics(out, inst.x_true)
        assert err == pytest.approx(se_limit, rel=0.25)  # single-seed slack

    def test_low_branch_at_delta_040(self):
        inst = generate_instance(BG_FLAGSHIP, 4000, 1600, seed=1)
        out = amp_run(inst, BG_FLAGSHIP)
        err, _ = amp_diagnostics(out, inst.x_true)
        assert err <= 1e-2 * prior_moments(BG_FLAGSHIP)[1]

    def test_high_branch_at_delta_020(self):
        inst = generate_instance(BG_FLAGSHIP, 4000, 800, seed=1)
        out = amp_run(inst, BG_FLAGSHIP)
        err, post = amp_diagnostics(out, inst.x_true)
        var = prior_moments(BG_FLAGSHIP)[1]
        assert err > 0.1 * var  # within an order of magnitude of the prior variance
        assert 0.1 * 2e5 < post < 10.0 * 2e5

    def test_marginal_ranges(self):
        inst = generate_instance(BG_FLAGSHIP, 1000, 2000, seed=5)
        out = amp_run(inst, BG_FLAGSHIP)
        assert np.all(out.gamma >= 0.0) and np.all(out.gamma <= 1.0)
        assert np.all(out.sigma2 >= 0.0)
        assert np.all(out.post_var >= 0.0)
        assert np.all(out.tau_trace >= 0.0)

    def test_determinism(self):
        inst = generate_instance(BG_FLAGSHIP, 500, 1000, seed=9)
        a = amp_run(inst, BG_FLAGSHIP)
        b = amp_run(inst, BG_FLAGSHIP)
        assert np.array_equal(a.x_hat, b.x_hat)
        assert np.array_equal(a.tau_trace, b.tau_trace)

    def test_permutation_equivariance(self):
        inst = generate_instance(BG_UNIT, 200, 400, seed=11)
        out = amp_run(inst, BG_UNIT)
        rng = np.random.default_rng(0)
        perm = rng.permutation(200)
        from slmlab.amp import LinearModelInstance

        inst_p = LinearModelInstance(
            A=inst.A[:, perm], x_true=inst.x_true[perm], w=inst.w, y=inst.y, seed=inst.seed
        )
        out_p = amp_run(inst_p, BG_UNIT)
        assert np.allclose(out_p.x_hat, out.x_hat[perm], rtol=1e-10, atol=1e-12)
        assert np.allclose(out_p.gamma, out.gamma[perm], rtol=1e-10, atol=1e-12)

    def test_finite_atoms_denoiser(self):
        prior = ScalarPrior.finite_atoms((-1.0, 0.0, 1.0), (0.1, 0.8, 0.1))
        inst = generate_instance(prior, 1500, 3000, seed=2)
        out = amp_run(inst, prior)
        assert out.converged
        err, post = amp_diagnostics(out, inst.x_true)
        se_limit = state_evolution(prior, 2.0, tol=1e-12).limit
        assert err == pytest.approx(se_limit, rel=0.35)
        # inclusion probabilities separate the true support (the snr here
        # leaves detection noisy, so only the sign and scale are pinned)
        gap = out.gamma[inst.x_true != 0].mean() - out.gamma[inst.x_true == 0].mean()
        assert gap > 0.05

    def test_damping_still_converges(self):
        inst = generate_instance(BG_FLAGSHIP, 1000, 2000, seed=13)
        out = amp_run(inst, BG_FLAGSHIP, damping=0.3)
        assert out.converged
        err, _ = amp_diagnostics(out, inst.x_true)
        se_limit = state_evolution(BG_FLAGSHIP, 2.0, tol=1e-12).limit
        assert err == pytest.approx(se_limit, rel=0.5)

    def test_rejects_gaussian_prior_and_bad_args(self):
        inst = generate_instance(BG_UNIT, 50, 100, seed=0)
        with pytest.raises(ValueError):
            amp_run(inst, ScalarPrior.gaussian(0.0, 1.0))
        with pytest.raises(ValueError):
            amp_run(inst, BG_UNIT, damping=1.0)
        with pytest.raises(ValueError):
            amp_run(inst, BG_UNIT, max_iter=0)

    def test_tau_trace_one_step_consistency(self):
        # each iteration's effective noise matches the one-step SE map
        # prediction from the previous iterate (aggregate over seeds)
        from slmlab import scalar_mmse

        delta = 2.0
        ratios = []
        for seed in range(5):
            inst = generate_instance(BG_FLAGSHIP, 2000, 4000, seed=seed)
            out = amp_run(inst, BG_FLAGSHIP)
            mse_est = (out.tau_trace - 1.0) * delta
            pred = np.array([scalar_mmse(BG_FLAGSHIP, delta / (1.0 + m)) for m in mse_est[:-1]])
            tau_pred = 1.0 + pred / delta
            ratios.append(np.abs(out.tau_trace[1:] - tau_pred) / out.tau_trace[1:])
        n = min(len(r) for r in ratios)
        mean_dev = np.mean([r[:n] for r in ratios], axis=0)
        assert np.all(mean_dev < 0.10)


class TestDiagnostics:
    def test_zero_error_on_copy(self):
        inst = generate_instance(BG_UNIT, 300, 600, seed=21)
        out = amp_run(inst, BG_UNIT)
        err, _ = amp_diagnostics(out, out.marginals().mean())
        assert err == 0.0

    def test_self_consistency_moderate_size(self):
        inst = generate_instance(BG_FLAGSHIP, 4000, 1600, seed=2)
        out = amp_run(inst, BG_FLAGSHIP)
        err, post = amp_diagnostics(out, inst.x_true)
        assert err == pytest.approx(post, rel=0.25)

    def test_dimension_mismatch(self):
        inst = generate_instance(BG_UNIT, 100, 200, seed=0)
        out = amp_run(inst, BG_UNIT)
        with pytest.raises(ValueError):
            amp_diagnostics(out, np.zeros(55))


@pytest.fixture(scope="module")
def prediction_run():
    inst = generate_instance(BG_FLAGSHIP, 1500, 600, seed=31)
    out = amp_run(inst, BG_FLAGSHIP)
    return inst, out


class TestPrediction:

    def test_zero_vector(self, prediction_run):
        _, out = prediction_run
        y_hat, var = predict_new_observation(out, np.zeros(1500))
        assert y_hat == 0.0 and var == 1.0

    def test_unit_coordinate(self, prediction_run):
        _, out = prediction_run
        e_k = np.zeros(1500)
        e_k[7] = 1.0
        y_hat, var = predict_new_observation(out, e_k)
        m = out.marginals()
        assert y_hat == pytest.approx(float(m.mean()[7]))
        assert var == pytest.approx(float(m.variance()[7]) + 1.0)

    def test_prediction_mse_matches_predicted_variance(self):
        # fresh rows at delta = 0.4: realized prediction error vs claimed
        # variance; at n = 10000 the marginals are well calibrated
        n = 10_000
        inst = generate_instance(BG_FLAGSHIP, n, 4_000, seed=0)
        out = amp_run(inst, BG_FLAGSHIP)
        rng = np.random.default_rng(123)
        A_new = rng.standard_normal((1000, n)) / math.sqrt(n)
        y_new = A_new @ inst.x_true + rng.standard_normal(1000)
        m = out.marginals()
        errs = (y_new - A_new @ m.mean()) ** 2
        preds = (A_new**2) @ m.variance() + 1.0
        assert errs.mean() == pytest.approx(preds.mean(), rel=0.10)
