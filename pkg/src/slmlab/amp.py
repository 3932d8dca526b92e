"""Approximate message passing for the standard linear model.

The measurement matrix has iid N(0, 1/N) entries and the noise is unit
Gaussian, so a residual carrying per-dimension error m has energy
1 + m per measurement and the pseudo-data r = x_hat + (N/M) A^T z is an
effective Gaussian-channel observation of the signal at snr
delta / (1 + m).  The denoiser is the exact scalar Bayes posterior for
the signal prior; the Onsager term uses its mean derivative (posterior
variance over effective noise variance) in closed form.  With this
normalization the iteration's fixed point satisfies
M = M_X(delta / (1 + M)), matching state evolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import rng_stream, STREAM_INSTANCE
from .scalar_channel import (
    BGPosteriorParams,
    ScalarPrior,
    atom_posterior_weights,
    bg_posterior_update,
    prior_moments,
)

__all__ = [
    "LinearModelInstance",
    "AMPOutput",
    "generate_instance",
    "amp_run",
    "amp_diagnostics",
    "predict_new_observation",
]


@dataclass(frozen=True)
class LinearModelInstance:
    """One realization y = A x + w with iid N(0, 1/N) matrix entries."""

    A: np.ndarray
    x_true: np.ndarray
    w: np.ndarray
    y: np.ndarray
    seed: int

    @property
    def N(self) -> int:
        return self.A.shape[1]

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def delta(self) -> float:
        return self.M / self.N


def generate_instance(prior: ScalarPrior, N: int, M: int, seed: int) -> LinearModelInstance:
    """Draw a seeded instance.

    Draw order is fixed: signal x first, then the matrix A row-major,
    then the noise w, all from the (seed, instance) Philox stream, so
    identical seeds give bitwise-identical instances.
    """
    if N < 1 or M < 0:
        raise ValueError("need N >= 1 and M >= 0")
    rng = rng_stream(seed, STREAM_INSTANCE)
    x = prior.sample(N, rng)
    A = rng.standard_normal((M, N)) / math.sqrt(N)
    w = rng.standard_normal(M)
    y = A @ x + w
    return LinearModelInstance(A=A, x_true=x, w=w, y=y, seed=seed)


@dataclass
class AMPOutput:
    """Marginal posterior approximations produced by AMP.

    The per-entry triple (mu_n, sigma2_n, gamma_n) parameterizes a
    Bernoulli-Gaussian-family marginal: gamma_n is the inclusion
    probability and (mu_n, sigma2_n) the moments of the nonzero
    component.  x_hat and post_var are the implied posterior mean and
    variance.  tau_trace[t] = 1 + (N/M) * mse_est_t is the normalized
    effective-noise energy before the t-th denoising step.
    """

    x_hat: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    gamma: np.ndarray
    post_var: np.ndarray
    tau_trace: np.ndarray
    iterations: int
    converged: bool
    diverged: bool
    mse_trace: np.ndarray  # squared error vs the instance signal, per iteration
    post_var_trace: np.ndarray  # mean marginal variance, per iteration

    def marginals(self) -> BGPosteriorParams:
        return BGPosteriorParams(mu_n=self.mu, sigma2_n=self.sigma2, gamma_n=self.gamma)


def _denoise(prior: ScalarPrior, s_eff: float, r: np.ndarray):
    """Posterior statistics of X from pseudo-data r = x + noise(1/s_eff).

    Returns (mean, var, mu_n, sigma2_n, gamma_n); the last three follow
    the Bernoulli-Gaussian-family parameterization for every prior.
    """
    y_eq = math.sqrt(s_eff) * r
    if prior.kind == "bernoulli_gaussian":
        p = bg_posterior_update(prior, s_eff, y_eq)
        mean = p.mean()
        var = p.variance()
        return mean, var, p.mu_n, p.sigma2_n, p.gamma_n
    if prior.kind == "finite_atoms":
        wts = atom_posterior_weights(prior, s_eff, y_eq)
        a = np.asarray(prior.atoms)
        mean = wts @ a
        var = np.maximum(wts @ a**2 - mean**2, 0.0)
        nz = a != 0.0
        gamma = wts[:, nz].sum(axis=1)
        gsafe = np.maximum(gamma, 1e-300)
        mu_n = (wts[:, nz] @ a[nz]) / gsafe
        second = (wts[:, nz] @ a[nz] ** 2) / gsafe
        sigma2_n = np.maximum(second - mu_n**2, 0.0)
        return mean, var, mu_n, sigma2_n, gamma
    raise ValueError("AMP denoiser requires a Bernoulli-Gaussian or finite-atom prior")


def amp_run(
    instance: LinearModelInstance,
    prior: ScalarPrior,
    max_iter: int = 200,
    tol: float = 1e-8,
    damping: float = 0.0,
) -> AMPOutput:
    """Run AMP to convergence on one instance.

    Stops when the relative change of x_hat drops below ``tol`` or after
    ``max_iter`` iterations; flags divergence when the effective-noise
    energy grows a thousandfold over its starting value.  ``damping`` in
    [0, 1) averages each update with the previous state, which helps
    close to the algorithmic transition rate.
    """
    if not (0.0 <= damping < 1.0):
        raise ValueError("damping must lie in [0, 1)")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    A, y = instance.A, instance.y
    M, N = A.shape
    if M < 1:
        raise ValueError("AMP requires at least one measurement")
    delta = M / N
    mean0 = prior_moments(prior)[0]

    x_hat = np.full(N, mean0)
    z = y - A @ x_hat
    # empirical effective error of the uninformative start
    mse_est = max(float(z @ z) / M - 1.0, 1e-12)

    tau_trace = [1.0 + mse_est / delta]
    tau0 = tau_trace[0]
    mse_trace: list[float] = []
    post_var_trace: list[float] = []
    converged = False
    diverged = False
    iterations = 0

    mu = sigma2 = gamma = post_var = None
    for t in range(max_iter):
        iterations = t + 1
        s_eff = delta / (1.0 + mse_est)
        r = x_hat + (N / M) * (A.T @ z)
        mean, var, mu, sigma2, gamma = _denoise(prior, s_eff, r)
        if damping > 0.0 and t > 0:
            mean = (1.0 - damping) * mean + damping * x_hat
            var = (1.0 - damping) * var + damping * post_var
        onsager = float(np.mean(var)) / (1.0 + mse_est)
        z = y - A @ mean + onsager * z

        denom = float(np.linalg.norm(x_hat))
        change = float(np.linalg.norm(mean - x_hat)) / max(denom, 1e-300)
        x_hat = mean
        post_var = var
        mse_est = max(float(np.mean(var)), 1e-14)
        tau_trace.append(1.0 + mse_est / delta)
        mse_trace.append(float(np.mean((x_hat - instance.x_true) ** 2)))
        post_var_trace.append(float(np.mean(var)))

        if tau_trace[-1] > 1e3 * tau0:
            diverged = True
            break
        if change < tol:
            converged = True
            break

    return AMPOutput(
        x_hat=x_hat,
        mu=np.asarray(mu),
        sigma2=np.asarray(sigma2),
        gamma=np.asarray(gamma),
        post_var=post_var,
        tau_trace=np.array(tau_trace),
        iterations=iterations,
        converged=converged,
        diverged=diverged,
        mse_trace=np.array(mse_trace),
        post_var_trace=np.array(post_var_trace),
    )


def amp_diagnostics(output: AMPOutput, x_true: np.ndarray) -> tuple[float, float]:
    """(average squared error, average posterior variance) of a run.

    Both averages are computed from the marginal parameters via the
    Bernoulli-Gaussian moment identities, so the posterior-variance
    column is a data-only estimate of the squared-error column.
    """
    x_true = np.asarray(x_true, dtype=float)
    if x_true.shape != output.x_hat.shape:
        raise ValueError("dimension mismatch between output and x_true")
    m = output.marginals()
    avg_sq_err = float(np.mean((x_true - m.mean()) ** 2))
    avg_post_var = float(np.mean(m.variance()))
    return avg_sq_err, avg_post_var


def predict_new_observation(output: AMPOutput, a_new: np.ndarray) -> tuple[float, float]:
    """Predict y_new = <a_new, x> + w_new from the AMP marginals.

    Returns the predictive mean and variance; the variance combines the
    per-entry marginal posterior variances with the unit noise.
    """
    a_new = np.asarray(a_new, dtype=float)
    if a_new.shape != output.x_hat.shape:
        raise ValueError("a_new must be an N-vector")
    m = output.marginals()
    y_hat = float(a_new @ m.mean())
    pred_var = float(a_new**2 @ m.variance()) + 1.0
    return y_hat, pred_var
