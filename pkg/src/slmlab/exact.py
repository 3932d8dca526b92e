"""Ground-truth posterior oracles by exhaustive enumeration.

For Bernoulli-Gaussian signals the posterior under the standard linear
model is a Gaussian mixture with one component per support pattern
u in {0,1}^N: conditionally on u, the observation is Gaussian with
covariance I_M + sigma2 * A_u A_u^T, and the active coordinates are
obtained by linear-Gaussian conditioning.  For finite-atom signals the
posterior is a discrete law over all |atoms|^N configurations.  Both
enumerations are exponential in N and guarded accordingly; they exist
to validate the scalable machinery, not to scale themselves.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .rng import rng_stream, STREAM_CODEBOOK, trial_rng
from .scalar_channel import ScalarPrior

__all__ = [
    "SupportPosterior",
    "AtomPosterior",
    "Codebook",
    "CodebookEstimate",
    "support_posterior",
    "exact_marginals",
    "atom_posterior",
    "exact_mmse_mc",
    "detection_roc",
    "random_codebook",
    "codebook_mmse_mi",
    "good_code_bounds",
]

_MAX_SUPPORT_N = 20
_MAX_ATOM_CONFIGS = 2**20
_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Bernoulli-Gaussian support enumeration
# ---------------------------------------------------------------------------


@dataclass
class SupportPosterior:
    """Exact Gaussian-mixture posterior over all 2^N support patterns.

    log_weights are normalized; cond_means/cond_covs hold the
    per-pattern conditional moments scattered into full N-dimensional
    coordinates (zero rows/columns on the inactive set).
    """

    supports: np.ndarray  # (2^N, N) bool
    log_weights: np.ndarray  # (2^N,)
    cond_means: np.ndarray  # (2^N, N)
    cond_covs: np.ndarray  # (2^N, N, N)

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def posterior_mean(self) -> np.ndarray:
        return self.weights() @ self.cond_means

    def posterior_cov(self) -> np.ndarray:
        w = self.weights()
        mean = w @ self.cond_means
        cov = np.einsum("k,kij->ij", w, self.cond_covs)
        cov += np.einsum("k,ki,kj->ij", w, self.cond_means, self.cond_means)
        cov -= np.outer(mean, mean)
        return cov


def support_posterior(instance, prior: ScalarPrior) -> SupportPosterior:
    """Enumerate the exact posterior of a Bernoulli-Gaussian signal.

    The weight of pattern u combines the prior p(u) with the Gaussian
    evidence N(y; mu * A_u 1, I_M + sigma2 * A_u A_u^T).  The evidence
    and the conditional moments are evaluated on the active block: with
    Lam = I/sigma2 + A_u^T A_u, the determinant lemma gives
    det(I_M + sigma2 A_u A_u^T) = sigma2^k det(Lam) and the Woodbury
    identity reduces the M x M solve to Lam, whose Cholesky factor also
    yields the conditional covariance.  Patterns of equal size are
    processed as one batched linear-algebra call.  Guarded to N <= 20
    (the stored moments grow as 2^N * N^2).
    """
    if prior.kind != "bernoulli_gaussian":
        raise ValueError("support enumeration requires a Bernoulli-Gaussian prior")
    A, y = instance.A, instance.y
    M, N = A.shape
    if N > _MAX_SUPPORT_N:
        raise ValueError(f"support enumeration is limited to N <= {_MAX_SUPPORT_N}")
    mu, s2, g = prior.mu, prior.sigma2, prior.gamma
    log_g, log_ng = math.log(g), math.log(1.0 - g)

    G = A.T @ A
    b = A.T @ y
    yy = float(y @ y)

    n_patterns = 2**N
    supports = np.zeros((n_patterns, N), dtype=bool)
    logw = np.empty(n_patterns)
    means = np.zeros((n_patterns, N))
    covs = np.zeros((n_patterns, N, N))

    # row index of a pattern: bit n set <-> coordinate n active
    def row_of(active: tuple[int, ...]) -> int:
        r = 0
        for n in active:
            r |= 1 << n
        return r

    for idx in range(n_patterns):
        supports[idx] = [(idx >> n) & 1 for n in range(N)]

    logw[0] = N * log_ng - 0.5 * (yy + M * _LOG_2PI)

    for k in range(1, N + 1):
        combos = np.array(list(itertools.combinations(range(N), k)), dtype=int)
        rows = np.array([row_of(tuple(c)) for c in combos])
        Gu = G[combos[:, :, None], combos[:, None, :]]  # (n_k, k, k)
        bu = b[combos]  # (n_k, k)
        lam = Gu + (np.eye(k) / s2)[None, :, :]
        L = np.linalg.cholesky(lam)
        logdet_lam = 2.0 * np.sum(np.log(np.einsum("kii->ki", L)), axis=1)
        logdet_C = k * math.log(s2) + logdet_lam
        gu_row = Gu.sum(axis=2)  # (n_k, k): Gu @ 1
        v = bu - mu * gu_row  # A_u^T (y - mu A_u 1)
        z = np.linalg.solve(lam, v[..., None])[..., 0]
        quad = (
            yy
            - 2.0 * mu * bu.sum(axis=1)
            + mu**2 * gu_row.sum(axis=1)
            - np.einsum("ki,ki->k", v, z)
        )
        log_prior = k * log_g + (N - k) * log_ng
        logw[rows] = log_prior - 0.5 * (logdet_C + quad + M * _LOG_2PI)

        cov_u = np.linalg.solve(lam, np.broadcast_to(np.eye(k), lam.shape).copy())
        cov_u = 0.5 * (cov_u + np.swapaxes(cov_u, 1, 2))
        mean_u = np.linalg.solve(lam, (bu + mu / s2)[..., None])[..., 0]
        means[rows[:, None], combos] = mean_u
        covs[rows[:, None, None], combos[:, :, None], combos[:, None, :]] = cov_u

    logw -= logsumexp(logw)
    return SupportPosterior(supports=supports, log_weights=logw, cond_means=means, cond_covs=covs)


def exact_marginals(posterior: SupportPosterior) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-entry (mean, variance, inclusion probability) of the mixture."""
    w = posterior.weights()
    gammas = w @ posterior.supports
    means = w @ posterior.cond_means
    second = w @ (
        np.einsum("kii->ki", posterior.cond_covs) + posterior.cond_means**2
    )
    variances = np.maximum(second - means**2, 0.0)
    return means, variances, gammas


# ---------------------------------------------------------------------------
# Finite-atom configuration enumeration
# ---------------------------------------------------------------------------


@dataclass
class AtomPosterior:
    """Exact discrete posterior over all atom configurations."""

    configs: np.ndarray  # (K, N)
    log_weights: np.ndarray  # (K,)

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def posterior_mean(self) -> np.ndarray:
        return self.weights() @ self.configs

    def posterior_cov(self) -> np.ndarray:
        w = self.weights()
        mean = w @ self.configs
        cov = (self.configs.T * w) @ self.configs - np.outer(mean, mean)
        return cov

    def trace_cov(self) -> float:
        w = self.weights()
        mean = w @ self.configs
        return float(w @ np.sum(self.configs**2, axis=1) - mean @ mean)


def enumerate_configs(prior: ScalarPrior, N: int) -> tuple[np.ndarray, np.ndarray]:
    """All |atoms|^N signal configurations with their log prior weights."""
    if prior.kind != "finite_atoms":
        raise ValueError("finite-atom prior required")
    n_atoms = len(prior.atoms)
    if n_atoms**N > _MAX_ATOM_CONFIGS:
        raise ValueError(f"atom enumeration limited to {_MAX_ATOM_CONFIGS} configurations")
    atoms = np.asarray(prior.atoms)
    logw1 = np.log(np.maximum(np.asarray(prior.weights), 1e-300))
    idx = np.indices((n_atoms,) * N).reshape(N, -1).T  # (K, N)
    configs = atoms[idx]
    logw = logw1[idx].sum(axis=1)
    return configs, logw


def atom_posterior(A: np.ndarray, y: np.ndarray, prior: ScalarPrior) -> AtomPosterior:
    """Exact posterior of a finite-atom signal for y = A x + w, w ~ N(0, I)."""
    configs, log_prior = enumerate_configs(prior, A.shape[1])
    if A.shape[0] == 0:
        logw = log_prior - logsumexp(log_prior)
        return AtomPosterior(configs=configs, log_weights=logw)
    Z = configs @ A.T  # (K, M)
    ll = -0.5 * np.sum((y[None, :] - Z) ** 2, axis=1)
    logw = log_prior + ll
    logw -= logsumexp(logw)
    return AtomPosterior(configs=configs, log_weights=logw)


# ---------------------------------------------------------------------------
# Monte Carlo MMSE over fresh instances
# ---------------------------------------------------------------------------


def exact_mmse_mc(
    prior: ScalarPrior, N: int, M: int, trials: int, seed: int
) -> tuple[float, float]:
    """Per-dimension MMSE of the N-variable linear model, by Monte Carlo
    over fresh (A, x, w) draws with the exact posterior in each trial.

    Each trial contributes tr cov(X | y, A) / N, whose expectation is
    the MMSE; at M = 0 every trial equals Var(X) exactly.  Supports
    Bernoulli-Gaussian (support enumeration) and finite-atom priors.
    Returns (estimate, standard error).
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    vals = np.empty(trials)
    for t in range(trials):
        rng = trial_rng(seed, t)
        x = prior.sample(N, rng)
        A = rng.standard_normal((M, N)) / math.sqrt(N)
        w = rng.standard_normal(M)
        y = A @ x + w
        if prior.kind == "bernoulli_gaussian":
            post = support_posterior(_Shim(A, y), prior)
            wts = post.weights()
            second = wts @ (
                np.einsum("kii->ki", post.cond_covs) + post.cond_means**2
            )
            mean = wts @ post.cond_means
            vals[t] = float(np.sum(second - mean**2)) / N
        elif prior.kind == "finite_atoms":
            vals[t] = atom_posterior(A, y, prior).trace_cov() / N
        else:
            raise ValueError("exact_mmse_mc supports Bernoulli-Gaussian and finite-atom priors")
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return float(vals.mean()), se


@dataclass(frozen=True)
class _Shim:
    A: np.ndarray
    y: np.ndarray


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------


def detection_roc(gammas, truth_support, thresholds) -> np.ndarray:
    """ROC points for thresholding inclusion probabilities.

    Entry n is declared active when gamma_n >= lambda.  Returns rows
    (lambda, FPR, TPR) in threshold order; rates for an empty class are
    reported as NaN.
    """
    g = np.asarray(gammas, dtype=float)
    truth = np.asarray(truth_support, dtype=bool)
    if np.any(g < 0.0) or np.any(g > 1.0):
        raise ValueError("inclusion probabilities must lie in [0, 1]")
    n_pos = int(truth.sum())
    n_neg = int((~truth).sum())
    rows = []
    for lam in np.asarray(thresholds, dtype=float):
        called = g >= lam
        tpr = float(np.sum(called & truth)) / n_pos if n_pos else math.nan
        fpr = float(np.sum(called & ~truth)) / n_neg if n_neg else math.nan
        rows.append((float(lam), fpr, tpr))
    return np.array(rows)


# ---------------------------------------------------------------------------
# Codebooks on the vector Gaussian channel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Codebook:
    """Uniform prior over L codewords in R^N."""

    codewords: np.ndarray  # (L, N)
    power_constrained: bool = False

    def __post_init__(self):
        if self.codewords.ndim != 2 or len(self.codewords) == 0:
            raise ValueError("codewords must be a non-empty (L, N) array")
        if self.power_constrained:
            power = float(np.mean(np.sum(self.codewords**2, axis=1))) / self.codewords.shape[1]
            if power > 1.0 + 1e-12:
                raise ValueError("power-constrained codebook exceeds unit average power")

    @property
    def L(self) -> int:
        return self.codewords.shape[0]

    @property
    def N(self) -> int:
        return self.codewords.shape[1]


def random_codebook(N: int, L: int, seed: int, power: float = 1.0) -> Codebook:
    """Gaussian codebook rescaled to average power exactly ``power``."""
    rng = rng_stream(seed, STREAM_CODEBOOK)
    c = rng.standard_normal((L, N))
    scale = math.sqrt(power * N * L / float(np.sum(c**2)))
    return Codebook(codewords=c * scale, power_constrained=power <= 1.0)


@dataclass(frozen=True)
class CodebookEstimate:
    mmse: float
    mi: float
    mmse_se: float
    mi_se: float


def codebook_mmse_mi(
    codebook: Codebook, snr: float, trials: int, seed: int, batch: int = 256
) -> CodebookEstimate:
    """Per-dimension MMSE and mutual information of Y = sqrt(snr) X + W
    when X is uniform over the codebook.

    The posterior over codewords is an exact softmax of log likelihoods;
    Monte Carlo runs over (codeword index, noise).  Per-trial MMSE uses
    the posterior trace covariance, per-trial information the log
    density ratio.  Guarded to L <= 2^16.
    """
    if codebook.L > 2**16:
        raise ValueError("codebook enumeration limited to L <= 65536")
    if snr < 0.0:
        raise ValueError("snr must be >= 0")
    C = codebook.codewords
    L, N = C.shape
    rs = math.sqrt(snr)
    sq_norm = np.sum(C**2, axis=1)
    mmse_vals = np.empty(trials)
    mi_vals = np.empty(trials)
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        rng = trial_rng(seed, done)
        j = rng.integers(0, L, size=b)
        w = rng.standard_normal((b, N))
        y = rs * C[j] + w
        # log p(y | codeword l), constants dropped (they cancel)
        ll = rs * (y @ C.T) - 0.5 * snr * sq_norm[None, :]
        log_post = ll - logsumexp(ll, axis=1, keepdims=True)
        post = np.exp(log_post)
        mean = post @ C
        tr_cov = post @ sq_norm - np.sum(mean**2, axis=1)
        mmse_vals[done : done + b] = tr_cov / N
        # I = E[log p(y|x_J) - log p(y)]; uniform prior gives log p(y) =
        # logsumexp(ll) - log L up to the same dropped constants
        mi_vals[done : done + b] = ll[np.arange(b), j] - (logsumexp(ll, axis=1) - math.log(L))
        done += b
    mi_vals /= N
    mmse_se = float(mmse_vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    mi_se = float(mi_vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return CodebookEstimate(
        mmse=float(mmse_vals.mean()), mi=float(mi_vals.mean()), mmse_se=mmse_se, mi_se=mi_se
    )


def good_code_bounds(snr: float, epsilon: float, s: float) -> tuple[float, float]:
    """MMSE sandwich for near-capacity codebooks at test snr s < snr.

    A power-constrained codebook whose information rate at ``snr`` is
    within epsilon of the Gaussian value has

        exp(-2 eps)/(1+s) - (1 - exp(-2 eps))/(snr - s) <= M(s) <= 1/(1+s).

    With epsilon = 0 both sides collapse to 1/(1+s).
    """
    if epsilon < 0.0:
        raise ValueError("epsilon must be >= 0")
    if not (0.0 <= s < snr):
        raise ValueError("need 0 <= s < snr")
    e = math.exp(-2.0 * epsilon)
    lower = e / (1.0 + s) - (1.0 - e) / (snr - s)
    upper = 1.0 / (1.0 + s)
    return lower, upper
