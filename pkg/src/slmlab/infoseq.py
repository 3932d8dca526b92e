"""Monte Carlo estimation of information and MMSE sequences.

For a finite-atom signal the marginal density of the first m
observations can be enumerated exactly, which makes the per-trial log
density ratio an unbiased estimate of I_m = I(X; Y^m | A^m).  The same
enumeration yields the exact per-trial posterior, hence the MMSE
sequence, the posterior covariance and its spectral decomposition, and
the conditional MMSE function under an auxiliary Gaussian channel.

Measurement vectors are iid N(0, I/N); their distribution is
permutation invariant, so no averaging over presentation orders is
needed.  Standard errors come from trial-level jackknife, which also
covers statistics that are nonlinear in the trial means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .exact import enumerate_configs
from .rng import trial_rng
from .scalar_channel import ScalarPrior

__all__ = [
    "InfoSequenceEstimate",
    "MMSESequenceEstimate",
    "CovarianceStats",
    "ConditionalMMSEResult",
    "CheckResult",
    "CardinalityCheck",
    "estimate_sequences",
    "estimate_info_sequence",
    "estimate_mmse_sequence",
    "check_theorem_monotone",
    "check_theorem_ip_ub",
    "check_theorem_mmse_lb",
    "check_card_bound",
    "mean_squared_covariance",
    "conditional_mmse_function",
    "jackknife_se",
]

_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Estimates
# ---------------------------------------------------------------------------


@dataclass
class InfoSequenceEstimate:
    """Estimated information sequence with first and second differences.

    I has length M+1 (I[0] = 0 exactly); I_prime and I_dprime are the
    difference sequences.  per_trial holds the (trials, M+1) matrix so
    downstream checks can form paired statistics.
    """

    I: np.ndarray
    I_prime: np.ndarray
    I_dprime: np.ndarray
    std_err: np.ndarray
    trials: int
    seed: int
    per_trial: np.ndarray

    @property
    def I_prime_se(self) -> np.ndarray:
        d = np.diff(self.per_trial, axis=1)
        return d.std(axis=0, ddof=1) / math.sqrt(self.trials)

    @property
    def I_dprime_se(self) -> np.ndarray:
        d2 = np.diff(self.per_trial, 2, axis=1)
        return d2.std(axis=0, ddof=1) / math.sqrt(self.trials)


@dataclass
class MMSESequenceEstimate:
    """Estimated MMSE sequence M_0..M_M (M[0] = Var(X) exactly)."""

    M: np.ndarray
    std_err: np.ndarray
    trials: int
    seed: int
    per_trial: np.ndarray


@dataclass(frozen=True)
class CovarianceStats:
    """Mean-squared covariance and its spectral decomposition.

    msc = E ||cov(X | data)||_F^2 / N^2.  The three terms decompose
    E ||cov||_F^2 as N (E mean-eigenvalue)^2 + N Var(mean eigenvalue)
    + E sum (eigenvalue - mean)^2; each is nonnegative and they sum to
    N^2 * msc exactly.
    """

    msc: float
    msc_se: float
    term_mean_sq: float
    term_trace_var: float
    term_eigen_spread: float
    N: int
    trials: int

    def decomposition_residual(self) -> float:
        total = self.term_mean_sq + self.term_trace_var + self.term_eigen_spread
        return abs(total - self.N**2 * self.msc) / max(self.N**2 * self.msc, 1e-300)


@dataclass(frozen=True)
class ConditionalMMSEResult:
    """Conditional MMSE function sampled on an snr grid.

    values[i] is M_{X|data}(s_grid[i]); the finite-difference derivative
    at 0 should match -(1/N) E ||cov||_F^2 from the same trials.
    """

    s_grid: np.ndarray
    values: np.ndarray
    std_err: np.ndarray
    deriv_at_zero: float
    deriv_se: float
    trials: int


@dataclass(frozen=True)
class CheckResult:
    """Outcome of a sequence-inequality check.

    worst is the largest violation after subtracting 3 combined standard
    errors; the inequality passes when worst <= 0.
    """

    worst: float
    passed: bool


@dataclass(frozen=True)
class CardinalityCheck:
    count: int
    bound: float
    significant_count: int
    passed: bool


# ---------------------------------------------------------------------------
# Core trial machinery
# ---------------------------------------------------------------------------


def _sequence_trial(configs, log_prior, N, M, rng):
    """One trial: per-m information and MMSE contributions.

    Returns (info_m, mmse_m) arrays of length M+1 plus the per-m
    posterior log weights needed by callers that extend the trial.
    """
    probs = np.exp(log_prior)
    x_idx = rng.choice(len(configs), p=probs / probs.sum())
    x = configs[x_idx]
    A = rng.standard_normal((M, N)) / math.sqrt(N)
    w = rng.standard_normal(M)
    y = A @ x + w

    Z = configs @ A.T  # (K, M)
    ll_step = -0.5 * (y[None, :] - Z) ** 2 - 0.5 * _LOG_2PI
    ll_cum = np.concatenate(
        [np.zeros((len(configs), 1)), np.cumsum(ll_step, axis=1)], axis=1
    )  # (K, M+1)
    logw = log_prior[:, None] + ll_cum
    log_marginal = logsumexp(logw, axis=0)  # log p(y^m | A^m), m = 0..M
    log_cond = np.concatenate([[0.0], np.cumsum(-0.5 * w**2 - 0.5 * _LOG_2PI)])
    info = log_cond - log_marginal

    logw_post = logw - log_marginal[None, :]
    wpost = np.exp(logw_post)  # (K, M+1)
    mean = wpost.T @ configs  # (M+1, N)
    second = wpost.T @ np.sum(configs**2, axis=1)  # (M+1,)
    mmse = (second - np.sum(mean**2, axis=1)) / N
    return info, mmse, logw_post, x, A, w


def estimate_sequences(
    prior: ScalarPrior, N: int, M: int, trials: int = 2000, seed: int = 0
) -> tuple[InfoSequenceEstimate, MMSESequenceEstimate]:
    """Jointly estimate the information and MMSE sequences.

    One set of trials feeds both estimates, so paired comparisons
    between them carry no independent-draw noise.
    """
    configs, log_prior = enumerate_configs(prior, N)
    info_mat = np.empty((trials, M + 1))
    mmse_mat = np.empty((trials, M + 1))
    for t in range(trials):
        rng = trial_rng(seed, t)
        info, mmse, *_ = _sequence_trial(configs, log_prior, N, M, rng)
        info_mat[t] = info
        mmse_mat[t] = mmse
    I = info_mat.mean(axis=0)
    info_se = info_mat.std(axis=0, ddof=1) / math.sqrt(trials)
    info_est = InfoSequenceEstimate(
        I=I,
        I_prime=np.diff(I),
        I_dprime=np.diff(I, 2),
        std_err=info_se,
        trials=trials,
        seed=seed,
        per_trial=info_mat,
    )
    Mbar = mmse_mat.mean(axis=0)
    mmse_est = MMSESequenceEstimate(
        M=Mbar,
        std_err=mmse_mat.std(axis=0, ddof=1) / math.sqrt(trials),
        trials=trials,
        seed=seed,
        per_trial=mmse_mat,
    )
    return info_est, mmse_est


def estimate_info_sequence(
    prior: ScalarPrior, N: int, M: int, trials: int = 2000, seed: int = 0
) -> InfoSequenceEstimate:
    return estimate_sequences(prior, N, M, trials, seed)[0]


def estimate_mmse_sequence(
    prior: ScalarPrior, N: int, M: int, trials: int = 2000, seed: int = 0
) -> MMSESequenceEstimate:
    return estimate_sequences(prior, N, M, trials, seed)[1]


def jackknife_se(per_trial: np.ndarray, statistic: Callable[[np.ndarray], float]) -> float:
    """Leave-one-out jackknife standard error of ``statistic``.

    ``statistic`` maps a mean vector over trials to a scalar; the input
    matrix is (trials, dims).
    """
    n = per_trial.shape[0]
    total = per_trial.sum(axis=0)
    loo = (total[None, :] - per_trial) / (n - 1)
    vals = np.array([statistic(v) for v in loo])
    return float(math.sqrt((n - 1) / n * np.sum((vals - vals.mean()) ** 2)))


# ---------------------------------------------------------------------------
# Inequality checks
# ---------------------------------------------------------------------------


def check_theorem_monotone(info_est: InfoSequenceEstimate) -> CheckResult:
    """First differences of the information sequence are non-increasing
    under conditionally independent observations.

    Returns the worst value of I'_{m+1} - I'_m minus three combined
    standard errors; the property holds when this is <= 0.
    """
    d2 = info_est.I_dprime
    se = info_est.I_dprime_se
    worst = float(np.max(d2 - 3.0 * se))
    return CheckResult(worst=worst, passed=worst <= 0.0)


def _paired(info_est: InfoSequenceEstimate, mmse_est: MMSESequenceEstimate) -> np.ndarray:
    if info_est.trials != mmse_est.trials or info_est.seed != mmse_est.seed:
        raise ValueError("estimates must come from the same trials (matched seed and count)")
    return np.concatenate([info_est.per_trial, mmse_est.per_trial], axis=1)


def check_theorem_ip_ub(
    info_est: InfoSequenceEstimate, mmse_est: MMSESequenceEstimate
) -> CheckResult:
    """Information increments are capped by the Gaussian-channel value:
    I'_m <= log(1 + M_m) / 2 for isotropic measurement vectors."""
    joint = _paired(info_est, mmse_est)
    n_i = info_est.per_trial.shape[1]
    M = n_i - 1
    worst = -math.inf
    for m in range(M):

        def stat(v, m=m):
            return (v[m + 1] - v[m]) - 0.5 * math.log1p(v[n_i + m])

        se = jackknife_se(joint, stat)
        val = stat(joint.mean(axis=0))
        worst = max(worst, val - 3.0 * se)
    return CheckResult(worst=float(worst), passed=worst <= 0.0)


def check_theorem_mmse_lb(
    info_est: InfoSequenceEstimate,
    mmse_est: MMSESequenceEstimate,
    k: int,
    m: int,
) -> bool:
    """MMSE floor from accumulated information:
    M_k >= exp((2 I_m - k log(1 + M_0)) / (m - k)) - 1, for 0 <= k < m,
    verified within three jackknife standard errors."""
    if not (0 <= k < m):
        raise ValueError("need 0 <= k < m")
    joint = _paired(info_est, mmse_est)
    n_i = info_est.per_trial.shape[1]
    if m >= n_i:
        raise ValueError("m exceeds the estimated sequence length")

    def stat(v):
        rhs = math.exp((2.0 * v[m] - k * math.log1p(v[n_i])) / (m - k)) - 1.0
        return v[n_i + k] - rhs

    se = jackknife_se(joint, stat)
    val = stat(joint.mean(axis=0))
    return bool(val >= -3.0 * se)


def check_card_bound(info_est: InfoSequenceEstimate, T: float) -> CardinalityCheck:
    """At most I_1 / T second differences can exceed T in magnitude.

    count uses the point estimates; significant_count only counts
    entries whose magnitude clears T by three standard errors, and the
    pass verdict compares that conservative count against the bound.
    """
    if T <= 0.0:
        raise ValueError("T must be > 0")
    d2 = info_est.I_dprime
    se = info_est.I_dprime_se
    count = int(np.sum(np.abs(d2) >= T))
    significant = int(np.sum(np.abs(d2) - 3.0 * se >= T))
    bound = float(info_est.I[1] / T)
    return CardinalityCheck(
        count=count, bound=bound, significant_count=significant,
        passed=significant <= bound + 1e-12,
    )


# ---------------------------------------------------------------------------
# Posterior covariance statistics
# ---------------------------------------------------------------------------


def _posterior_cov_from_logw(configs: np.ndarray, logw: np.ndarray) -> np.ndarray:
    w = np.exp(logw)
    mean = w @ configs
    return (configs.T * w) @ configs - np.outer(mean, mean)


def mean_squared_covariance(
    prior: ScalarPrior, N: int, m: int, trials: int = 2000, seed: int = 0
) -> CovarianceStats:
    """Mean-squared posterior covariance after m observations, with its
    exact spectral decomposition from per-trial eigenvalues."""
    configs, log_prior = enumerate_configs(prior, N)
    frob = np.empty(trials)
    lam_bar = np.empty(trials)
    spread = np.empty(trials)
    for t in range(trials):
        rng = trial_rng(seed, t)
        _, _, logw_post, *_ = _sequence_trial(configs, log_prior, N, m, rng)
        cov = _posterior_cov_from_logw(configs, logw_post[:, m])
        lam = np.linalg.eigvalsh(0.5 * (cov + cov.T))
        frob[t] = float(np.sum(lam**2))
        lam_bar[t] = float(lam.mean())
        spread[t] = float(np.sum((lam - lam.mean()) ** 2))
    e_frob = float(frob.mean())
    term1 = N * float(lam_bar.mean()) ** 2
    term2 = N * float(lam_bar.var())  # population variance: keeps the identity exact
    term3 = float(spread.mean())
    se = float(frob.std(ddof=1) / math.sqrt(trials)) / N**2 if trials > 1 else 0.0
    return CovarianceStats(
        msc=e_frob / N**2,
        msc_se=se,
        term_mean_sq=term1,
        term_trace_var=term2,
        term_eigen_spread=term3,
        N=N,
        trials=trials,
    )


def conditional_mmse_function(
    prior: ScalarPrior,
    N: int,
    m: int,
    s_grid: Sequence[float],
    trials: int = 2000,
    seed: int = 0,
) -> ConditionalMMSEResult:
    """Conditional MMSE function: per-dimension MMSE given m linear
    observations plus an auxiliary Gaussian-channel look at snr s.

    The same auxiliary noise is reused across the grid (common random
    numbers).  The finite-difference derivative at s = 0 is an
    independent estimate of -(1/N) E ||cov||_F^2 and is returned with a
    jackknife standard error for the cross-check.
    """
    s = np.asarray(s_grid, dtype=float)
    if s[0] != 0.0 or np.any(np.diff(s) <= 0.0):
        raise ValueError("s grid must start at 0 and ascend")
    configs, log_prior = enumerate_configs(prior, N)
    sq = np.sum(configs**2, axis=1)
    vals = np.empty((trials, len(s)))
    for t in range(trials):
        rng = trial_rng(seed, t)
        _, _, logw_post, x, A, w = _sequence_trial(configs, log_prior, N, m, rng)
        base = logw_post[:, m]
        w_aux = rng.standard_normal(N)
        for i, si in enumerate(s):
            if si == 0.0:
                logw = base
            else:
                z = math.sqrt(si) * x + w_aux
                ll = -0.5 * np.sum((z[None, :] - math.sqrt(si) * configs) ** 2, axis=1)
                logw = base + ll
                logw -= logsumexp(logw)
            wts = np.exp(logw)
            mean = wts @ configs
            vals[t, i] = (wts @ sq - mean @ mean) / N
    mean_vals = vals.mean(axis=0)
    se_vals = vals.std(axis=0, ddof=1) / math.sqrt(trials)
    s1 = s[1]
    deriv = float((mean_vals[1] - mean_vals[0]) / s1)
    per_trial_deriv = (vals[:, 1] - vals[:, 0]) / s1
    deriv_se = float(per_trial_deriv.std(ddof=1) / math.sqrt(trials))
    return ConditionalMMSEResult(
        s_grid=s,
        values=mean_vals,
        std_err=se_vals,
        deriv_at_zero=deriv,
        deriv_se=deriv_se,
        trials=trials,
    )
