"""Scalar Gaussian-channel functionals.

Everything in this module concerns the one-dimensional observation model

    Y = sqrt(s) * X + W,      W ~ N(0, 1),  s >= 0,

for a signal X drawn from one of three prior families: Gaussian,
Bernoulli-Gaussian (a point mass at zero mixed with a Gaussian slab),
or an arbitrary finite-atom law.  The central objects are the mutual
information function I_X(s) and the MMSE function M_X(s); every other
module builds on these.

All information quantities are in nats.  Density ratios are evaluated
in the log domain throughout, which keeps the Bernoulli-Gaussian
inclusion probability finite even for slab variances as large as 1e6.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .rng import rng_stream

__all__ = [
    "ScalarPrior",
    "BGPosteriorParams",
    "ScalarCurve",
    "QuadratureError",
    "prior_moments",
    "bg_posterior_update",
    "posterior_stats",
    "scalar_mmse",
    "scalar_mi",
    "scalar_mmse_mc",
    "scalar_mi_mc",
    "k_transform",
    "check_immse",
    "compute_scalar_curve",
    "discretize_bg",
]

_LOG_2PI = math.log(2.0 * math.pi)
_HALF_LOG_2PIE = 0.5 * math.log(2.0 * math.pi * math.e)


def _lse_last(a: np.ndarray) -> np.ndarray:
    """Stable logsumexp over the last axis (lighter than scipy's)."""
    m = np.max(a, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, -1) + np.log(np.sum(np.exp(a - m), axis=-1))


class QuadratureError(ArithmeticError):
    """Raised when numerical integration produces a non-finite result."""


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarPrior:
    """A univariate signal law.

    kind is one of "gaussian", "bernoulli_gaussian", "finite_atoms".

    For the Gaussian family, (mu, sigma2) are the mean and variance.
    For the Bernoulli-Gaussian family, gamma in (0, 1) is the inclusion
    probability and (mu, sigma2) parameterize the nonzero component.
    For finite atoms, ``atoms``/``weights`` list the support; weights
    must be nonnegative and sum to one (tolerance 1e-12).
    """

    kind: str
    mu: float = 0.0
    sigma2: float = 1.0
    gamma: float = 1.0
    atoms: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("gaussian", "bernoulli_gaussian", "finite_atoms"):
            raise ValueError(f"unknown prior kind: {self.kind!r}")
        if self.kind in ("gaussian", "bernoulli_gaussian"):
            if not (self.sigma2 >= 0.0):
                raise ValueError("sigma2 must be >= 0")
        if self.kind == "bernoulli_gaussian":
            if not (0.0 < self.gamma < 1.0):
                raise ValueError("gamma must lie in (0, 1)")
        if self.kind == "finite_atoms":
            if len(self.atoms) == 0 or len(self.atoms) != len(self.weights):
                raise ValueError("atoms and weights must be non-empty and matched")
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0.0):
                raise ValueError("weights must be nonnegative")
            if abs(float(w.sum()) - 1.0) > 1e-12:
                raise ValueError("weights must sum to 1 within 1e-12")

    # -- constructors -------------------------------------------------

    @staticmethod
    def gaussian(mu: float = 0.0, sigma2: float = 1.0) -> "ScalarPrior":
        return ScalarPrior(kind="gaussian", mu=mu, sigma2=sigma2)

    @staticmethod
    def bernoulli_gaussian(mu: float, sigma2: float, gamma: float) -> "ScalarPrior":
        return ScalarPrior(kind="bernoulli_gaussian", mu=mu, sigma2=sigma2, gamma=gamma)

    @staticmethod
    def finite_atoms(atoms: Sequence[float], weights: Sequence[float]) -> "ScalarPrior":
        return ScalarPrior(
            kind="finite_atoms", atoms=tuple(float(a) for a in atoms),
            weights=tuple(float(w) for w in weights),
        )

    @staticmethod
    def rademacher() -> "ScalarPrior":
        return ScalarPrior.finite_atoms((-1.0, 1.0), (0.5, 0.5))

    # -- moments ------------------------------------------------------

    @property
    def mean(self) -> float:
        return prior_moments(self)[0]

    @property
    def variance(self) -> float:
        return prior_moments(self)[1]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` iid values. Draw order is documented per family so
        that instances are reproducible across versions."""
        if self.kind == "gaussian":
            return self.mu + math.sqrt(self.sigma2) * rng.standard_normal(n)
        if self.kind == "bernoulli_gaussian":
            # active mask first, then slab values
            active = rng.random(n) < self.gamma
            slab = self.mu + math.sqrt(self.sigma2) * rng.standard_normal(n)
            return np.where(active, slab, 0.0)
        idx = rng.choice(len(self.atoms), size=n, p=np.asarray(self.weights))
        return np.asarray(self.atoms)[idx]


def prior_moments(prior: ScalarPrior) -> tuple[float, float, float]:
    """Exact (mean, variance, raw fourth moment) of the prior.

    Closed form for all three families; no sampling is involved.
    """
    if prior.kind == "gaussian":
        mu, s2 = prior.mu, prior.sigma2
        return mu, s2, mu**4 + 6.0 * mu**2 * s2 + 3.0 * s2**2
    if prior.kind == "bernoulli_gaussian":
        mu, s2, g = prior.mu, prior.sigma2, prior.gamma
        mean = g * mu
        var = g * (1.0 - g) * mu**2 + g * s2
        fourth = g * (mu**4 + 6.0 * mu**2 * s2 + 3.0 * s2**2)
        return mean, var, fourth
    a = np.asarray(prior.atoms)
    w = np.asarray(prior.weights)
    mean = float(w @ a)
    var = float(w @ (a - mean) ** 2)
    fourth = float(w @ a**4)
    return mean, var, fourth


def discretize_bg(prior: ScalarPrior, n_slab_atoms: int = 5) -> ScalarPrior:
    """Moment-matched finite-atom stand-in for a Bernoulli-Gaussian law.

    The slab is replaced by its Gauss-Hermite quadrature nodes, so the
    first 2*n_slab_atoms - 1 moments of the slab are preserved exactly.
    Used by the information-sequence estimators, which need a finite
    support to enumerate the observation density.
    """
    if prior.kind != "bernoulli_gaussian":
        raise ValueError("discretize_bg expects a Bernoulli-Gaussian prior")
    nodes, wts = np.polynomial.hermite_e.hermegauss(n_slab_atoms)
    wts = wts / wts.sum()
    atoms = prior.mu + math.sqrt(prior.sigma2) * nodes
    support: dict[float, float] = {0.0: 1.0 - prior.gamma}
    for a, w in zip(atoms, wts):
        a = float(a)
        support[a] = support.get(a, 0.0) + prior.gamma * float(w)
    keys = sorted(support)
    return ScalarPrior.finite_atoms(keys, [support[k] for k in keys])


# ---------------------------------------------------------------------------
# Posterior updates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BGPosteriorParams:
    """Bernoulli-Gaussian posterior parameters after one scalar observation.

    The posterior of X given y = sqrt(s) X + W is again in the
    Bernoulli-Gaussian family; (mu_n, sigma2_n, gamma_n) are its slab
    mean, slab variance and inclusion probability.  Entries may be
    scalars or arrays, matching the observation argument.
    """

    mu_n: np.ndarray
    sigma2_n: np.ndarray
    gamma_n: np.ndarray

    def mean(self) -> np.ndarray:
        return self.gamma_n * self.mu_n

    def variance(self) -> np.ndarray:
        m = self.mean()
        return self.gamma_n * (self.sigma2_n + self.mu_n**2) - m**2


def bg_posterior_update(prior: ScalarPrior, s: float, y) -> BGPosteriorParams:
    """Closed-form Bernoulli-Gaussian posterior for y = sqrt(s) X + W.

    The inclusion probability is evaluated in the log domain: the
    linear-domain exponent overflows already for moderate s * sigma2.
    With s = 0 the update is the identity on (mu, sigma2, gamma).
    """
    if prior.kind != "bernoulli_gaussian":
        raise ValueError("bg_posterior_update expects a Bernoulli-Gaussian prior")
    if s < 0.0:
        raise ValueError("snr must be >= 0")
    y = np.asarray(y, dtype=float)
    mu, s2, g = prior.mu, prior.sigma2, prior.gamma
    ss = s * s2
    rs = math.sqrt(s)
    sigma2_n = s2 / (1.0 + ss)
    mu_n = mu + (rs * s2 / (1.0 + ss)) * (y - rs * mu)
    # log odds of exclusion relative to inclusion
    t = (
        math.log((1.0 - g) / g)
        + 0.5 * math.log1p(ss)
        + (s * mu**2 - 2.0 * rs * mu * y - ss * y**2) / (2.0 * (1.0 + ss))
    )
    gamma_n = expit(-t)
    return BGPosteriorParams(
        mu_n=mu_n, sigma2_n=np.broadcast_to(np.float64(sigma2_n), y.shape).copy(),
        gamma_n=gamma_n,
    )


def posterior_stats(prior: ScalarPrior, s: float, y) -> tuple[np.ndarray, np.ndarray]:
    """(posterior mean, posterior variance) of X given y = sqrt(s) X + W.

    Vectorized over y; used directly as the Bayes denoiser.
    """
    y = np.asarray(y, dtype=float)
    if s < 0.0:
        raise ValueError("snr must be >= 0")
    if prior.kind == "gaussian":
        mu, s2 = prior.mu, prior.sigma2
        ss = s * s2
        rs = math.sqrt(s)
        mean = mu + (rs * s2 / (1.0 + ss)) * (y - rs * mu)
        var = np.full_like(y, s2 / (1.0 + ss))
        return mean, var
    if prior.kind == "bernoulli_gaussian":
        p = bg_posterior_update(prior, s, y)
        return p.mean(), p.variance()
    a = np.asarray(prior.atoms)
    logw = np.log(np.maximum(np.asarray(prior.weights), 1e-300))
    rs = math.sqrt(s)
    # log posterior weights over atoms, for every observation
    ll = logw[None, :] - 0.5 * (y[..., None] - rs * a[None, :]) ** 2
    ll -= _lse_last(ll)[..., None]
    w = np.exp(ll)
    mean = w @ a
    var = w @ a**2 - mean**2
    return mean, np.maximum(var, 0.0)


def atom_posterior_weights(prior: ScalarPrior, s: float, y) -> np.ndarray:
    """Posterior probabilities over the atoms of a finite prior."""
    if prior.kind != "finite_atoms":
        raise ValueError("finite-atom prior required")
    y = np.asarray(y, dtype=float)
    a = np.asarray(prior.atoms)
    logw = np.log(np.maximum(np.asarray(prior.weights), 1e-300))
    ll = logw[None, :] - 0.5 * (y[..., None] - math.sqrt(s) * a[None, :]) ** 2
    ll -= _lse_last(ll)[..., None]
    return np.exp(ll)


# ---------------------------------------------------------------------------
# Quadrature over the observation marginal
# ---------------------------------------------------------------------------
#
# For Bernoulli-Gaussian and finite-atom priors the marginal of Y is a
# small Gaussian mixture.  Expectations over Y are computed with
# composite Gauss-Legendre panels on a mesh that (a) resolves every
# mixture component at its own standard deviation and (b) refines the
# shells where the posterior odds between two components swing through
# the decision region, which is where posterior statistics vary fastest.
# For slab variances around 1e6 these shells are far narrower than the
# wide component, so component-scaled nodes alone would step over them.

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)
_REL_OFFSETS = np.concatenate(
    [np.arange(0.0, 2.0, 0.25), np.arange(2.0, 4.5, 0.5), np.arange(4.5, 13.5, 1.0)]
)
_TAIL_SDS = 13.0
_ODDS_BAND = 40.0
_SHELL_KNOTS = 49


def _y_mixture(prior: ScalarPrior, s: float):
    """Weights, means and sds of the Y-marginal mixture at snr s."""
    rs = math.sqrt(s)
    if prior.kind == "bernoulli_gaussian":
        w = np.array([1.0 - prior.gamma, prior.gamma])
        m = np.array([0.0, rs * prior.mu])
        sd = np.array([1.0, math.sqrt(1.0 + s * prior.sigma2)])
        return w, m, sd
    if prior.kind == "finite_atoms":
        w = np.asarray(prior.weights, dtype=float)
        m = rs * np.asarray(prior.atoms, dtype=float)
        sd = np.ones_like(m)
        return w, m, sd
    raise ValueError("mixture form requires a Bernoulli-Gaussian or finite-atom prior")


def _odds_shells(w, m, sd) -> list[tuple[float, float]]:
    """Intervals where some pairwise posterior log odds lie in the
    transition band [-ODDS_BAND, +ODDS_BAND]."""
    shells = []
    k = len(w)
    for i in range(k):
        for j in range(i + 1, k):
            if w[i] <= 0.0 or w[j] <= 0.0:
                continue
            vi, vj = sd[i] ** 2, sd[j] ** 2
            # log odds(i over j) = a y^2 + b y + c
            a = 0.5 * (1.0 / vj - 1.0 / vi)
            b = m[i] / vi - m[j] / vj
            c = (
                math.log(w[i] / w[j])
                - math.log(sd[i] / sd[j])
                - 0.5 * (m[i] ** 2 / vi - m[j] ** 2 / vj)
            )
            crossings: list[float] = []
            for band in (-_ODDS_BAND, _ODDS_BAND):
                if abs(a) < 1e-300:
                    if abs(b) > 1e-300:
                        crossings.append((band - c) / b)
                else:
                    disc = b * b - 4.0 * a * (c - band)
                    if disc >= 0.0:
                        r = math.sqrt(disc)
                        crossings.extend([(-b - r) / (2 * a), (-b + r) / (2 * a)])
            if not crossings:
                continue
            lo, hi = min(crossings), max(crossings)
            if hi > lo:
                shells.append((lo, hi))
    return shells


def _panel_mesh(prior: ScalarPrior, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights covering the Y marginal."""
    w, m, sd = _y_mixture(prior, s)
    lo = float(np.min(m - _TAIL_SDS * sd))
    hi = float(np.max(m + _TAIL_SDS * sd))
    knots = [np.array([lo, hi])]
    for mk, sk in zip(m, sd):
        knots.append(mk + sk * _REL_OFFSETS)
        knots.append(mk - sk * _REL_OFFSETS)
    for (a, b) in _odds_shells(w, m, sd):
        a, b = max(a, lo), min(b, hi)
        if b > a:
            knots.append(np.linspace(a, b, _SHELL_KNOTS))
    k = np.unique(np.clip(np.concatenate(knots), lo, hi))
    # drop knots separated by less than float resolution
    keep = np.concatenate([[True], np.diff(k) > 1e-12 * max(1.0, hi - lo)])
    k = k[keep]
    half = 0.5 * np.diff(k)
    mid = k[:-1] + half
    nodes = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    weights = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return nodes, weights


def _log_marginal(prior: ScalarPrior, s: float, y: np.ndarray) -> np.ndarray:
    w, m, sd = _y_mixture(prior, s)
    logw = np.log(np.maximum(w, 1e-300))
    z = (y[..., None] - m[None, :]) / sd[None, :]
    comp = logw[None, :] - 0.5 * z**2 - np.log(sd)[None, :] - 0.5 * _LOG_2PI
    return _lse_last(comp)


def expectation_over_y(prior: ScalarPrior, s: float, g: Callable[[np.ndarray], np.ndarray]) -> float:
    """E[g(Y)] for Y = sqrt(s) X + W, by deterministic quadrature."""
    nodes, weights = _panel_mesh(prior, s)
    p = np.exp(_log_marginal(prior, s, nodes))
    val = float(np.dot(weights, p * g(nodes)))
    if not math.isfinite(val):
        raise QuadratureError(
            f"non-finite quadrature result for prior={prior.kind} s={s}"
        )
    return val


# ---------------------------------------------------------------------------
# MMSE and mutual information functions
# ---------------------------------------------------------------------------


def scalar_mmse(prior: ScalarPrior, s: float) -> float:
    """MMSE function M_X(s) = E[(X - E[X | sqrt(s) X + W])^2].

    Closed form for Gaussian priors, quadrature of the posterior
    variance otherwise.  The positive-integrand form E[Var(X | Y)] is
    used rather than Var(X) - Var(E[X | Y]), which would cancel
    catastrophically at high snr.
    """
    if s < 0.0:
        raise ValueError("snr must be >= 0")
    if prior.kind == "gaussian":
        return prior.sigma2 / (1.0 + s * prior.sigma2)
    if s == 0.0:
        return prior_moments(prior)[1]

    def post_var(y):
        return posterior_stats(prior, s, y)[1]

    return expectation_over_y(prior, s, post_var)


def scalar_mi(prior: ScalarPrior, s: float) -> float:
    """Mutual information function I_X(s) = I(X; sqrt(s) X + W), in nats.

    Gaussian priors use 0.5*log(1 + s*sigma2).  Mixture priors use
    I = -E[log p(Y)] - h(W): the conditional law of Y given X is a unit
    Gaussian, so the conditional entropy is known exactly.
    """
    if s < 0.0:
        raise ValueError("snr must be >= 0")
    if prior.kind == "gaussian":
        return 0.5 * math.log1p(s * prior.sigma2)
    if s == 0.0:
        return 0.0
    neg_ent = expectation_over_y(prior, s, lambda y: -_log_marginal(prior, s, y))
    return neg_ent - _HALF_LOG_2PIE


def scalar_mmse_mc(
    prior: ScalarPrior, s: float, trials: int = 1_000_000, seed: int = 0
) -> tuple[float, float]:
    """Monte Carlo estimate of M_X(s) with its standard error.

    Independent of the quadrature path; kept as a cross-check oracle and
    as the fallback for priors without a mixture form.
    """
    rng = rng_stream(seed, 0)
    x = prior.sample(trials, rng)
    y = math.sqrt(s) * x + rng.standard_normal(trials)
    mean, _ = posterior_stats(prior, s, y)
    sq = (x - mean) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(trials))


def scalar_mi_mc(
    prior: ScalarPrior, s: float, trials: int = 1_000_000, seed: int = 0
) -> tuple[float, float]:
    """Monte Carlo estimate of I_X(s) via the log density ratio
    log p(y|x) - log p(y), with its standard error."""
    rng = rng_stream(seed, 0)
    x = prior.sample(trials, rng)
    w = rng.standard_normal(trials)
    y = math.sqrt(s) * x + w
    log_cond = -0.5 * w**2 - 0.5 * _LOG_2PI
    ratio = log_cond - _log_marginal(prior, s, y)
    return float(ratio.mean()), float(ratio.std(ddof=1) / math.sqrt(trials))


def k_transform(prior: ScalarPrior, s: float) -> float:
    """The transform k_X(s) = 1 / M_X(s) - s, non-decreasing in s.

    Constant and equal to 1/sigma2 for Gaussian priors.  Degenerate
    (almost-surely constant) priors are rejected.
    """
    if s <= 0.0:
        raise ValueError("k transform requires s > 0")
    if prior_moments(prior)[1] <= 0.0:
        raise ValueError("prior is almost surely constant")
    return 1.0 / scalar_mmse(prior, s) - s


def check_immse(prior: ScalarPrior, s_grid: Sequence[float]) -> float:
    """Worst |dI/ds - M/2| over the interior of the grid.

    The derivative of the mutual information function is compared
    against half the MMSE function using central finite differences:
    a fourth-order stencil on uniform grids (truncation error h^4),
    second-order otherwise.
    """
    s = np.asarray(s_grid, dtype=float)
    if s.ndim != 1 or len(s) < 3 or np.any(np.diff(s) <= 0.0):
        raise ValueError("grid must be ascending with at least 3 points")
    I = np.array([scalar_mi(prior, si) for si in s])
    M = np.array([scalar_mmse(prior, si) for si in s])
    h = np.diff(s)
    uniform = len(s) >= 5 and np.allclose(h, h[0], rtol=1e-10, atol=0.0)
    if uniform:
        dI = (-I[4:] + 8.0 * I[3:-1] - 8.0 * I[1:-3] + I[:-4]) / (12.0 * h[0])
        return float(np.max(np.abs(dI - 0.5 * M[2:-2])))
    dI = (I[2:] - I[:-2]) / (s[2:] - s[:-2])
    return float(np.max(np.abs(dI - 0.5 * M[1:-1])))


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarCurve:
    """I_X and M_X sampled on an ascending snr grid."""

    s_grid: np.ndarray
    I_values: np.ndarray
    M_values: np.ndarray

    def validate(self, tol: float = 1e-7) -> None:
        """Check monotonicity of both curves and concavity of I."""
        if np.any(np.diff(self.s_grid) <= 0.0):
            raise ValueError("s_grid must be strictly ascending")
        if np.any(np.diff(self.M_values) > tol):
            raise ValueError("MMSE curve must be non-increasing")
        if np.any(np.diff(self.I_values) < -tol):
            raise ValueError("information curve must be non-decreasing")
        # concavity on possibly non-uniform grids: difference quotients
        # must be non-increasing
        slopes = np.diff(self.I_values) / np.diff(self.s_grid)
        if np.any(np.diff(slopes) > tol):
            raise ValueError("information curve must be concave")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "I", "M"])
            for s, i, m in zip(self.s_grid, self.I_values, self.M_values):
                w.writerow([repr(float(s)), repr(float(i)), repr(float(m))])


def compute_scalar_curve(prior: ScalarPrior, s_grid: Sequence[float]) -> ScalarCurve:
    s = np.asarray(s_grid, dtype=float)
    I = np.array([scalar_mi(prior, si) for si in s])
    M = np.array([scalar_mmse(prior, si) for si in s])
    return ScalarCurve(s_grid=s, I_values=I, M_values=M)
