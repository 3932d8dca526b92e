"""Replica potential, fixed points, state evolution and phase transitions.

The asymptotic per-dimension mutual information of the standard linear
model at measurement rate delta is the minimum over s > 0 of the
potential

    F(s) = I_X(s) + (delta / 2) * (log(delta / s) + s / delta - 1),

and the asymptotic MMSE is M_X(s*) at the minimizer.  Stationary points
of F solve the fixed-point relation s * (1 + M_X(s)) = delta,
equivalently M = M_X(delta / (1 + M)).  State evolution iterates that
relation; its fixed points are exactly the stationary points of F.
When F has two local minima, the rate at which the global minimum
switches basins is the information-theoretic transition, and the rate
at which the high-MMSE basin disappears is the algorithmic one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .scalar_channel import ScalarPrior, prior_moments, scalar_mi, scalar_mmse

__all__ = [
    "ReplicaPotentialSample",
    "ReplicaSolution",
    "StateEvolutionResult",
    "FixedPointCurve",
    "PhaseTransition",
    "potential",
    "stationary_points",
    "replica_solution",
    "state_evolution",
    "invert_mmse",
    "fixed_point_curve",
    "locate_phase_transition",
    "single_crossing_diagnostic",
    "replica_sweep",
]

_GRID_POINTS = 400
_RESIDUAL_TOL = 1e-8
_TIE_TOL = 1e-9


@dataclass(frozen=True)
class ReplicaPotentialSample:
    s: float
    F: float


@dataclass(frozen=True)
class ReplicaSolution:
    delta: float
    stationary_s: tuple[float, ...]
    s_star: float
    I_delta: float
    M_delta: float
    unique: bool


@dataclass(frozen=True)
class StateEvolutionResult:
    trajectory: np.ndarray  # M_0, M_1, ... (M_0 is the initial condition)
    converged: bool

    @property
    def limit(self) -> float:
        return float(self.trajectory[-1])

    @property
    def iterations(self) -> int:
        return len(self.trajectory) - 1


@dataclass(frozen=True)
class FixedPointCurve:
    """Points (delta, M, I') with M solving M = M_X(delta / (1 + M))."""

    deltas: np.ndarray
    M: np.ndarray
    I_prime: np.ndarray


@dataclass(frozen=True)
class PhaseTransition:
    delta_star: float
    delta_alg: float
    M_minus: float
    M_plus: float


def potential(prior: ScalarPrior, delta: float, s: float) -> ReplicaPotentialSample:
    """Evaluate the replica potential F(s) at measurement rate delta.

    F(0+) = +inf for delta > 0 (the rate penalty diverges).
    """
    if delta <= 0.0:
        raise ValueError("delta must be > 0")
    if s < 0.0:
        raise ValueError("s must be >= 0")
    if s == 0.0:
        return ReplicaPotentialSample(s=0.0, F=math.inf)
    F = scalar_mi(prior, s) + 0.5 * delta * (math.log(delta / s) + s / delta - 1.0)
    return ReplicaPotentialSample(s=s, F=F)


def _fixed_point_residual(prior: ScalarPrior, delta: float, s: float) -> float:
    return s * (1.0 + scalar_mmse(prior, s)) - delta


def stationary_points(
    prior: ScalarPrior, delta: float, scan_points: int = _GRID_POINTS
) -> list[float]:
    """All stationary points of F, ascending in s.

    F'(s) = (s * (1 + M_X(s)) - delta) / (2 s), so stationary points are
    roots of the fixed-point residual.  Any root satisfies
    s = delta / (1 + M_X(s)), hence lies in [delta / (1 + Var X), delta];
    the residual is scanned on a log grid over that range (with margin)
    and each sign change is polished by Brent's method.  Tangent (double)
    roots at an exact spinodal are not resolvable by sign changes and are
    outside this function's contract.
    """
    if delta <= 0.0:
        raise ValueError("delta must be > 0")
    var = prior_moments(prior)[1]
    if var <= 0.0:
        raise ValueError("prior is almost surely constant")
    s_lo = delta / (1.0 + var) / 1.5
    s_hi = delta * (1.0 + 1e-4)
    grid = np.geomspace(s_lo, s_hi, scan_points)
    resid = np.array([_fixed_point_residual(prior, delta, s) for s in grid])
    roots: list[float] = []
    for i in range(len(grid) - 1):
        a, b = resid[i], resid[i + 1]
        if a == 0.0:
            roots.append(float(grid[i]))
        elif a * b < 0.0:
            roots.append(
                float(
                    brentq(
                        lambda s: _fixed_point_residual(prior, delta, s),
                        grid[i],
                        grid[i + 1],
                        xtol=1e-300,
                        rtol=8.9e-16,
                    )
                )
            )
    if resid[-1] == 0.0:
        roots.append(float(grid[-1]))
    roots = sorted(set(roots))
    for s in roots:
        r = abs(_fixed_point_residual(prior, delta, s))
        if r > _RESIDUAL_TOL * max(1.0, delta):
            raise RuntimeError(f"stationary point refinement failed: residual {r} at s={s}")
    return roots


def replica_solution(
    prior: ScalarPrior, delta: float, scan_points: int = _GRID_POINTS
) -> ReplicaSolution:
    """Global minimum of the replica potential.

    I(delta) = F(s*) and M(delta) = M_X(s*).  ``unique`` is False when
    two stationary values of F agree within 1e-9 nats, i.e. at (or
    numerically indistinguishable from) a transition rate.
    """
    roots = stationary_points(prior, delta, scan_points)
    values = [potential(prior, delta, s).F for s in roots]
    i_star = int(np.argmin(values))
    s_star = roots[i_star]
    sorted_vals = sorted(values)
    unique = len(values) == 1 or (sorted_vals[1] - sorted_vals[0]) > _TIE_TOL
    return ReplicaSolution(
        delta=delta,
        stationary_s=tuple(roots),
        s_star=s_star,
        I_delta=values[i_star],
        M_delta=scalar_mmse(prior, s_star),
        unique=unique,
    )


def state_evolution(
    prior: ScalarPrior,
    delta: float,
    M0: float | None = None,
    max_iter: int = 20_000,
    tol: float = 1e-10,
) -> StateEvolutionResult:
    """Iterate M_{t+1} = M_X(delta / (1 + M_t)) to convergence.

    The default start M0 = Var(X) is the uninformative initialization
    and converges to the largest fixed point (the branch an iterative
    first-order algorithm reaches).  Pass a small M0 to find the
    informative branch.  delta = 0 yields the constant sequence Var(X).
    """
    if tol <= 0.0:
        raise ValueError("tol must be > 0")
    var = prior_moments(prior)[1]
    if M0 is None:
        M0 = var
    if not (0.0 < M0 <= var * (1.0 + 1e-12) or (M0 == var == 0.0)):
        raise ValueError("M0 must lie in (0, Var(X)]")
    traj = [float(M0)]
    converged = False
    for _ in range(max_iter):
        if delta == 0.0:
            nxt = var
        else:
            nxt = scalar_mmse(prior, delta / (1.0 + traj[-1]))
        done = abs(nxt - traj[-1]) < tol
        traj.append(float(nxt))
        if done:
            converged = True
            break
    return StateEvolutionResult(trajectory=np.array(traj), converged=converged)


def invert_mmse(prior: ScalarPrior, M: float) -> float:
    """The snr s with M_X(s) = M, by bisection on the monotone MMSE."""
    var = prior_moments(prior)[1]
    if not (0.0 < M < var):
        raise ValueError("M must lie strictly inside (0, Var(X))")
    s_lo, s_hi = 0.0, 1.0
    while scalar_mmse(prior, s_hi) > M:
        s_lo = s_hi
        s_hi *= 4.0
        if s_hi > 1e300:
            raise RuntimeError("failed to bracket the MMSE inverse")
    return float(
        brentq(lambda s: scalar_mmse(prior, s) - M, s_lo, s_hi, xtol=1e-300, rtol=8.9e-16)
    )


def fixed_point_curve(prior: ScalarPrior, M_grid: Sequence[float]) -> FixedPointCurve:
    """Sweep the fixed-point relation over an MMSE grid.

    For each M, delta(M) = (1 + M) * M_X^{-1}(M); the emitted I' value is
    log(1 + M) / 2.  Grid points outside the open range of M_X are
    rejected.
    """
    M = np.asarray(M_grid, dtype=float)
    var = prior_moments(prior)[1]
    if np.any(M <= 0.0) or np.any(M >= var):
        raise ValueError("M grid must lie strictly inside (0, Var(X))")
    if np.any(np.diff(M) <= 0.0):
        raise ValueError("M grid must be ascending")
    deltas = np.empty_like(M)
    for i, m in enumerate(M):
        s = invert_mmse(prior, m)
        deltas[i] = (1.0 + m) * s
    return FixedPointCurve(deltas=deltas, M=M.copy(), I_prime=0.5 * np.log1p(M))


def _branch_labels(prior: ScalarPrior, sol: ReplicaSolution) -> tuple[float, float]:
    """MMSE values of the outermost stationary branches (high, low)."""
    m_high = scalar_mmse(prior, sol.stationary_s[0])
    m_low = scalar_mmse(prior, sol.stationary_s[-1])
    return m_high, m_low


def _is_low_branch(prior: ScalarPrior, sol: ReplicaSolution) -> bool:
    """True when the global minimizer sits on the low-MMSE branch."""
    if len(sol.stationary_s) == 1:
        return True  # single basin: treated as already merged with the low branch
    m_high, m_low = _branch_labels(prior, sol)
    return abs(math.log(sol.M_delta / m_low)) <= abs(math.log(sol.M_delta / m_high))


def locate_phase_transition(
    prior: ScalarPrior,
    delta_lo: float,
    delta_hi: float,
    tol: float = 1e-4,
    se_max_iter: int = 50_000,
) -> PhaseTransition | None:
    """Locate the information-theoretic and algorithmic transition rates.

    delta_star: bisection on "the global minimizer of F lies on the
    low-MMSE branch"; at a tie it is the infimum of the low-branch
    region.  delta_alg: bisection on "state evolution started from
    M0 = Var(X) reaches the low-MMSE branch".  Returns None when no
    branch switch occurs inside [delta_lo, delta_hi].  The bracket is
    assumed to contain at most one transition.
    """
    if not (0.0 < delta_lo < delta_hi):
        raise ValueError("need 0 < delta_lo < delta_hi")

    var = prior_moments(prior)[1]

    def multi(delta: float) -> bool:
        # cheap coexistence probe: count residual sign changes without
        # polishing the roots
        grid = np.geomspace(delta / (1.0 + var) / 1.5, delta * (1.0 + 1e-4), 120)
        resid = np.array([_fixed_point_residual(prior, delta, s) for s in grid])
        return int(np.sum(np.sign(resid[1:]) != np.sign(resid[:-1]))) >= 3

    # If no rate in the bracket has coexisting basins, the minimizer
    # varies continuously: no transition.
    probe = np.linspace(delta_lo, delta_hi, 41)
    multi_mask = [multi(d) for d in probe]
    if not any(multi_mask):
        return None

    def solve(delta: float) -> ReplicaSolution:
        return replica_solution(prior, delta)

    # --- information-theoretic transition -------------------------------
    low_mask = [_is_low_branch(prior, solve(d)) for d in (delta_lo, delta_hi)]
    if low_mask[0] == low_mask[1]:
        return None
    lo, hi = delta_lo, delta_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _is_low_branch(prior, solve(mid)):
            hi = mid
        else:
            lo = mid
    delta_star = hi  # infimum of the low-branch set, resolved to tol

    # --- algorithmic transition ------------------------------------------
    def se_reaches_low(delta: float) -> bool:
        sol = solve(delta)
        res = state_evolution(prior, delta, max_iter=se_max_iter, tol=1e-11)
        if len(sol.stationary_s) == 1:
            return True
        m_high, m_low = _branch_labels(prior, sol)
        lim = max(res.limit, 1e-300)
        return abs(math.log(lim / m_low)) <= abs(math.log(lim / m_high))

    lo, hi = delta_star - tol, delta_hi
    if se_reaches_low(lo):
        delta_alg = delta_star
    else:
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if se_reaches_low(mid):
                hi = mid
            else:
                lo = mid
        delta_alg = 0.5 * (lo + hi)

    eps = max(tol, 1e-6)
    M_minus = replica_solution(prior, delta_star - eps).M_delta
    M_plus = replica_solution(prior, delta_star + eps).M_delta
    return PhaseTransition(
        delta_star=delta_star, delta_alg=delta_alg, M_minus=M_minus, M_plus=M_plus
    )


def single_crossing_diagnostic(prior: ScalarPrior, delta_grid: Sequence[float]) -> int:
    """Number of branch switches of the global minimizer over the grid.

    A switch is flagged when s*(delta) jumps by more than a factor of 3
    between adjacent grid points; a grid of at least ~500 points over
    the range of interest is needed to resolve branches reliably.
    A count of at most one certifies the single-crossing behaviour.
    """
    deltas = np.asarray(delta_grid, dtype=float)
    if np.any(np.diff(deltas) <= 0.0) or np.any(deltas <= 0.0):
        raise ValueError("delta grid must be positive and ascending")
    # a coarse bracket scan is enough here: roots from sign changes are
    # still polished exactly, only near-merged basins can be missed, and
    # those cannot move the minimizer by the jump threshold
    s_star = np.array(
        [replica_solution(prior, d, scan_points=80).s_star for d in deltas]
    )
    ratio = s_star[1:] / s_star[:-1]
    return int(np.sum((ratio > 3.0) | (ratio < 1.0 / 3.0)))


def replica_sweep(prior: ScalarPrior, deltas: Sequence[float]) -> list[ReplicaSolution]:
    """Replica solutions over a rate grid, in grid order."""
    return [replica_solution(prior, float(d)) for d in deltas]
