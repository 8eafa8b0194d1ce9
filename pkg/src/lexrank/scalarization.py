"""Scalarizing a rulebook with geometrically weighted penalties.

For a rulebook with ``N`` rules the utility at multiplier ``lam`` is::

    f(x, lam) = sum_i lam**(N - i) * r_i(x)

so rule 0 carries the fastest-growing weight. As ``lam`` grows the ordering
of decisions by ``f`` approaches the lexicographic ordering of their
violation vectors. ``utility_normalized`` divides by ``lam**N`` and is what
the solvers optimize; it never overflows and orders decisions identically at
fixed ``lam``.

The module also carries the differentially weighted sigmoid (DWS) reward used
as a baseline in the scenarios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .core import EPS_RANK, Ordering, Rulebook, RulebookError, lex_compare, rank_of, violations


class UtilityOverflowError(OverflowError):
    """lam**N is not representable; use the normalized utility instead."""


class UndefinedRatioError(ValueError):
    pass


# -- weights -----------------------------------------------------------------


def utility_weights(n_rules: int, lam: float, normalized: bool = False) -> np.ndarray:
    """Per-rule weights ``lam**(N-i)`` (or ``lam**(-i)`` when normalized)."""
    if not lam > 0:
        raise RulebookError(f"lambda must be positive, got {lam}")
    if normalized:
        return lam ** -np.arange(n_rules, dtype=float)
    try:
        w = np.array([math.pow(lam, n_rules - i) for i in range(n_rules)])
    except OverflowError:
        raise UtilityOverflowError(
            f"lambda={lam:g} raised to {n_rules} overflows; use utility_normalized"
        ) from None
    if not np.all(np.isfinite(w)):
        raise UtilityOverflowError(f"lambda={lam:g} raised to {n_rules} overflows; use utility_normalized")
    return w


def utility_from_violations(v, lam: float, normalized: bool = False) -> float:
    v = np.asarray(v, dtype=float)
    val = float(utility_weights(v.size, lam, normalized) @ v)
    if not math.isfinite(val):
        raise UtilityOverflowError(f"utility at lambda={lam:g} is not finite; use utility_normalized")
    return val


def utility(rulebook: Rulebook, x, lam: float) -> float:
    return utility_from_violations(violations(rulebook, x), lam)


def utility_normalized(rulebook: Rulebook, x, lam: float) -> float:
    return utility_from_violations(violations(rulebook, x), lam, normalized=True)


def utility_gradient(rulebook: Rulebook, x, lam: float, normalized: bool = False) -> np.ndarray:
    w = utility_weights(rulebook.N, lam, normalized)
    _, jac = rulebook.evaluate(x)
    g = w @ jac
    if not np.all(np.isfinite(g)):
        raise UtilityOverflowError(f"utility gradient at lambda={lam:g} is not finite")
    return g


def utility_objective(rulebook: Rulebook, lam: float, normalized: bool = True):
    """Return ``x -> (f(x, lam), grad f(x, lam))`` for the solvers."""
    w = utility_weights(rulebook.N, lam, normalized)

    def objective(x):
        v, jac = rulebook.evaluate(x)
        return float(w @ v), w @ jac

    return objective


# -- diagnostics -------------------------------------------------------------


def dominance_ratio(rulebook: Rulebook, x, lam: float, eps_rank: float = EPS_RANK) -> float:
    """Size of the lower-rule gradient terms relative to the leading term.

    For a decision of rank ``j`` the utility gradient splits into
    ``lam**(N-j) * grad r_j`` plus the rest; this returns
    ``||rest|| / ||lam**(N-j) * grad r_j||``. Computed in normalized weights,
    which leaves the ratio unchanged.
    """
    v, jac = rulebook.evaluate(x)
    j = rank_of(v, eps_rank)
    if j == rulebook.N:
        raise UndefinedRatioError("all rules are satisfied; no leading term")
    # lam**(N-i) / lam**(N-j) = lam**(j-i)
    lead = np.linalg.norm(jac[j])
    if lead == 0.0:
        raise UndefinedRatioError(f"rule {j} is violated but has zero gradient")
    rel = lam ** (j - np.arange(j + 1, rulebook.N, dtype=float))
    rest = rel @ jac[j + 1:] if rel.size else np.zeros(rulebook.dim)
    return float(np.linalg.norm(rest) / lead)


class Verdict(str, Enum):
    CONSISTENT_PREFERENCE = "ConsistentPreference"
    CONSISTENT_INDIFFERENCE = "ConsistentIndifference"
    INCONSISTENT = "Inconsistent"


@dataclass
class RepresentabilityResult:
    verdict: Verdict
    truth: Ordering
    lambdas: np.ndarray
    f_x: np.ndarray
    f_y: np.ndarray
    agrees: np.ndarray
    threshold: Optional[float] = None  # first lambda from which all agree
    lambda_star: Optional[float] = None  # largest disagreeing lambda

    def rows(self):
        for lam, fx, fy, ok in zip(self.lambdas, self.f_x, self.f_y, self.agrees):
            yield {"lambda": float(lam), "f_x": float(fx), "f_y": float(fy), "agrees": bool(ok)}


def _sign(a: float, b: float) -> Ordering:
    if a < b:
        return Ordering.LESS
    if a > b:
        return Ordering.GREATER
    return Ordering.EQUAL


def representability_check_violations(
    vx, vy, lambdas: Sequence[float], normalized: bool = True, eps: float = EPS_RANK
) -> RepresentabilityResult:
    """Sweep ``lambdas`` and compare utility order with the lexicographic one."""
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0:
        raise RulebookError("need a non-empty list of lambdas")
    if np.any(np.diff(lambdas) <= 0):
        raise RulebookError("lambdas must be strictly ascending")
    vx = np.asarray(vx, dtype=float)
    vy = np.asarray(vy, dtype=float)
    truth = lex_compare(vx, vy, eps)
    fx = np.array([utility_from_violations(vx, lam, normalized) for lam in lambdas])
    fy = np.array([utility_from_violations(vy, lam, normalized) for lam in lambdas])
    if truth is Ordering.EQUAL and np.array_equal(vx, vy):
        agrees = fx == fy
    elif truth is Ordering.EQUAL:
        # eps-ties with distinct vectors: only require the gap to stay within
        # the weighted tie tolerance
        w_sum = np.array([utility_weights(vx.size, lam, normalized).sum() for lam in lambdas])
        agrees = np.abs(fx - fy) <= eps * w_sum
    else:
        agrees = np.array([_sign(a, b) is truth for a, b in zip(fx, fy)])
    bad = np.flatnonzero(~agrees)
    if bad.size and bad[-1] == lambdas.size - 1:
        return RepresentabilityResult(
            Verdict.INCONSISTENT, truth, lambdas, fx, fy, agrees, lambda_star=float(lambdas[bad[-1]])
        )
    first = 0 if bad.size == 0 else bad[-1] + 1
    verdict = Verdict.CONSISTENT_INDIFFERENCE if truth is Ordering.EQUAL else Verdict.CONSISTENT_PREFERENCE
    return RepresentabilityResult(
        verdict,
        truth,
        lambdas,
        fx,
        fy,
        agrees,
        threshold=float(lambdas[first]),
        lambda_star=float(lambdas[bad[-1]]) if bad.size else None,
    )


def representability_check(
    rulebook: Rulebook, x, y, lambdas: Sequence[float], normalized: bool = True, eps: float = EPS_RANK
) -> RepresentabilityResult:
    return representability_check_violations(
        violations(rulebook, x), violations(rulebook, y), lambdas, normalized, eps
    )


# -- lambda schedule ---------------------------------------------------------


@dataclass(frozen=True)
class LambdaSchedule:
    lambda0: float = 0.5
    growth: float = 2.0
    lambda_max: float = 1e12

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise RulebookError("lambda0 must be positive")
        if not self.growth > 1:
            raise RulebookError("growth must exceed 1")
        if not self.lambda_max >= self.lambda0:
            raise RulebookError("lambda_max must be at least lambda0")

    def values(self, count: int) -> list:
        out = [self.lambda0]
        for _ in range(count - 1):
            out.append(next_lambda(self, out[-1]))
        return out


def next_lambda(schedule: LambdaSchedule, lam: float) -> float:
    return min(schedule.growth * lam, schedule.lambda_max)


# -- DWS baseline ------------------------------------------------------------


@dataclass(frozen=True)
class DwsParams:
    """Parameters of the DWS reward: geometric base ``a`` and sharpness ``c``."""

    a: float = 2.0
    c: float = 10.0
    N: int = 5

    def __post_init__(self):
        if not (self.a > 0 and self.c > 0):
            raise RulebookError("DWS parameters a and c must be positive")
        if self.N < 1:
            raise RulebookError("DWS needs at least one rule")

    @property
    def clamp(self) -> tuple:
        return (-self.a / 2.0, self.a / 2.0)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def dws_weights(params: DwsParams) -> np.ndarray:
    # position k (0-based) carries a**(N - k)
    return params.a ** (params.N - np.arange(params.N, dtype=float))


def dws_reward(rho, params: DwsParams) -> float:
    """Reward of a robustness vector; higher is preferred."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (params.N,):
        raise RulebookError(f"robustness vector must have length {params.N}")
    return float(dws_weights(params) @ sigmoid(params.c * rho) + rho.sum() / params.N)


def dws_reward_gradient(rho, params: DwsParams) -> np.ndarray:
    """Derivative of :func:`dws_reward` with respect to ``rho``."""
    rho = np.asarray(rho, dtype=float)
    s = sigmoid(params.c * rho)
    return dws_weights(params) * params.c * s * (1.0 - s) + 1.0 / params.N


def robustness_from_violations(
    v, clamp: tuple = (-0.5, 0.5), satisfied_value: Optional[float] = None, eps: float = EPS_RANK
) -> np.ndarray:
    """Map violations to robustness: ``clip(-v)``, satisfied rules to ``satisfied_value``.

    ``satisfied_value`` defaults to the upper clamp bound.
    """
    lo, hi = clamp
    v = np.asarray(v, dtype=float)
    rho = np.clip(-v, lo, hi)
    sat = hi if satisfied_value is None else satisfied_value
    return np.where(v <= eps, sat, rho)


def robustness_jacobian_diag(v, clamp: tuple = (-0.5, 0.5), eps: float = EPS_RANK) -> np.ndarray:
    """``d rho_i / d v_i``: -1 inside the clamp range, 0 where clamped or satisfied."""
    lo, hi = clamp
    v = np.asarray(v, dtype=float)
    inside = (v > eps) & (-v > lo) & (-v < hi)
    return np.where(inside, -1.0, 0.0)


def dws_objective(rulebook: Rulebook, params: DwsParams, eps: float = EPS_RANK):
    """``x -> (-R(rho(x)), -grad)``: DWS ascent posed as minimization."""
    if params.N != rulebook.N:
        raise RulebookError("DWS parameter N must match the rulebook size")

    def objective(x):
        v, jac = rulebook.evaluate(x)
        rho = robustness_from_violations(v, params.clamp, eps=eps)
        d_rho = dws_reward_gradient(rho, params) * robustness_jacobian_diag(v, params.clamp, eps)
        return -dws_reward(rho, params), -(d_rho @ jac)

    return objective
