"""Rules, rulebooks, rank and the lexicographic comparison they induce.

A rulebook is an ordered tuple of rules over one decision space, index 0 being
the most important. Every rule maps a decision vector to a non-negative
violation and exposes an analytic gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Optional, Sequence

import numpy as np

EPS_RANK = 1e-9
EPS_GRAD = 1e-12


class RulebookError(ValueError):
    """Rejected input: dimension or length mismatch, bad bounds, etc."""


class Ordering(IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


def as_decision(x, dim: Optional[int] = None) -> np.ndarray:
    """Validate and return ``x`` as a finite 1-D float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.size == 0:
        raise RulebookError(f"decision must be a non-empty vector, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise RulebookError(f"decision has dimension {arr.size}, rulebook expects {dim}")
    if not np.all(np.isfinite(arr)):
        raise RulebookError("decision contains non-finite entries")
    return arr


@dataclass(frozen=True)
class Rule:
    """A differentiable, non-negative violation function.

    ``evaluate`` and ``gradient`` take a decision of shape ``(d,)``. When
    ``vectorized`` is true, ``evaluate`` also accepts a batch ``(m, d)`` and
    returns ``(m,)``; the grid oracle relies on this.
    """

    id: str
    evaluate: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    vectorized: bool = False

    def __call__(self, x) -> float:
        return float(self.evaluate(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class Rulebook:
    """Totally ordered rules sharing one decision dimension.

    Parameters
    ----------
    rules : sequence of Rule
        Index 0 is the most important rule.
    dim : int
        Decision dimension.
    bounds : (d, 2) array, optional
        Box domain of the decision. Solvers project onto it and draw random
        starts from it.
    evaluator : callable, optional
        ``x -> (values (N,), jacobian (N, d))``. Lets a rulebook share work
        between rules (e.g. one vehicle rollout for all five AV rules).
        Defaults to looping over ``rules``.
    name : str
    """

    rules: tuple
    dim: int
    bounds: Optional[np.ndarray] = None
    evaluator: Optional[Callable] = field(default=None, compare=False)
    name: str = "rulebook"

    def __post_init__(self):
        if len(self.rules) < 1:
            raise RulebookError("a rulebook needs at least one rule")
        if self.dim < 1:
            raise RulebookError("decision dimension must be positive")
        object.__setattr__(self, "rules", tuple(self.rules))
        if self.bounds is not None:
            b = np.array(self.bounds, dtype=float).reshape(self.dim, 2)
            if np.any(b[:, 0] > b[:, 1]):
                raise RulebookError("bounds must satisfy lower <= upper")
            b.setflags(write=False)
            object.__setattr__(self, "bounds", b)

    @property
    def N(self) -> int:
        return len(self.rules)

    @property
    def ids(self) -> list:
        return [r.id for r in self.rules]

    def evaluate(self, x) -> tuple:
        """Violations and their Jacobian at ``x``: ``((N,), (N, d))``."""
        x = as_decision(x, self.dim)
        if self.evaluator is not None:
            v, jac = self.evaluator(x)
            return np.asarray(v, dtype=float), np.asarray(jac, dtype=float)
        v = np.array([r.evaluate(x) for r in self.rules], dtype=float)
        jac = np.array([np.asarray(r.gradient(x), dtype=float).reshape(self.dim) for r in self.rules])
        return v, jac

    def violations_batch(self, X) -> np.ndarray:
        """Violations for a batch of decisions, shape ``(m, N)``."""
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        out = np.empty((X.shape[0], self.N))
        for i, r in enumerate(self.rules):
            if r.vectorized and self.evaluator is None:
                out[:, i] = r.evaluate(X)
            else:
                out[:, i] = [r.evaluate(xk) for xk in X]
        return out

    def project(self, x: np.ndarray) -> np.ndarray:
        if self.bounds is None:
            return x
        return np.clip(x, self.bounds[:, 0], self.bounds[:, 1])


def violations(rulebook: Rulebook, x) -> np.ndarray:
    """Per-rule violation vector ``[r_0(x), ..., r_{N-1}(x)]``."""
    x = as_decision(x, rulebook.dim)
    if rulebook.evaluator is not None:
        v = rulebook.evaluate(x)[0]
    else:
        v = np.array([r.evaluate(x) for r in rulebook.rules], dtype=float)
    return check_violation_vector(v, rulebook.N)


def check_violation_vector(v, n: Optional[int] = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or (n is not None and v.size != n):
        raise RulebookError(f"violation vector must have length {n}, got shape {v.shape}")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise RulebookError(f"violations must be finite and non-negative: {v}")
    return v


def rank_of(v, eps_rank: float = EPS_RANK) -> int:
    """Index of the most important violated entry, ``len(v)`` if none."""
    if eps_rank < 0:
        raise RulebookError("eps_rank must be non-negative")
    v = np.asarray(v, dtype=float)
    hit = np.flatnonzero(v > eps_rank)
    return int(hit[0]) if hit.size else int(v.size)


def rank(rulebook: Rulebook, x, eps_rank: float = EPS_RANK) -> int:
    return rank_of(violations(rulebook, x), eps_rank)


def lex_compare(a, b, eps: float = EPS_RANK) -> Ordering:
    """Compare two violation vectors lexicographically (smaller is better).

    Entries closer than ``eps`` count as ties.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise RulebookError(f"cannot compare violation vectors of shapes {a.shape} and {b.shape}")
    diff = np.flatnonzero(np.abs(a - b) > eps)
    if diff.size == 0:
        return Ordering.EQUAL
    j = diff[0]
    return Ordering.LESS if a[j] < b[j] else Ordering.GREATER


def lex_key(v, eps: float = EPS_RANK) -> tuple:
    """Sort key consistent with :func:`lex_compare` up to eps-snapping at zero."""
    v = np.asarray(v, dtype=float)
    return tuple(np.where(v <= eps, 0.0, v))


@dataclass
class StationarityReport:
    rule_id: str
    counterexamples: list
    checked: int

    @property
    def ok(self) -> bool:
        return not self.counterexamples


def check_rule_stationarity(
    rule: Rule,
    samples: Sequence,
    eps_rank: float = EPS_RANK,
    eps_grad: float = EPS_GRAD,
) -> StationarityReport:
    """List samples that are violated yet have a vanishing gradient.

    Only the direction "violated implies non-zero gradient" is checkable by
    sampling.
    """
    if len(samples) == 0:
        raise RulebookError("need at least one sample")
    bad = []
    for s in samples:
        x = as_decision(s)
        val = float(rule.evaluate(x))
        gnorm = float(np.linalg.norm(rule.gradient(x)))
        if val > eps_rank and gnorm <= eps_grad:
            bad.append((x.copy(), val, gnorm))
    return StationarityReport(rule.id, bad, len(samples))
