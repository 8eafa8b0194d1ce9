"""Gradient descent with Armijo backtracking and the continuation solvers.

``central_path_solve`` converges the inner problem at every multiplier before
growing it; ``timescale_solve`` takes a fixed number of descent steps per
multiplier update (one by default). Both optimize the normalized utility.
``preemptive_solve`` is the classic stage-by-stage baseline and
``grid_oracle`` the exhaustive ground truth for small problems.

Objectives are callables ``x -> (value, gradient)``. When a rulebook carries
box bounds, steps are projected onto the box and stationarity is measured
by the projected gradient ``x - P(x - grad)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .core import EPS_RANK, Rulebook, RulebookError, as_decision, rank_of, violations
from .scalarization import LambdaSchedule, next_lambda, utility_weights

log = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], tuple]


class DivergenceError(RuntimeError):
    """The objective became non-finite during a solve."""

    def __init__(self, message, trace=None, stage=None):
        super().__init__(message)
        self.trace = trace
        self.stage = stage


@dataclass(frozen=True)
class SolverConfig:
    inner_tol: float = 1e-8
    max_inner_iters: int = 500
    max_outer_iters: int = 300
    armijo_c1: float = 1e-4
    backtrack_factor: float = 0.5
    initial_step: float = 1.0
    max_backtracks: int = 40
    seed: int = 0
    # multiplier updates per descent step in timescale_solve
    timescale_ratio: int = 1
    stable_outer_iters: int = 3
    # longest move a single step may make in decision space
    max_step: float = math.inf

    def __post_init__(self):
        if not self.inner_tol > 0:
            raise RulebookError("inner_tol must be positive")
        if not 0 < self.armijo_c1 < 1:
            raise RulebookError("armijo_c1 must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise RulebookError("backtrack_factor must lie in (0, 1)")
        if not self.initial_step > 0:
            raise RulebookError("initial_step must be positive")
        if not self.max_step > 0:
            raise RulebookError("max_step must be positive")
        if self.timescale_ratio < 1:
            raise RulebookError("timescale_ratio must be at least 1")
        for name in ("max_inner_iters", "max_outer_iters", "max_backtracks", "stable_outer_iters"):
            if getattr(self, name) < 1:
                raise RulebookError(f"{name} must be at least 1")


class UtilityObjective:
    """Normalized utility at a fixed multiplier, callable as ``x -> (value, grad)``.

    ``gradient_scale(x)`` returns ``lam**j`` for a decision of rank ``j``:
    multiplying the normalized gradient by it measures stationarity relative
    to the weight of the most important violated rule, so lower-ranked rules
    do not fall under the tolerance merely because their weight shrank.
    """

    def __init__(self, rulebook: Rulebook, lam: float, eps_rank: float = EPS_RANK):
        self.rulebook = rulebook
        self.lam = lam
        self.eps_rank = eps_rank
        self.weights = utility_weights(rulebook.N, lam, normalized=True)
        self._cache = None

    def __call__(self, x):
        v, jac = self.rulebook.evaluate(x)
        self._cache = (x, v)
        return float(self.weights @ v), self.weights @ jac

    def violations(self, x) -> np.ndarray:
        if self._cache is not None and self._cache[0] is x:
            return self._cache[1]
        return self.rulebook.evaluate(x)[0]

    def gradient_scale(self, x) -> float:
        j = min(rank_of(self.violations(x), self.eps_rank), self.rulebook.N - 1)
        return self.lam ** j


def _scaled_stationarity(objective, x, g, bounds):
    gn = stationarity(x, g, bounds)
    scale = getattr(objective, "gradient_scale", None)
    return gn * scale(x) if scale is not None else gn


def _bb_step(s, y, fallback, cap):
    """Barzilai-Borwein trial step ``s.s / s.y``; ``fallback`` when curvature is not positive."""
    sy = float(s @ y)
    if sy > 0:
        return min(float(s @ s) / sy, cap)
    return min(fallback, cap)


_MACHINE_EPS = float(np.finfo(float).eps)


def _at_precision_floor(x_old, x_new, f_old, f_new) -> bool:
    """True when an accepted step moved neither x nor f beyond rounding level."""
    dx = float(np.linalg.norm(x_new - x_old))
    return dx <= 4 * _MACHINE_EPS * (1.0 + float(np.linalg.norm(x_old))) and abs(f_old - f_new) <= (
        4 * _MACHINE_EPS * max(abs(f_old), 1e-300)
    )


def _first_step(cfg, g) -> float:
    # the opening trial moves at most initial_step in decision space
    return cfg.initial_step / max(1.0, float(np.linalg.norm(g)))


def _project(x, bounds):
    if bounds is None:
        return x
    return np.clip(x, bounds[:, 0], bounds[:, 1])


def stationarity(x, g, bounds=None) -> float:
    """Norm of the (projected) gradient."""
    if bounds is None:
        return float(np.linalg.norm(g))
    # equals x - P(x - g) without cancellation when g << x
    return float(np.linalg.norm(np.clip(g, x - bounds[:, 1], x - bounds[:, 0])))


def _check_finite(value, g, where):
    if not (math.isfinite(value) and np.all(np.isfinite(g))):
        raise DivergenceError(f"non-finite objective or gradient {where}")


class StepResult(NamedTuple):
    x: np.ndarray
    value: float
    grad: np.ndarray
    step: float
    stalled: bool


def gradient_step(
    objective: Objective,
    x,
    cfg: SolverConfig = SolverConfig(),
    bounds=None,
    step0: Optional[float] = None,
    current: Optional[tuple] = None,
) -> StepResult:
    """One projected steepest-descent step with Armijo backtracking.

    ``step0`` overrides the trial step (``cfg.initial_step`` by default);
    ``current`` may pass an already computed ``(value, grad)`` at ``x``.
    If no trial step decreases the objective, ``x`` comes back unchanged and
    ``stalled`` is set.
    """
    x = np.asarray(x, dtype=float)
    fx, g = current if current is not None else objective(x)
    _check_finite(fx, g, "at the step origin")
    if stationarity(x, g, bounds) == 0.0:
        return StepResult(x, fx, g, 0.0, False)
    t = cfg.initial_step if step0 is None else step0
    if math.isfinite(cfg.max_step):
        t = min(t, cfg.max_step / float(np.linalg.norm(g)))
    for _ in range(cfg.max_backtracks):
        xt = _project(x - t * g, bounds)
        ft, gt = objective(xt)
        if math.isfinite(ft) and ft <= fx + cfg.armijo_c1 * float(g @ (xt - x)):
            _check_finite(ft, gt, "after a line-search step")
            return StepResult(xt, ft, gt, t, False)
        t *= cfg.backtrack_factor
    return StepResult(x, fx, g, 0.0, True)


@dataclass
class InnerResult:
    x: np.ndarray
    value: float
    grad_norm: float
    steps: int
    converged: bool
    stalled: bool
    values: list = field(default_factory=list)


def solve_inner(objective: Objective, x0, cfg: SolverConfig = SolverConfig(), bounds=None) -> InnerResult:
    """Iterate :func:`gradient_step` until the stationarity measure drops below tol.

    Trial steps after the first use the Barzilai-Borwein length of the
    previous step, still safeguarded by Armijo backtracking. If the objective
    has a ``gradient_scale`` method the measure is scaled by it. A step that
    changes neither ``x`` nor the value beyond rounding also ends the solve
    as converged: the stationarity target is below working precision there.
    Hitting ``max_inner_iters`` is reported through ``converged=False``.
    """
    x = np.asarray(x0, dtype=float).copy()
    fx, g = objective(x)
    _check_finite(fx, g, "at the inner start point")
    values = [fx]
    t = _first_step(cfg, g)
    cap = 1e12 * cfg.initial_step
    steps = 0
    while True:
        gn = _scaled_stationarity(objective, x, g, bounds)
        if gn <= cfg.inner_tol:
            return InnerResult(x, fx, gn, steps, True, False, values)
        if steps >= cfg.max_inner_iters:
            return InnerResult(x, fx, gn, steps, False, False, values)
        res = gradient_step(objective, x, cfg, bounds, step0=t, current=(fx, g))
        steps += 1
        if res.stalled:
            t0 = _first_step(cfg, g)
            if t == t0:
                return InnerResult(x, fx, gn, steps, False, True, values)
            t = t0
            continue
        t = _bb_step(res.x - x, res.grad - g, 2.0 * res.step, cap)
        floor = _at_precision_floor(x, res.x, fx, res.value)
        x, fx, g = res.x, res.value, res.grad
        values.append(fx)
        if floor:
            return InnerResult(x, fx, _scaled_stationarity(objective, x, g, bounds), steps, True, False, values)


@dataclass
class TraceRow:
    iter: int
    lam: float
    x: np.ndarray
    objective: float
    grad_norm: float
    rank: int
    inner_steps: int


@dataclass
class RunTrace:
    iterations: list
    final_decision: np.ndarray
    final_rank: int
    total_inner_steps: int
    converged: bool
    iteration_limited: bool
    solver: str
    lambda_at_last_rank_change: Optional[float] = None

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([r.lam for r in self.iterations])


def random_start(rulebook: Rulebook, seed: int, default_half_width: float = 1.0) -> np.ndarray:
    """Uniform draw from the rulebook's box (or ``[-1, 1]^d`` when unbounded)."""
    rng = np.random.default_rng(seed)
    if rulebook.bounds is None:
        return rng.uniform(-default_half_width, default_half_width, size=rulebook.dim)
    return rng.uniform(rulebook.bounds[:, 0], rulebook.bounds[:, 1])


def _start(rulebook, x0, cfg):
    if x0 is None:
        return random_start(rulebook, cfg.seed)
    return rulebook.project(as_decision(x0, rulebook.dim).copy())


class _OuterMonitor:
    """Tracks rank stability and the multiplier of the last rank change."""

    def __init__(self):
        self.last_rank = None
        self.stable = 0
        self.lambda_at_change = None

    def update(self, rk, lam):
        if rk == self.last_rank:
            self.stable += 1
        else:
            self.stable = 1
            self.lambda_at_change = lam
            self.last_rank = rk


def central_path_solve(
    rulebook: Rulebook,
    x0=None,
    schedule: LambdaSchedule = LambdaSchedule(),
    cfg: SolverConfig = SolverConfig(),
    eps_rank: float = EPS_RANK,
) -> RunTrace:
    """Exact central path: full inner solve at each multiplier, then grow it.

    Stops when the rank has been stable for ``cfg.stable_outer_iters`` outer
    iterations and the last displacement is within ``inner_tol``, or once the
    multiplier has saturated at ``lambda_max`` and the inner solve converged.
    """
    x = _start(rulebook, x0, cfg)
    lam = schedule.lambda0
    rows = []
    total = 0
    mon = _OuterMonitor()
    converged = False
    for k in range(cfg.max_outer_iters):
        try:
            res = solve_inner(UtilityObjective(rulebook, lam, eps_rank), x, cfg, rulebook.bounds)
        except DivergenceError as err:
            err.trace = rows
            raise
        total += res.steps
        disp = float(np.linalg.norm(res.x - x))
        x = res.x
        rk = rank_of(violations(rulebook, x), eps_rank)
        mon.update(rk, lam)
        rows.append(TraceRow(k, lam, x.copy(), res.value, res.grad_norm, rk, res.steps))
        saturated = lam >= schedule.lambda_max
        if res.converged and (
            (mon.stable >= cfg.stable_outer_iters and disp <= cfg.inner_tol) or saturated
        ):
            converged = True
            break
        lam = next_lambda(schedule, lam)
    return RunTrace(
        rows, x, rows[-1].rank, total, converged, not converged, "central_path", mon.lambda_at_change
    )


def timescale_solve(
    rulebook: Rulebook,
    x0=None,
    schedule: LambdaSchedule = LambdaSchedule(),
    cfg: SolverConfig = SolverConfig(),
    eps_rank: float = EPS_RANK,
) -> RunTrace:
    """Time-scale separated solve: one descent step per outer iteration.

    After each step the multiplier is advanced ``cfg.timescale_ratio`` times,
    so the total number of descent steps never exceeds ``max_outer_iters``.
    """
    x = _start(rulebook, x0, cfg)
    lam = schedule.lambda0
    rows = []
    total = 0
    mon = _OuterMonitor()
    converged = False
    t = None
    cap = 1e12 * cfg.initial_step
    scale_prev = None
    for k in range(cfg.max_outer_iters):
        obj = UtilityObjective(rulebook, lam, eps_rank)
        x_prev = x
        fx, g = obj(x)
        _check_finite(fx, g, "in the time-scale solver")
        # the leading weight lam**-j shrank with the update; stretch the step to match
        scale = obj.gradient_scale(x)
        if t is None:
            t = _first_step(cfg, g)
        elif scale_prev is not None:
            t = min(t * scale / scale_prev, cap)
        steps = 0
        floor = False
        if _scaled_stationarity(obj, x, g, rulebook.bounds) > cfg.inner_tol:
            try:
                res = gradient_step(obj, x, cfg, rulebook.bounds, step0=t, current=(fx, g))
            except DivergenceError as err:
                err.trace = rows
                raise
            steps = 1
            if res.stalled:
                t = _first_step(cfg, g)
            else:
                t = _bb_step(res.x - x, res.grad - g, 2.0 * res.step, cap)
                floor = _at_precision_floor(x, res.x, fx, res.value)
                x, fx, g = res.x, res.value, res.grad
        scale_prev = obj.gradient_scale(x)
        total += steps
        gn = _scaled_stationarity(obj, x, g, rulebook.bounds)
        disp = float(np.linalg.norm(x - x_prev))
        rk = rank_of(obj.violations(x), eps_rank)
        mon.update(rk, lam)
        rows.append(TraceRow(k, lam, x.copy(), fx, gn, rk, steps))
        saturated = lam >= schedule.lambda_max
        if (mon.stable >= cfg.stable_outer_iters and disp <= cfg.inner_tol) or (
            saturated and (gn <= cfg.inner_tol or floor)
        ):
            converged = True
            break
        for _ in range(cfg.timescale_ratio):
            lam = next_lambda(schedule, lam)
    return RunTrace(
        rows, x, rows[-1].rank, total, converged, not converged, "timescale", mon.lambda_at_change
    )


@dataclass
class PreemptiveResult:
    x: np.ndarray
    stages: int
    stage_levels: list
    total_inner_steps: int
    converged: bool


def preemptive_solve(
    rulebook: Rulebook,
    x0=None,
    cfg: SolverConfig = SolverConfig(),
    level_penalty: float = 1e2,
    level_tol: float = 1e-10,
    max_level_penalty: float = 1e16,
    penalty_growth: float = 10.0,
) -> PreemptiveResult:
    """Sequential stage-wise minimization in decreasing importance.

    Stage ``i`` minimizes ``r_i + mu * sum_{j<i} max(0, r_j - r_j* - tol)^2``
    where ``r_j*`` is the level reached at stage ``j``. Starting from
    ``mu = level_penalty``, the stage is re-solved with ``mu`` grown by
    ``penalty_growth`` until every frozen level holds within ``level_tol``
    or ``mu`` passes ``max_level_penalty``.
    """
    x = _start(rulebook, x0, cfg)
    levels = []
    total = 0
    all_converged = True
    for i in range(rulebook.N):
        frozen = np.array(levels)
        mu = level_penalty
        while True:

            def objective(z, i=i, frozen=frozen, mu=mu):
                v, jac = rulebook.evaluate(z)
                excess = np.maximum(0.0, v[:i] - frozen - level_tol)
                val = v[i] + mu * float(excess @ excess)
                grad = jac[i] + 2.0 * mu * (excess @ jac[:i])
                return val, grad

            try:
                res = solve_inner(objective, x, cfg, rulebook.bounds)
            except DivergenceError as err:
                raise DivergenceError(f"preemptive stage {i} diverged", stage=i) from err
            total += res.steps
            x = res.x
            v = violations(rulebook, x)
            held = i == 0 or float(np.max(v[:i] - frozen)) <= level_tol
            if held or mu * penalty_growth > max_level_penalty:
                break
            mu *= penalty_growth
        all_converged &= res.converged and held
        levels.append(float(v[i]))
    return PreemptiveResult(x, rulebook.N, levels, total, all_converged)


@dataclass
class OracleResult:
    min_rank: int
    lex_argmin: np.ndarray
    argmin_violations: np.ndarray
    grid_size: int
    argmin_index: int


GRID_BUDGET = 10**6


def make_grid(bounds, points_per_dim) -> np.ndarray:
    """Row-major grid over a box, shape ``(points_per_dim**d, d)``."""
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    d = bounds.shape[0]
    if points_per_dim < 1 or points_per_dim**d > GRID_BUDGET:
        raise RulebookError(f"grid of {points_per_dim}^{d} points exceeds the budget of {GRID_BUDGET}")
    axes = [np.linspace(lo, hi, points_per_dim) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def lex_argmin_index(V, eps: float = EPS_RANK) -> int:
    """Row of ``V`` that is lexicographically smallest; first row wins ties.

    Entries within ``eps`` of zero count as exactly zero.
    """
    V = np.where(V <= eps, 0.0, V)
    cand = np.arange(V.shape[0])
    for i in range(V.shape[1]):
        col = V[cand, i]
        cand = cand[col == col.min()]
        if cand.size == 1:
            break
    return int(cand[0])


def grid_oracle(rulebook: Rulebook, bounds=None, points_per_dim: int = 101, eps_rank: float = EPS_RANK) -> OracleResult:
    """Exhaustive lexicographic minimum over a regular grid."""
    if bounds is None:
        if rulebook.bounds is None:
            raise RulebookError("grid_oracle needs bounds")
        bounds = rulebook.bounds
    grid = make_grid(bounds, points_per_dim)
    V = rulebook.violations_batch(grid)
    idx = lex_argmin_index(V, eps_rank)
    return OracleResult(rank_of(V[idx], eps_rank), grid[idx].copy(), V[idx].copy(), grid.shape[0], idx)


def finite_diff_gradient(f: Callable[[np.ndarray], float], x, h: float = 1e-6) -> np.ndarray:
    """Central differences with step ``h * max(1, |x_i|)`` per coordinate."""
    if not h > 0:
        raise RulebookError("h must be positive")
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        hi = h * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += hi
        xm[i] -= hi
        g[i] = (float(f(xp)) - float(f(xm))) / (2.0 * hi)
    return g
