"""Utility landscapes over single-step (acceleration, steering) decisions.

The sweep scores every cell of a control grid from one start state and emits
the normalized utility per multiplier, ready for external plotting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import EPS_RANK, RulebookError
from .rules_av import RULE_IDS
from .scalarization import utility_weights
from .scenarios import Scenario, build_scenario
from .solvers import GRID_BUDGET


def landscape_scenario(overrides: Optional[dict] = None) -> Scenario:
    """The landscape configuration: 5 m/s, one 0.5 s step, pedestrian close ahead.

    The gap is short enough that steering near straight ahead collides while
    hard steering clears the disc; the lateral offset breaks the left/right
    symmetry and leaves a band of decisions that only leave the lane centre.
    """
    base = {
        "horizon_steps": 1,
        "pedestrian_gap_m": 7.0,
        "pedestrian_offset_m": -0.5,
        "pedestrian_trigger_s": 0.0,
    }
    base.update(overrides or {})
    return build_scenario("jaywalker_feasible", base)


@dataclass
class LandscapeSweep:
    accel: np.ndarray  # (na,)
    steer: np.ndarray  # (nd,)
    violations: np.ndarray  # (na, nd, N)
    lambdas: list
    values: dict  # lambda -> (na, nd) normalized utility

    @property
    def r0_cells(self) -> np.ndarray:
        return self.violations[..., 0] > EPS_RANK

    def only_rule_cells(self, rule: int, upto: Optional[int] = None) -> np.ndarray:
        """Cells violating ``rule`` and nothing more important.

        With ``upto`` given, rules after ``upto`` are ignored (the progress
        rule is violated everywhere off the goal).
        """
        v = self.violations > EPS_RANK
        n = v.shape[-1] if upto is None else upto + 1
        others = np.delete(v[..., :n], rule, axis=-1).any(axis=-1)
        return v[..., rule] & ~others

    def rows(self, lam: float):
        """``(lambda, accel, steer, value, r_0..r_{N-1})`` per grid cell, row-major."""
        val = self.values[lam]
        for i, a in enumerate(self.accel):
            for j, d in enumerate(self.steer):
                yield (lam, float(a), float(d), float(val[i, j]), *map(float, self.violations[i, j]))


def landscape_sweep(
    scenario: Scenario,
    lambdas: Sequence[float],
    accel_points: int = 200,
    steer_points: int = 200,
    accel_range: Optional[tuple] = None,
    steer_range: Optional[tuple] = None,
) -> LandscapeSweep:
    """Normalized utility over an (acceleration x steering) grid for each lambda."""
    if scenario.horizon_steps != 1:
        raise RulebookError("the landscape sweep evaluates single-step decisions; set horizon_steps to 1")
    if accel_points < 2 or steer_points < 2:
        raise RulebookError("need at least two grid points per axis")
    if accel_points * steer_points > GRID_BUDGET:
        raise RulebookError(f"grid of {accel_points * steer_points} cells exceeds the budget of {GRID_BUDGET}")
    lambdas = [float(l) for l in lambdas]
    if not lambdas:
        raise RulebookError("need at least one lambda")
    p = scenario.params
    a_lo, a_hi = accel_range or (p.a_min, p.a_max)
    d_lo, d_hi = steer_range or (-p.steer_max, p.steer_max)
    accel = np.linspace(a_lo, a_hi, accel_points)
    steer = np.linspace(d_lo, d_hi, steer_points)
    problem = scenario.problem(scenario.start, 0.0, steps=1)
    V = np.empty((accel_points, steer_points, len(RULE_IDS)))
    for i, a in enumerate(accel):
        for j, d in enumerate(steer):
            traj = problem.rollout(np.array([a, d]))
            V[i, j] = problem.trajectory_rules(traj)[0]
    values = {lam: V @ utility_weights(V.shape[-1], lam, normalized=True) for lam in lambdas}
    return LandscapeSweep(accel, steer, V, lambdas, values)


def equal_value_pair(sweep: LandscapeSweep, lam: float, rule_a: int = 0, rule_b: int = 3):
    """Closest-valued pair of cells, one violating ``rule_a``, one violating only ``rule_b``.

    Returns ``(gap, flat_index_a, flat_index_b)``. "Only ``rule_b``" ignores
    rules after it.
    """
    val = sweep.values[lam]
    if rule_a == 0:
        mask_a = sweep.r0_cells
    else:
        mask_a = sweep.only_rule_cells(rule_a, upto=rule_b)
    mask_b = sweep.only_rule_cells(rule_b, upto=rule_b)
    ia, ib = np.flatnonzero(mask_a), np.flatnonzero(mask_b)
    if ia.size == 0 or ib.size == 0:
        return np.inf, None, None
    va, vb = val.ravel()[ia], val.ravel()[ib]
    order = np.argsort(vb)
    vb_sorted = vb[order]
    pos = np.clip(np.searchsorted(vb_sorted, va), 1, vb_sorted.size - 1) if vb_sorted.size > 1 else np.zeros(va.size, int)
    best = (np.inf, None, None)
    for cand in (pos - 1, pos) if vb_sorted.size > 1 else (pos,):
        gaps = np.abs(va - vb_sorted[cand])
        k = int(np.argmin(gaps))
        if gaps[k] < best[0]:
            best = (float(gaps[k]), int(ia[k]), int(ib[order[cand[k]]]))
    return best


def value_overlap(sweep: LandscapeSweep, lam: float, rule_a: int = 0, rule_b: int = 3) -> float:
    """``max value over only-``rule_b`` cells - min over ``rule_a``-violating cells``.

    Non-negative means some ``rule_a`` violation is valued no worse than some
    decision violating only ``rule_b``. Both regions are connected in the
    control plane, so by continuity an exactly equal-valued pair then exists
    between the grid samples.
    """
    val = sweep.values[lam]
    mask_a = sweep.r0_cells if rule_a == 0 else sweep.only_rule_cells(rule_a, upto=rule_b)
    mask_b = sweep.only_rule_cells(rule_b, upto=rule_b)
    if not mask_a.any() or not mask_b.any():
        return -np.inf
    return float(val[mask_b].max() - val[mask_a].min())


def equal_value_exists(sweep: LandscapeSweep, lam: float, rule_a: int = 0, rule_b: int = 3) -> bool:
    """Whether the value ranges of the two cell classes overlap, see :func:`value_overlap`."""
    return value_overlap(sweep, lam, rule_a, rule_b) >= 0.0


def dominance_margin(sweep: LandscapeSweep, lam: float) -> float:
    """``min value over r_0-violating cells - max over the rest``; positive means dominance."""
    val = sweep.values[lam]
    r0 = sweep.r0_cells
    if not r0.any() or r0.all():
        raise RulebookError("dominance needs both r_0-violating and r_0-satisfying cells")
    return float(val[r0].min() - val[~r0].max())
