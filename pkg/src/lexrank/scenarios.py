"""Driving scenarios and closed-loop receding-horizon planning.

Three built-in scenarios:

``jaywalker_infeasible``
    50 km/h in the own lane; a pedestrian whose safety disc spans the lane
    appears too close to stop for, so the vehicle has to pass through the
    opposing lane and come back.
``jaywalker_feasible``
    Same road at 18 km/h with the pedestrian visible early enough to stop.
``post_overtake``
    The vehicle drives on the opposing-lane centreline with nothing around.

Scenario parameters use unit-suffixed names (``initial_speed_kmh``,
``pedestrian_gap_m``...) so that configuration files cannot mix units up.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import EPS_RANK, RulebookError, rank_of
from .rules_av import (
    KMH,
    RULE_IDS,
    AvProblem,
    CollisionModel,
    Lane,
    Obstacle,
    RoadModel,
    RuleScales,
    av_rulebook,
    disc_cover,
)
from .scalarization import DwsParams, LambdaSchedule, dws_objective
from .solvers import (
    DivergenceError,
    SolverConfig,
    central_path_solve,
    preemptive_solve,
    random_start,
    solve_inner,
    timescale_solve,
)
from .vehicle import VehicleParams, VehicleState, step_dynamics

SOLVERS = ("central_path", "timescale", "preemptive", "dws_ascent")
SCENARIOS = ("jaywalker_infeasible", "jaywalker_feasible", "post_overtake")


@dataclass(frozen=True)
class ScenarioSettings:
    """Declared, unit-suffixed scenario parameters (the config-file vocabulary)."""

    initial_speed_kmh: float = 50.0
    initial_lane: str = "own"  # "own" or "opposing"
    lane_width_m: float = 3.5
    speed_limit_kmh: float = 50.0
    goal_distance_m: float = 90.0
    goal_radius_m: float = 2.0
    pedestrian: bool = True
    pedestrian_gap_m: float = 14.0  # ahead of the vehicle's centre when it appears
    pedestrian_trigger_s: float = 1.0
    pedestrian_radius_m: float = 2.0  # includes the safety distance
    pedestrian_offset_m: float = -0.25  # lateral offset from the own-lane centre
    horizon_steps: int = 3
    dt_s: float = 0.5
    max_steps: int = 60
    warm_start: bool = False
    random_start: bool = False
    collision_scale: float = 1.0e6
    drivable_scale: float = 1.0
    speed_scale: float = 1.0
    centering_scale: float = 1.0
    progress_scale: float = 1.0e-3
    collision_discs: int = 2
    collision_substeps: int = 5
    v_floor_mps: float = 0.1

    def __post_init__(self):
        if self.initial_lane not in ("own", "opposing"):
            raise RulebookError("initial_lane must be 'own' or 'opposing'")
        if self.horizon_steps < 1 or self.max_steps < 1:
            raise RulebookError("horizon_steps and max_steps must be at least 1")
        if not self.dt_s > 0:
            raise RulebookError("dt_s must be positive")
        if self.initial_speed_kmh < 0:
            raise RulebookError("initial_speed_kmh must be non-negative")
        if self.pedestrian and not 0 <= self.pedestrian_trigger_s <= self.max_steps * self.dt_s:
            raise RulebookError("pedestrian_trigger_s must lie within the simulated span")


_PRESETS = {
    # stopping from 50 km/h takes ~16 m of travel; contact happens after ~9 m
    "jaywalker_infeasible": ScenarioSettings(),
    "jaywalker_feasible": ScenarioSettings(
        initial_speed_kmh=18.0, pedestrian_gap_m=12.0, pedestrian_trigger_s=0.0, pedestrian_offset_m=0.0
    ),
    # goal far enough ahead that it never pulls the vehicle sideways
    "post_overtake": ScenarioSettings(
        initial_speed_kmh=40.0, initial_lane="opposing", pedestrian=False, goal_distance_m=1000.0, max_steps=20
    ),
}

# Closed-loop solves: a looser stationarity target keeps replans around a
# second, and the step cap keeps the first solve from leaping to a far-away
# corner of the control box when the collision term dominates.
SCENARIO_SOLVER_CONFIG = SolverConfig(inner_tol=1e-6, max_inner_iters=200, max_step=0.1)


@dataclass(frozen=True)
class Scenario:
    name: str
    road: RoadModel
    obstacles: tuple
    start: VehicleState
    params: VehicleParams = VehicleParams()
    scales: RuleScales = RuleScales()
    collision: CollisionModel = CollisionModel()
    horizon_steps: int = 3
    dt: float = 0.5
    max_steps: int = 60
    goal_radius: float = 2.0
    warm_start: bool = False
    random_start: bool = False
    settings: Optional[ScenarioSettings] = field(default=None, compare=False)

    def __post_init__(self):
        if self.horizon_steps < 1:
            raise RulebookError("horizon_steps must be at least 1")
        span = self.max_steps * self.dt
        if any(o.appear_time > span for o in self.obstacles):
            raise RulebookError("obstacle trigger time lies beyond the simulated span")
        self.road.check_vehicle(self.params)

    def visible_obstacles(self, t: float) -> tuple:
        return tuple(o for o in self.obstacles if o.appear_time <= t + 1e-9)

    def problem(self, state: VehicleState, t: float, steps: Optional[int] = None) -> AvProblem:
        return AvProblem(
            state,
            self.road,
            self.visible_obstacles(t),
            self.params,
            self.scales,
            self.collision,
            self.horizon_steps if steps is None else steps,
            self.dt,
        )

    def goal_distance(self, state: VehicleState) -> float:
        return math.hypot(state.x - self.road.goal[0], state.y - self.road.goal[1])

    def segment_goal_distance(self, a: VehicleState, b: VehicleState) -> float:
        """Closest approach to the goal along the straight segment ``a -> b``."""
        p = np.array([a.x, a.y])
        d = np.array([b.x - a.x, b.y - a.y])
        g = np.asarray(self.road.goal)
        den = float(d @ d)
        s = 0.0 if den == 0.0 else min(max(float((g - p) @ d) / den, 0.0), 1.0)
        return float(np.linalg.norm(p + s * d - g))


def scenario_from_settings(name: str, s: ScenarioSettings, params: VehicleParams = VehicleParams()) -> Scenario:
    w = s.lane_width_m
    road = RoadModel(
        (Lane(0.0, w, True), Lane(w, w, False)), s.speed_limit_kmh * KMH, (s.goal_distance_m, 0.0)
    )
    v0 = s.initial_speed_kmh * KMH
    y0 = 0.0 if s.initial_lane == "own" else w
    obstacles = ()
    if s.pedestrian:
        # placed so the gap is as configured if the vehicle holds its speed until the trigger
        px = v0 * s.pedestrian_trigger_s + s.pedestrian_gap_m
        obstacles = (Obstacle((px, s.pedestrian_offset_m), s.pedestrian_radius_m, 1.0, s.pedestrian_trigger_s),)
    return Scenario(
        name=name,
        road=road,
        obstacles=obstacles,
        start=VehicleState(0.0, y0, 0.0, v0),
        params=params,
        scales=RuleScales(s.collision_scale, s.drivable_scale, s.speed_scale, s.centering_scale, s.progress_scale),
        collision=CollisionModel(s.collision_discs, s.collision_substeps, s.v_floor_mps),
        horizon_steps=s.horizon_steps,
        dt=s.dt_s,
        max_steps=s.max_steps,
        goal_radius=s.goal_radius_m,
        warm_start=s.warm_start,
        random_start=s.random_start,
        settings=s,
    )


def scenario_settings(name: str, overrides: Optional[dict] = None) -> ScenarioSettings:
    if name not in _PRESETS:
        raise RulebookError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
    base = _PRESETS[name]
    overrides = dict(overrides or {})
    known = {f.name for f in dataclasses.fields(ScenarioSettings)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise RulebookError(f"unknown scenario setting(s) {unknown}")
    return dataclasses.replace(base, **overrides)


def build_scenario(name: str, overrides: Optional[dict] = None, params: VehicleParams = VehicleParams()) -> Scenario:
    """Build a named scenario, optionally overriding :class:`ScenarioSettings` fields."""
    return scenario_from_settings(name, scenario_settings(name, overrides), params)


# -- closed loop -------------------------------------------------------------


@dataclass
class SimLog:
    """Closed-loop record of one run.

    ``states`` has ``steps + 1`` rows; row ``k + 1`` is one step of the
    dynamics from row ``k`` under ``controls[k]``. ``step_violations[k]``
    scores that executed segment against the obstacles visible when it was
    planned, and ``ranks[k]`` is its rank.
    """

    scenario: str
    solver: str
    dt: float
    states: np.ndarray
    controls: np.ndarray
    step_violations: np.ndarray
    ranks: np.ndarray
    clearances: np.ndarray
    traces: list
    inner_steps: list
    plans: list
    reached_goal: bool = False
    aborted: bool = False
    error: Optional[str] = None
    wall_time: float = 0.0

    @property
    def steps(self) -> int:
        return self.controls.shape[0]

    @property
    def final_rank(self) -> int:
        return int(self.ranks[-1]) if self.ranks.size else len(RULE_IDS)

    @property
    def total_inner_steps(self) -> int:
        return int(sum(self.inner_steps))

    @property
    def min_clearance(self) -> float:
        finite = self.clearances[np.isfinite(self.clearances)]
        return float(finite.min()) if finite.size else math.inf

    def violation_integrals(self) -> np.ndarray:
        """Per-rule sum of executed-step violations times ``dt``."""
        if not self.steps:
            return np.zeros(len(RULE_IDS))
        return self.step_violations.sum(axis=0) * self.dt


class ScenarioAborted(RuntimeError):
    """A replan diverged; ``log`` holds everything executed before it."""

    def __init__(self, message, log: SimLog):
        super().__init__(message)
        self.log = log


def _replan_seed(seed: int, k: int) -> list:
    return [int(seed), int(k)]


def _shifted(plan: np.ndarray) -> np.ndarray:
    return np.concatenate([plan[2:], plan[-2:]])


def pedestrian_clearance(scenario: Scenario, z0, z1, obstacles) -> float:
    """Smallest gap between the vehicle discs and any safety disc along a segment."""
    if not obstacles:
        return math.inf
    offsets, r_v = disc_cover(scenario.params, scenario.collision.discs)
    m = scenario.collision.substeps
    s = np.arange(0, m + 1) / m
    P = (1.0 - s)[:, None] * np.asarray(z0)[None, :] + s[:, None] * np.asarray(z1)[None, :]
    cx = P[:, 0, None] + offsets * np.cos(P[:, 2, None])
    cy = P[:, 1, None] + offsets * np.sin(P[:, 2, None])
    best = math.inf
    for o in obstacles:
        d = np.hypot(cx - o.center[0], cy - o.center[1]) - r_v - o.radius
        best = min(best, float(d.min()))
    return best


def _solve(solver, rb, x0, cfg, schedule, dws):
    if solver == "central_path":
        tr = central_path_solve(rb, x0, schedule, cfg)
        return tr.final_decision, tr, tr.total_inner_steps
    if solver == "timescale":
        tr = timescale_solve(rb, x0, schedule, cfg)
        return tr.final_decision, tr, tr.total_inner_steps
    if solver == "preemptive":
        res = preemptive_solve(rb, x0, cfg)
        return res.x, res, res.total_inner_steps
    res = solve_inner(dws_objective(rb, dws), x0, cfg, rb.bounds)
    return res.x, res, res.steps


def receding_horizon_run(
    scenario: Scenario,
    solver: str,
    cfg: SolverConfig = SCENARIO_SOLVER_CONFIG,
    schedule: LambdaSchedule = LambdaSchedule(),
    dws: DwsParams = DwsParams(),
    eps_rank: float = EPS_RANK,
) -> SimLog:
    """Plan over the horizon, apply the first control, advance, repeat.

    Every replan is an independent problem: the multiplier schedule restarts
    and the solve starts cold from zero controls (hold speed, go straight).
    ``scenario.warm_start`` starts from the shifted previous plan instead;
    ``scenario.random_start`` gives the proposed solvers a uniform random
    start seeded by ``(cfg.seed, step)``.
    """
    if solver not in SOLVERS:
        raise RulebookError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    state = scenario.start
    states = [state.as_array()]
    controls, viols, ranks, clear, traces, inner, plans = [], [], [], [], [], [], []
    reached = False
    t0 = time.perf_counter()
    prev_plan = None

    def log(aborted=False, error=None):
        n = len(RULE_IDS)
        return SimLog(
            scenario.name,
            solver,
            scenario.dt,
            np.array(states),
            np.array(controls, dtype=float).reshape(-1, 2),
            np.array(viols, dtype=float).reshape(-1, n),
            np.array(ranks, dtype=int),
            np.array(clear, dtype=float),
            traces,
            inner,
            plans,
            reached,
            aborted,
            error,
            time.perf_counter() - t0,
        )

    for k in range(scenario.max_steps):
        t = k * scenario.dt
        problem = scenario.problem(state, t)
        rb = av_rulebook(problem)
        prev_state = state
        if scenario.warm_start and prev_plan is not None:
            x0 = _shifted(prev_plan)
        elif scenario.random_start and solver != "dws_ascent":
            x0 = random_start(rb, _replan_seed(cfg.seed, k))
        else:
            x0 = np.zeros(rb.dim)
        try:
            plan, trace, steps = _solve(solver, rb, x0, cfg, schedule, dws)
        except DivergenceError as err:
            raise ScenarioAborted(f"replan {k} diverged: {err}", log(True, str(err))) from err
        prev_plan = plan
        a, delta = float(plan[0]), float(plan[1])
        nxt = step_dynamics(state, a, delta, scenario.dt, scenario.params)
        seg = np.array([state.as_array(), nxt.as_array()])
        v, _ = problem.trajectory_rules(seg)
        controls.append((a, delta))
        viols.append(v)
        ranks.append(rank_of(v, eps_rank))
        clear.append(pedestrian_clearance(scenario, seg[0], seg[1], problem.obstacles))
        traces.append(trace)
        inner.append(steps)
        plans.append(plan)
        state = nxt
        states.append(state.as_array())
        if scenario.segment_goal_distance(prev_state, state) <= scenario.goal_radius:
            reached = True
            break
    return log()


# -- comparisons -------------------------------------------------------------


@dataclass
class ComparisonRow:
    solver: str
    final_rank: int
    violation_integrals: np.ndarray
    inner_steps: int
    wall_time: float
    min_clearance: float
    steps: int


@dataclass
class ComparisonReport:
    scenario: str
    rows: list
    logs: dict

    @property
    def rank_disagreement(self) -> bool:
        return len({r.final_rank for r in self.rows}) > 1

    def table(self) -> list:
        out = []
        for r in self.rows:
            row = {"solver": r.solver, "final_rank": r.final_rank}
            row.update({f"integral_{rid}": float(val) for rid, val in zip(RULE_IDS, r.violation_integrals)})
            row.update(
                inner_steps=r.inner_steps,
                wall_time_s=r.wall_time,
                min_clearance_m=r.min_clearance,
                steps=r.steps,
                rank_disagreement=self.rank_disagreement,
            )
            out.append(row)
        return out


def compare_solvers(
    scenario: Scenario,
    solvers: Sequence[str],
    cfg: SolverConfig = SCENARIO_SOLVER_CONFIG,
    schedule: LambdaSchedule = LambdaSchedule(),
    dws: DwsParams = DwsParams(),
) -> ComparisonReport:
    """Run every solver on the scenario and tabulate the outcomes."""
    if len(solvers) < 2:
        raise RulebookError("a comparison needs at least two solvers")
    rows, logs = [], {}
    for name in solvers:
        lg = receding_horizon_run(scenario, name, cfg, schedule, dws)
        key = name if name not in logs else f"{name}#{len(logs)}"
        logs[key] = lg
        rows.append(
            ComparisonRow(
                name,
                lg.final_rank,
                lg.violation_integrals(),
                lg.total_inner_steps,
                lg.wall_time,
                lg.min_clearance,
                lg.steps,
            )
        )
    return ComparisonReport(scenario.name, rows, logs)
