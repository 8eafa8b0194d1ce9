"""The five driving rules, on trajectories and in decision space.

Order of importance::

    0 avoid_collision        kinetic-energy-weighted penetration of a safety disc
    1 inside_drivable_area   footprint excursion beyond direction-matching lanes
    2 within_speed_limit     speed above the limit
    3 lane_centering         lateral offset from the centre of the current lane
    4 progress_towards_goal  distance of the final position to the goal

Every rule is built from the quadratic hinge ``h(z) = max(0, z)**2`` (or a
plain square), so a rule is zero exactly where its gradient is zero. The
trajectory-level functions return ``(value, d value / d states)`` with the
state gradient of shape ``(T+1, 4)``; the initial state is fixed and never
contributes. :func:`av_rulebook` composes them with the rollout
sensitivities into decision-space rules sharing one rollout per evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Rule, Rulebook, RulebookError
from .vehicle import Trajectory, VehicleParams, VehicleState, rollout_with_sensitivities

RULE_IDS = (
    "avoid_collision",
    "inside_drivable_area",
    "within_speed_limit",
    "lane_centering",
    "progress_towards_goal",
)

KMH = 1.0 / 3.6


@dataclass(frozen=True)
class Lane:
    center_y: float
    width: float
    drivable: bool = True  # travel direction matches the ego vehicle

    @property
    def lower(self) -> float:
        return self.center_y - 0.5 * self.width

    @property
    def upper(self) -> float:
        return self.center_y + 0.5 * self.width


@dataclass(frozen=True)
class RoadModel:
    """Straight road along the x axis with parallel lanes.

    The default has the own-direction lane centred on ``y = 0`` and the
    opposing lane above it.
    """

    lanes: tuple = (Lane(0.0, 3.5, True), Lane(3.5, 3.5, False))
    speed_limit: float = 50.0 * KMH
    goal: tuple = (200.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "lanes", tuple(self.lanes))
        object.__setattr__(self, "goal", tuple(float(g) for g in self.goal))
        if not any(l.drivable for l in self.lanes):
            raise RulebookError("the road needs at least one direction-matching lane")
        if not self.speed_limit > 0:
            raise RulebookError("speed limit must be positive")
        if len(self.goal) != 2:
            raise RulebookError("goal must be a 2-D point")

    def check_vehicle(self, p: VehicleParams):
        if any(l.width <= p.width for l in self.lanes):
            raise RulebookError("every lane must be wider than the vehicle")

    @property
    def drivable_bounds(self) -> tuple:
        """Lateral extent of the direction-matching lanes (assumed adjacent)."""
        own = [l for l in self.lanes if l.drivable]
        return min(l.lower for l in own), max(l.upper for l in own)

    @property
    def centerlines(self) -> np.ndarray:
        return np.array(sorted(l.center_y for l in self.lanes))

    def translated(self, dx: float, dy: float) -> "RoadModel":
        lanes = tuple(Lane(l.center_y + dy, l.width, l.drivable) for l in self.lanes)
        return RoadModel(lanes, self.speed_limit, (self.goal[0] + dx, self.goal[1] + dy))


@dataclass(frozen=True)
class Obstacle:
    """Static disc; ``radius`` already includes the safety distance.

    ``mass`` scales the kinetic-energy term. ``appear_time`` is the time from
    which the planner can see the obstacle.
    """

    center: tuple
    radius: float
    mass: float = 1.0
    appear_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise RulebookError("obstacle radius must be positive")
        if not self.mass > 0:
            raise RulebookError("obstacle mass must be positive")

    def translated(self, dx: float, dy: float) -> "Obstacle":
        return Obstacle((self.center[0] + dx, self.center[1] + dy), self.radius, self.mass, self.appear_time)


@dataclass(frozen=True)
class RuleScales:
    """Per-rule normalization constants; the utility is sensitive to them at finite lambda."""

    collision: float = 1.0e6
    drivable: float = 1.0
    speed: float = 1.0
    centering: float = 1.0
    progress: float = 1.0e-3

    def as_tuple(self) -> tuple:
        return (self.collision, self.drivable, self.speed, self.centering, self.progress)


@dataclass(frozen=True)
class CollisionModel:
    """Disc cover of the footprint and interpolation between planned states."""

    discs: int = 2
    substeps: int = 5
    v_floor: float = 0.1

    def __post_init__(self):
        if self.discs < 1 or self.substeps < 1:
            raise RulebookError("disc count and substeps must be at least 1")
        if self.v_floor < 0:
            raise RulebookError("v_floor must be non-negative")


def disc_cover(p: VehicleParams, n: int) -> tuple:
    """Longitudinal offsets of ``n`` equal discs covering the footprint, and their radius."""
    seg = p.length / n
    offsets = -0.5 * p.length + seg * (np.arange(n) + 0.5)
    return offsets, math.hypot(0.5 * seg, 0.5 * p.width)


def _states(traj) -> np.ndarray:
    return traj.states if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)


# -- rules on trajectories ---------------------------------------------------


def avoid_collision(
    traj,
    obstacles: Sequence[Obstacle],
    params: VehicleParams = VehicleParams(),
    model: CollisionModel = CollisionModel(),
    scale: float = 1.0,
):
    """Sum over sub-sampled poses, discs and obstacles of ``h(pen) * (v**2/2 + v_floor)``.

    ``pen = R_obs + r_disc - ||disc centre - obstacle centre||``. Poses are
    linearly interpolated between consecutive states at ``substeps`` points
    per step (each weighted ``1/substeps``) so that fast passes cannot jump
    over a disc.
    """
    Z = _states(traj)
    grad = np.zeros_like(Z)
    if not obstacles:
        return 0.0, grad
    m = model.substeps
    s = np.arange(1, m + 1) / m  # (m,)
    offsets, r_v = disc_cover(params, model.discs)
    centers = np.array([o.center for o in obstacles])  # (K, 2)
    radii = np.array([o.radius for o in obstacles])
    mass = np.array([o.mass for o in obstacles])
    Z0, Z1 = Z[:-1], Z[1:]  # (T, 4)
    P = (1.0 - s)[None, :, None] * Z0[:, None, :] + s[None, :, None] * Z1[:, None, :]  # (T, m, 4)
    cos_p, sin_p = np.cos(P[..., 2]), np.sin(P[..., 2])
    # disc centres (T, m, n, 2)
    dc = np.stack(
        [P[..., 0, None] + offsets * cos_p[..., None], P[..., 1, None] + offsets * sin_p[..., None]], axis=-1
    )
    diff = dc[..., None, :] - centers  # (T, m, n, K, 2)
    dist = np.maximum(np.linalg.norm(diff, axis=-1), 1e-12)
    pen = radii + r_v - dist
    hinge = np.maximum(pen, 0.0)
    energy = 0.5 * P[..., 3] ** 2 + model.v_floor  # (T, m)
    w = scale * mass / m
    value = float(np.sum(w * hinge**2 * energy[..., None, None]))
    # d/d disc centre
    dpen = (2.0 * hinge * w * energy[..., None, None])[..., None] * (-diff / dist[..., None])
    g_c = dpen.sum(axis=3)  # (T, m, n, 2)
    gP = np.zeros_like(P)
    gP[..., 0] = g_c[..., 0].sum(axis=-1)
    gP[..., 1] = g_c[..., 1].sum(axis=-1)
    gP[..., 2] = np.sum(offsets * (-g_c[..., 0] * sin_p[..., None] + g_c[..., 1] * cos_p[..., None]), axis=-1)
    gP[..., 3] = np.sum(w * hinge**2, axis=(-1, -2)) * P[..., 3]
    grad[:-1] += np.einsum("m,tmk->tk", 1.0 - s, gP)
    grad[1:] += np.einsum("m,tmk->tk", s, gP)
    grad[0] = 0.0
    return value, grad


def footprint_corner_y(Z, params: VehicleParams) -> np.ndarray:
    """Lateral coordinates of the four footprint corners, shape ``(T+1, 4)``."""
    Z = _states(Z)
    hl, hw = 0.5 * params.length, 0.5 * params.width
    sl = np.array([1.0, 1.0, -1.0, -1.0]) * hl
    sw = np.array([1.0, -1.0, 1.0, -1.0]) * hw
    return Z[:, 1, None] + sl * np.sin(Z[:, 2, None]) + sw * np.cos(Z[:, 2, None])


def inside_drivable_area(traj, road: RoadModel, params: VehicleParams = VehicleParams(), scale: float = 1.0):
    """``sum_t sum_corners h(excursion)`` beyond the direction-matching lanes."""
    Z = _states(traj)
    lo, hi = road.drivable_bounds
    hl, hw = 0.5 * params.length, 0.5 * params.width
    sl = np.array([1.0, 1.0, -1.0, -1.0]) * hl
    sw = np.array([1.0, -1.0, 1.0, -1.0]) * hw
    cy = footprint_corner_y(Z, params)
    up = np.maximum(cy - hi, 0.0)
    down = np.maximum(lo - cy, 0.0)
    up[0] = down[0] = 0.0
    value = scale * float(np.sum(up**2 + down**2))
    dcy = 2.0 * scale * (up - down)
    grad = np.zeros_like(Z)
    grad[:, 1] = dcy.sum(axis=1)
    dpsi = sl * np.cos(Z[:, 2, None]) - sw * np.sin(Z[:, 2, None])
    grad[:, 2] = np.sum(dcy * dpsi, axis=1)
    return value, grad


def within_speed_limit(traj, road: RoadModel, scale: float = 1.0):
    """``sum_t h(v_t - v_limit)``."""
    Z = _states(traj)
    over = np.maximum(Z[:, 3] - road.speed_limit, 0.0)
    over[0] = 0.0
    grad = np.zeros_like(Z)
    grad[:, 3] = 2.0 * scale * over
    return scale * float(np.sum(over**2)), grad


def lane_centering(traj, road: RoadModel, scale: float = 1.0):
    """``sum_t (y_t - centre of the current lane)**2``.

    The current lane is the one whose centreline is nearest, whatever its
    direction; leaving the own lane is the business of the drivable-area rule.
    """
    Z = _states(traj)
    cl = road.centerlines
    y = Z[:, 1]
    nearest = cl[np.argmin(np.abs(y[:, None] - cl[None, :]), axis=1)]
    off = y - nearest
    off[0] = 0.0
    grad = np.zeros_like(Z)
    grad[:, 1] = 2.0 * scale * off
    return scale * float(np.sum(off**2)), grad


def progress_towards_goal(traj, road: RoadModel, scale: float = 1.0e-3):
    """``scale * ||(x_T, y_T) - goal||**2``."""
    Z = _states(traj)
    diff = Z[-1, :2] - np.asarray(road.goal)
    grad = np.zeros_like(Z)
    grad[-1, :2] = 2.0 * scale * diff
    return scale * float(diff @ diff), grad


# -- decision space ----------------------------------------------------------


@dataclass(frozen=True)
class AvProblem:
    """Everything needed to score a horizon decision from one start state."""

    start: VehicleState
    road: RoadModel
    obstacles: tuple = ()
    params: VehicleParams = VehicleParams()
    scales: RuleScales = RuleScales()
    collision: CollisionModel = CollisionModel()
    steps: int = 3
    dt: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.steps < 1:
            raise RulebookError("horizon must have at least one step")
        if not self.dt > 0:
            raise RulebookError("dt must be positive")

    def trajectory_rules(self, traj) -> tuple:
        """``(values (5,), state gradients (5, T+1, 4))`` on a trajectory."""
        sc = self.scales
        out = (
            avoid_collision(traj, self.obstacles, self.params, self.collision, sc.collision),
            inside_drivable_area(traj, self.road, self.params, sc.drivable),
            within_speed_limit(traj, self.road, sc.speed),
            lane_centering(traj, self.road, sc.centering),
            progress_towards_goal(traj, self.road, sc.progress),
        )
        return np.array([o[0] for o in out]), np.stack([o[1] for o in out])

    def evaluate(self, d) -> tuple:
        """Violations ``(5,)`` and decision Jacobian ``(5, 2T)``: one shared rollout."""
        traj, J = rollout_with_sensitivities(self.start, d, self.dt, self.params)
        v, gZ = self.trajectory_rules(traj)
        return v, np.einsum("rtk,tkd->rd", gZ, J)

    def rollout(self, d) -> Trajectory:
        return rollout_with_sensitivities(self.start, d, self.dt, self.params, sensitivities=False)[0]


def av_rulebook(problem: AvProblem) -> Rulebook:
    """Decision-space rulebook over ``2 * steps`` controls, bounded by the actuator limits."""

    def make(i):
        def f(d):
            return float(problem.evaluate(d)[0][i])

        def g(d):
            return problem.evaluate(d)[1][i]

        return Rule(RULE_IDS[i], f, g)

    return Rulebook(
        tuple(make(i) for i in range(len(RULE_IDS))),
        dim=2 * problem.steps,
        bounds=problem.params.control_bounds(problem.steps),
        evaluator=problem.evaluate,
        name="av",
    )
