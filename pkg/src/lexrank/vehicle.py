"""Kinematic bicycle model, rollouts and their control sensitivities.

A decision for a horizon of ``T`` steps is the flat vector
``[a_0, delta_0, a_1, delta_1, ..., a_{T-1}, delta_{T-1}]``. States are
``(x, y, psi, v)`` with the reference point at the centre of gravity.
Integration is forward Euler at the planning step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import RulebookError

STATE_DIM = 4
CONTROL_DIM = 2


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    v: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.psi, self.v)):
            raise RulebookError(f"vehicle state must be finite: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.v], dtype=float)

    @classmethod
    def from_array(cls, z) -> "VehicleState":
        z = np.asarray(z, dtype=float)
        return cls(float(z[0]), float(z[1]), float(z[2]), float(z[3]))


@dataclass(frozen=True)
class VehicleParams:
    """Geometry and actuation limits; defaults are typical passenger-car values."""

    l_f: float = 1.25
    l_r: float = 1.25
    width: float = 1.9
    length: float = 4.5
    a_min: float = -8.0
    a_max: float = 3.0
    steer_max: float = 0.6

    def __post_init__(self):
        for name in ("l_f", "l_r", "width", "length", "steer_max"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise RulebookError(f"vehicle parameter {name} must be positive, got {val}")
        if not (self.a_min < 0 < self.a_max):
            raise RulebookError("acceleration bounds must satisfy a_min < 0 < a_max")

    def control_bounds(self, steps: int) -> np.ndarray:
        """Box bounds of a ``steps``-step decision, shape ``(2*steps, 2)``."""
        one = [[self.a_min, self.a_max], [-self.steer_max, self.steer_max]]
        return np.array(one * steps, dtype=float)


@dataclass(frozen=True)
class Trajectory:
    """States at ``dt`` spacing, initial state included.

    ``states`` has shape ``(T+1, 4)`` and ``controls`` ``(T, 2)``. ``clamped``
    flags the steps where a control was clipped to its limits or the speed
    was clamped at zero.
    """

    states: np.ndarray
    controls: np.ndarray
    dt: float
    clamped: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.dt > 0:
            raise RulebookError("dt must be positive")
        if self.states.shape[0] != self.controls.shape[0] + 1:
            raise RulebookError("a trajectory holds one more state than controls")
        if self.clamped is None:
            object.__setattr__(self, "clamped", np.zeros(self.controls.shape[0], dtype=bool))

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def steps(self) -> int:
        return self.controls.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self))

    def state(self, i: int) -> VehicleState:
        return VehicleState.from_array(self.states[i])


def slip_angle(delta: float, p: VehicleParams) -> float:
    return math.atan(p.l_r * math.tan(delta) / (p.l_f + p.l_r))


def clamp_controls(a: float, delta: float, p: VehicleParams) -> tuple:
    """Clip controls to the actuator limits; returns ``(a, delta, clipped)``."""
    a_c = min(max(a, p.a_min), p.a_max)
    d_c = min(max(delta, -p.steer_max), p.steer_max)
    return a_c, d_c, (a_c != a or d_c != delta)


def _advance(z, a, delta, dt, p):
    x, y, psi, v = z
    beta = slip_angle(delta, p)
    heading = psi + beta
    v_next = v + a * dt
    nxt = (
        x + v * math.cos(heading) * dt,
        y + v * math.sin(heading) * dt,
        psi + (v / p.l_r) * math.sin(beta) * dt,
        max(0.0, v_next),
    )
    return nxt, v_next < 0.0


def _check_inputs(*vals):
    if not all(math.isfinite(float(c)) for c in vals):
        raise RulebookError("non-finite input to the vehicle model")


def step_dynamics(s: VehicleState, a: float, delta: float, dt: float, p: VehicleParams) -> VehicleState:
    """One forward-Euler step of the kinematic bicycle model.

    Controls outside the actuator limits are clipped; use :func:`rollout`
    to get clipping flags.
    """
    _check_inputs(a, delta, dt)
    if not dt > 0:
        raise RulebookError("dt must be positive")
    a, delta, _ = clamp_controls(float(a), float(delta), p)
    nxt, _ = _advance((s.x, s.y, s.psi, s.v), a, delta, dt, p)
    return VehicleState(*nxt)


def _controls(d, steps=None) -> np.ndarray:
    d = np.asarray(d, dtype=float).ravel()
    if d.size == 0 or d.size % CONTROL_DIM:
        raise RulebookError(f"decision length must be a positive multiple of 2, got {d.size}")
    if steps is not None and d.size != CONTROL_DIM * steps:
        raise RulebookError(f"decision length {d.size} does not match {steps} steps")
    if not np.all(np.isfinite(d)):
        raise RulebookError("decision contains non-finite entries")
    return d.reshape(-1, CONTROL_DIM)


def rollout(s0: VehicleState, d, dt: float, p: VehicleParams) -> Trajectory:
    """Chain :func:`step_dynamics` over the controls in ``d``."""
    traj, _ = rollout_with_sensitivities(s0, d, dt, p, sensitivities=False)
    return traj


def rollout_with_sensitivities(s0: VehicleState, d, dt: float, p: VehicleParams, sensitivities: bool = True):
    """Rollout plus ``J[t] = d state_t / d decision``, shape ``(T+1, 4, 2T)``.

    Sensitivities are accumulated forward with the analytic step Jacobians.
    Where the speed is clamped at zero the speed row is treated as constant.
    """
    if not dt > 0:
        raise RulebookError("dt must be positive")
    u = _controls(d)
    T = u.shape[0]
    Z = np.empty((T + 1, STATE_DIM))
    Z[0] = s0.as_array()
    applied = np.empty_like(u)
    clamped = np.zeros(T, dtype=bool)
    J = np.zeros((T + 1, STATE_DIM, CONTROL_DIM * T)) if sensitivities else None
    k = p.l_r / (p.l_f + p.l_r)
    for t in range(T):
        a, delta, clipped = clamp_controls(float(u[t, 0]), float(u[t, 1]), p)
        applied[t] = a, delta
        nxt, v_clamped = _advance(Z[t], a, delta, dt, p)
        Z[t + 1] = nxt
        clamped[t] = clipped or v_clamped
        if not sensitivities:
            continue
        _, _, psi, v = Z[t]
        tan_d = math.tan(delta)
        beta = math.atan(k * tan_d)
        dbeta = k / (math.cos(delta) ** 2 * (1.0 + (k * tan_d) ** 2))
        c, s = math.cos(psi + beta), math.sin(psi + beta)
        A = np.eye(STATE_DIM)
        A[0, 2] = -v * s * dt
        A[0, 3] = c * dt
        A[1, 2] = v * c * dt
        A[1, 3] = s * dt
        A[2, 3] = math.sin(beta) * dt / p.l_r
        B = np.zeros((STATE_DIM, CONTROL_DIM))
        B[0, 1] = -v * s * dt * dbeta
        B[1, 1] = v * c * dt * dbeta
        B[2, 1] = (v / p.l_r) * math.cos(beta) * dt * dbeta
        B[3, 0] = dt
        if v_clamped:
            A[3, :] = 0.0
            B[3, :] = 0.0
        # controls clipped to their limits do not move the state
        if applied[t, 0] != u[t, 0]:
            B[:, 0] = 0.0
        if applied[t, 1] != u[t, 1]:
            B[:, 1] = 0.0
        J[t + 1] = A @ J[t]
        J[t + 1][:, 2 * t : 2 * t + 2] += B
    return Trajectory(Z, applied, float(dt), clamped), J


def rollout_sensitivities(s0: VehicleState, d, dt: float, p: VehicleParams) -> np.ndarray:
    """Jacobians of every rolled-out state w.r.t. the decision, ``(T+1, 4, 2T)``."""
    return rollout_with_sensitivities(s0, d, dt, p)[1]
