"""Single-track (bicycle) kinematics.

Forward stepping, substep rollouts for soft-collision scans, and the
inverse map that recovers a control action from a pair of consecutive
poses. All functions are pure and bit-for-bit reproducible, which the
rollback machinery depends on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import GeometryError
from .geometry import Pose2D, wrap_angle


@dataclass(frozen=True)
class VehicleParams:
    """Body and actuation limits of the simulated vehicle."""

    wheelbase: float = 2.7
    length: float = 4.5
    width: float = 1.9
    rear_overhang: float = 1.0
    max_steer: float = 0.6
    max_speed: float = 1.5

    def __post_init__(self):
        for name in ("wheelbase", "length", "width", "max_steer", "max_speed"):
            if getattr(self, name) <= 0:
                raise GeometryError(f"{name} must be positive")
        if self.max_steer >= math.pi / 2:
            raise GeometryError("max_steer must be below pi/2")
        if not (0 <= self.rear_overhang < self.length):
            raise GeometryError("rear_overhang must lie in [0, length)")


@dataclass(frozen=True)
class Action:
    """Steering angle (rad) and signed velocity (m/s)."""

    delta: float
    v: float

    def clamped(self, params: VehicleParams) -> "Action":
        return Action(
            min(max(self.delta, -params.max_steer), params.max_steer),
            min(max(self.v, -params.max_speed), params.max_speed),
        )


def kinematic_step(pose: Pose2D, action: Action, dt: float, params: VehicleParams) -> Pose2D:
    """One forward-Euler step of the single-track model.

    x' = x + v cos(psi) dt, y' = y + v sin(psi) dt,
    psi' = wrap(psi + (v / L) tan(delta) dt).
    """
    a = action.clamped(params)
    x = pose.x + a.v * math.cos(pose.psi) * dt
    y = pose.y + a.v * math.sin(pose.psi) * dt
    psi = pose.psi + (a.v / params.wheelbase) * math.tan(a.delta) * dt
    return Pose2D(x, y, psi)


def substep_rollout(pose: Pose2D, action: Action, dt: float, n: int,
                    params: VehicleParams) -> list[Pose2D]:
    """Poses after each of ``n`` sub-steps of length ``dt/n``.

    ``n=1`` reproduces ``kinematic_step`` exactly; larger ``n`` traces the
    intermediate motion for clearance scans.
    """
    if n < 1:
        raise ValueError(f"substep count must be >= 1, got {n}")
    sub_dt = dt / n
    out = []
    cur = pose
    for _ in range(n):
        cur = kinematic_step(cur, action, sub_dt, params)
        out.append(cur)
    return out


@dataclass(frozen=True)
class IkResult:
    """Recovered action plus the forward-reconstruction position residual."""

    action: Action
    residual: float
    within_tolerance: bool


def inverse_kinematics(q_t: Pose2D, q_next: Pose2D, params: VehicleParams,
                       dt: float, residual_tol: float = 0.05) -> IkResult:
    """Recover the action that maps ``q_t`` to ``q_next`` in one step.

    Velocity is the signed displacement over ``dt`` (sign from projecting
    the displacement onto the heading); steering follows from the heading
    change, clamped to the steering limit. Zero displacement maps to the
    null action. When the pose pair is not reachable by single-track
    motion, the best-fit action is returned with ``within_tolerance``
    False once the position residual exceeds ``residual_tol``.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    dx = q_next.x - q_t.x
    dy = q_next.y - q_t.y
    dist = math.hypot(dx, dy)
    if dist < 1e-12:
        action = Action(0.0, 0.0)
    else:
        forward = dx * math.cos(q_t.psi) + dy * math.sin(q_t.psi)
        sign = 1.0 if forward >= 0 else -1.0
        v = sign * dist / dt
        dpsi = wrap_angle(q_next.psi - q_t.psi)
        delta = math.atan(params.wheelbase * dpsi / (v * dt))
        delta = min(max(delta, -params.max_steer), params.max_steer)
        v = min(max(v, -params.max_speed), params.max_speed)
        action = Action(delta, v)
    recon = kinematic_step(q_t, action, dt, params)
    residual = math.hypot(recon.x - q_next.x, recon.y - q_next.y)
    return IkResult(action, residual, residual <= residual_tol)
