"""5-DOF probe-holding robot: x/y/z stages plus two wrist rotations.

Joint order is [x, y, z, rot_x, rot_y] (metres, metres, metres, radians,
radians).  The mid-level controller solves a box-constrained least-squares
problem mapping a desired tip twist to joint velocities; the low-level layer
models first-order velocity tracking with encoder-resolution quantization.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import RigidTransform, Twist, rotation_exp

N_JOINTS = 5


class JointLimitError(Exception):
    """Joint position limits leave no feasible velocity."""


def _rot_x(a: float) -> np.ndarray:
    return rotation_exp(np.array([a, 0.0, 0.0]))


def _rot_y(a: float) -> np.ndarray:
    return rotation_exp(np.array([0.0, a, 0.0]))


@dataclass(frozen=True)
class RobotModel:
    """Kinematic and servo parameters of the assistive arm."""

    prismatic_limit_m: float = 50e-3  # symmetric +/- travel of each stage
    revolute_limit_rad: float = np.deg2rad(30.0)
    linear_velocity_limit: float = 5e-3  # m/s
    angular_velocity_limit: float = 0.5  # rad/s
    resolution_m: float = 1e-6  # encoder/actuation quantum of the stages
    resolution_rad: float = 1e-5
    track_tau_s: float = 10e-3  # first-order velocity tracking constant
    orientation_locked: bool = False  # freeze the wrist (pure translation mode)
    tool_offset: RigidTransform = field(default_factory=RigidTransform.identity)

    @property
    def lower_limits(self) -> np.ndarray:
        p, r = self.prismatic_limit_m, self.revolute_limit_rad
        return np.array([-p, -p, -p, -r, -r])

    @property
    def upper_limits(self) -> np.ndarray:
        return -self.lower_limits

    @property
    def velocity_limits(self) -> np.ndarray:
        v, w = self.linear_velocity_limit, self.angular_velocity_limit
        if self.orientation_locked:
            w = 0.0
        return np.array([v, v, v, w, w])

    @property
    def resolutions(self) -> np.ndarray:
        r, a = self.resolution_m, self.resolution_rad
        return np.array([r, r, r, a, a])


@dataclass(frozen=True)
class JointState:
    """Joint positions/velocities plus the sub-resolution motion carry.

    `residuals` accumulates commanded motion below the actuation quantum so a
    sustained slow command eventually advances by whole resolution steps while
    a single tiny step leaves the position unchanged.
    """

    positions: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    velocities: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))

    def __post_init__(self) -> None:
        for name in ("positions", "velocities", "residuals"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (N_JOINTS,):
                raise ValueError(f"{name} must have shape ({N_JOINTS},)")
            object.__setattr__(self, name, a)


def forward_kinematics(model: RobotModel, q) -> RigidTransform:
    """Tip pose in the base frame for joint vector q."""
    q = np.asarray(q, dtype=float)
    if q.shape != (N_JOINTS,):
        raise ValueError(f"q must have shape ({N_JOINTS},)")
    stage = RigidTransform(np.eye(3), q[:3])
    wrist = RigidTransform(_rot_x(q[3]) @ _rot_y(q[4]), np.zeros(3))
    return stage @ wrist @ model.tool_offset


def jacobian(model: RobotModel, q) -> np.ndarray:
    """6x5 geometric jacobian (twist = [v; w] of the tip, base frame)."""
    q = np.asarray(q, dtype=float)
    tip = forward_kinematics(model, q).translation
    stage = q[:3]  # both wrist axes pass through the stage point
    jac = np.zeros((6, N_JOINTS))
    jac[0, 0] = jac[1, 1] = jac[2, 2] = 1.0
    axis_x = np.array([1.0, 0.0, 0.0])
    axis_y = _rot_x(q[3]) @ np.array([0.0, 1.0, 0.0])
    for col, axis in ((3, axis_x), (4, axis_y)):
        jac[:3, col] = np.cross(axis, tip - stage)
        jac[3:, col] = axis
    return jac


def velocity_box(model: RobotModel, q, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Feasible joint-velocity box: actuator limits shrunk so one step of
    length dt cannot exit the position limits."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    q = np.asarray(q, dtype=float)
    lb = np.maximum(-model.velocity_limits, (model.lower_limits - q) / dt)
    ub = np.minimum(model.velocity_limits, (model.upper_limits - q) / dt)
    if np.any(lb > ub + 1e-12):
        raise JointLimitError("position limits leave no feasible joint velocity")
    return lb, np.maximum(ub, lb)


def mid_level_optimize(
    model: RobotModel,
    q,
    desired: Twist,
    dt: float,
    warm_start: np.ndarray | None = None,
) -> np.ndarray:
    """Joint velocities minimizing ||J qd - xd||_2 inside the velocity box.

    Cyclic coordinate descent with exact single-coordinate minimization,
    followed by an active-set polish (equality solve on the free coordinates).
    Deterministic and allocation-light; the problem has five variables.
    """
    lb, ub = velocity_box(model, q, dt)
    jac = jacobian(model, q)
    target = desired.as_vector()
    h = jac.T @ jac
    c = jac.T @ target
    diag = np.diag(h).copy()
    x = np.clip(warm_start.copy() if warm_start is not None else np.zeros(N_JOINTS), lb, ub)

    for _ in range(2000):
        delta = 0.0
        for i in range(N_JOINTS):
            if diag[i] <= 0.0:
                new = min(max(0.0, lb[i]), ub[i])  # column is zero: coast
            else:
                r = c[i] - h[i] @ x + diag[i] * x[i]
                new = min(max(r / diag[i], lb[i]), ub[i])
            delta = max(delta, abs(new - x[i]))
            x[i] = new
        if delta < 1e-15:
            break

    # Active-set polish: re-solve exactly on the currently free coordinates.
    for _ in range(N_JOINTS + 1):
        tol = 1e-12
        at_lo = x <= lb + tol
        at_hi = x >= ub - tol
        free = ~(at_lo | at_hi)
        if not free.any():
            break
        rhs = c[free] - h[np.ix_(free, ~free)] @ x[~free]
        sol, *_ = np.linalg.lstsq(h[np.ix_(free, free)], rhs, rcond=None)
        candidate = x.copy()
        candidate[free] = np.clip(sol, lb[free], ub[free])
        if np.linalg.norm(jac @ candidate - target) <= np.linalg.norm(jac @ x - target) + 1e-15:
            moved = np.max(np.abs(candidate - x))
            x = candidate
            if moved < 1e-14:
                break
        else:
            break
    return x


def low_level_step(model: RobotModel, state: JointState, qdot_des, dt: float) -> JointState:
    """Advance the servo layer by one tick.

    First-order tracking of the commanded velocity, position integration,
    clamping to joint limits, and quantization to the actuation resolution
    (with the sub-quantum remainder carried in the state).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    qdot_des = np.clip(np.asarray(qdot_des, dtype=float), -model.velocity_limits,
                       model.velocity_limits)
    alpha = 1.0 - float(np.exp(-dt / model.track_tau_s))
    vel = state.velocities + (qdot_des - state.velocities) * alpha
    raw = state.positions + state.residuals + vel * dt
    clamped = np.clip(raw, model.lower_limits, model.upper_limits)
    res = model.resolutions
    # Truncate toward zero: motion below one quantum stays in the residual.
    pos = np.clip(np.trunc(clamped / res) * res, model.lower_limits, model.upper_limits)
    residual = clamped - pos
    residual[clamped != raw] = 0.0  # no wind-up against a hard stop
    return JointState(positions=pos, velocities=vel, residuals=residual)
