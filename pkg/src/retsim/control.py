"""Shared-control laws: hybrid twist combination, admittance, image-driven
auto-focus (with and without a registered surface prior), teleoperation
tracking, and haptic compliance feedback.

Axial displacements are signed along the tissue normal: positive moves the
probe away from the tissue.  The auto-focus routines return a displacement to
execute over the next image interval; callers convert it to a velocity and
apply the safety saturation (`step_cap_m`) to autonomous steps.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geometry import MotionSpec, RigidTransform, Twist, Wrench, adjoint, rotation_log


class SignLaw(str, enum.Enum):
    """Direction rule for the in-band search step of the auto-focus.

    `TEXT_GRADIENT` continues in the direction that improved the score and
    reverses otherwise (a true 1-D hill climb): sign(dq * dx_probe).
    `LISTING` evaluates sign(dx_probe * dq) * sign(dx_probe) literally, which
    collapses to sign(dq) whenever the probe moved; kept for comparison.
    """

    TEXT_GRADIENT = "text_gradient"
    LISTING = "paper_listing"


@dataclass(frozen=True)
class AutoFocusConfig:
    t1: float = 0.10  # below: score uninformative, hand the axis back to the user
    t2: float = 0.47  # at or above: in focus, hold position
    gain_m: float = 100e-6  # step scale g; actual step is g * (1 - score)
    resolution_m: float = 1e-6  # stationarity threshold, matches the robot quantum
    step_cap_m: float = 200e-6  # safety rail applied to autonomous steps per tick
    sign_law: SignLaw = SignLaw.TEXT_GRADIENT

    def __post_init__(self) -> None:
        if not (0.0 <= self.t1 < self.t2 <= 1.0):
            raise ValueError("need 0 <= t1 < t2 <= 1")
        if self.gain_m <= 0.0 or self.resolution_m <= 0.0:
            raise ValueError("gain_m and resolution_m must be positive")
        object.__setattr__(self, "sign_law", SignLaw(self.sign_law))


@dataclass(frozen=True)
class AutoFocusState:
    """Carry-over between auto-focus invocations (one per new frame)."""

    score_prev: float = 0.0
    probe_prev: np.ndarray = field(default_factory=lambda: np.zeros(3))
    step_prev: float = 0.0
    model_reached: bool = False

    def __post_init__(self) -> None:
        p = np.asarray(self.probe_prev, dtype=float)
        if p.shape != (3,):
            raise ValueError("probe_prev must be a 3-vector")
        object.__setattr__(self, "probe_prev", p)


@dataclass(frozen=True)
class AutoFocusResult:
    step_m: float  # signed displacement along the axial unit for this frame interval
    passthrough: bool  # True when the user keeps the axial channel (score < t1)
    state: AutoFocusState


def _sign(x: float) -> float:
    return float(np.sign(x))


def autofocus_step(
    cfg: AutoFocusConfig,
    state: AutoFocusState,
    score: float,
    probe_pos,
    axial_unit,
    user_twist: Twist,
    dt: float,
) -> AutoFocusResult:
    """One reactive auto-focus update from a fresh image score.

    Branches: uninformative score hands the axis to the operator; an in-focus
    score holds; in the search band a stationary probe with a worsening score
    triggers an exploration step away from the tissue, a stationary probe
    with an improving score repeats the last step, and otherwise the step
    direction follows the configured sign law with magnitude g * (1 - score).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    probe_pos = np.asarray(probe_pos, dtype=float)
    axial_unit = np.asarray(axial_unit, dtype=float)
    dq = score - state.score_prev
    dx_probe = float(axial_unit @ (probe_pos - state.probe_prev))

    passthrough = False
    if score < cfg.t1:
        # Full user control of the axis: pass the commanded axial component
        # through unmodified (no saturation on the human channel).
        step = float(axial_unit @ user_twist.linear) * dt
        passthrough = True
    elif score < cfg.t2:
        stationary = abs(dx_probe) < cfg.resolution_m
        if stationary and dq < 0.0:
            step = cfg.gain_m * (1.0 - score)  # explore away from the tissue
        elif stationary and dq > 0.0:
            step = state.step_prev
        else:
            if cfg.sign_law is SignLaw.TEXT_GRADIENT:
                direction = _sign(dq * dx_probe)
            else:
                direction = _sign(dx_probe * dq) * _sign(dx_probe)
            step = cfg.gain_m * direction * (1.0 - score)
    else:
        step = 0.0

    new_state = AutoFocusState(
        score_prev=score,
        probe_prev=probe_pos,
        step_prev=step,
        model_reached=state.model_reached,
    )
    return AutoFocusResult(step_m=step, passthrough=passthrough, state=new_state)


# ---------------------------------------------------------------------------
# registered surface prior


class RegistrationError(Exception):
    """Scan does not contain enough in-focus samples to build a prior."""


@dataclass(frozen=True)
class ConvexRegion:
    """Convex polygon on the lateral plane (vertices counter-clockwise)."""

    vertices: np.ndarray  # (K, 2)

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("need at least 3 vertices of shape (K, 2)")
        object.__setattr__(self, "vertices", v)

    def contains(self, xy, tol: float = 1e-9) -> bool:
        p = np.asarray(xy, dtype=float)
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        edge = nxt - v
        rel = p[None, :] - v
        cross = edge[:, 0] * rel[:, 1] - edge[:, 1] * rel[:, 0]
        return bool(np.all(cross >= -tol))


@dataclass(frozen=True)
class PriorModel:
    """Quadratic height prior z(x, y) fitted from an in-focus scan."""

    coefficients: np.ndarray  # (a, b, c, d, e, f) for a x^2 + b y^2 + c xy + d x + e y + f
    region: ConvexRegion
    sample_count: int

    def __post_init__(self) -> None:
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (6,):
            raise ValueError("coefficients must have shape (6,)")
        object.__setattr__(self, "coefficients", c)

    def height(self, xy) -> float:
        x, y = float(xy[0]), float(xy[1])
        a, b, c, d, e, f = self.coefficients
        return a * x * x + b * y * y + c * x * y + d * x + e * y + f

    def contains(self, xy) -> bool:
        return self.region.contains(xy)


def _farthest_point_subset(points: np.ndarray, count: int) -> np.ndarray:
    """Deterministic farthest-point sampling; returns selected indices."""
    centroid = points.mean(axis=0)
    start = int(np.argmax(np.linalg.norm(points - centroid, axis=1)))
    chosen = [start]
    dist = np.linalg.norm(points - points[start], axis=1)
    while len(chosen) < count:
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return np.array(chosen)


def register_prior(scan, t2: float = 0.47, sample_target: int = 20) -> PriorModel:
    """Fit the quadratic surface prior from scan samples.

    `scan` is a sequence of (xy, z, score) with xy a lateral pair and z the
    in-focus probe height.  Exactly `sample_target` spatially spread in-focus
    samples feed the least-squares fit; the valid region is the convex hull
    of every in-focus lateral position.
    """
    lateral, heights = [], []
    for xy, z, score in scan:
        if score >= t2:
            lateral.append((float(xy[0]), float(xy[1])))
            heights.append(float(z))
    if len(lateral) < sample_target:
        raise RegistrationError(
            f"registration incomplete: {len(lateral)} in-focus samples, need {sample_target}"
        )
    pts = np.asarray(lateral)
    zs = np.asarray(heights)
    idx = _farthest_point_subset(pts, sample_target)
    sel, zsel = pts[idx], zs[idx]

    # Fit in centred/scaled coordinates for conditioning, then map back.
    cx, cy = sel.mean(axis=0)
    scale = max(float(np.abs(sel - [cx, cy]).max()), 1e-9)
    u = (sel[:, 0] - cx) / scale
    v = (sel[:, 1] - cy) / scale
    design = np.column_stack([u * u, v * v, u * v, u, v, np.ones_like(u)])
    coef_uv, *_ = np.linalg.lstsq(design, zsel, rcond=None)
    a_, b_, c_, d_, e_, f_ = coef_uv
    s2 = scale * scale
    a = a_ / s2
    b = b_ / s2
    c = c_ / s2
    d = -2.0 * a_ * cx / s2 - c_ * cy / s2 + d_ / scale
    e = -2.0 * b_ * cy / s2 - c_ * cx / s2 + e_ / scale
    f = (a_ * cx * cx + b_ * cy * cy + c_ * cx * cy) / s2 - (d_ * cx + e_ * cy) / scale + f_

    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise RegistrationError(f"degenerate in-focus footprint: {exc}") from exc
    region = ConvexRegion(pts[hull.vertices])
    return PriorModel(
        coefficients=np.array([a, b, c, d, e, f]),
        region=region,
        sample_count=sample_target,
    )


def model_only_step(model: PriorModel | None, probe_pos) -> float:
    """Axial step using the registered surface alone (no image feedback):
    jump to the model height inside the region, hold elsewhere."""
    if model is None:
        return 0.0
    probe_pos = np.asarray(probe_pos, dtype=float)
    if not model.contains(probe_pos[:2]):
        return 0.0
    return model.height(probe_pos[:2]) - float(probe_pos[2])


def autofocus_with_model(
    cfg: AutoFocusConfig,
    state: AutoFocusState,
    model: PriorModel | None,
    score: float,
    probe_pos,
    motion: MotionSpec,
    axial_unit,
    user_twist: Twist,
    dt: float,
) -> AutoFocusResult:
    """Auto-focus update combining the surface prior with the reactive search.

    Outside the registered region (or without a model) this delegates to the
    reactive step.  Inside: an in-focus score holds; once the model height has
    been reached and the probe is laterally stationary the reactive search
    fine-tunes; otherwise the step jumps to the model height, unsaturated
    (the caller's safety rail spreads large corrections over several ticks).
    """
    probe_pos = np.asarray(probe_pos, dtype=float)
    if model is None or not model.contains(probe_pos[:2]):
        return autofocus_step(cfg, state, score, probe_pos, axial_unit, user_twist, dt)
    if score >= cfg.t2:
        new_state = AutoFocusState(
            score_prev=score, probe_prev=probe_pos, step_prev=0.0,
            model_reached=state.model_reached,
        )
        return AutoFocusResult(step_m=0.0, passthrough=False, state=new_state)
    lateral_motion = float(
        np.linalg.norm(motion.k_lateral[:3, :3] @ (probe_pos - state.probe_prev))
    )
    if state.model_reached and lateral_motion < cfg.resolution_m:
        return autofocus_step(cfg, state, score, probe_pos, axial_unit, user_twist, dt)
    step = model.height(probe_pos[:2]) - float(probe_pos[2])
    new_state = AutoFocusState(
        score_prev=score, probe_prev=probe_pos, step_prev=step,
        model_reached=abs(step) < cfg.resolution_m,
    )
    return AutoFocusResult(step_m=step, passthrough=False, state=new_state)


# ---------------------------------------------------------------------------
# twist assembly


def hybrid_combine(motion: MotionSpec, lateral: Twist, axial: Twist) -> Twist:
    """Blend the operator's twist with the controller's axial twist through
    the complementary selection matrices."""
    combined = motion.k_lateral @ lateral.as_vector() + motion.k_axial @ axial.as_vector()
    return Twist.from_vector(combined)


def admittance(wrench: Wrench, alpha: float, probe_in_base: RigidTransform) -> Twist:
    """Map a hand wrench at the tool to a desired base-frame twist.

    The compliance alpha converts force to velocity component-wise; the
    adjoint of the tool pose re-expresses the resulting twist in base frame.
    """
    if alpha < 0.0:
        raise ValueError("alpha must be non-negative")
    tool_twist = alpha * wrench.as_vector()
    return Twist.from_vector(adjoint(probe_in_base) @ tool_twist)


# ---------------------------------------------------------------------------
# teleoperation


@dataclass(frozen=True)
class TeleopState:
    """Anchor poses taken at clutch-in plus the master-to-robot mapping."""

    mtm_initial: RigidTransform
    sher_initial: RigidTransform
    base_map: np.ndarray = field(default_factory=lambda: np.eye(3))  # master axes -> robot axes
    scale: float = 0.015  # master-to-robot translation scale

    def __post_init__(self) -> None:
        r = np.asarray(self.base_map, dtype=float)
        if r.shape != (3, 3) or not np.allclose(r.T @ r, np.eye(3), atol=1e-6):
            raise ValueError("base_map must be an orthonormal 3x3 matrix")
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "base_map", r)


def teleop_error(
    state: TeleopState, mtm: RigidTransform, sher: RigidTransform
) -> tuple[np.ndarray, np.ndarray]:
    """Scaled tracking error between master and robot displacements.

    Returns (position error, orientation error as a rotation vector).
    """
    dp_mtm = mtm.translation - state.mtm_initial.translation
    dp_sher = sher.translation - state.sher_initial.translation
    eps = state.scale * (state.base_map.T @ dp_mtm) - dp_sher
    rel = sher.rotation.T @ state.base_map.T @ mtm.rotation
    theta = rotation_log(rel)
    return eps, theta


def teleop_lateral(eps: np.ndarray, theta: np.ndarray, dt: float) -> Twist:
    """Velocity command that closes the teleoperation error over one tick."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return Twist(np.asarray(eps, dtype=float) / dt, np.asarray(theta, dtype=float) / dt)


# ---------------------------------------------------------------------------
# haptic feedback


@dataclass(frozen=True)
class HapticConfig:
    kp_n_per_m: float = 50.0
    damping_n_per_m_s: float = 5.0
    kr_nm_per_rad: float = 0.1

    def __post_init__(self) -> None:
        if self.kp_n_per_m < 0 or self.damping_n_per_m_s < 0 or self.kr_nm_per_rad < 0:
            raise ValueError("haptic gains must be non-negative")


def compliance_wrench(cfg: HapticConfig, eps, theta, velocity) -> Wrench:
    """Spring-damper wrench rendered at the master from the tracking error.

    Force = kp * eps + b * v, torque = kr * theta, in the master frame; the
    sign convention resists deviation from the tracked trajectory.
    """
    eps = np.asarray(eps, dtype=float)
    theta = np.asarray(theta, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    return Wrench(
        force=cfg.kp_n_per_m * eps + cfg.damping_n_per_m_s * velocity,
        torque=cfg.kr_nm_per_rad * theta,
    )


def wrench_to_joint_torques(jac: np.ndarray, wrench: Wrench) -> np.ndarray:
    """Joint torques realizing a tip wrench via the jacobian transpose.

    The transpose (not an inverse) is the power-consistent mapping and stays
    defined for non-square jacobians.
    """
    jac = np.asarray(jac, dtype=float)
    if jac.ndim != 2 or jac.shape[0] != 6:
        raise ValueError("jacobian must be 6xN")
    return jac.T @ wrench.as_vector()
