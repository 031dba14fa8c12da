"""Deterministic fixed-step simulation engine and experiment harnesses.

The engine couples the scripted (or externally steered) operator, the
shared-control laws, the stage robot, the tissue phantom, and the image
pipeline at a fixed control rate with an integer frame-rate divisor.  A run
is a pure function of its configuration and seed: logs and reports from two
runs with identical inputs are byte-identical.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .control import (
    AutoFocusConfig,
    AutoFocusState,
    HapticConfig,
    PriorModel,
    autofocus_step,
    autofocus_with_model,
    admittance,
    hybrid_combine,
    model_only_step,
    register_prior,
    teleop_error,
    teleop_lateral,
    TeleopState,
)
from .geometry import RigidTransform, Twist, Wrench, motion_spec, rotation_from_normal
from .imaging import (
    FocusProfile,
    cr_score,
    make_default_texture,
    render_frame,
    sigma_law_for,
)
from .operator import (
    AxialPolicy,
    NaiveFocusConfig,
    NaiveFocusState,
    OperatorMode,
    OperatorScript,
    OperatorState,
    TremorModel,
    advance_waypoints,
    manual_hand_position,
    naive_axial_policy,
    operator_force,
    operator_mtm_motion,
    triangle_waypoints,
)
from .phantom import TissueModel, probe_distance, surface_height, surface_normal
from .robot import JointState, RobotModel, forward_kinematics, low_level_step, mid_level_optimize

REPORT_SCHEMA_VERSION = 1


class SimMode(str, enum.Enum):
    MANUAL = "manual"
    COOPERATIVE = "cooperative"
    HYBRID_COOPERATIVE = "hybrid_cooperative"
    TELEOPERATED = "teleoperated"
    HYBRID_TELEOPERATED = "hybrid_teleoperated"


class AxialController(str, enum.Enum):
    OPTIMIZER = "optimizer"  # reactive image optimizer only
    MODEL = "model"  # registered surface prior only
    COMBINED = "combined"  # prior model plus reactive fine-tuning


_HYBRID_MODES = frozenset({SimMode.HYBRID_COOPERATIVE, SimMode.HYBRID_TELEOPERATED})
_TELEOP_MODES = frozenset({SimMode.TELEOPERATED, SimMode.HYBRID_TELEOPERATED})
_COOP_MODES = frozenset({SimMode.COOPERATIVE, SimMode.HYBRID_COOPERATIVE})


def default_script(mode: SimMode, seed: int = 0) -> OperatorScript:
    """Triangular-path script matched to the interface of `mode`.

    Hand-on-tool interfaces carry full-scale tool tremor and an active focus
    hunt; teleoperation scripts model the free-floating master hand (larger
    tremor, attenuated by the motion scale downstream).  Hybrid scripts hold
    the axial channel still and leave focusing to the controller.
    """
    hybrid = mode in _HYBRID_MODES
    if mode in _TELEOP_MODES:
        op_mode = OperatorMode.TELEOP_POSE
        amplitude = 350e-6  # unsupported master hand trembles more than a held tool
    else:
        op_mode = OperatorMode.COOPERATIVE_FORCE
        amplitude = 200e-6
    return OperatorScript(
        waypoints=triangle_waypoints(),
        speed_m_s=1e-3,
        mode=op_mode,
        axial_policy=AxialPolicy.HOLD if hybrid else AxialPolicy.NAIVE_FOCUS_ATTEMPT,
        tremor=TremorModel(amplitude_m=amplitude, seed=seed),
        naive=NaiveFocusConfig(v_base_m_s=1.1e-3, score_noise_sd=0.035, noise_seed=seed),
    )


@dataclass(frozen=True)
class SimConfig:
    mode: SimMode = SimMode.HYBRID_COOPERATIVE
    control_rate_hz: int = 200
    pcle_rate_hz: int = 50
    duration_s: float = 12.0
    seed: int = 0
    frame_px: int = 128
    fov_m: float = 300e-6
    admittance_alpha_m_s_per_n: float = 500e-6
    axial_controller: AxialController = AxialController.OPTIMIZER
    safety_strict: bool = True
    start_axial_offset_m: float = 0.0
    start_lateral_m: tuple[float, float] = (0.0, 0.0)
    stop_after_completion_s: float | None = 1.0
    phantom: TissueModel = field(default_factory=TissueModel)
    robot: RobotModel = field(default_factory=RobotModel)
    autofocus: AutoFocusConfig = field(default_factory=AutoFocusConfig)
    focus: FocusProfile = field(default_factory=FocusProfile)
    haptics: HapticConfig = field(default_factory=HapticConfig)
    script: OperatorScript | None = None  # None: externally steered session

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", SimMode(self.mode))
        object.__setattr__(self, "axial_controller", AxialController(self.axial_controller))
        if self.control_rate_hz <= 0 or self.pcle_rate_hz <= 0:
            raise ValueError("rates must be positive")
        if self.control_rate_hz < self.pcle_rate_hz:
            raise ValueError("control_rate_hz must be >= pcle_rate_hz")
        if self.control_rate_hz % self.pcle_rate_hz != 0:
            raise ValueError(
                "control_rate_hz must be an integer multiple of pcle_rate_hz "
                f"(got {self.control_rate_hz}/{self.pcle_rate_hz})"
            )
        if self.duration_s <= 0.0:
            raise ValueError("duration_s must be positive")
        if self.admittance_alpha_m_s_per_n < 0.0:
            raise ValueError("admittance_alpha_m_s_per_n must be non-negative")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_rate_hz

    @property
    def frame_dt(self) -> float:
        return 1.0 / self.pcle_rate_hz

    @property
    def ticks_per_frame(self) -> int:
        return self.control_rate_hz // self.pcle_rate_hz


@dataclass
class ExternalChannels:
    """Live steering state for interactive sessions (gateway-fed).

    Latest-wins: each field holds the most recent command; the engine samples
    them once per control tick.  `consumed_steer_ticks` counts ticks whose
    motion command was actually shaped by external steering, which is the
    audit trail for the pedal interlock.
    """

    pedal: bool = False
    force_xy: tuple[float, float] = (0.0, 0.0)
    mtm_offset_m: np.ndarray = field(default_factory=lambda: np.zeros(3))
    consumed_steer_ticks: int = 0


@dataclass(frozen=True)
class TickRecord:
    t: float
    probe_pos: tuple[float, float, float]
    joints: tuple[float, ...]
    cmd_twist: tuple[float, ...]  # desired 6-D twist fed to the mid-level optimizer
    axial_cmd_m_s: float
    cr_latest: float
    probe_distance_m: float
    frame_new: bool
    events: tuple[str, ...]

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "probe": list(self.probe_pos),
            "joints": list(self.joints),
            "cmd": list(self.cmd_twist),
            "axial_cmd_m_s": self.axial_cmd_m_s,
            "cr": self.cr_latest,
            "probe_distance_m": self.probe_distance_m,
            "frame_new": self.frame_new,
            "events": list(self.events),
        }


@dataclass
class RunLog:
    mode: str
    seed: int
    dt: float
    records: list[TickRecord] = field(default_factory=list)
    frame_scores: list[float] = field(default_factory=list)
    online_in_focus: int = 0
    completed_at_s: float | None = None
    aborted: bool = False
    abort_reason: str | None = None

    def to_jsonl(self) -> str:
        header = {
            "mode": self.mode, "seed": self.seed, "dt": self.dt,
            "completed_at_s": self.completed_at_s,
            "aborted": self.aborted, "abort_reason": self.abort_reason,
        }
        lines = [json.dumps({"header": header}, sort_keys=True)]
        lines.extend(json.dumps(r.as_dict(), sort_keys=True) for r in self.records)
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# metrics


def motion_smoothness(traj, dt: float) -> float:
    """Mean Euclidean norm of the third-order finite-difference jerk.

    `traj` is (N, 3) sampled uniformly at spacing dt; the (1, -3, 3, -1)
    stencil is exact for cubics, so u(t) = t^3 scores exactly 6.
    """
    u = np.asarray(traj, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2 or u.shape[0] < 4:
        raise ValueError("need at least 4 uniform samples")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    jerk = ((u[3:] - 3.0 * u[2:-1]) + 3.0 * u[1:-2] - u[:-3]) / dt**3
    return float(np.mean(np.linalg.norm(jerk, axis=1)))


def _frame_scores(log: RunLog) -> np.ndarray:
    if not log.frame_scores:
        raise ValueError("run log contains no frames")
    return np.asarray(log.frame_scores)


def mean_cr(log: RunLog) -> float:
    return float(np.mean(_frame_scores(log)))


def in_focus_fraction(log: RunLog, t2: float = 0.47) -> float:
    scores = _frame_scores(log)
    return float(np.count_nonzero(scores >= t2) / scores.size)


def completion_time(log: RunLog) -> float | None:
    return log.completed_at_s


def resample_positions(log: RunLog, rate_hz: float = 50.0) -> tuple[np.ndarray, float]:
    """Probe positions decimated to `rate_hz` for smoothness scoring."""
    control_rate = 1.0 / log.dt
    stride = int(round(control_rate / rate_hz))
    if stride < 1 or abs(control_rate - stride * rate_hz) > 1e-9:
        raise ValueError("rate_hz must divide the control rate")
    pos = np.array([r.probe_pos for r in log.records[::stride]])
    return pos, stride * log.dt


# ---------------------------------------------------------------------------
# engine


class Engine:
    """One simulation run: construct, then call tick() or run()."""

    def __init__(self, config: SimConfig, prior: PriorModel | None = None):
        self.config = config
        self.texture = make_default_texture()
        self.law = sigma_law_for(self.texture, config.focus, config.frame_px, config.fov_m)
        self.script = config.script
        self.external = ExternalChannels()
        self.prior = prior

        if self.script is not None:
            start_lat = np.asarray(self.script.waypoints[0], dtype=float)
        else:
            start_lat = np.asarray(config.start_lateral_m, dtype=float)
        z0 = (
            self._surface_z(start_lat, 0.0)
            + config.focus.optimal_distance_m
            + config.start_axial_offset_m
        )
        q0 = np.array([start_lat[0], start_lat[1], z0, 0.0, 0.0])
        tool = forward_kinematics(config.robot, q0).translation
        q0[:3] -= tool - q0[:3]  # place the probe tip, not the stage, at the start
        self.joints = JointState(q0, np.zeros(5), np.zeros(5))
        self.probe = forward_kinematics(config.robot, self.joints.positions)

        self.tick_index = 0
        self.op_state = OperatorState()
        self.af_state = AutoFocusState(probe_prev=self.probe.translation)
        self.axial_velocity = 0.0
        self.passthrough = False
        self.naive_intent = 0.0
        self.master_axial_offset = 0.0
        self.manual_axial_offset = 0.0
        self.frame_index = 0
        self._prev_probe = self.probe.translation.copy()

        if config.mode in _TELEOP_MODES:
            anchor = RigidTransform.identity()
            self._mtm_anchor = anchor
            mtm0 = self._mtm_pose(0.0)
            scale = self.script.teleop_scale if self.script is not None else 0.015
            self.teleop = TeleopState(
                mtm_initial=mtm0, sher_initial=self.probe, scale=scale
            )
        else:
            self.teleop = None

        self._pending_score = self._render(self.probe.translation, 0.0)
        self.last_score = 0.0
        self.log = RunLog(mode=config.mode.value, seed=config.seed, dt=config.dt)

    # -- helpers ---------------------------------------------------------

    def _surface_z(self, xy, t: float) -> float:
        x, y = float(xy[0]), float(xy[1])
        limit = 0.999 * self.config.phantom.disc_radius_m
        r = float(np.hypot(x, y))
        if r > limit:
            x, y = x * limit / r, y * limit / r
        return surface_height(self.config.phantom, (x, y), t)

    def _normal(self, xy, t: float) -> np.ndarray:
        x, y = float(xy[0]), float(xy[1])
        limit = 0.98 * self.config.phantom.disc_radius_m
        r = float(np.hypot(x, y))
        if r > limit:
            x, y = x * limit / r, y * limit / r
        return surface_normal(self.config.phantom, (x, y), t)

    def _probe_distance(self, tip, t: float) -> float:
        vertical = float(tip[2]) - self._surface_z(tip[:2], t)
        if vertical > 0.5e-3:
            return vertical  # far from the surface: the vertical gap is enough
        try:
            return probe_distance(self.config.phantom, tip, t)
        except ValueError:
            return vertical

    def _render(self, tip, t: float) -> float:
        distance = float(tip[2]) - self._surface_z(tip[:2], t)
        frame = render_frame(
            self.texture,
            (float(tip[0]), float(tip[1])),
            distance,
            self.config.focus,
            self.config.seed * 1000003 + self.frame_index,
            frame_px=self.config.frame_px,
            fov_m=self.config.fov_m,
            law=self.law,
            timestamp=t,
        )
        self.last_frame = frame
        self.frame_index += 1
        return cr_score(frame)

    def _mtm_pose(self, t: float) -> RigidTransform:
        if self.script is not None:
            return operator_mtm_motion(
                self.script, t, self._mtm_anchor, self.master_axial_offset
            )
        offset = self.external.mtm_offset_m if self.external.pedal else np.zeros(3)
        return RigidTransform(
            self._mtm_anchor.rotation, self._mtm_anchor.translation + offset
        )

    def _lateral_twist(self, t: float) -> tuple[Twist, list[str]]:
        """The operator-side desired twist (pre-projection) at time t."""
        events: list[str] = []
        cfg = self.config
        if cfg.mode in _COOP_MODES:
            if self.script is not None:
                before = self.op_state.waypoint_index
                wrench, self.op_state = operator_force(
                    self.script, self.op_state, t, self.probe.translation
                )
                if self.op_state.waypoint_index != before:
                    events.append(f"waypoint_reached:{before}")
            else:
                fx, fy = self.external.force_xy if self.external.pedal else (0.0, 0.0)
                wrench = Wrench(np.array([fx, fy, 0.0]), np.zeros(3))
                if self.external.pedal and (fx != 0.0 or fy != 0.0):
                    self.external.consumed_steer_ticks += 1
            local = Wrench(
                self.probe.rotation.T @ wrench.force,
                self.probe.rotation.T @ wrench.torque,
            )
            return admittance(local, cfg.admittance_alpha_m_s_per_n, self.probe), events
        # teleoperated interfaces
        mtm = self._mtm_pose(t)
        if self.script is None and self.external.pedal and np.any(
            self.external.mtm_offset_m != 0.0
        ):
            self.external.consumed_steer_ticks += 1
        eps, theta = teleop_error(self.teleop, mtm, self.probe)
        return teleop_lateral(eps, theta, cfg.dt), events

    def _axial_update(self, user_twist: Twist, normal: np.ndarray, t: float) -> None:
        """Refresh the axial channel from the newly consumed frame."""
        cfg = self.config
        score = self.last_score
        tip = self.probe.translation
        if cfg.mode in _HYBRID_MODES:
            ms = motion_spec(rotation_from_normal(normal))
            if cfg.axial_controller is AxialController.MODEL:
                step = model_only_step(self.prior, tip)
                self.passthrough = False
            elif cfg.axial_controller is AxialController.COMBINED:
                res = autofocus_with_model(
                    cfg.autofocus, self.af_state, self.prior, score, tip, ms,
                    normal, user_twist, cfg.frame_dt,
                )
                self.af_state, step, self.passthrough = res.state, res.step_m, res.passthrough
            else:
                res = autofocus_step(
                    cfg.autofocus, self.af_state, score, tip, normal,
                    user_twist, cfg.frame_dt,
                )
                self.af_state, step, self.passthrough = res.state, res.step_m, res.passthrough
            cap = cfg.autofocus.step_cap_m
            step = float(np.clip(step, -cap, cap))
            self.axial_velocity = step / cfg.frame_dt
        elif self.script is not None and self.script.axial_policy is AxialPolicy.NAIVE_FOCUS_ATTEMPT:
            intent, naive = naive_axial_policy(
                self.script.naive, self.op_state.naive, score, t
            )
            self.op_state = replace(self.op_state, naive=naive)
            self.naive_intent = intent
        else:
            self.naive_intent = 0.0

    # -- main loop -------------------------------------------------------

    def tick(self) -> TickRecord:
        cfg = self.config
        k = self.tick_index
        t = k * cfg.dt
        events: list[str] = []

        if cfg.mode is SimMode.MANUAL:
            return self._tick_manual(k, t)

        new_frame = k % cfg.ticks_per_frame == 0
        if new_frame:
            self.last_score = self._pending_score
            self.log.frame_scores.append(self.last_score)
            if self.last_score >= cfg.autofocus.t2:
                self.log.online_in_focus += 1

        normal = (
            self._normal(self.probe.translation[:2], t)
            if cfg.mode in _HYBRID_MODES
            else np.array([0.0, 0.0, 1.0])
        )
        user_twist, events_lat = self._lateral_twist(t)
        events.extend(events_lat)

        if new_frame:
            self._axial_update(user_twist, normal, t)

        if cfg.mode in _HYBRID_MODES:
            ms = motion_spec(rotation_from_normal(normal))
            if self.passthrough:
                axial_vel = float(normal @ user_twist.linear)
            else:
                axial_vel = self.axial_velocity
            axial = Twist(axial_vel * normal, np.zeros(3))
            cmd = hybrid_combine(ms, user_twist, axial)
        elif cfg.mode is SimMode.COOPERATIVE:
            axial_vel = self.naive_intent
            cmd = Twist(
                user_twist.linear + np.array([0.0, 0.0, axial_vel]), user_twist.angular
            )
        else:  # plain teleoperation: the master's axial motion is the channel
            self.master_axial_offset += self.naive_intent * cfg.dt
            axial_vel = float(user_twist.linear[2])
            cmd = user_twist

        qdot = mid_level_optimize(
            cfg.robot, self.joints.positions, cmd, cfg.dt,
            warm_start=self.joints.velocities,
        )
        self.joints = low_level_step(cfg.robot, self.joints, qdot, cfg.dt)
        self.probe = forward_kinematics(cfg.robot, self.joints.positions)
        at_limit = np.logical_or(
            self.joints.positions <= cfg.robot.lower_limits,
            self.joints.positions >= cfg.robot.upper_limits,
        )
        if bool(np.any(at_limit)):
            events.append("limit_hit")

        t_next = (k + 1) * cfg.dt
        if self.script is not None and cfg.mode in _TELEOP_MODES:
            before = self.op_state.waypoint_index
            was_done = self.op_state.completed
            self.op_state = advance_waypoints(
                self.script, self.op_state, self.probe.translation[:2], t_next
            )
            if self.op_state.waypoint_index != before:
                events.append(f"waypoint_reached:{before}")
            if self.op_state.completed and not was_done:
                events.append("completed")
        if self.op_state.completed and self.log.completed_at_s is None:
            self.log.completed_at_s = self.op_state.completed_at_s
            if cfg.mode in _COOP_MODES:
                events.append("completed")

        pd = self._probe_distance(self.probe.translation, t_next)
        if pd <= 0.0:
            events.append("contact")
            if cfg.safety_strict:
                self.log.aborted = True
                self.log.abort_reason = "contact"

        if (k + 1) % cfg.ticks_per_frame == 0:
            self._pending_score = self._render(self.probe.translation, t_next)

        record = TickRecord(
            t=t_next,
            probe_pos=tuple(float(v) for v in self.probe.translation),
            joints=tuple(float(v) for v in self.joints.positions),
            cmd_twist=tuple(float(v) for v in cmd.as_vector()),
            axial_cmd_m_s=float(axial_vel),
            cr_latest=self.last_score,
            probe_distance_m=float(pd),
            frame_new=new_frame,
            events=tuple(events),
        )
        self.log.records.append(record)
        self.tick_index += 1
        return record

    def _tick_manual(self, k: int, t: float) -> TickRecord:
        """Freehand scanning: the probe is the hand, no robot in between."""
        cfg = self.config
        new_frame = k % cfg.ticks_per_frame == 0
        if new_frame:
            self.last_score = self._pending_score
            self.log.frame_scores.append(self.last_score)
            if self.last_score >= cfg.autofocus.t2:
                self.log.online_in_focus += 1
            if self.script is not None and self.script.axial_policy is AxialPolicy.NAIVE_FOCUS_ATTEMPT:
                intent, naive = naive_axial_policy(
                    self.script.naive, self.op_state.naive, self.last_score, t
                )
                self.op_state = replace(self.op_state, naive=naive)
                self.naive_intent = intent
        events: list[str] = []
        t_next = (k + 1) * cfg.dt
        self.manual_axial_offset += self.naive_intent * cfg.dt
        start = self._start_hand_position()
        hand = manual_hand_position(self.script, t_next, start, self.manual_axial_offset)
        old = self.probe.translation
        velocity = (hand - old) / cfg.dt
        self.probe = RigidTransform(np.eye(3), hand)
        self.joints = JointState(
            np.array([hand[0], hand[1], hand[2], 0.0, 0.0]), np.zeros(5), np.zeros(5)
        )
        before = self.op_state.waypoint_index
        was_done = self.op_state.completed
        self.op_state = advance_waypoints(self.script, self.op_state, hand[:2], t_next)
        if self.op_state.waypoint_index != before:
            events.append(f"waypoint_reached:{before}")
        if self.op_state.completed and not was_done:
            events.append("completed")
            self.log.completed_at_s = self.op_state.completed_at_s
        pd = self._probe_distance(hand, t_next)
        if pd <= 0.0:
            events.append("contact")
            if cfg.safety_strict:
                self.log.aborted = True
                self.log.abort_reason = "contact"
        if (k + 1) % cfg.ticks_per_frame == 0:
            self._pending_score = self._render(hand, t_next)
        record = TickRecord(
            t=t_next,
            probe_pos=tuple(float(v) for v in hand),
            joints=tuple(float(v) for v in self.joints.positions),
            cmd_twist=tuple(float(v) for v in velocity) + (0.0, 0.0, 0.0),
            axial_cmd_m_s=float(self.naive_intent),
            cr_latest=self.last_score,
            probe_distance_m=float(pd),
            frame_new=new_frame,
            events=tuple(events),
        )
        self.log.records.append(record)
        self.tick_index += 1
        return record

    def _start_hand_position(self) -> np.ndarray:
        lat = self.script.waypoints[0]
        z0 = (
            self._surface_z(lat, 0.0)
            + self.config.focus.optimal_distance_m
            + self.config.start_axial_offset_m
        )
        return np.array([lat[0], lat[1], z0])

    def run(self, stop: Callable[["Engine"], bool] | None = None) -> RunLog:
        cfg = self.config
        total = int(round(cfg.duration_s * cfg.control_rate_hz))
        while self.tick_index < total:
            self.tick()
            if self.log.aborted:
                break
            if stop is not None and stop(self):
                break
            if (
                cfg.stop_after_completion_s is not None
                and self.log.completed_at_s is not None
                and self.tick_index * cfg.dt
                >= self.log.completed_at_s + cfg.stop_after_completion_s
            ):
                break
        return self.log


# ---------------------------------------------------------------------------
# registration pre-phase


@dataclass(frozen=True)
class RegistrationResult:
    model: PriorModel
    duration_s: float
    sample_count: int
    frames_used: int


def run_registration(
    config: SimConfig,
    *,
    points: int = 24,
    margin: float = 1.35,
    max_frames_per_point: int = 60,
) -> RegistrationResult:
    """Perimeter scan building the surface prior before a hybrid run.

    The probe visits a ring of points enclosing the task path; at each it
    runs the reactive image optimizer until the frame is sharp and records
    the in-focus height.  The reported duration charges lateral travel at
    the scripted speed plus one frame interval per captured image, matching
    how the pre-operative registration cost is accounted separately.
    """
    script = config.script if config.script is not None else default_script(config.mode)
    waypoints = script.waypoints
    center = waypoints.mean(axis=0)
    radius = margin * float(np.max(np.linalg.norm(waypoints - center, axis=1)))
    angles = np.linspace(0.0, 2.0 * np.pi, points, endpoint=False)
    ring = center + radius * np.column_stack([np.cos(angles), np.sin(angles)])

    texture = make_default_texture()
    law = sigma_law_for(texture, config.focus, config.frame_px, config.fov_m)
    af = config.autofocus
    cap = af.step_cap_m
    z = surface_height(config.phantom, ring[0], 0.0) + config.focus.optimal_distance_m + 200e-6
    state = AutoFocusState(probe_prev=np.array([ring[0][0], ring[0][1], z - 2e-6]))
    samples: list[tuple[tuple[float, float], float, float]] = []
    frames_used = 0
    travel = 0.0
    prev_point = ring[0]
    frame_seed = config.seed * 1000003 + 700_000
    for point in ring:
        travel += float(np.linalg.norm(point - prev_point)) / script.speed_m_s
        prev_point = point
        for _ in range(max_frames_per_point):
            distance = z - surface_height(config.phantom, point, 0.0)
            frame = render_frame(
                texture, (point[0], point[1]), distance, config.focus,
                frame_seed, frame_px=config.frame_px, fov_m=config.fov_m, law=law,
            )
            frame_seed += 1
            frames_used += 1
            score = cr_score(frame)
            if score >= af.t2:
                samples.append(((float(point[0]), float(point[1])), float(z), score))
                state = replace(state, score_prev=score, probe_prev=np.array([point[0], point[1], z]))
                break
            res = autofocus_step(
                af, state, score, [point[0], point[1], z],
                [0.0, 0.0, 1.0], Twist.zero(), 1.0 / config.pcle_rate_hz,
            )
            state = res.state
            z += float(np.clip(res.step_m, -cap, cap))
    model = register_prior(samples, t2=af.t2)
    duration = travel + frames_used / config.pcle_rate_hz
    return RegistrationResult(
        model=model,
        duration_s=duration,
        sample_count=len(samples),
        frames_used=frames_used,
    )


# ---------------------------------------------------------------------------
# experiment harnesses


def run_metrics(log: RunLog) -> dict:
    pos, dt = resample_positions(log, 50.0)
    return {
        "mean_cr": mean_cr(log),
        "in_focus_fraction": in_focus_fraction(log),
        "motion_smoothness_m_s3": motion_smoothness(pos, dt),
        "completion_time_s": completion_time(log),
        "min_probe_distance_m": min(r.probe_distance_m for r in log.records),
        "contact": any("contact" in r.events for r in log.records),
        "frames": len(log.frame_scores),
    }


def _base_config(mode: SimMode, seed: int, **overrides) -> SimConfig:
    phantom = TissueModel(bump_seed=seed)
    return SimConfig(
        mode=mode,
        seed=seed,
        phantom=phantom,
        script=default_script(mode, seed=seed),
        **overrides,
    )


def _experiment_exp1(seeds: list[int]) -> dict:
    arms: dict[str, dict] = {}
    for mode in (SimMode.MANUAL, SimMode.HYBRID_TELEOPERATED):
        per_seed = []
        for seed in seeds:
            cfg = _base_config(mode, seed, safety_strict=False)
            log = Engine(cfg).run()
            entry = {"seed": seed, **run_metrics(log)}
            entry["score_trace"] = [round(s, 6) for s in log.frame_scores]
            per_seed.append(entry)
        arms[mode.value] = {
            "per_seed": per_seed,
            "mean_cr": float(np.mean([r["mean_cr"] for r in per_seed])),
            "in_focus_fraction": float(
                np.mean([r["in_focus_fraction"] for r in per_seed])
            ),
        }
    return {"arms": arms}


def _experiment_exp2(seeds: list[int]) -> dict:
    arm_names = {
        "optimizer_only": AxialController.OPTIMIZER,
        "model_only": AxialController.MODEL,
        "combined": AxialController.COMBINED,
    }
    per_arm: dict[str, list[dict]] = {name: [] for name in arm_names}
    registration_s: dict[int, float] = {}
    for seed in seeds:
        base = _base_config(SimMode.HYBRID_COOPERATIVE, seed, start_axial_offset_m=300e-6)
        quiet = replace(
            base.script, tremor=TremorModel(amplitude_m=0.0, seed=seed),
            axial_policy=AxialPolicy.HOLD,
        )
        base = replace(base, script=quiet)
        reg = run_registration(base)
        registration_s[seed] = reg.duration_s
        for name, controller in arm_names.items():
            cfg = replace(base, axial_controller=controller)
            prior = reg.model if controller is not AxialController.OPTIMIZER else None
            log = Engine(cfg, prior=prior).run()
            per_arm[name].append({"seed": seed, **run_metrics(log)})
    arms = {}
    for name, rows in per_arm.items():
        arms[name] = {
            "per_seed": rows,
            "mean_cr": float(np.mean([r["mean_cr"] for r in rows])),
            "in_focus_fraction": float(np.mean([r["in_focus_fraction"] for r in rows])),
        }
    return {"arms": arms, "registration_duration_s": registration_s}


def _experiment_exp3(seeds: list[int]) -> dict:
    modes = (
        SimMode.COOPERATIVE,
        SimMode.HYBRID_COOPERATIVE,
        SimMode.TELEOPERATED,
        SimMode.HYBRID_TELEOPERATED,
    )
    arms: dict[str, dict] = {}
    for mode in modes:
        per_seed = []
        for seed in seeds:
            cfg = _base_config(mode, seed, safety_strict=mode in _HYBRID_MODES)
            log = Engine(cfg).run()
            entry = {"seed": seed, **run_metrics(log)}
            pos, dt = resample_positions(log, 50.0)
            entry["path_50hz"] = [[round(v, 9) for v in p] for p in pos.tolist()]
            per_seed.append(entry)
        arms[mode.value] = {
            "per_seed": per_seed,
            "motion_smoothness_m_s3": float(
                np.mean([r["motion_smoothness_m_s3"] for r in per_seed])
            ),
            "completion_time_s": [r["completion_time_s"] for r in per_seed],
        }
    return {"arms": arms}


def _experiment_user_task(seeds: list[int]) -> dict:
    per_seed = []
    for seed in seeds:
        cfg = _base_config(SimMode.HYBRID_COOPERATIVE, seed)
        reg = run_registration(cfg)
        run_cfg = replace(cfg, axial_controller=AxialController.COMBINED)
        log = Engine(run_cfg, prior=reg.model).run()
        per_seed.append(
            {
                "seed": seed,
                **run_metrics(log),
                "registration_duration_s": reg.duration_s,
                "registration_samples": reg.sample_count,
            }
        )
    return {"arms": {"hybrid_cooperative": {"per_seed": per_seed}}}


def run_experiment(name: str, seeds: list[int] | None = None) -> dict:
    """Run one named experiment suite and return its JSON-ready report."""
    suites: dict[str, tuple[Callable[[list[int]], dict], list[int]]] = {
        "exp1": (_experiment_exp1, [0, 1, 2]),
        "exp2": (_experiment_exp2, [0, 1, 2, 3, 4]),
        "exp3": (_experiment_exp3, [0, 1, 2, 3, 4]),
        "user_task": (_experiment_user_task, [0]),
    }
    if name not in suites:
        raise ValueError(f"unknown experiment {name!r}; expected one of {sorted(suites)}")
    fn, default_seeds = suites[name]
    used = list(default_seeds if seeds is None else seeds)
    body = fn(used)
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "experiment": name,
        "seeds": used,
        **body,
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
