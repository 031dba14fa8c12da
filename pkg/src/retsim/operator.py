"""Scripted human models: physiological hand tremor, waypoint-following
intent, cooperative hand-force synthesis, teleoperation master motion, and a
deliberately imperfect manual focus policy.

Everything here is a pure function of (script, seed, t, state) so simulation
runs are reproducible bit for bit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .geometry import RigidTransform, Wrench


class OperatorMode(str, enum.Enum):
    COOPERATIVE_FORCE = "cooperative_force"
    TELEOP_POSE = "teleop_pose"


class AxialPolicy(str, enum.Enum):
    HOLD = "hold"
    NAIVE_FOCUS_ATTEMPT = "naive_focus_attempt"


# ---------------------------------------------------------------------------
# tremor


@dataclass(frozen=True)
class TremorModel:
    """Band-limited hand tremor as a seeded sum of sinusoids.

    Per axis the displacement is a sum of `components` sinusoids with random
    frequencies inside `band_hz` and random phases; the component amplitudes
    sum to `amplitude_m`, so the per-axis displacement never exceeds the
    amplitude.  A sum of fixed sinusoids keeps the spectrum exactly inside
    the band and makes every sample a pure function of (seed, t).
    """

    amplitude_m: float = 200e-6
    band_hz: tuple[float, float] = (6.0, 12.0)
    seed: int = 0
    components: int = 8

    def __post_init__(self) -> None:
        lo, hi = self.band_hz
        if self.amplitude_m < 0.0:
            raise ValueError("amplitude_m must be non-negative")
        if not (0.0 < lo <= hi <= 30.0):
            raise ValueError("band_hz must satisfy 0 < lo <= hi <= 30")
        if self.components < 1:
            raise ValueError("components must be >= 1")
        object.__setattr__(self, "band_hz", (float(lo), float(hi)))


@lru_cache(maxsize=32)
def _tremor_tables(
    amplitude_m: float, band_lo: float, band_hi: float, seed: int, components: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(amplitudes, angular rates, phases), each (3, components)."""
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(band_lo, band_hi, (3, components))
    phases = rng.uniform(0.0, 2.0 * np.pi, (3, components))
    amps = np.full((3, components), amplitude_m / components)
    return amps, 2.0 * np.pi * freqs, phases


def tremor_sample(model: TremorModel, t: float) -> np.ndarray:
    """Tremor displacement (meters, 3-vector) at time t."""
    if model.amplitude_m == 0.0:
        return np.zeros(3)
    amps, omegas, phases = _tremor_tables(
        model.amplitude_m, model.band_hz[0], model.band_hz[1], model.seed, model.components
    )
    return np.sum(amps * np.sin(omegas * t + phases), axis=1)


def tremor_velocity(model: TremorModel, t: float) -> np.ndarray:
    """Analytic time derivative of `tremor_sample` (m/s, 3-vector)."""
    if model.amplitude_m == 0.0:
        return np.zeros(3)
    amps, omegas, phases = _tremor_tables(
        model.amplitude_m, model.band_hz[0], model.band_hz[1], model.seed, model.components
    )
    return np.sum(amps * omegas * np.cos(omegas * t + phases), axis=1)


# ---------------------------------------------------------------------------
# scripted intent


def triangle_waypoints(side_m: float = 3e-3, center=(0.0, 0.0)) -> np.ndarray:
    """Closed equilateral triangle path (4 lateral waypoints, start = end)."""
    if side_m <= 0.0:
        raise ValueError("side_m must be positive")
    radius = side_m / np.sqrt(3.0)
    cx, cy = float(center[0]), float(center[1])
    angles = np.deg2rad([90.0, 210.0, 330.0])
    verts = np.column_stack([cx + radius * np.cos(angles), cy + radius * np.sin(angles)])
    return np.vstack([verts, verts[:1]])


@dataclass(frozen=True)
class NaiveFocusConfig:
    """Imperfect human focus-hunting: bang-bang axial motion with a
    visuomotor reaction delay, idle once the image looks sharp."""

    v_base_m_s: float = 0.8e-3
    reaction_delay_s: float = 0.3
    sharp_threshold: float = 0.47
    score_eps: float = 1e-3
    score_noise_sd: float = 0.0
    noise_seed: int = 0

    def __post_init__(self) -> None:
        if self.v_base_m_s < 0.0 or self.reaction_delay_s < 0.0:
            raise ValueError("v_base_m_s and reaction_delay_s must be non-negative")
        if self.score_noise_sd < 0.0:
            raise ValueError("score_noise_sd must be non-negative")


@dataclass(frozen=True)
class OperatorScript:
    """One operator's plan: a lateral waypoint path plus interface-specific
    gains.  Forces drive the cooperative interface, poses the teleoperated
    one; the same script can be replayed on either."""

    waypoints: np.ndarray  # (N, 2) absolute lateral positions
    speed_m_s: float = 1e-3
    mode: OperatorMode = OperatorMode.COOPERATIVE_FORCE
    axial_policy: AxialPolicy = AxialPolicy.NAIVE_FOCUS_ATTEMPT
    tremor: TremorModel = field(default_factory=TremorModel)
    naive: NaiveFocusConfig = field(default_factory=NaiveFocusConfig)
    nav_stiffness_n_per_m: float = 2000.0
    force_cap_n: float = 2.0
    tremor_force_n_per_m: float = 2000.0
    capture_radius_m: float = 0.5e-3
    teleop_scale: float = 0.015

    def __post_init__(self) -> None:
        w = np.asarray(self.waypoints, dtype=float)
        if w.ndim != 2 or w.shape[1] != 2 or w.shape[0] < 1:
            raise ValueError("waypoints must have shape (N, 2) with N >= 1")
        if self.speed_m_s <= 0.0:
            raise ValueError("speed_m_s must be positive")
        if self.capture_radius_m <= 0.0 or self.teleop_scale <= 0.0:
            raise ValueError("capture_radius_m and teleop_scale must be positive")
        object.__setattr__(self, "waypoints", w)
        object.__setattr__(self, "mode", OperatorMode(self.mode))
        object.__setattr__(self, "axial_policy", AxialPolicy(self.axial_policy))


@dataclass(frozen=True)
class NaiveFocusState:
    direction: float = 1.0  # +1 moves away from the tissue
    last_score: float | None = None
    falling_since_s: float | None = None
    anchor_score: float | None = None  # perceived level when the fall began
    sharp_since_s: float | None = None
    moving: bool = False


@dataclass(frozen=True)
class OperatorState:
    waypoint_index: int = 0
    completed_at_s: float | None = None
    naive: NaiveFocusState = field(default_factory=NaiveFocusState)

    @property
    def completed(self) -> bool:
        return self.completed_at_s is not None


def path_position(script: OperatorScript, t: float) -> np.ndarray:
    """Lateral position (2-vector) along the waypoint polyline at constant
    speed, clamped to the final waypoint once the path is exhausted."""
    if t < 0.0:
        raise ValueError("t must be non-negative")
    pts = script.waypoints
    if len(pts) == 1:
        return pts[0].copy()
    seg = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    arc = float(script.speed_m_s) * t
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    if arc >= cum[-1]:
        return pts[-1].copy()
    i = int(np.searchsorted(cum, arc, side="right")) - 1
    frac = (arc - cum[i]) / seg_len[i] if seg_len[i] > 0.0 else 0.0
    return pts[i] + frac * seg[i]


def path_duration_s(script: OperatorScript) -> float:
    """Time to traverse the whole waypoint polyline at the scripted speed."""
    seg = np.diff(script.waypoints, axis=0)
    return float(np.sum(np.linalg.norm(seg, axis=1)) / script.speed_m_s)


def advance_waypoints(
    script: OperatorScript, state: OperatorState, probe_lateral, t: float
) -> OperatorState:
    """Advance the active waypoint when the probe enters its capture radius;
    the index never decreases.  Records the completion time at the last one."""
    if state.completed:
        return state
    idx = state.waypoint_index
    target = script.waypoints[idx]
    p = np.asarray(probe_lateral, dtype=float)[:2]
    if float(np.linalg.norm(p - target)) >= script.capture_radius_m:
        return state
    if idx + 1 < len(script.waypoints):
        return replace(state, waypoint_index=idx + 1)
    return replace(state, completed_at_s=float(t))


def operator_force(
    script: OperatorScript, state: OperatorState, t: float, probe_pos
) -> tuple[Wrench, OperatorState]:
    """Hand wrench on the tool in cooperative mode.

    A proportional pull toward the active waypoint, saturated at the force
    cap, plus a tremor-proportional force on all three axes.  The returned
    state reflects waypoint capture at the current probe position.
    """
    if script.mode is not OperatorMode.COOPERATIVE_FORCE:
        raise ValueError("operator_force requires a cooperative_force script")
    probe_pos = np.asarray(probe_pos, dtype=float)
    new_state = advance_waypoints(script, state, probe_pos[:2], t)
    target = script.waypoints[min(new_state.waypoint_index, len(script.waypoints) - 1)]
    err = np.zeros(3)
    if not new_state.completed:
        err[:2] = target - probe_pos[:2]
    nav = script.nav_stiffness_n_per_m * err
    norm = float(np.linalg.norm(nav))
    if norm > script.force_cap_n:
        nav *= script.force_cap_n / norm
    force = nav + script.tremor_force_n_per_m * tremor_sample(script.tremor, t)
    return Wrench(force=force, torque=np.zeros(3)), new_state


def operator_mtm_motion(
    script: OperatorScript,
    t: float,
    mtm_initial: RigidTransform,
    master_axial_offset_m: float = 0.0,
) -> RigidTransform:
    """Master manipulator pose in teleoperation at time t.

    The hand tracks the task path pre-divided by the motion scale (so the
    probe traverses it at the scripted speed), while tremor and the axial
    focus-hunting motion enter at natural hand scale and get attenuated by
    the scale factor downstream.  Orientation is held at the initial pose.
    """
    if script.mode is not OperatorMode.TELEOP_POSE:
        raise ValueError("operator_mtm_motion requires a teleop_pose script")
    lateral = (path_position(script, t) - script.waypoints[0]) / script.teleop_scale
    offset = np.array([lateral[0], lateral[1], master_axial_offset_m])
    offset += tremor_sample(script.tremor, t)
    return RigidTransform(mtm_initial.rotation, mtm_initial.translation + offset)


def manual_hand_position(
    script: OperatorScript, t: float, start, axial_offset_m: float = 0.0
) -> np.ndarray:
    """Freehand probe position: the path plus unfiltered tremor, no robot."""
    start = np.asarray(start, dtype=float)
    lateral = path_position(script, t) - script.waypoints[0]
    pos = start + np.array([lateral[0], lateral[1], axial_offset_m])
    return pos + tremor_sample(script.tremor, t)


def naive_axial_policy(
    cfg: NaiveFocusConfig,
    state: NaiveFocusState,
    score: float,
    t: float,
    tremor_velocity_m_s: float = 0.0,
) -> tuple[float, NaiveFocusState]:
    """Human focus attempt: axial velocity from the latest frame score.

    Call once per new frame.  While the image is blurry the hand moves at a
    fixed speed and reverses only after the score has kept falling for
    longer than the reaction delay.  The same latency applies to stopping:
    once the image turns sharp the hand coasts for one reaction delay before
    settling, so a correction overshoots the sharp zone and unaided focusing
    hunts in a limit cycle instead of locking on.

    ``score_noise_sd`` adds a configurable perceptual imperfection: it
    blurs the operator's reading of the score, so frames near the sharpness
    threshold flicker between "good enough" and "needs work" and the hand
    keeps pulsing.  A fall is judged against the level where it began
    rather than frame to frame, since a noisy reading would otherwise mask
    every downward trend.
    """
    if cfg.score_noise_sd > 0.0:
        rng = np.random.default_rng([cfg.noise_seed, int(round(t * 1e6))])
        score = score + cfg.score_noise_sd * rng.standard_normal()
    direction = state.direction
    falling_since = state.falling_since_s
    anchor = state.anchor_score
    sharp_since = state.sharp_since_s
    moving = state.moving
    if score >= cfg.sharp_threshold:
        falling_since = None
        anchor = None
        if moving:
            if sharp_since is None:
                sharp_since = float(t)
            if t - sharp_since < cfg.reaction_delay_s:
                intent = direction * cfg.v_base_m_s
            else:
                intent = 0.0
                moving = False
                sharp_since = None
        else:
            intent = 0.0
            sharp_since = None
    else:
        sharp_since = None
        if falling_since is not None:
            if score < anchor - cfg.score_eps:
                if t - falling_since > cfg.reaction_delay_s:
                    direction = -direction
                    falling_since = None
                    anchor = None
            else:
                falling_since = None
                anchor = None
        if falling_since is None and state.last_score is not None:
            if score < state.last_score - cfg.score_eps:
                falling_since = float(t)
                anchor = float(state.last_score)
        intent = direction * cfg.v_base_m_s
        moving = True
    new_state = NaiveFocusState(
        direction=direction,
        last_score=float(score),
        falling_since_s=falling_since,
        anchor_score=anchor,
        sharp_since_s=sharp_since,
        moving=moving,
    )
    return intent + tremor_velocity_m_s, new_state
