"""Tests for the shared-control laws: auto-focus branches and convergence,
surface-prior registration, twist blending, teleoperation, and haptics."""

import numpy as np
import pytest

from retsim.control import (
    AutoFocusConfig,
    AutoFocusState,
    ConvexRegion,
    HapticConfig,
    RegistrationError,
    SignLaw,
    TeleopState,
    admittance,
    autofocus_step,
    autofocus_with_model,
    compliance_wrench,
    hybrid_combine,
    register_prior,
    teleop_error,
    teleop_lateral,
    wrench_to_joint_torques,
)
from retsim.geometry import (
    RigidTransform,
    Twist,
    Wrench,
    motion_spec,
    rotation_exp,
    rotation_from_normal,
)
from retsim.phantom import TissueModel, surface_height
from retsim.robot import RobotModel, jacobian

CFG = AutoFocusConfig()
Z = np.array([0.0, 0.0, 1.0])
DT = 0.02


def _state(score, z_prev, step_prev=0.0, reached=False):
    return AutoFocusState(
        score_prev=score,
        probe_prev=np.array([0.0, 0.0, z_prev]),
        step_prev=step_prev,
        model_reached=reached,
    )


def test_autofocus_passthrough_below_t1_is_exact():
    user = Twist(np.array([0.3e-3, -0.2e-3, -1.7e-3]), np.zeros(3))
    res = autofocus_step(CFG, _state(0.05, 0.0), 0.06, [0, 0, 1e-4], Z, user, DT)
    assert res.passthrough
    assert res.step_m == -1.7e-3 * DT  # exact, no saturation on the human channel
    assert res.state.score_prev == 0.06


def test_autofocus_holds_when_in_focus():
    res = autofocus_step(CFG, _state(0.3, 0.0), 0.5, [0, 0, 5e-5], Z, Twist.zero(), DT)
    assert res.step_m == 0.0
    assert not res.passthrough
    assert res.state.step_prev == 0.0


def test_autofocus_stationary_worse_explores_away():
    # Probe did not move but the score dropped: step away from the tissue.
    res = autofocus_step(CFG, _state(0.30, 0.0), 0.25, [0, 0, 2e-7], Z, Twist.zero(), DT)
    assert res.step_m == pytest.approx(CFG.gain_m * (1.0 - 0.25))
    assert res.step_m > 0.0


def test_autofocus_stationary_better_repeats_last_step():
    res = autofocus_step(
        CFG, _state(0.20, 0.0, step_prev=-4.2e-5), 0.24, [0, 0, 3e-7], Z, Twist.zero(), DT
    )
    assert res.step_m == -4.2e-5


def test_autofocus_gradient_sign_follows_improvement():
    # Moved away (+z) and improved: keep going up.
    res = autofocus_step(CFG, _state(0.20, 0.0), 0.26, [0, 0, 5e-5], Z, Twist.zero(), DT)
    assert res.step_m == pytest.approx(CFG.gain_m * (1.0 - 0.26))
    # Moved away and got worse: reverse.
    res = autofocus_step(CFG, _state(0.26, 0.0), 0.20, [0, 0, 5e-5], Z, Twist.zero(), DT)
    assert res.step_m == pytest.approx(-CFG.gain_m * (1.0 - 0.20))
    # Moved down and improved: keep going down.
    res = autofocus_step(CFG, _state(0.20, 5e-5), 0.26, [0, 0, 0.0], Z, Twist.zero(), DT)
    assert res.step_m == pytest.approx(-CFG.gain_m * (1.0 - 0.26))


def test_listing_sign_law_reduces_to_improvement_sign():
    cfg = AutoFocusConfig(sign_law=SignLaw.LISTING)
    # Moved down yet improved: the literal listing steps up (sign of dq),
    # the gradient rule steps down.
    res_listing = autofocus_step(cfg, _state(0.20, 5e-5), 0.26, [0, 0, 0.0], Z, Twist.zero(), DT)
    res_gradient = autofocus_step(CFG, _state(0.20, 5e-5), 0.26, [0, 0, 0.0], Z, Twist.zero(), DT)
    assert res_listing.step_m == pytest.approx(cfg.gain_m * (1.0 - 0.26))
    assert res_gradient.step_m == pytest.approx(-cfg.gain_m * (1.0 - 0.26))


def _synthetic_score(z, z_opt=690e-6, peak=0.61, slope=800.0, floor=0.05):
    return max(floor, peak - slope * abs(z - z_opt))


def test_autofocus_climbs_synthetic_focus_curve():
    # 1-D hill climb on a tent-shaped score curve from both sides of the peak.
    for z0 in (690e-6 + 420e-6, 690e-6 - 420e-6, 690e-6 + 300e-6):
        z_kick = z0 - 2e-6
        state = _state(_synthetic_score(z_kick), z_kick)
        z = z0
        scores = []
        for _ in range(60):
            q = _synthetic_score(z)
            scores.append(q)
            res = autofocus_step(CFG, state, q, [0, 0, z], Z, Twist.zero(), DT)
            state = res.state
            assert not res.passthrough
            z += res.step_m
        assert max(scores) >= CFG.t2, f"failed to focus from {z0}"


def test_autofocus_rejects_bad_dt_and_config():
    with pytest.raises(ValueError):
        autofocus_step(CFG, _state(0.2, 0.0), 0.2, [0, 0, 0], Z, Twist.zero(), 0.0)
    with pytest.raises(ValueError):
        AutoFocusConfig(t1=0.5, t2=0.4)
    with pytest.raises(ValueError):
        AutoFocusConfig(gain_m=0.0)


# ---------------------------------------------------------------------------
# surface prior


def test_convex_region_contains():
    square = ConvexRegion(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    assert square.contains([0.5, 0.5])
    assert square.contains([0.0, 0.5])  # boundary counts as inside
    assert not square.contains([1.2, 0.5])
    assert not square.contains([0.5, -0.1])
    with pytest.raises(ValueError):
        ConvexRegion(np.zeros((2, 2)))


def _quadratic_scan(coef, rng, n=40, extent=4e-3, noise=0.0):
    a, b, c, d, e, f = coef
    scan = []
    for _ in range(n):
        x, y = rng.uniform(-extent, extent, 2)
        z = a * x * x + b * y * y + c * x * y + d * x + e * y + f
        scan.append(((x, y), z + noise * rng.standard_normal(), 0.6))
    return scan


def test_register_prior_recovers_exact_quadratic():
    rng = np.random.default_rng(11)
    coef = np.array([12.0, -8.0, 3.5, 0.02, -0.01, 6.9e-4])
    scan = _quadratic_scan(coef, rng)
    scan.append(((0.0, 0.0), 99.0, 0.1))  # out-of-focus sample must be ignored
    model = register_prior(scan)
    assert model.sample_count == 20
    assert np.allclose(model.coefficients, coef, rtol=1e-9, atol=1e-15)
    for _ in range(50):
        x, y = rng.uniform(-3e-3, 3e-3, 2)
        truth = coef @ np.array([x * x, y * y, x * y, x, y, 1.0])
        assert model.height((x, y)) == pytest.approx(truth, rel=1e-9, abs=1e-15)


def test_register_prior_requires_enough_in_focus_samples():
    rng = np.random.default_rng(2)
    scan = _quadratic_scan(np.zeros(6), rng, n=19)
    with pytest.raises(RegistrationError):
        register_prior(scan)
    # Plenty of samples but all blurry: still an error.
    blurry = [((x, y), z, 0.2) for (x, y), z, _ in _quadratic_scan(np.zeros(6), rng)]
    with pytest.raises(RegistrationError):
        register_prior(blurry)


def test_register_prior_fits_sphere_cap_with_noise():
    tissue = TissueModel(bump_count=0)
    rng = np.random.default_rng(5)
    d_opt = 690e-6
    scan = []
    for _ in range(120):
        r = 3e-3 * np.sqrt(rng.random())
        ang = rng.uniform(0.0, 2.0 * np.pi)
        x, y = r * np.cos(ang), r * np.sin(ang)
        z = surface_height(tissue, (x, y)) + d_opt + 20e-6 * rng.standard_normal()
        scan.append(((x, y), z, 0.55))
    model = register_prior(scan)
    errs = []
    for _ in range(400):
        r = 2.5e-3 * np.sqrt(rng.random())
        ang = rng.uniform(0.0, 2.0 * np.pi)
        x, y = r * np.cos(ang), r * np.sin(ang)
        if not model.contains((x, y)):
            continue
        errs.append(model.height((x, y)) - (surface_height(tissue, (x, y)) + d_opt))
    assert len(errs) > 300
    rms = float(np.sqrt(np.mean(np.square(errs))))
    assert rms <= 100e-6


def test_region_is_hull_of_all_in_focus_points():
    rng = np.random.default_rng(9)
    scan = _quadratic_scan(np.zeros(6), rng, n=60, extent=2e-3)
    model = register_prior(scan)
    pts = np.array([xy for xy, _, _ in scan])
    for xy in pts:
        assert model.contains(xy)
    assert not model.contains((5e-3, 5e-3))


def test_autofocus_with_model_delegates_outside_region_bitwise():
    rng = np.random.default_rng(21)
    scan = _quadratic_scan(np.array([0, 0, 0, 0, 0, 1e-3]), rng, extent=1e-3)
    model = register_prior(scan)
    normal = rotation_from_normal([0.0, 0.0, 1.0])
    ms = motion_spec(normal)
    for score in (0.05, 0.2, 0.3):
        state = _state(score - 0.03, 0.0, step_prev=1e-5)
        pos = [4e-3, 4e-3, 2e-4]  # outside the 1 mm registered footprint
        user = Twist(np.array([0.0, 0.0, -1e-3]), np.zeros(3))
        with_model = autofocus_with_model(CFG, state, model, score, pos, ms, Z, user, DT)
        plain = autofocus_step(CFG, state, score, pos, Z, user, DT)
        assert with_model.step_m == plain.step_m
        assert with_model.passthrough == plain.passthrough
    none_res = autofocus_with_model(CFG, state, None, 0.2, pos, ms, Z, user, DT)
    assert none_res.step_m == autofocus_step(CFG, state, 0.2, pos, Z, user, DT).step_m


def test_autofocus_with_model_jumps_to_model_height_unsaturated():
    # Flat prior at z = 1.2 mm; probe at 1.7 mm with a blurry image: the raw
    # correction is the full -0.5 mm, saturation is the caller's job.
    scan = [((x, y), 1.2e-3, 0.6) for x in np.linspace(-2e-3, 2e-3, 5)
            for y in np.linspace(-2e-3, 2e-3, 5)]
    model = register_prior(scan)
    ms = motion_spec(rotation_from_normal([0.0, 0.0, 1.0]))
    state = _state(0.08, 1.7e-3)
    res = autofocus_with_model(
        CFG, state, model, 0.09, [0, 0, 1.7e-3], ms, Z, Twist.zero(), DT
    )
    assert not res.passthrough
    assert res.step_m == pytest.approx(-0.5e-3, rel=1e-9)
    assert not res.state.model_reached


def test_autofocus_with_model_reaches_then_fine_tunes():
    scan = [((x, y), 1.0e-3, 0.6) for x in np.linspace(-2e-3, 2e-3, 5)
            for y in np.linspace(-2e-3, 2e-3, 5)]
    model = register_prior(scan)
    ms = motion_spec(rotation_from_normal([0.0, 0.0, 1.0]))
    # Within resolution of the model height: flag flips on.
    state = _state(0.2, 1.0e-3 + 4e-7)
    res = autofocus_with_model(
        CFG, state, model, 0.2, [0, 0, 1.0e-3 + 4e-7], ms, Z, Twist.zero(), DT
    )
    assert res.state.model_reached
    # Reached and laterally stationary: behaves exactly like the reactive step.
    state2 = res.state
    pos2 = [0, 0, float(state2.probe_prev[2]) + res.step_m]
    fine = autofocus_with_model(CFG, state2, model, 0.24, pos2, ms, Z, Twist.zero(), DT)
    plain = autofocus_step(CFG, state2, 0.24, pos2, Z, Twist.zero(), DT)
    assert fine.step_m == plain.step_m
    # In-focus inside the region holds position.
    hold = autofocus_with_model(CFG, state2, model, 0.5, pos2, ms, Z, Twist.zero(), DT)
    assert hold.step_m == 0.0


# ---------------------------------------------------------------------------
# twist assembly


def test_hybrid_combine_projects_channels():
    rng = np.random.default_rng(4)
    for _ in range(200):
        n = rng.standard_normal(3)
        n /= np.linalg.norm(n)
        ms = motion_spec(rotation_from_normal(n))
        lat = Twist(rng.standard_normal(3), rng.standard_normal(3))
        ax = Twist(rng.standard_normal(3), rng.standard_normal(3))
        out = hybrid_combine(ms, lat, ax)
        proj_n = np.outer(n, n)
        want_lin = (np.eye(3) - proj_n) @ lat.linear + proj_n @ ax.linear
        assert np.allclose(out.linear, want_lin, atol=1e-12)
        assert np.allclose(out.angular, lat.angular, atol=1e-12)


def test_admittance_identity_pose_scales_force():
    w = Wrench(np.array([0.5, -0.2, 1.0]), np.zeros(3))
    tw = admittance(w, 500e-6, RigidTransform.identity())
    assert np.allclose(tw.linear, 500e-6 * w.force)
    assert np.allclose(tw.angular, 0.0)


def test_admittance_transforms_through_tool_pose():
    rot = rotation_exp(np.array([0.0, 0.0, np.pi / 2]))
    pose = RigidTransform(rot, np.array([0.0, 0.0, 0.1]))
    w = Wrench(np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    alpha = 1e-3
    tw = admittance(w, alpha, pose)
    want_ang = alpha * rot @ w.torque
    want_lin = alpha * rot @ w.force + np.cross(pose.translation, want_ang)
    assert np.allclose(tw.angular, want_ang, atol=1e-12)
    assert np.allclose(tw.linear, want_lin, atol=1e-12)
    with pytest.raises(ValueError):
        admittance(w, -1.0, pose)


# ---------------------------------------------------------------------------
# teleoperation


def test_teleop_scaled_position_error():
    state = TeleopState(RigidTransform.identity(), RigidTransform.identity())
    mtm = RigidTransform(np.eye(3), np.array([1e-3, 0.0, 0.0]))
    eps, theta = teleop_error(state, mtm, RigidTransform.identity())
    assert np.allclose(eps, [15e-6, 0.0, 0.0])  # 1 mm master motion -> 15 um
    assert np.allclose(theta, 0.0)
    # Robot catching up drives the error to zero.
    sher = RigidTransform(np.eye(3), np.array([15e-6, 0.0, 0.0]))
    eps2, _ = teleop_error(state, mtm, sher)
    assert np.allclose(eps2, 0.0, atol=1e-15)


def test_teleop_base_mapping_rotates_master_axes():
    rot_map = rotation_exp(np.array([0.0, 0.0, np.pi / 2]))
    state = TeleopState(
        RigidTransform.identity(), RigidTransform.identity(), base_map=rot_map
    )
    mtm = RigidTransform(np.eye(3), np.array([1e-3, 0.0, 0.0]))
    eps, _ = teleop_error(state, mtm, RigidTransform.identity())
    assert np.allclose(eps, [0.0, -15e-6, 0.0], atol=1e-18)


def test_teleop_orientation_error_and_velocity():
    axis = np.array([0.0, 0.0, 0.2])
    state = TeleopState(RigidTransform.identity(), RigidTransform.identity())
    mtm = RigidTransform(rotation_exp(axis), np.zeros(3))
    eps, theta = teleop_error(state, mtm, RigidTransform.identity())
    assert np.allclose(theta, axis, atol=1e-12)
    tw = teleop_lateral(eps, theta, 0.005)
    assert np.allclose(tw.angular, axis / 0.005)
    # When the robot has taken on the mapped orientation the error vanishes.
    sher = RigidTransform(rotation_exp(axis), np.zeros(3))
    _, theta2 = teleop_error(state, mtm, sher)
    assert np.allclose(theta2, 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        teleop_lateral(eps, theta, 0.0)
    with pytest.raises(ValueError):
        TeleopState(
            RigidTransform.identity(), RigidTransform.identity(),
            base_map=np.ones((3, 3)),
        )


# ---------------------------------------------------------------------------
# haptics


def test_compliance_wrench_spring_damper():
    cfg = HapticConfig()
    eps = np.array([15e-6, 0.0, -30e-6])
    vel = np.array([0.0, 1e-3, 0.0])
    theta = np.array([0.0, 0.0, 0.1])
    w = compliance_wrench(cfg, eps, theta, vel)
    assert np.allclose(w.force, 50.0 * eps + 5.0 * vel)
    assert np.allclose(w.torque, 0.1 * theta)
    assert w.force[0] == pytest.approx(7.5e-4)  # 15 um error -> 0.75 mN at kp = 50
    with pytest.raises(ValueError):
        HapticConfig(kp_n_per_m=-1.0)


def test_wrench_to_joint_torques_power_balance():
    # tau . qdot must equal wrench . (J qdot) for any motion: the transpose
    # map conserves mechanical power.
    model = RobotModel()
    rng = np.random.default_rng(8)
    for _ in range(100):
        q = rng.uniform(-0.02, 0.02, 5)
        q[3:] = rng.uniform(-0.3, 0.3, 2)
        jac = jacobian(model, q)
        w = Wrench(rng.standard_normal(3), rng.standard_normal(3))
        qdot = rng.standard_normal(5)
        tau = wrench_to_joint_torques(jac, w)
        assert tau.shape == (5,)
        assert float(tau @ qdot) == pytest.approx(
            float(w.as_vector() @ (jac @ qdot)), rel=1e-10, abs=1e-12
        )
    with pytest.raises(ValueError):
        wrench_to_joint_torques(np.eye(5), Wrench(np.zeros(3), np.zeros(3)))
