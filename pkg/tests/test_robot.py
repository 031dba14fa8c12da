import numpy as np
import pytest

from retsim.geometry import RigidTransform, Twist, rotation_exp
from retsim.robot import (
    JointLimitError,
    JointState,
    RobotModel,
    forward_kinematics,
    jacobian,
    low_level_step,
    mid_level_optimize,
    velocity_box,
)

from oracles import box_ls_projected_gradient, jacobian_finite_difference


@pytest.fixture(scope="module")
def model():
    return RobotModel(tool_offset=RigidTransform(np.eye(3), np.array([0.0, 0.0, 10e-3])))


def random_q(rng, model):
    p = model.prismatic_limit_m * 0.5
    r = model.revolute_limit_rad * 0.5
    return rng.uniform([-p, -p, -p, -r, -r], [p, p, p, r, r])


def test_fk_zero_pose_is_tool_offset(model):
    t = forward_kinematics(model, np.zeros(5))
    assert np.allclose(t.translation, model.tool_offset.translation)
    assert np.allclose(t.rotation, np.eye(3))


def test_fk_pure_translation(model):
    q = np.array([1e-3, -2e-3, 3e-3, 0.0, 0.0])
    t = forward_kinematics(model, q)
    assert np.allclose(t.translation, q[:3] + model.tool_offset.translation)


def test_fk_wrist_composition(model):
    # Independent homogeneous-matrix chain as the reference.
    rng = np.random.default_rng(30)
    for _ in range(50):
        q = random_q(rng, model)
        hom = np.eye(4)
        hom[:3, 3] = q[:3]
        rx = np.eye(4)
        rx[:3, :3] = rotation_exp([q[3], 0.0, 0.0])
        ry = np.eye(4)
        ry[:3, :3] = rotation_exp([0.0, q[4], 0.0])
        tool = np.eye(4)
        tool[:3, :3] = model.tool_offset.rotation
        tool[:3, 3] = model.tool_offset.translation
        ref = hom @ rx @ ry @ tool
        t = forward_kinematics(model, q)
        assert np.allclose(t.rotation, ref[:3, :3], atol=1e-12)
        assert np.allclose(t.translation, ref[:3, 3], atol=1e-12)


def test_jacobian_matches_finite_differences(model):
    rng = np.random.default_rng(31)

    def fk(q):
        t = forward_kinematics(model, q)
        return t.rotation, t.translation

    for _ in range(30):
        q = random_q(rng, model)
        j_an = jacobian(model, q)
        j_fd = jacobian_finite_difference(fk, q)
        assert np.allclose(j_an, j_fd, atol=1e-6)


def test_velocity_box_shrinks_near_limits(model):
    q = np.zeros(5)
    q[0] = model.prismatic_limit_m - 1e-6
    lb, ub = velocity_box(model, q, dt=5e-3)
    assert ub[0] == pytest.approx(1e-6 / 5e-3)
    assert lb[0] == -model.linear_velocity_limit


def test_velocity_box_infeasible_raises(model):
    q = np.zeros(5)
    q[2] = model.prismatic_limit_m + 1e-3  # already beyond the stop
    with pytest.raises(JointLimitError):
        velocity_box(model, q, dt=5e-3)


def test_mid_level_matches_projected_gradient(model):
    rng = np.random.default_rng(32)
    for _ in range(25):
        q = random_q(rng, model)
        desired = Twist(rng.uniform(-5e-3, 5e-3, 3), rng.uniform(-0.5, 0.5, 3))
        dt = 5e-3
        qd = mid_level_optimize(model, q, desired, dt)
        lb, ub = velocity_box(model, q, dt)
        assert np.all(qd >= lb - 1e-12) and np.all(qd <= ub + 1e-12)
        jac = jacobian(model, q)
        ref = box_ls_projected_gradient(jac, desired.as_vector(), lb, ub, iters=20_000)
        obj = np.linalg.norm(jac @ qd - desired.as_vector())
        obj_ref = np.linalg.norm(jac @ ref - desired.as_vector())
        assert obj <= obj_ref + 1e-8


def test_mid_level_achievable_twist_is_exact(model):
    # A lateral twist well inside all limits must be realized exactly.
    q = np.zeros(5)
    desired = Twist(np.array([1e-3, -0.5e-3, 0.25e-3]), np.zeros(3))
    qd = mid_level_optimize(model, q, desired, dt=5e-3)
    assert np.allclose(qd[:3], desired.linear, atol=1e-12)
    assert np.allclose(qd[3:], 0.0, atol=1e-12)


def test_mid_level_saturates_on_velocity_limit(model):
    q = np.zeros(5)
    desired = Twist(np.array([1.0, 0.0, 0.0]), np.zeros(3))  # far beyond 5 mm/s
    qd = mid_level_optimize(model, q, desired, dt=5e-3)
    assert qd[0] == pytest.approx(model.linear_velocity_limit)


def test_orientation_lock_freezes_wrist():
    locked = RobotModel(orientation_locked=True)
    desired = Twist(np.zeros(3), np.array([0.0, 0.0, 0.4]))
    qd = mid_level_optimize(locked, np.zeros(5), desired, dt=5e-3)
    assert np.allclose(qd[3:], 0.0)


def test_low_level_converges_to_commanded_velocity(model):
    state = JointState()
    cmd = np.array([1e-3, 0.0, -2e-3, 0.0, 0.0])
    for _ in range(100):  # 0.5 s >> tau
        state = low_level_step(model, state, cmd, dt=5e-3)
    assert np.allclose(state.velocities, cmd, rtol=1e-2)


def test_low_level_zero_command_from_rest(model):
    state = low_level_step(model, JointState(), np.zeros(5), dt=5e-3)
    assert np.allclose(state.positions, 0.0)
    assert np.allclose(state.velocities, 0.0)


def test_low_level_subresolution_step_leaves_position(model):
    # One burst below the actuation quantum must not move the stage.
    state = JointState(velocities=np.array([0.1e-3, 0, 0, 0, 0]).astype(float))
    stepped = low_level_step(model, state, np.array([0.1e-3, 0, 0, 0, 0]), dt=5e-3)
    assert stepped.positions[0] == 0.0
    assert stepped.residuals[0] > 0.0


def test_low_level_sustained_slow_motion_advances(model):
    state = JointState()
    cmd = np.array([0.05e-3, 0, 0, 0, 0]).astype(float)  # 0.25 um per tick
    for _ in range(200):
        state = low_level_step(model, state, cmd, dt=5e-3)
    # ~1 s at 50 um/s: quantized travel within one quantum of the ideal.
    assert state.positions[0] > 30e-6
    assert state.positions[0] % model.resolution_m == pytest.approx(0.0, abs=1e-12)


def test_low_level_respects_position_limits(model):
    state = JointState(positions=np.array([model.prismatic_limit_m - 2e-6, 0, 0, 0, 0]))
    cmd = np.array([model.linear_velocity_limit, 0, 0, 0, 0])
    for _ in range(50):
        state = low_level_step(model, state, cmd, dt=5e-3)
    assert state.positions[0] <= model.prismatic_limit_m + 1e-15


def test_joint_state_validation():
    with pytest.raises(ValueError):
        JointState(positions=np.zeros(4))
