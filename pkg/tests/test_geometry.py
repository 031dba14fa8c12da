import numpy as np
import pytest

from retsim.geometry import (
    MotionSpec,
    RigidTransform,
    Twist,
    Wrench,
    adjoint,
    motion_spec,
    rotation_exp,
    rotation_from_normal,
    rotation_log,
    skew,
)


def random_rotation(rng) -> np.ndarray:
    return rotation_exp(rng.uniform(-np.pi, np.pi) * unit(rng))


def unit(rng) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def test_skew_matches_cross_product():
    rng = np.random.default_rng(1)
    for _ in range(200):
        a, b = rng.standard_normal(3), rng.standard_normal(3)
        assert np.allclose(skew(a) @ b, np.cross(a, b), atol=1e-12)
        assert np.allclose(skew(a).T, -skew(a))


def test_rigid_transform_compose_inverse():
    rng = np.random.default_rng(2)
    for _ in range(100):
        t1 = RigidTransform(random_rotation(rng), rng.standard_normal(3))
        t2 = RigidTransform(random_rotation(rng), rng.standard_normal(3))
        p = rng.standard_normal(3)
        assert np.allclose((t1 @ t2).apply(p), t1.apply(t2.apply(p)), atol=1e-12)
        ident = t1 @ t1.inverse()
        assert np.allclose(ident.rotation, np.eye(3), atol=1e-12)
        assert np.allclose(ident.translation, 0.0, atol=1e-12)


def test_rigid_transform_rejects_non_orthonormal():
    bad = np.eye(3)
    bad[0, 0] = 1.1
    with pytest.raises(ValueError):
        RigidTransform(bad, np.zeros(3))


def test_twist_wrench_vector_round_trip():
    v = np.arange(6.0)
    assert np.allclose(Twist.from_vector(v).as_vector(), v)
    assert np.allclose(Wrench.from_vector(v).as_vector(), v)
    with pytest.raises(ValueError):
        Twist.from_vector(np.zeros(5))
    with pytest.raises(ValueError):
        Wrench(force=np.zeros(2))


def test_adjoint_is_homomorphism():
    # Ad(T1 T2) == Ad(T1) Ad(T2) over random transform pairs.
    rng = np.random.default_rng(3)
    for _ in range(1000):
        t1 = RigidTransform(random_rotation(rng), rng.standard_normal(3))
        t2 = RigidTransform(random_rotation(rng), rng.standard_normal(3))
        lhs = adjoint(t1 @ t2)
        rhs = adjoint(t1) @ adjoint(t2)
        assert np.allclose(lhs, rhs, atol=1e-9)


def test_adjoint_pure_translation_couples_rotation_into_velocity():
    t = RigidTransform(np.eye(3), np.array([1.0, 0.0, 0.0]))
    tw = Twist(np.zeros(3), np.array([0.0, 0.0, 2.0]))
    mapped = Twist.from_vector(adjoint(t) @ tw.as_vector())
    # Body spins about the child origin at +p, so the point of the body at
    # the parent origin moves with p x w = -2y.
    assert np.allclose(mapped.linear, [0.0, -2.0, 0.0], atol=1e-12)
    assert np.allclose(mapped.angular, tw.angular)


def test_rotation_log_exp_round_trip():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        w = rng.uniform(1e-6, np.pi - 1e-3) * unit(rng)
        r = rotation_exp(w)
        assert np.allclose(rotation_log(r), w, atol=1e-8)


def test_rotation_log_identity_and_pi():
    assert np.allclose(rotation_log(np.eye(3)), 0.0)
    for axis in (np.array([0.0, 0.0, 1.0]), np.array([0.0, 1.0, 0.0])):
        r = rotation_exp(np.pi * axis)
        w = rotation_log(r)
        assert np.isclose(np.linalg.norm(w), np.pi, atol=1e-9)
        # Tie convention: first nonzero component of the axis is positive.
        nz = w[np.abs(w) > 1e-9]
        assert nz[0] > 0.0
        assert np.allclose(rotation_exp(w), r, atol=1e-9)


def test_rotation_log_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        rotation_log(np.eye(3) * 1.01)


def test_motion_spec_projector_algebra():
    rng = np.random.default_rng(5)
    for _ in range(300):
        r = random_rotation(rng)
        spec = motion_spec(r)
        lat = spec.k_lateral[:3, :3]
        ax = spec.k_axial[:3, :3]
        # Complementary idempotent projectors on the translational block.
        assert np.allclose(lat + ax, np.eye(3), atol=1e-12)
        assert np.allclose(lat @ lat, lat, atol=1e-12)
        assert np.allclose(ax @ ax, ax, atol=1e-12)
        assert np.allclose(lat @ ax, 0.0, atol=1e-12)
        # Axial block equals the outer product of the normal direction.
        n = r[2, :]
        assert np.allclose(ax, np.outer(n, n), atol=1e-12)
        # Orientation stays fully with the lateral channel.
        assert np.allclose(spec.k_lateral[3:, 3:], np.eye(3))
        assert np.allclose(spec.k_axial[3:, 3:], 0.0)
        assert np.allclose(spec.k_lateral[:3, 3:], 0.0)


def test_motion_spec_90_deg_selects_world_y():
    # Rotating the tissue frame 90 degrees about x turns world y into the axis.
    r = rotation_exp(np.array([np.pi / 2.0, 0.0, 0.0]))
    spec = motion_spec(r)
    v = spec.k_axial[:3, :3] @ np.array([1.0, 2.0, 3.0])
    assert np.allclose(v, [0.0, 2.0, 0.0], atol=1e-12)


def test_motion_spec_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        motion_spec(np.ones((3, 3)))


def test_rotation_from_normal_third_row():
    rng = np.random.default_rng(6)
    for _ in range(200):
        n = unit(rng)
        r = rotation_from_normal(n)
        assert np.allclose(r[2, :], n, atol=1e-12)
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert np.isclose(np.linalg.det(r), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        rotation_from_normal(np.zeros(3))


def test_motion_spec_type_validates_shape():
    with pytest.raises(ValueError):
        MotionSpec(np.eye(3), np.eye(6))
