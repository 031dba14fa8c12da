"""Rigid-body primitives and the motion-specification projectors used by the
hybrid controller.

Twists and wrenches are ordered (linear, angular): a twist is [v; w] and a
wrench is [f; tau].  The adjoint of a rigid transform maps twists expressed in
the transform's child frame into the parent frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Vector3 = np.ndarray
Matrix3 = np.ndarray

_ORTHO_TOL = 1e-6


def _as_vec3(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {a.shape}")
    return a


def _check_rotation(r: np.ndarray, name: str = "rotation") -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"{name} must be a 3x3 matrix, got shape {r.shape}")
    if not np.allclose(r.T @ r, np.eye(3), atol=_ORTHO_TOL):
        raise ValueError(f"{name} is not orthonormal")
    if np.linalg.det(r) < 0.0:
        raise ValueError(f"{name} has negative determinant (reflection)")
    return r


def skew(v) -> Matrix3:
    """Cross-product matrix: skew(v) @ u == cross(v, u)."""
    x, y, z = _as_vec3(v, "v")
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element; rotation is orthonormal with det +1."""

    rotation: Matrix3 = field(default_factory=lambda: np.eye(3))
    translation: Vector3 = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))
        object.__setattr__(self, "translation", _as_vec3(self.translation, "translation"))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, point) -> Vector3:
        return self.rotation @ _as_vec3(point, "point") + self.translation


@dataclass(frozen=True)
class Twist:
    """Spatial velocity [v; w], linear part in m/s, angular in rad/s."""

    linear: Vector3 = field(default_factory=lambda: np.zeros(3))
    angular: Vector3 = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "linear", _as_vec3(self.linear, "linear"))
        object.__setattr__(self, "angular", _as_vec3(self.angular, "angular"))

    @staticmethod
    def zero() -> "Twist":
        return Twist(np.zeros(3), np.zeros(3))

    @staticmethod
    def from_vector(v) -> "Twist":
        a = np.asarray(v, dtype=float)
        if a.shape != (6,):
            raise ValueError(f"twist vector must have shape (6,), got {a.shape}")
        return Twist(a[:3], a[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


@dataclass(frozen=True)
class Wrench:
    """Spatial force [f; tau], force in N, torque in N*m."""

    force: Vector3 = field(default_factory=lambda: np.zeros(3))
    torque: Vector3 = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "force", _as_vec3(self.force, "force"))
        object.__setattr__(self, "torque", _as_vec3(self.torque, "torque"))

    @staticmethod
    def zero() -> "Wrench":
        return Wrench(np.zeros(3), np.zeros(3))

    @staticmethod
    def from_vector(v) -> "Wrench":
        a = np.asarray(v, dtype=float)
        if a.shape != (6,):
            raise ValueError(f"wrench vector must have shape (6,), got {a.shape}")
        return Wrench(a[:3], a[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])


def adjoint(transform: RigidTransform) -> np.ndarray:
    """6x6 adjoint mapping child-frame twists [v; w] into the parent frame.

    Ad = [[R, skew(p) R], [0, R]] for transform (R, p).
    """
    r = transform.rotation
    p = transform.translation
    ad = np.zeros((6, 6))
    ad[:3, :3] = r
    ad[:3, 3:] = skew(p) @ r
    ad[3:, 3:] = r
    return ad


def rotation_exp(rotvec) -> Matrix3:
    """Rodrigues formula: rotation matrix for an axis-angle vector."""
    w = _as_vec3(rotvec, "rotvec")
    theta = float(np.linalg.norm(w))
    if theta < 1e-12:
        return np.eye(3) + skew(w)  # first-order term keeps tiny vectors exact enough
    k = skew(w / theta)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def rotation_log(rotation) -> Vector3:
    """Axis-angle vector of a rotation matrix, with angle in [0, pi].

    At exactly pi the axis sign is ambiguous; the convention here picks the
    axis whose first nonzero component is positive.
    """
    r = _check_rotation(rotation, "rotation")
    cos_theta = float(np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0))
    theta = float(np.arccos(cos_theta))
    if theta < 1e-10:
        # Skew part already carries the infinitesimal rotation vector.
        return np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]) / 2.0
    if theta > np.pi - 1e-6:
        # sin(theta) ~ 0: recover the axis from the symmetric part instead.
        b = (r + np.eye(3)) / 2.0
        axis = b[:, int(np.argmax(np.diag(b)))]
        axis = axis / np.linalg.norm(axis)
        for c in axis:
            if abs(c) > 1e-12:
                if c < 0.0:
                    axis = -axis
                break
        return theta * axis
    axis = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return theta / (2.0 * np.sin(theta)) * axis


def rotation_from_normal(normal) -> Matrix3:
    """Rotation whose third row is the unit normal.

    Conjugating diag(0, 0, 1) by this matrix projects onto the normal axis.
    The in-plane axes are chosen deterministically from the world x axis
    (world y when the normal is nearly parallel to x).
    """
    n = _as_vec3(normal, "normal")
    norm = float(np.linalg.norm(n))
    if norm < 1e-12:
        raise ValueError("normal must be nonzero")
    n = n / norm
    seed = np.array([1.0, 0.0, 0.0])
    if abs(float(n @ seed)) > 0.9:
        seed = np.array([0.0, 1.0, 0.0])
    x_axis = seed - (seed @ n) * n
    x_axis = x_axis / np.linalg.norm(x_axis)
    y_axis = np.cross(n, x_axis)
    return np.vstack([x_axis, y_axis, n])


@dataclass(frozen=True)
class MotionSpec:
    """Complementary selection matrices splitting a task twist into the
    operator's lateral subspace and the controller's axial subspace."""

    k_lateral: np.ndarray  # 6x6, translational block projects onto the tangent plane
    k_axial: np.ndarray  # 6x6, translational block projects onto the normal axis

    def __post_init__(self) -> None:
        for name in ("k_lateral", "k_axial"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.shape != (6, 6):
                raise ValueError(f"{name} must be 6x6")
            object.__setattr__(self, name, m)


def motion_spec(normal_rotation) -> MotionSpec:
    """Build the lateral/axial selection matrices for a tissue-normal rotation.

    The translational blocks are R^T diag(1,1,0) R and R^T diag(0,0,1) R; the
    rotational block of the lateral matrix is the identity (orientation stays
    with the operator) and that of the axial matrix is zero.
    """
    r = _check_rotation(normal_rotation, "normal_rotation")
    sigma_lat = np.diag([1.0, 1.0, 0.0])
    sigma_ax = np.diag([0.0, 0.0, 1.0])
    k_lat = np.zeros((6, 6))
    k_ax = np.zeros((6, 6))
    k_lat[:3, :3] = r.T @ sigma_lat @ r
    k_lat[3:, 3:] = np.eye(3)
    k_ax[:3, :3] = r.T @ sigma_ax @ r
    return MotionSpec(k_lateral=k_lat, k_axial=k_ax)
