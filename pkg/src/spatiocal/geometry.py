"""Rotation and rigid-transform primitives on SO(3)/SE(3).

Rotations are plain 3x3 numpy arrays. All maps use closed forms with
series branches below ``SMALL_ANGLE`` to avoid cancellation in the
sin/cos ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Below this rotation angle (rad) the Rodrigues coefficients switch to
# 4-term Taylor series.
SMALL_ANGLE = 1e-6


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that skew(v) @ s == cross(v, s)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product of two 3-vectors.

    np.cross carries heavy axis-normalization overhead per call; the
    open-coded form is an order of magnitude faster on single vectors,
    which matters in the per-measurement spline and residual loops.
    """
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def exp_so3(phi: np.ndarray) -> np.ndarray:
    """Exponential map so(3) -> SO(3) (Rodrigues formula)."""
    phi = np.asarray(phi, dtype=float)
    theta2 = float(phi @ phi)
    theta = math.sqrt(theta2)
    if theta < SMALL_ANGLE:
        # sin(t)/t and (1-cos(t))/t^2 as series in t^2
        a = 1.0 - theta2 / 6.0 * (1.0 - theta2 / 20.0 * (1.0 - theta2 / 42.0))
        b = 0.5 * (1.0 - theta2 / 12.0 * (1.0 - theta2 / 30.0 * (1.0 - theta2 / 56.0)))
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    K = skew(phi)
    return np.eye(3) + a * K + b * (K @ K)


def log_so3(R: np.ndarray) -> np.ndarray:
    """Logarithm map SO(3) -> so(3), angle in [0, pi].

    At exactly pi the axis sign is ambiguous; we pick the axis with the
    largest diagonal element of R and make its first nonzero component
    positive (deterministic tie-break).
    """
    R = np.asarray(R, dtype=float)
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = float(np.linalg.norm(w))  # sin(theta)
    c = 0.5 * (np.trace(R) - 1.0)  # cos(theta)
    c = min(1.0, max(-1.0, c))
    theta = math.atan2(s, c)
    if c > -0.999999:
        if theta < SMALL_ANGLE:
            return w * (1.0 + theta * theta / 6.0 + 7.0 * theta**4 / 360.0)
        return w * (theta / s)
    # Near pi: recover axis from the symmetric part.
    B = 0.5 * (R + np.eye(3))
    diag = np.diag(B)
    k = int(np.argmax(diag))
    axis = B[:, k] / math.sqrt(max(diag[k], 1e-15))
    n = float(np.linalg.norm(axis))
    axis = axis / n
    # Canonical sign: first nonzero component positive.
    for comp in axis:
        if abs(comp) > 1e-12:
            if comp < 0.0:
                axis = -axis
            break
    return theta * axis


def left_jacobian_so3(phi: np.ndarray) -> np.ndarray:
    """Left Jacobian J(phi) of SO(3).

    Satisfies exp((J(phi) d)^) exp(phi^) ~= exp((phi + d)^) to first
    order in d.
    """
    phi = np.asarray(phi, dtype=float)
    theta2 = float(phi @ phi)
    theta = math.sqrt(theta2)
    K = skew(phi)
    if theta < SMALL_ANGLE:
        b = 0.5 * (1.0 - theta2 / 12.0 * (1.0 - theta2 / 30.0 * (1.0 - theta2 / 56.0)))
        # (t - sin t)/t^3 series
        cc = (1.0 / 6.0) * (1.0 - theta2 / 20.0 * (1.0 - theta2 / 42.0))
    else:
        b = (1.0 - math.cos(theta)) / theta2
        cc = (theta - math.sin(theta)) / (theta2 * theta)
    return np.eye(3) + b * K + cc * (K @ K)


def left_jacobian_inv_so3(phi: np.ndarray) -> np.ndarray:
    """Inverse of the SO(3) left Jacobian (valid for |phi| < 2*pi)."""
    phi = np.asarray(phi, dtype=float)
    theta2 = float(phi @ phi)
    theta = math.sqrt(theta2)
    K = skew(phi)
    if theta < SMALL_ANGLE:
        e = 1.0 / 12.0 * (1.0 + theta2 / 60.0 * (1.0 + theta2 / 42.0))
    else:
        half = 0.5 * theta
        e = (1.0 - half * math.cos(half) / math.sin(half)) / theta2
    return np.eye(3) - 0.5 * K + e * (K @ K)


def project_to_so3(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (Frobenius) via SVD; fixes drift after
    long composition chains."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, float(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def slerp(R0: np.ndarray, R1: np.ndarray, w: float) -> np.ndarray:
    """Geodesic interpolation R0 exp(w log(R0^T R1))."""
    return R0 @ exp_so3(w * log_so3(R0.T @ R1))


def rotation_angle(R: np.ndarray) -> float:
    """Rotation angle of R in [0, pi]."""
    c = 0.5 * (np.trace(R) - 1.0)
    return math.acos(min(1.0, max(-1.0, c)))


def quat_from_rotation(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s,
             (R[1, 0] - R[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def rotation_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix from a (w, x, y, z) quaternion (normalized here)."""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rpy_from_rotation(R: np.ndarray) -> np.ndarray:
    """Roll-pitch-yaw (theta_x, theta_y, theta_z) with R = Rz @ Ry @ Rx."""
    pitch = math.asin(min(1.0, max(-1.0, -R[2, 0])))
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return np.array([roll, pitch, yaw])


def rotation_from_rpy(rpy: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rpy_from_rotation`."""
    rx, ry, rz = rpy
    return exp_so3([0, 0, rz]) @ exp_so3([0, ry, 0]) @ exp_so3([rx, 0, 0])


@dataclass(frozen=True)
class RigidTransform:
    """Rigid transform T = (R, t): maps p -> R @ p + t.

    Immutable; safe for concurrent reads.
    """

    rotation: np.ndarray
    translation: np.ndarray

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def apply(self, p: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T


def log_se3(T: RigidTransform) -> np.ndarray:
    """SE(3) log as a 6-vector [rho, phi] (translation block first)."""
    phi = log_so3(T.rotation)
    rho = left_jacobian_inv_so3(phi) @ T.translation
    return np.concatenate([rho, phi])


def exp_se3(xi: np.ndarray) -> RigidTransform:
    """Inverse of :func:`log_se3`."""
    rho = np.asarray(xi[:3], dtype=float)
    phi = np.asarray(xi[3:], dtype=float)
    return RigidTransform(exp_so3(phi), left_jacobian_so3(phi) @ rho)
