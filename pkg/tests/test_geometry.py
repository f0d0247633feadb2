import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation as ScipyRotation

from spatiocal.geometry import (
    RigidTransform,
    exp_se3,
    exp_so3,
    left_jacobian_inv_so3,
    left_jacobian_so3,
    log_se3,
    log_so3,
    project_to_so3,
    quat_from_rotation,
    rotation_angle,
    rotation_from_quat,
    rotation_from_rpy,
    rpy_from_rotation,
    skew,
    slerp,
)

rng = np.random.default_rng(42)


def random_axis_angle(draw_angle):
    v = rng.normal(size=3)
    return draw_angle * v / np.linalg.norm(v)


vec3 = st.lists(
    st.floats(-10, 10, allow_nan=False, allow_infinity=False), min_size=3, max_size=3
).map(np.array)


class TestSkewExpLog:
    def test_skew_antisymmetric_and_cross(self):
        v = np.array([1.0, -2.0, 3.0])
        K = skew(v)
        assert np.allclose(K, -K.T)
        w = np.array([0.5, 0.2, -0.7])
        assert np.allclose(K @ w, np.cross(v, w))

    def test_exp_matches_scipy(self):
        for _ in range(50):
            phi = random_axis_angle(rng.uniform(1e-8, 3.1))
            R = exp_so3(phi)
            R_ref = ScipyRotation.from_rotvec(phi).as_matrix()
            assert np.allclose(R, R_ref, atol=1e-12)

    def test_log_matches_scipy(self):
        for _ in range(50):
            phi = random_axis_angle(rng.uniform(1e-6, 3.1))
            R = exp_so3(phi)
            assert np.allclose(log_so3(R), ScipyRotation.from_matrix(R).as_rotvec(),
                               atol=1e-9)

    @given(st.floats(1e-12, 3.14), st.integers(0, 10_000))
    @settings(max_examples=200, deadline=None)
    def test_exp_log_roundtrip(self, angle, seed):
        r = np.random.default_rng(seed)
        v = r.normal(size=3)
        phi = angle * v / np.linalg.norm(v)
        assert np.allclose(log_so3(exp_so3(phi)), phi, atol=1e-8)

    def test_small_angle_series(self):
        phi = np.array([1e-9, -2e-9, 0.5e-9])
        R = exp_so3(phi)
        assert np.allclose(R, np.eye(3) + skew(phi), atol=1e-15)
        assert np.allclose(log_so3(R), phi, atol=1e-15)

    def test_log_at_identity(self):
        assert np.allclose(log_so3(np.eye(3)), 0.0)

    def test_log_near_pi(self):
        for _ in range(20):
            phi = random_axis_angle(math.pi - 1e-7)
            out = log_so3(exp_so3(phi))
            # Axis sign may flip at exactly pi; compare rotations.
            assert rotation_angle(exp_so3(out) @ exp_so3(phi).T) < 1e-5

    def test_log_at_exactly_pi(self):
        R = np.diag([1.0, -1.0, -1.0])  # rotation by pi about x
        phi = log_so3(R)
        assert np.isclose(np.linalg.norm(phi), math.pi)
        assert np.allclose(exp_so3(phi), R, atol=1e-12)

    def test_exp_orthonormal(self):
        for _ in range(20):
            R = exp_so3(random_axis_angle(rng.uniform(0, 3.1)))
            assert np.allclose(R @ R.T, np.eye(3), atol=1e-13)
            assert np.isclose(np.linalg.det(R), 1.0)


class TestJacobians:
    def test_left_jacobian_inverse_pair(self):
        for _ in range(30):
            phi = random_axis_angle(rng.uniform(1e-6, 3.0))
            J = left_jacobian_so3(phi)
            assert np.allclose(J @ left_jacobian_inv_so3(phi), np.eye(3), atol=1e-10)

    def test_left_jacobian_derivative_property(self):
        # exp(phi + J_l(phi)^-1... ) first-order: exp(dphi) exp(phi) ~
        # exp(phi + J_l(phi) ... ); check d/dt exp(phi + t d) = via FD.
        phi = np.array([0.3, -0.6, 0.2])
        d = np.array([0.01, 0.02, -0.015])
        J = left_jacobian_so3(phi)
        lhs = exp_so3(phi + d)
        rhs = exp_so3(J @ d) @ exp_so3(phi)
        assert np.allclose(lhs, rhs, atol=1e-4)

    def test_small_angle_limit(self):
        assert np.allclose(left_jacobian_so3(np.zeros(3)), np.eye(3))
        assert np.allclose(left_jacobian_inv_so3(np.zeros(3)), np.eye(3))


class TestQuatRpy:
    def test_quat_roundtrip(self):
        for _ in range(50):
            R = exp_so3(random_axis_angle(rng.uniform(0, 3.1)))
            q = quat_from_rotation(R)
            assert q[0] >= 0
            assert np.isclose(np.linalg.norm(q), 1.0)
            assert np.allclose(rotation_from_quat(q), R, atol=1e-12)

    def test_quat_matches_scipy(self):
        R = exp_so3(np.array([0.4, -0.2, 1.1]))
        q = quat_from_rotation(R)  # wxyz
        q_ref = ScipyRotation.from_matrix(R).as_quat()  # xyzw
        ref = np.array([q_ref[3], q_ref[0], q_ref[1], q_ref[2]])
        if ref[0] < 0:
            ref = -ref
        assert np.allclose(q, ref, atol=1e-12)

    def test_rpy_roundtrip(self):
        for _ in range(50):
            rpy = rng.uniform([-3, -1.4, -3], [3, 1.4, 3])
            R = rotation_from_rpy(rpy)
            assert np.allclose(rpy_from_rotation(R), rpy, atol=1e-10)

    def test_rpy_convention_z_then_y_then_x(self):
        # R = Rz(yaw) Ry(pitch) Rx(roll)
        rpy = np.array([0.3, -0.5, 1.2])
        Rx = exp_so3(np.array([rpy[0], 0, 0]))
        Ry = exp_so3(np.array([0, rpy[1], 0]))
        Rz = exp_so3(np.array([0, 0, rpy[2]]))
        assert np.allclose(rotation_from_rpy(rpy), Rz @ Ry @ Rx, atol=1e-12)


class TestRigidTransform:
    def test_compose_inverse(self):
        for _ in range(20):
            T1 = RigidTransform(exp_so3(random_axis_angle(1.0)), rng.normal(size=3))
            T2 = RigidTransform(exp_so3(random_axis_angle(2.0)), rng.normal(size=3))
            T = T1.compose(T2)
            p = rng.normal(size=3)
            assert np.allclose(T.apply(p), T1.apply(T2.apply(p)), atol=1e-12)
            I = T.compose(T.inverse())
            assert np.allclose(I.rotation, np.eye(3), atol=1e-12)
            assert np.allclose(I.translation, 0.0, atol=1e-12)

    def test_identity(self):
        T = RigidTransform.identity()
        p = np.array([1.0, 2.0, 3.0])
        assert np.allclose(T.apply(p), p)

    def test_se3_exp_log_roundtrip(self):
        for _ in range(30):
            xi = rng.normal(size=6) * np.array([1, 1, 1, 0.8, 0.8, 0.8])
            T = exp_se3(xi)
            assert np.allclose(log_se3(T), xi, atol=1e-9)

    def test_as_matrix(self):
        T = RigidTransform(exp_so3(np.array([0.1, 0.2, 0.3])), np.array([1.0, 2, 3]))
        M = T.as_matrix()
        assert M.shape == (4, 4)
        assert np.allclose(M[:3, :3], T.rotation)
        assert np.allclose(M[:3, 3], T.translation)
        assert np.allclose(M[3], [0, 0, 0, 1])


class TestProjectSlerp:
    def test_project_recovers_drifted(self):
        R = exp_so3(np.array([0.5, -0.1, 0.8]))
        drifted = R + 1e-6 * rng.normal(size=(3, 3))
        P = project_to_so3(drifted)
        assert np.allclose(P @ P.T, np.eye(3), atol=1e-12)
        assert rotation_angle(P @ R.T) < 1e-5

    def test_slerp_endpoints_and_midpoint(self):
        R0 = exp_so3(np.array([0.1, 0.0, 0.0]))
        R1 = exp_so3(np.array([0.5, 0.0, 0.0]))
        assert np.allclose(slerp(R0, R1, 0.0), R0)
        assert np.allclose(slerp(R0, R1, 1.0), R1)
        assert np.allclose(slerp(R0, R1, 0.5), exp_so3(np.array([0.3, 0, 0])),
                           atol=1e-12)


def test_rotation_angle():
    assert rotation_angle(np.eye(3)) == 0.0
    assert np.isclose(rotation_angle(exp_so3(np.array([0, 1.3, 0]))), 1.3)
