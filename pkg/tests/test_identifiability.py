import numpy as np
import pytest

from helpers import ALPHA_TRUE, R_CR_TRUE, R_RC_TRUE, make_truth_splines
from spatiocal.errors import TooFewSamples
from spatiocal.geometry import exp_so3, log_so3, skew
from spatiocal.identifiability import (
    NO_ACCELERATION,
    NO_ROTATION,
    NO_TRANSLATION,
    SINGLE_ROTATION_AXIS,
    SINGLE_TRANSLATION_DIRECTION,
    MotionSample,
    build_identifiability_matrix,
    degenerate_motion_check,
    lie_gradient_row,
    modified_measurement,
    trajectory_excitation_scan,
)

rng = np.random.default_rng(31)


def sample(t=0.0, v=None, vdot=None, omega=None, R_cr=None, r_rc=None, alpha=1.2):
    return MotionSample(
        t=t,
        v=np.zeros(3) if v is None else np.asarray(v, float),
        vdot=np.zeros(3) if vdot is None else np.asarray(vdot, float),
        omega=np.zeros(3) if omega is None else np.asarray(omega, float),
        R_cr=np.eye(3) if R_cr is None else R_cr,
        r_rc=np.zeros(3) if r_rc is None else np.asarray(r_rc, float),
        alpha=alpha,
    )


def random_samples(n, seed=0):
    r = np.random.default_rng(seed)
    return [
        sample(
            t=0.1 * i,
            v=r.normal(size=3),
            vdot=r.normal(size=3),
            omega=r.normal(size=3),
            R_cr=R_CR_TRUE,
            r_rc=R_RC_TRUE,
            alpha=ALPHA_TRUE,
        )
        for i in range(n)
    ]


class TestGradientRow:
    def test_hand_computed_identity_extrinsics(self):
        v = np.array([1.0, 0.5, -0.2])
        vdot = np.array([0.2, -0.1, 0.3])
        om = np.array([0.1, 0.4, -0.3])
        r_rc = np.array([0.05, -0.1, 0.02])
        a = 1.3
        row = lie_gradient_row(sample(v=v, vdot=vdot, omega=om, r_rc=r_rc, alpha=a))
        assert np.allclose(row[:, 0:3], -a * skew(om))
        assert np.allclose(row[:, 3:6], -a * skew(v))
        assert np.allclose(row[:, 6], v - np.cross(om, r_rc))
        assert np.allclose(row[:, 7], a * vdot)

    def test_against_finite_differences(self):
        s = random_samples(1, seed=7)[0]
        row = lie_gradient_row(s)
        eps = 1e-7
        phi0 = log_so3(s.R_cr)

        def meas(r_rc, phi, alpha, v):
            R = exp_so3(phi)
            return alpha * (R @ v - np.cross(s.omega, r_rc))

        for c in range(3):
            d = eps * np.eye(3)[c]
            fd = (
                meas(s.r_rc + d, phi0, s.alpha, s.v)
                - meas(s.r_rc - d, phi0, s.alpha, s.v)
            ) / (2 * eps)
            assert np.allclose(row[:, c], fd, atol=1e-6)
        for c in range(3):
            d = eps * np.eye(3)[c]
            fd = (
                meas(s.r_rc, phi0 + d, s.alpha, s.v)
                - meas(s.r_rc, phi0 - d, s.alpha, s.v)
            ) / (2 * eps)
            assert np.allclose(row[:, 3 + c], fd, atol=1e-5)
        fd = (
            meas(s.r_rc, phi0, s.alpha + eps, s.v)
            - meas(s.r_rc, phi0, s.alpha - eps, s.v)
        ) / (2 * eps)
        assert np.allclose(row[:, 6], fd, atol=1e-6)
        # Temporal offset shifts only the radar velocity sample.
        fd = (
            meas(s.r_rc, phi0, s.alpha, s.v + eps * s.vdot)
            - meas(s.r_rc, phi0, s.alpha, s.v - eps * s.vdot)
        ) / (2 * eps)
        assert np.allclose(row[:, 7], fd, atol=1e-6)

    def test_modified_measurement(self):
        s = random_samples(1, seed=9)[0]
        ref = s.alpha * (s.R_cr @ s.v - np.cross(s.omega, s.r_rc))
        assert np.allclose(modified_measurement(s), ref)


class TestRank:
    def test_excited_motion_rank_8(self):
        rep = build_identifiability_matrix(random_samples(12, seed=1))
        assert rep.rank == 8
        assert rep.identifiable
        assert rep.degenerate_flags == ()

    def test_stationary(self):
        rep = build_identifiability_matrix([sample(t=0.1 * i) for i in range(6)])
        assert rep.rank < 8
        assert not rep.identifiable
        assert NO_ROTATION in rep.degenerate_flags
        assert NO_TRANSLATION in rep.degenerate_flags

    def test_constant_velocity(self):
        v = np.array([1.0, 0.2, -0.4])
        rep = build_identifiability_matrix(
            [sample(t=0.1 * i, v=v) for i in range(8)]
        )
        assert rep.rank < 8
        assert NO_ROTATION in rep.degenerate_flags
        assert NO_ACCELERATION in rep.degenerate_flags

    def test_single_rotation_axis(self):
        axis = np.array([0.0, 0.0, 1.0])
        r = np.random.default_rng(2)
        samples = [
            sample(
                t=0.1 * i,
                v=r.normal(size=3),
                vdot=r.normal(size=3),
                omega=(0.5 + 0.3 * np.sin(i)) * axis,
                r_rc=R_RC_TRUE,
            )
            for i in range(10)
        ]
        rep = build_identifiability_matrix(samples)
        assert rep.rank < 8
        assert SINGLE_ROTATION_AXIS in rep.degenerate_flags

    def test_single_translation_direction(self):
        d = np.array([1.0, 0.0, 0.0])
        r = np.random.default_rng(3)
        samples = [
            sample(
                t=0.1 * i,
                v=(1.0 + 0.4 * np.sin(i)) * d,
                vdot=0.4 * np.cos(i) * d,
                omega=r.normal(size=3),
                r_rc=R_RC_TRUE,
            )
            for i in range(10)
        ]
        rep = build_identifiability_matrix(samples)
        assert rep.rank < 8
        assert SINGLE_TRANSLATION_DIRECTION in rep.degenerate_flags

    def test_constant_acceleration_still_identifiable(self):
        # Constant nonzero vdot with varied omega and v keeps full rank.
        vdot = np.array([0.3, -0.2, 0.5])
        r = np.random.default_rng(4)
        samples = [
            sample(
                t=0.1 * i,
                v=r.normal(size=3),
                vdot=vdot,
                omega=r.normal(size=3),
                R_cr=R_CR_TRUE,
                r_rc=R_RC_TRUE,
            )
            for i in range(10)
        ]
        rep = build_identifiability_matrix(samples)
        assert rep.rank == 8
        assert rep.degenerate_flags == ()

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            build_identifiability_matrix(random_samples(2))
        with pytest.raises(TooFewSamples):
            degenerate_motion_check(random_samples(1))

    def test_matrix_shape_and_svals(self):
        rep = build_identifiability_matrix(random_samples(5, seed=6))
        assert rep.matrix.shape == (15, 8)
        assert rep.singular_values.shape == (8,)
        assert rep.n_samples == 5
        assert rep.min_singular_value == rep.singular_values[-1]
        assert rep.verdict == "identifiable"


class TestTrajectoryScan:
    def test_excited_trajectory(self):
        trans, rot = make_truth_splines(8.0, seed=5)
        rep = trajectory_excitation_scan(
            trans, rot, R_CR_TRUE, R_RC_TRUE, ALPHA_TRUE, sample_rate=10.0
        )
        assert rep.identifiable
        assert rep.min_singular_value > 1e-3

    def test_constant_pose_trajectory(self):
        from spatiocal.spline import KnotGrid, RotationSpline, TranslationSpline

        g = KnotGrid(0.0, 0.1, 40)
        trans = TranslationSpline(g, np.tile([0.0, 0.0, 2.0], (40, 1)))
        rot = RotationSpline(g, np.tile(np.eye(3), (40, 1, 1)))
        rep = trajectory_excitation_scan(
            trans, rot, R_CR_TRUE, R_RC_TRUE, ALPHA_TRUE
        )
        assert not rep.identifiable
        assert NO_ROTATION in rep.degenerate_flags
