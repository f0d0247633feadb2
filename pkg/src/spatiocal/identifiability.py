"""Identifiability (local weak observability) analysis of the
calibration parameters from trajectory excitation.

Stacks gradients of the zeroth-order Lie derivative of the modified
velocity measurement at several sample times and checks the column rank
of the resulting 3m x 8 matrix. Column blocks, in order: extrinsic
translation (3), extrinsic rotation (3), scale (1), temporal offset (1).
All functions are pure over immutable samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooFewSamples
from .geometry import cross3, left_jacobian_so3, log_so3, skew
from .spline import RotationSpline, TranslationSpline

RANK_RTOL = 1e-8
DEGENERATE_EPS = 1e-6
WEAK_EXCITATION_SV = 1e-3

NO_ROTATION = "no rotation"
NO_TRANSLATION = "no translation"
NO_ACCELERATION = "no linear acceleration"
SINGLE_ROTATION_AXIS = "single rotation axis"
SINGLE_TRANSLATION_DIRECTION = "single translation direction"


@dataclass(frozen=True)
class MotionSample:
    """Instantaneous motion and candidate calibration at one time."""

    t: float
    v: np.ndarray  # radar velocity in the radar frame, m/s
    vdot: np.ndarray  # its time derivative, m/s^2
    omega: np.ndarray  # camera angular rate in the camera frame, rad/s
    R_cr: np.ndarray
    r_rc: np.ndarray
    alpha: float


@dataclass(frozen=True)
class IdentifiabilityReport:
    matrix: np.ndarray  # (3m, 8)
    singular_values: np.ndarray
    rank: int
    min_singular_value: float
    identifiable: bool
    degenerate_flags: tuple[str, ...] = ()
    n_samples: int = 0

    @property
    def verdict(self) -> str:
        return "identifiable" if self.identifiable else "not identifiable"


def modified_measurement(s: MotionSample) -> np.ndarray:
    """Scaled camera-frame linear velocity implied by the sample."""
    return s.alpha * (s.R_cr @ s.v - cross3(s.omega, s.r_rc))


def lie_gradient_row(s: MotionSample) -> np.ndarray:
    """3x8 gradient block of the zeroth-order Lie derivative.

    The extrinsic rotation block uses the rotation-vector chart
    R_cr = exp(phi^), whence the left Jacobian J(phi).
    """
    Rv = s.R_cr @ s.v
    J = left_jacobian_so3(log_so3(s.R_cr))
    row = np.empty((3, 8))
    row[:, 0:3] = -s.alpha * skew(s.omega)
    row[:, 3:6] = -s.alpha * skew(Rv) @ J
    row[:, 6] = Rv - cross3(s.omega, s.r_rc)
    row[:, 7] = s.alpha * (s.R_cr @ s.vdot)
    return row


def degenerate_motion_check(samples) -> list[str]:
    """Names of the degenerate-motion conditions the samples violate."""
    samples = list(samples)
    if len(samples) < 2:
        raise TooFewSamples("degenerate motion check needs >= 2 samples")
    omegas = np.array([s.omega for s in samples])
    vs = np.array([s.v for s in samples])
    vdots = np.array([s.vdot for s in samples])
    eps = DEGENERATE_EPS
    flags = []
    omega_max = float(np.linalg.norm(omegas, axis=1).max())
    v_max = float(np.linalg.norm(vs, axis=1).max())
    if omega_max < eps:
        flags.append(NO_ROTATION)
    if v_max < eps:
        flags.append(NO_TRANSLATION)
    if float(np.linalg.norm(vdots, axis=1).max()) < eps:
        flags.append(NO_ACCELERATION)
    if omega_max >= eps and _pairwise_cross_max(omegas) < eps * omega_max**2:
        flags.append(SINGLE_ROTATION_AXIS)
    if v_max >= eps and _pairwise_cross_max(vs) < eps * v_max**2:
        flags.append(SINGLE_TRANSLATION_DIRECTION)
    return flags


def _pairwise_cross_max(vecs: np.ndarray) -> float:
    """Largest ||a x b|| over all vector pairs, broadcast in one shot."""
    c = np.cross(vecs[:, None, :], vecs[None, :, :])
    return float(np.sqrt((c * c).sum(axis=-1)).max())


def build_identifiability_matrix(samples) -> IdentifiabilityReport:
    """Stack gradient rows and rank the result via SVD.

    Rank tolerance is relative (sigma_max * 1e-8) since the entries
    scale with motion magnitude; the smallest singular value doubles as
    an excitation score.
    """
    samples = list(samples)
    if len(samples) < 3:
        raise TooFewSamples(f"need >= 3 motion samples, got {len(samples)}")
    O = np.vstack([lie_gradient_row(s) for s in samples])
    svals = np.linalg.svd(O, compute_uv=False)
    smax = float(svals[0]) if svals.size else 0.0
    rank = int((svals > smax * RANK_RTOL).sum()) if smax > 0 else 0
    flags = tuple(degenerate_motion_check(samples))
    return IdentifiabilityReport(
        matrix=O,
        singular_values=svals,
        rank=rank,
        min_singular_value=float(svals[-1]) if svals.size else 0.0,
        identifiable=rank == 8,
        degenerate_flags=flags,
        n_samples=len(samples),
    )


def motion_sample_from_splines(
    trans: TranslationSpline,
    rot: RotationSpline,
    t: float,
    R_cr: np.ndarray,
    r_rc: np.ndarray,
    alpha: float,
) -> MotionSample:
    """Sample radar/camera velocities from a trajectory spline pair."""
    r, dr, ddr = trans.evaluate(t)
    _, omega_r, domega_r = rot.evaluate(t, with_accel=True)
    v = -(dr + cross3(omega_r, r))
    vdot = -(ddr + cross3(domega_r, r) + cross3(omega_r, dr))
    return MotionSample(
        t=t, v=v, vdot=vdot, omega=R_cr @ omega_r, R_cr=R_cr, r_rc=np.asarray(r_rc),
        alpha=alpha,
    )


def trajectory_excitation_scan(
    trans: TranslationSpline,
    rot: RotationSpline,
    R_cr: np.ndarray,
    r_rc: np.ndarray,
    alpha: float,
    sample_rate: float = 10.0,
) -> IdentifiabilityReport:
    """Sample the spline pair at the given rate and rank the stacked
    identifiability matrix. Used as the solver precheck and as a CLI
    diagnostic."""
    lo, hi = trans.domain
    times = np.arange(lo, hi - 1e-9, 1.0 / sample_rate)
    samples = [
        motion_sample_from_splines(trans, rot, float(t), R_cr, r_rc, alpha)
        for t in times
    ]
    return build_identifiability_matrix(samples)
