"""Weighted residuals of the batch calibration problem.

Frame bookkeeping: the rotation spline stores R_wr (radar to world) and
the translation spline stores r_r^wr, the world origin expressed in the
radar frame. With skew(omega) = R_wr^T dR_wr/dt, the body rate of the
rotation spline is exactly the angular velocity of the radar frame
relative to the world, expressed in the radar frame -- the quantity the
radar ego-velocity model needs. The temporal offset tau shifts only the
radar timestamps; the camera clock is the time reference.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .egovel import EgoVelocityMeasurement
from .errors import ParseError
from .geometry import RigidTransform, cross3, log_se3, log_so3, rotation_from_quat
from .spline import RotationSpline, TranslationSpline


@dataclass(frozen=True)
class CameraPoseMeasurement:
    """Scaled camera pose: R_cw and r_c^wc (world origin in the camera
    frame, scaled by the unknown monocular factor)."""

    timestamp: float
    rotation: np.ndarray  # (3, 3) R_cw
    translation: np.ndarray  # (3,) r_c^wc, arbitrary scale
    cov_rotation: np.ndarray  # (3, 3) rad^2
    cov_translation: np.ndarray  # (3, 3) scaled m^2


@dataclass(frozen=True)
class ExtrinsicPrior:
    """Prior on T_cr with isotropic translation / rotation sigmas."""

    transform: RigidTransform
    sigma_translation: float = 0.1  # m
    sigma_rotation: float = np.deg2rad(30.0)  # rad

    @property
    def covariance(self) -> np.ndarray:
        cov = np.zeros((6, 6))
        cov[:3, :3] = self.sigma_translation**2 * np.eye(3)
        cov[3:, 3:] = self.sigma_rotation**2 * np.eye(3)
        return cov


@dataclass(frozen=True)
class CalibrationState:
    """Decision variables of the batch problem."""

    trans_spline: TranslationSpline  # r_r^wr(t)
    rot_spline: RotationSpline  # R_wr(t)
    R_cr: np.ndarray
    r_rc: np.ndarray  # r_c^rc, radar origin in the camera frame
    alpha: float
    tau: float

    def extrinsic(self) -> RigidTransform:
        return RigidTransform(self.R_cr, np.asarray(self.r_rc, dtype=float))

    def replace(self, **kw) -> "CalibrationState":
        return replace(self, **kw)


def radar_velocity_residual(
    state: CalibrationState, m: EgoVelocityMeasurement
) -> tuple[np.ndarray, np.ndarray]:
    """e_v = h_r + dr(t+tau) + omega(t+tau) x r(t+tau)."""
    t = m.timestamp + state.tau
    r, dr, _ = state.trans_spline.evaluate(t)
    _, omega = state.rot_spline.evaluate(t)
    e = m.velocity + dr + cross3(omega, r)
    return e, m.covariance


def camera_rotation_residual(
    state: CalibrationState, m: CameraPoseMeasurement
) -> tuple[np.ndarray, np.ndarray]:
    """e_r = log(R_cw,meas R_wr(t) R_cr^T)."""
    R_wr, _ = state.rot_spline.evaluate(m.timestamp)
    e = log_so3(m.rotation @ R_wr @ state.R_cr.T)
    return e, m.cov_rotation


def camera_translation_residual(
    state: CalibrationState, m: CameraPoseMeasurement
) -> tuple[np.ndarray, np.ndarray]:
    """e_t = r_c^wc,meas - alpha (R_cr r(t) + r_c^rc).

    The scale factor multiplies the extrinsic lever arm as well; the
    estimated r_c^rc is reported as-is.
    """
    r, _, _ = state.trans_spline.evaluate(m.timestamp)
    e = m.translation - state.alpha * (state.R_cr @ r + state.r_rc)
    return e, m.cov_translation


def prior_residual(
    state: CalibrationState, p: ExtrinsicPrior
) -> tuple[np.ndarray, np.ndarray]:
    """e = log_se3(T_cr^-1 T_cr,prior), translation block first."""
    e = log_se3(state.extrinsic().inverse().compose(p.transform))
    return e, p.covariance


CAMERA_COLUMNS = ["t", "qw", "qx", "qy", "qz", "tx", "ty", "tz"]


def _cov_from_spec(spec, default_sigma: float) -> np.ndarray:
    if spec is None:
        return default_sigma**2 * np.eye(3)
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return float(arr) ** 2 * np.eye(3)
    if arr.shape == (3, 3):
        return arr
    raise ValueError(f"covariance spec must be a sigma scalar or 3x3 matrix, got {arr.shape}")


def load_camera_poses_csv(
    path,
    sidecar=None,
    default_sigma_rot: float = 1e-2,
    default_sigma_trans: float = 1e-2,
) -> list[CameraPoseMeasurement]:
    """Read camera pose measurements.

    Columns: t,qw,qx,qy,qz,tx,ty,tz where the quaternion encodes R_cw
    and the translation is r_c^wc (both the 'world in camera' pose the
    tracker reports). Covariances come from a JSON sidecar with keys
    ``default`` and optional ``per_row`` (0-based data row index), each
    holding ``cov_rot`` / ``cov_trans`` as a sigma scalar or 3x3 matrix.
    """
    path = Path(path)
    side = {}
    if sidecar is not None:
        with open(sidecar) as f:
            side = json.load(f)
    default = side.get("default", {})
    cov_rot_default = _cov_from_spec(default.get("cov_rot"), default_sigma_rot)
    cov_trans_default = _cov_from_spec(default.get("cov_trans"), default_sigma_trans)
    per_row = side.get("per_row", {})

    out: list[CameraPoseMeasurement] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:8]] != CAMERA_COLUMNS:
            raise ParseError(path, 1, f"expected header {','.join(CAMERA_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 8:
                raise ParseError(path, lineno, f"expected 8 columns, got {len(row)}")
            try:
                vals = [float(x) for x in row[:8]]
            except ValueError as e:
                raise ParseError(path, lineno, str(e)) from None
            t = vals[0]
            R = rotation_from_quat(np.array(vals[1:5]))
            trans = np.array(vals[5:8])
            override = per_row.get(str(lineno - 2), {})
            cov_r = (
                _cov_from_spec(override["cov_rot"], 0.0)
                if "cov_rot" in override
                else cov_rot_default
            )
            cov_t = (
                _cov_from_spec(override["cov_trans"], 0.0)
                if "cov_trans" in override
                else cov_trans_default
            )
            out.append(CameraPoseMeasurement(t, R, trans, cov_r, cov_t))
    out.sort(key=lambda m: m.timestamp)
    return out


def save_camera_poses_csv(path, measurements, sidecar=None) -> None:
    """Write poses; when `sidecar` is given, also write the covariance
    JSON with one per_row entry per measurement."""
    from .geometry import quat_from_rotation

    measurements = list(measurements)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CAMERA_COLUMNS)
        for m in measurements:
            q = quat_from_rotation(m.rotation)
            writer.writerow(
                [f"{m.timestamp:.9f}"]
                + [f"{x:.12g}" for x in q]
                + [f"{x:.12g}" for x in m.translation]
            )
    if sidecar is not None:
        per_row = {
            str(i): {
                "cov_rot": np.asarray(m.cov_rotation).tolist(),
                "cov_trans": np.asarray(m.cov_translation).tolist(),
            }
            for i, m in enumerate(measurements)
        }
        with open(sidecar, "w") as f:
            json.dump({"per_row": per_row}, f)
