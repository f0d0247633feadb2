"""Shared synthesis utilities for the test suite."""

from __future__ import annotations

import numpy as np

from spatiocal.egovel import EgoVelocityMeasurement
from spatiocal.geometry import exp_so3
from spatiocal.residuals import CalibrationState, CameraPoseMeasurement
from spatiocal.spline import KnotGrid, RotationSpline, TranslationSpline

R_CR_TRUE = exp_so3(np.array([-1.62, 0.02, -3.0]))
R_RC_TRUE = np.array([-0.0048, 0.122, -0.0342])
ALPHA_TRUE = 1.2
TAU_TRUE = -0.058


def make_truth_splines(duration, dt=0.1, k=4, seed=0, center=(0.0, 0.0, 2.0)):
    """Sinusoidal-control-point spline pair with randomized phases."""
    rng = np.random.default_rng(seed)
    n = k + int(np.floor(duration / dt))
    grid = KnotGrid(0.0, dt, n)
    amps = np.array([0.5, 0.4, 0.3])
    freqs = np.array([0.3, 0.5, 0.7])
    ph = rng.uniform(0, 2 * np.pi, 3)
    ramps = np.array([0.4, 0.3, 0.35])
    rfreqs = np.array([0.4, 0.6, 0.35])
    rph = rng.uniform(0, 2 * np.pi, 3)
    knots = np.array([grid.knot(i) for i in range(n)])
    tcp = np.stack(
        [amps * np.sin(2 * np.pi * freqs * t + ph) + np.asarray(center) for t in knots]
    )
    rcp = np.stack([exp_so3(ramps * np.sin(2 * np.pi * rfreqs * t + rph)) for t in knots])
    return TranslationSpline(grid, tcp, k), RotationSpline(grid, rcp, k)


def synth_measurements(
    trans,
    rot,
    R_cr=R_CR_TRUE,
    r_rc=R_RC_TRUE,
    alpha=ALPHA_TRUE,
    tau=TAU_TRUE,
    sigma_r=0.0,
    sigma_c=0.0,
    radar_rate=20.0,
    camera_rate=30.0,
    edge=0.6,
    seed=0,
):
    """Exact (optionally noise-perturbed) measurements from the splines."""
    rng = np.random.default_rng(seed)
    lo, hi = trans.domain
    camera = []
    for t in np.arange(lo, hi - 1e-9, 1.0 / camera_rate):
        r, _, _ = trans.evaluate(t)
        R_wr, _ = rot.evaluate(t)
        R_meas = R_cr @ R_wr.T
        t_meas = alpha * (R_cr @ r + r_rc)
        if sigma_c > 0:
            R_meas = exp_so3(rng.normal(0, sigma_c, 3)) @ R_meas
            t_meas = t_meas + rng.normal(0, sigma_c, 3)
        sc = max(sigma_c, 1e-4)
        camera.append(
            CameraPoseMeasurement(
                float(t), R_meas, t_meas, sc**2 * np.eye(3), sc**2 * np.eye(3)
            )
        )
    radar = []
    for t in np.arange(lo + edge, hi - edge, 1.0 / radar_rate):
        if not (lo <= t + tau < hi):
            continue
        r, dr, _ = trans.evaluate(t + tau)
        _, om = rot.evaluate(t + tau)
        h = -(dr + np.cross(om, r))
        if sigma_r > 0:
            h = h + rng.normal(0, sigma_r, 3)
        sr = max(sigma_r, 1e-4)
        radar.append(EgoVelocityMeasurement(float(t), h, sr**2 * np.eye(3)))
    return radar, camera


def truth_state(trans, rot):
    return CalibrationState(trans, rot, R_CR_TRUE, R_RC_TRUE, ALPHA_TRUE, TAU_TRUE)


def random_rotation(rng):
    return exp_so3(rng.uniform(-np.pi * 0.9, np.pi * 0.9) * _unit(rng))


def _unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)
