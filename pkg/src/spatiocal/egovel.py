"""Radar ego-velocity estimation from single-scan Doppler detections.

Solves the linear least-squares problem over range-rate projections and
rejects outliers with an adaptive RANSAC loop. Per-scan computation is
stateless; scans may be processed in parallel with per-scan RNG streams.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometry, NoConsensus, ParseError, TooFewDetections

log = logging.getLogger(__name__)

MAX_CONDITION = 1e8


@dataclass(frozen=True)
class RadarDetection:
    """One radar target return (SI units, angles in radians)."""

    range_m: float
    azimuth: float
    elevation: float
    range_rate: float
    intensity: float | None = None


@dataclass(frozen=True)
class RadarScan:
    timestamp: float
    detections: tuple[RadarDetection, ...]


@dataclass(frozen=True)
class EgoVelocityMeasurement:
    """Solved radar ego-velocity with covariance and inlier statistics."""

    timestamp: float
    velocity: np.ndarray  # (3,) m/s, radar frame
    covariance: np.ndarray  # (3, 3) SPD, m^2/s^2
    n_inliers: int = 0
    n_outliers: int = 0


@dataclass(frozen=True)
class RansacConfig:
    inlier_threshold: float = 0.1  # m/s on the range-rate residual
    min_inliers: int = 15
    min_inlier_ratio: float = 0.5
    max_iterations: int = 200
    confidence: float = 0.99
    # Isotropic fallback sigma when the N=3 covariance is undefined.
    fallback_sigma: float = 0.05


def direction_vector(d: RadarDetection) -> np.ndarray:
    """Unit direction (cos(el)cos(az), cos(el)sin(az), sin(el))."""
    ce = math.cos(d.elevation)
    return np.array(
        [ce * math.cos(d.azimuth), ce * math.sin(d.azimuth), math.sin(d.elevation)]
    )


def solve_ego_velocity(
    detections, fallback_sigma: float = 0.05
) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares ego-velocity h and covariance from >= 3 detections.

    Minimizes ||H h - y||^2 with H rows the unit directions and y the
    range-rates. The covariance is the standard linear LS estimate
    sigma^2 (H^T H)^-1 with sigma^2 = e^T e / (N - 3); for exactly
    N = 3 that is undefined and an isotropic fallback is substituted.
    """
    detections = list(detections)
    n = len(detections)
    if n < 3:
        raise TooFewDetections(f"need >= 3 detections, got {n}")
    H = np.array([direction_vector(d) for d in detections])
    y = np.array([d.range_rate for d in detections])
    HtH = H.T @ H
    if np.linalg.matrix_rank(HtH, tol=1e-10) < 3 or np.linalg.cond(HtH) > MAX_CONDITION:
        raise DegenerateGeometry("radar detection directions are degenerate")
    h = np.linalg.solve(HtH, H.T @ y)
    resid = H @ h - y
    if n == 3:
        log.warning(
            "covariance undefined for exactly 3 detections; using fallback "
            "sigma=%.3g m/s", fallback_sigma
        )
        return h, fallback_sigma**2 * np.eye(3)
    sigma2 = float(resid @ resid) / (n - 3)
    cov = sigma2 * np.linalg.inv(HtH)
    # Keep the covariance usable downstream even at zero residual.
    min_var = 1e-12
    if np.linalg.eigvalsh(cov).min() < min_var:
        cov = cov + min_var * np.eye(3)
    return h, cov


def ransac_ego_velocity(
    scan: RadarScan,
    cfg: RansacConfig = RansacConfig(),
    rng: np.random.Generator | None = None,
) -> EgoVelocityMeasurement:
    """RANSAC over 3-detection samples, refit on the consensus set.

    Iteration count adapts to the observed inlier ratio at the
    configured confidence and is capped at ``cfg.max_iterations``.
    Raises NoConsensus when the best set has fewer than
    ``cfg.min_inliers`` members or the inlier ratio falls below
    ``cfg.min_inlier_ratio``.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    dets = list(scan.detections)
    n = len(dets)
    if n < 3:
        raise TooFewDetections(f"scan at t={scan.timestamp}: {n} detections")
    H = np.array([direction_vector(d) for d in dets])
    y = np.array([d.range_rate for d in dets])

    best_mask = None
    best_count = 0
    needed = cfg.max_iterations
    it = 0
    while it < min(needed, cfg.max_iterations):
        idx = rng.choice(n, size=3, replace=False)
        Hs, ys = H[idx], y[idx]
        if abs(np.linalg.det(Hs)) < 1e-8:
            it += 1
            continue
        h = np.linalg.solve(Hs, ys)
        mask = np.abs(H @ h - y) < cfg.inlier_threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            ratio = count / n
            if 0 < ratio < 1:
                denom = math.log(max(1.0 - ratio**3, 1e-12))
                needed = math.ceil(math.log(1.0 - cfg.confidence) / denom)
            else:
                needed = it + 1
        it += 1

    if best_mask is None or best_count < max(cfg.min_inliers, 3):
        raise NoConsensus(
            f"scan at t={scan.timestamp}: best consensus {best_count} < "
            f"min_inliers {cfg.min_inliers}"
        )
    if best_count / n < cfg.min_inlier_ratio:
        raise NoConsensus(
            f"scan at t={scan.timestamp}: inlier ratio {best_count / n:.2f} < "
            f"{cfg.min_inlier_ratio:.2f}"
        )
    inliers = [d for d, m in zip(dets, best_mask) if m]
    h, cov = solve_ego_velocity(inliers, fallback_sigma=cfg.fallback_sigma)
    return EgoVelocityMeasurement(
        timestamp=scan.timestamp,
        velocity=h,
        covariance=cov,
        n_inliers=best_count,
        n_outliers=n - best_count,
    )


EGOVEL_COLUMNS = [
    "t", "vx", "vy", "vz",
    "cov_xx", "cov_xy", "cov_xz", "cov_yy", "cov_yz", "cov_zz",
]


def save_ego_velocities_csv(path, measurements) -> None:
    """Write ego-velocity measurements with upper-triangular covariance
    columns (SI units)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(EGOVEL_COLUMNS)
        for m in measurements:
            c = np.asarray(m.covariance)
            writer.writerow(
                [f"{m.timestamp:.9f}"]
                + [f"{x:.12g}" for x in m.velocity]
                + [f"{c[i, j]:.12g}" for i, j in
                   ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))]
            )


def load_ego_velocities_csv(path) -> list[EgoVelocityMeasurement]:
    path = Path(path)
    out = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:10]] != EGOVEL_COLUMNS:
            raise ParseError(path, 1, f"expected header {','.join(EGOVEL_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 10:
                raise ParseError(path, lineno, f"expected 10 columns, got {len(row)}")
            try:
                vals = [float(x) for x in row[:10]]
            except ValueError as e:
                raise ParseError(path, lineno, str(e)) from None
            xx, xy, xz, yy, yz, zz = vals[4:]
            cov = np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])
            out.append(EgoVelocityMeasurement(vals[0], np.array(vals[1:4]), cov))
    out.sort(key=lambda m: m.timestamp)
    return out


RADAR_SCAN_COLUMNS = ["t", "range", "azimuth", "elevation", "doppler"]


def load_radar_scans_csv(path, flip_doppler_sign: bool = False) -> list[RadarScan]:
    """Read raw detections (one per row, grouped into scans by equal t).

    Columns: t,range,azimuth,elevation,doppler[,intensity]; SI units,
    radians. ``flip_doppler_sign`` negates the range-rate column for
    sensors with the opposite Doppler convention.
    """
    path = Path(path)
    scans: dict[float, list[RadarDetection]] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:5]] != RADAR_SCAN_COLUMNS:
            raise ParseError(path, 1, f"expected header {','.join(RADAR_SCAN_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 5:
                raise ParseError(path, lineno, f"expected >= 5 columns, got {len(row)}")
            try:
                t = float(row[0])
                rng_m, az, el, dop = (float(x) for x in row[1:5])
                intensity = float(row[5]) if len(row) > 5 and row[5] != "" else None
            except ValueError as e:
                raise ParseError(path, lineno, str(e)) from None
            if flip_doppler_sign:
                dop = -dop
            scans.setdefault(t, []).append(
                RadarDetection(rng_m, az, el, dop, intensity)
            )
    return [
        RadarScan(t, tuple(dets)) for t, dets in sorted(scans.items())
    ]
