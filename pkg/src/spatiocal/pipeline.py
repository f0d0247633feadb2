"""Dataset ingestion and preprocessing ahead of the batch solve.

Three stages: (optional) per-scan RANSAC ego-velocity extraction from
raw radar detections, median-filter outlier rejection on both streams,
then spline initialization and the nonlinear solve. Units are declared
in the dataset metadata and refused (never silently converted) when
missing or non-SI.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .egovel import (
    EGOVEL_COLUMNS,
    RADAR_SCAN_COLUMNS,
    RansacConfig,
    load_ego_velocities_csv,
    load_radar_scans_csv,
    ransac_ego_velocity,
)
from .errors import NoConsensus, OutOfSpan, ParseError, TooFewDetections, UnitMismatch
from .geometry import log_so3, project_to_so3
from .residuals import CameraPoseMeasurement, ExtrinsicPrior, load_camera_poses_csv
from .solver import CalibrationReport, ProblemConfig, initialize_state, solve

log = logging.getLogger(__name__)

REQUIRED_UNITS = {
    "time": "s",
    "translation": "m",
    "velocity": "m/s",
    "angle": "rad",
}


@dataclass(frozen=True)
class MedianFilterConfig:
    window: float  # s, centered
    threshold: float = 3.0  # standard deviations

    def __post_init__(self):
        if self.window <= 0 or self.threshold <= 0:
            raise ValueError("window and threshold must be positive")


RADAR_FILTER_DEFAULT = MedianFilterConfig(window=0.2, threshold=3.0)
CAMERA_FILTER_DEFAULT = MedianFilterConfig(window=0.85, threshold=3.0)


@dataclass
class FilterReport:
    n_input: int
    n_rejected: int
    n_sparse_windows: int
    rejected_indices: list = field(default_factory=list)


@dataclass
class Dataset:
    """Time-sorted sensor streams plus their declared metadata."""

    radar: list  # EgoVelocityMeasurement
    camera: list  # CameraPoseMeasurement
    meta: dict
    n_scans_dropped: int = 0


@dataclass
class PipelineInfo:
    radar_filter: FilterReport
    camera_filter: FilterReport


def median_outlier_filter(
    times: np.ndarray, values: np.ndarray, cfg: MedianFilterConfig
) -> tuple[np.ndarray, FilterReport]:
    """Componentwise windowed median/std outlier mask.

    Returns a keep mask. A sample is rejected when any component
    deviates from the windowed median by more than threshold * std.
    Windows with fewer than 3 samples pass the sample through
    (counted as sparse).
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n = len(times)
    if np.any(np.diff(times) < 0):
        raise ValueError("stream must be time-sorted")
    keep = np.ones(n, dtype=bool)
    rejected = []
    sparse = 0
    half = cfg.window / 2.0
    lo = np.searchsorted(times, times - half, side="left")
    hi = np.searchsorted(times, times + half, side="right")
    for i in range(n):
        window = values[lo[i] : hi[i]]
        if len(window) < 3:
            sparse += 1
            continue
        med = np.median(window, axis=0)
        std = np.std(window, axis=0)
        if np.any(np.abs(values[i] - med) > cfg.threshold * std):
            keep[i] = False
            rejected.append(i)
    return keep, FilterReport(n, len(rejected), sparse, rejected)


def filter_radar_stream(measurements, cfg: MedianFilterConfig = RADAR_FILTER_DEFAULT):
    measurements = list(measurements)
    if not measurements:
        return [], FilterReport(0, 0, 0)
    times = np.array([m.timestamp for m in measurements])
    vals = np.array([m.velocity for m in measurements])
    keep, report = median_outlier_filter(times, vals, cfg)
    return [m for m, k in zip(measurements, keep) if k], report


def filter_camera_stream(measurements, cfg: MedianFilterConfig = CAMERA_FILTER_DEFAULT):
    """Median filter on translation components and on the rotation's
    log-deviation from the windowed chordal-mean rotation."""
    measurements = list(measurements)
    if not measurements:
        return [], FilterReport(0, 0, 0)
    times = np.array([m.timestamp for m in measurements])
    trans = np.array([m.translation for m in measurements])
    rots = np.array([m.rotation for m in measurements])
    n = len(times)
    half = cfg.window / 2.0
    lo = np.searchsorted(times, times - half, side="left")
    hi = np.searchsorted(times, times + half, side="right")
    rot_dev = np.zeros((n, 3))
    for i in range(n):
        window = rots[lo[i] : hi[i]]
        if len(window) < 3:
            continue
        mean_rot = project_to_so3(window.mean(axis=0))
        rot_dev[i] = log_so3(rots[i].T @ mean_rot)
    signal = np.hstack([trans, rot_dev])
    keep, report = median_outlier_filter(times, signal, cfg)
    return [m for m, k in zip(measurements, keep) if k], report


def interpolate_linear(
    times: np.ndarray, values: np.ndarray, query: np.ndarray
) -> np.ndarray:
    """Componentwise linear interpolation; queries must lie within the
    sampled span."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    query = np.atleast_1d(np.asarray(query, dtype=float))
    if query.min() < times[0] or query.max() > times[-1]:
        raise OutOfSpan(
            f"query range [{query.min():.6f}, {query.max():.6f}] outside "
            f"sampled span [{times[0]:.6f}, {times[-1]:.6f}]"
        )
    if values.ndim == 1:
        return np.interp(query, times, values)
    return np.stack(
        [np.interp(query, times, values[:, c]) for c in range(values.shape[1])],
        axis=-1,
    )


def _check_units(meta: dict) -> None:
    units = meta.get("units")
    if units is None:
        raise UnitMismatch("dataset metadata declares no units")
    for key, want in REQUIRED_UNITS.items():
        got = units.get(key)
        if got != want:
            raise UnitMismatch(
                f"unit for {key!r} is {got!r}; this pipeline requires {want!r} "
                "(convert the data, units are never converted implicitly)"
            )


def _radar_file_kind(path) -> str:
    with open(path, newline="") as f:
        header = next(csv.reader(f), None)
    if header is None:
        raise ParseError(path, 1, "empty radar file")
    cols = [c.strip() for c in header]
    if cols[: len(EGOVEL_COLUMNS)] == EGOVEL_COLUMNS:
        return "egovel"
    if cols[: len(RADAR_SCAN_COLUMNS)] == RADAR_SCAN_COLUMNS:
        return "scans"
    raise ParseError(path, 1, f"unrecognized radar header {','.join(cols)}")


def load_dataset(
    directory=None,
    radar_path=None,
    camera_path=None,
    camera_sidecar=None,
    meta_path=None,
    flip_doppler_sign: bool = False,
    ransac: RansacConfig = RansacConfig(),
    seed: int = 0,
) -> Dataset:
    """Load a dataset directory (or explicit file paths).

    The radar file may hold either precomputed ego velocities or raw
    detections; raw scans are reduced per scan by RANSAC with
    deterministic per-scan RNG streams. Scans without consensus are
    dropped with a count.
    """
    if directory is not None:
        directory = Path(directory)
        meta_path = meta_path or directory / "meta.json"
        with open(meta_path) as f:
            meta = json.load(f)
        files = meta.get("files", {})
        radar_path = radar_path or directory / files.get("radar", "radar_egovel.csv")
        camera_path = camera_path or directory / files.get("camera", "camera_poses.csv")
        if camera_sidecar is None and "camera_covariance" in files:
            camera_sidecar = directory / files["camera_covariance"]
    else:
        if radar_path is None or camera_path is None:
            raise ValueError("need a directory or explicit radar and camera paths")
        if meta_path is None:
            raise UnitMismatch("no metadata file given; units must be declared")
        with open(meta_path) as f:
            meta = json.load(f)
    _check_units(meta)

    kind = _radar_file_kind(radar_path)
    dropped = 0
    if kind == "egovel":
        radar = load_ego_velocities_csv(radar_path)
    else:
        scans = load_radar_scans_csv(radar_path, flip_doppler_sign=flip_doppler_sign)
        radar = []
        for i, scan in enumerate(scans):
            rng = np.random.default_rng([seed, i])
            try:
                radar.append(ransac_ego_velocity(scan, ransac, rng))
            except (NoConsensus, TooFewDetections) as exc:
                dropped += 1
                log.info("dropped scan %d: %s", i, exc)
    camera = load_camera_poses_csv(camera_path, sidecar=camera_sidecar)
    return Dataset(radar, camera, meta, n_scans_dropped=dropped)


def run_pipeline(
    dataset: Dataset,
    cfg: ProblemConfig,
    prior: ExtrinsicPrior | None = None,
    radar_filter: MedianFilterConfig = RADAR_FILTER_DEFAULT,
    camera_filter: MedianFilterConfig = CAMERA_FILTER_DEFAULT,
    R_cr0: np.ndarray | None = None,
    r_rc0: np.ndarray | None = None,
) -> tuple[CalibrationReport, PipelineInfo]:
    """Filter, initialize, and solve; returns the calibration report
    and the preprocessing statistics."""
    radar, radar_rep = filter_radar_stream(dataset.radar, radar_filter)
    camera, camera_rep = filter_camera_stream(dataset.camera, camera_filter)
    log.info(
        "median filter: radar %d/%d rejected, camera %d/%d rejected",
        radar_rep.n_rejected, radar_rep.n_input,
        camera_rep.n_rejected, camera_rep.n_input,
    )
    if R_cr0 is None and prior is not None:
        R_cr0 = prior.transform.rotation
        r_rc0 = prior.transform.translation if r_rc0 is None else r_rc0
    state0 = initialize_state(radar, camera, cfg, R_cr0=R_cr0, r_rc0=r_rc0)
    report = solve(state0, radar, camera, cfg, prior=prior)
    return report, PipelineInfo(radar_rep, camera_rep)
