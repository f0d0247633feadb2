"""Synthetic radar-camera dataset generation.

Ground truth is a spline pair directly (sinusoidal control points), so
measurements synthesized from it are exactly representable and the
zero-noise problem has a zero-residual optimum. Camera measurements go
through a pinhole projection of a planar corner grid and a reprojection
pose solve against an assumed square size; the assumed/true size ratio
realizes the monocular scale factor.
"""

from __future__ import annotations

import csv
import json
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .egovel import EgoVelocityMeasurement, save_ego_velocities_csv
from .errors import ConfigDegenerate, NotConverged, TargetNotVisible
from .geometry import cross3, exp_so3, rotation_angle, rotation_from_rpy, skew
from .identifiability import WEAK_EXCITATION_SV, trajectory_excitation_scan
from .residuals import (
    CalibrationState,
    CameraPoseMeasurement,
    save_camera_poses_csv,
)
from .solver import ProblemConfig, initialize_state, solve
from .spline import (
    KnotGrid,
    RotationSpline,
    TranslationSpline,
    spline_pair_to_dict,
)

SIGMA_FLOOR = 1e-6  # keeps synthesized covariances SPD at sigma = 0

SWEEP_COLUMNS = [
    "sigma_r", "sigma_c", "trial", "status", "rot_err_deg",
    "trans_err_x_cm", "trans_err_y_cm", "trans_err_z_cm",
    "trans_err_norm_cm", "alpha_err_pct", "tau_err_ms",
]


@dataclass(frozen=True)
class SimConfig:
    """Simulation study settings (SI units, angles in radians)."""

    duration: float = 30.0
    radar_rate: float = 20.0
    camera_rate: float = 30.0
    sigma_r: float = 0.05  # ego-velocity noise, m/s
    sigma_c: float = 0.1  # corner pixel noise, px
    # True calibration: extrinsic rotation as roll-pitch-yaw of R_cr.
    extrinsic_rpy: tuple = (-1.62, 0.02, -3.15)
    extrinsic_translation: tuple = (-0.0048, 0.122, -0.0342)  # r_c^rc, m
    tau: float = -0.058  # s
    # Trajectory excitation (per-axis sinusoids).
    trans_amplitude: tuple = (0.5, 0.4, 0.3)  # m
    trans_frequency: tuple = (0.3, 0.5, 0.7)  # Hz
    rot_amplitude: tuple = (0.4, 0.3, 0.35)  # rad
    rot_frequency: tuple = (0.4, 0.6, 0.35)  # Hz
    standoff: float = 2.0  # nominal camera-target distance, m
    # Pinhole camera and planar corner grid.
    focal: float = 600.0  # px
    principal_point: tuple = (319.5, 239.5)  # px
    grid_rows: int = 6
    grid_cols: int = 9
    true_square: float = 0.04  # m
    assumed_square: float = 0.048  # m; ratio to true_square realizes alpha
    # Spline representation of the ground truth.
    knot_dt: float = 0.1
    order: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.radar_rate <= 0 or self.camera_rate <= 0:
            raise ValueError("sensor rates must be positive")
        if self.sigma_r < 0 or self.sigma_c < 0:
            raise ValueError("noise sigmas must be nonnegative")
        if self.assumed_square == 0 or self.true_square <= 0:
            raise ValueError("square sizes must be nonzero")
        if self.duration <= self.order * self.knot_dt:
            raise ValueError("duration too short for the spline order")

    @property
    def alpha_true(self) -> float:
        return self.assumed_square / self.true_square

    @property
    def R_cr(self) -> np.ndarray:
        return rotation_from_rpy(np.asarray(self.extrinsic_rpy))

    @property
    def r_rc(self) -> np.ndarray:
        return np.asarray(self.extrinsic_translation, dtype=float)

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


@dataclass(frozen=True)
class SimDataset:
    trans_spline: TranslationSpline
    rot_spline: RotationSpline
    radar: tuple
    camera: tuple
    truth: CalibrationState
    n_radar_dropped: int = 0
    n_camera_dropped: int = 0


def _nominal_pose(cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Nominal radar pose (R_wr, r_r^wr) placing the camera above the
    grid plane (world z = 0) looking down the -z world axis."""
    R_cw0 = np.diag([1.0, -1.0, -1.0])
    center = np.array([0.0, 0.0, cfg.standoff])
    r_cw0 = -R_cw0 @ center
    R_wr = R_cw0.T @ cfg.R_cr
    r_r = cfg.R_cr.T @ (r_cw0 - cfg.r_rc)
    return R_wr, r_r


def generate_trajectory(
    cfg: SimConfig, rng: np.random.Generator | None = None
) -> tuple[TranslationSpline, RotationSpline]:
    """Smooth multi-axis sinusoidal trajectory sampled onto spline
    control points; phases drawn from the config seed.

    Raises ConfigDegenerate when the requested excitation fails the
    identifiability scan (the flags name the violated conditions).
    """
    if rng is None:
        rng = np.random.default_rng([cfg.seed, 0])
    k = cfg.order
    n = k + int(np.floor(cfg.duration / cfg.knot_dt + 1e-9))
    grid = KnotGrid(0.0, cfg.knot_dt, n)
    R_wr_nom, r_nom = _nominal_pose(cfg)
    t_ph = rng.uniform(0.0, 2 * np.pi, 3)
    r_ph = rng.uniform(0.0, 2 * np.pi, 3)
    ta = np.asarray(cfg.trans_amplitude, dtype=float)
    tf = np.asarray(cfg.trans_frequency, dtype=float)
    ra = np.asarray(cfg.rot_amplitude, dtype=float)
    rf = np.asarray(cfg.rot_frequency, dtype=float)
    knots = np.array([grid.knot(i) for i in range(n)])
    tcp = np.stack(
        [r_nom + ta * np.sin(2 * np.pi * tf * t + t_ph) for t in knots]
    )
    rcp = np.stack(
        [R_wr_nom @ exp_so3(ra * np.sin(2 * np.pi * rf * t + r_ph)) for t in knots]
    )
    trans = TranslationSpline(grid, tcp, k)
    rot = RotationSpline(grid, rcp, k)
    scan = trajectory_excitation_scan(
        trans, rot, cfg.R_cr, cfg.r_rc, cfg.alpha_true
    )
    if (
        scan.degenerate_flags
        or not scan.identifiable
        or scan.min_singular_value < WEAK_EXCITATION_SV
    ):
        detail = (
            "; degenerate motion: " + ", ".join(scan.degenerate_flags)
            if scan.degenerate_flags
            else ""
        )
        raise ConfigDegenerate(
            "trajectory config fails the excitation check "
            f"(rank {scan.rank}/8, min singular value "
            f"{scan.min_singular_value:.3g}){detail}",
            flags=list(scan.degenerate_flags),
        )
    return trans, rot


def synth_radar(
    cfg: SimConfig,
    trans: TranslationSpline,
    rot: RotationSpline,
    rng: np.random.Generator | None = None,
) -> tuple[list[EgoVelocityMeasurement], int]:
    """Ego-velocity measurements on the radar tick grid; ticks whose
    shifted query time leaves the spline domain are dropped (count
    returned)."""
    if rng is None:
        rng = np.random.default_rng([cfg.seed, 1])
    lo, hi = trans.domain
    out = []
    dropped = 0
    cov = max(cfg.sigma_r, SIGMA_FLOOR) ** 2 * np.eye(3)
    for t in np.arange(0.0, cfg.duration, 1.0 / cfg.radar_rate):
        tq = t + cfg.tau
        if not (lo <= tq < hi):
            dropped += 1
            continue
        r, dr, _ = trans.evaluate(tq)
        _, om = rot.evaluate(tq)
        h = -(dr + cross3(om, r))
        if cfg.sigma_r > 0:
            h = h + rng.normal(0.0, cfg.sigma_r, 3)
        out.append(EgoVelocityMeasurement(float(t), h, cov))
    return out, dropped


def _grid_corners(rows: int, cols: int, square: float) -> np.ndarray:
    """(rows*cols, 3) planar corner grid centered on the world origin."""
    ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    pts = np.stack(
        [
            (ii - (rows - 1) / 2.0) * square,
            (jj - (cols - 1) / 2.0) * square,
            np.zeros_like(ii, dtype=float),
        ],
        axis=-1,
    )
    return pts.reshape(-1, 3)


def _project(points_c: np.ndarray, cfg: SimConfig) -> np.ndarray:
    z = points_c[:, 2]
    return np.stack(
        [
            cfg.focal * points_c[:, 0] / z + cfg.principal_point[0],
            cfg.focal * points_c[:, 1] / z + cfg.principal_point[1],
        ],
        axis=-1,
    )


def _solve_pose(
    corners_w: np.ndarray,
    pixels: np.ndarray,
    R0: np.ndarray,
    t0: np.ndarray,
    cfg: SimConfig,
    max_iterations: int = 20,
):
    """Gauss-Newton reprojection pose solve; returns pose, the 6x6
    normalized information matrix J^T J, and the residual RMS in px."""
    R, t = R0.copy(), t0.copy()
    n = len(corners_w)
    for _ in range(max_iterations):
        pc = corners_w @ R.T + t
        z = pc[:, 2]
        res = (_project(pc, cfg) - pixels).reshape(-1)
        # d(pixel)/d(camera point), stacked per corner.
        Jproj = np.zeros((n, 2, 3))
        Jproj[:, 0, 0] = cfg.focal / z
        Jproj[:, 1, 1] = cfg.focal / z
        Jproj[:, 0, 2] = -cfg.focal * pc[:, 0] / z**2
        Jproj[:, 1, 2] = -cfg.focal * pc[:, 1] / z**2
        rc = corners_w @ R.T
        Jpose = np.zeros((n, 3, 6))
        # -skew(R @ corner) for every corner at once
        Jpose[:, 0, 1] = rc[:, 2]
        Jpose[:, 0, 2] = -rc[:, 1]
        Jpose[:, 1, 0] = -rc[:, 2]
        Jpose[:, 1, 2] = rc[:, 0]
        Jpose[:, 2, 0] = rc[:, 1]
        Jpose[:, 2, 1] = -rc[:, 0]
        Jpose[:, 0, 3] = Jpose[:, 1, 4] = Jpose[:, 2, 5] = 1.0
        J = np.einsum("nij,njk->nik", Jproj, Jpose).reshape(-1, 6)
        g = J.T @ res
        H = J.T @ J
        try:
            dx = np.linalg.solve(H + 1e-12 * np.eye(6), -g)
        except np.linalg.LinAlgError:
            break
        R = exp_so3(dx[:3]) @ R
        t = t + dx[3:]
        if np.abs(dx).max() < 1e-14:
            break
    pc = corners_w @ R.T + t
    res = (_project(pc, cfg) - pixels).reshape(-1)
    rms = float(np.sqrt(np.mean(res**2)))
    return R, t, H, rms


def synth_camera(
    cfg: SimConfig,
    trans: TranslationSpline,
    rot: RotationSpline,
    rng: np.random.Generator | None = None,
) -> tuple[list[CameraPoseMeasurement], int]:
    """Scaled camera pose measurements from the corner-grid pipeline.

    Projects the true-size grid at the true pose, perturbs the pixels,
    then re-solves the pose against the ASSUMED square size starting at
    the scaled truth. Ticks with any corner behind the camera are
    dropped (count returned); raises TargetNotVisible if none survive.
    """
    if rng is None:
        rng = np.random.default_rng([cfg.seed, 2])
    lo, hi = trans.domain
    corners_true = _grid_corners(cfg.grid_rows, cfg.grid_cols, cfg.true_square)
    corners_assumed = _grid_corners(
        cfg.grid_rows, cfg.grid_cols, cfg.assumed_square
    )
    rho = cfg.alpha_true
    sigma_eff = max(cfg.sigma_c, 1e-4)
    out = []
    dropped = 0
    for t in np.arange(0.0, cfg.duration, 1.0 / cfg.camera_rate):
        if not (lo <= t < hi):
            dropped += 1
            continue
        r, _, _ = trans.evaluate(t)
        R_wr, _ = rot.evaluate(t)
        R_cw = cfg.R_cr @ R_wr.T
        r_cw = cfg.R_cr @ r + cfg.r_rc
        pc = corners_true @ R_cw.T + r_cw
        if np.any(pc[:, 2] <= 1e-3):
            dropped += 1
            continue
        pixels = _project(pc, cfg)
        if cfg.sigma_c > 0:
            pixels = pixels + rng.normal(0.0, cfg.sigma_c, pixels.shape)
        R_meas, t_meas, H, _ = _solve_pose(
            corners_assumed, pixels, R_cw, rho * r_cw, cfg
        )
        cov6 = sigma_eff**2 * np.linalg.inv(H + 1e-12 * np.eye(6))
        out.append(
            CameraPoseMeasurement(
                float(t), R_meas, t_meas, cov6[:3, :3], cov6[3:, 3:]
            )
        )
    if not out:
        raise TargetNotVisible("target never in front of the camera")
    return out, dropped


def make_dataset(cfg: SimConfig) -> SimDataset:
    """Deterministic dataset from the config seed (independent RNG
    streams for trajectory phases, radar noise, and pixel noise, so the
    camera stream is invariant to tau and sigma_r)."""
    trans, rot = generate_trajectory(cfg)
    radar, r_drop = synth_radar(cfg, trans, rot)
    camera, c_drop = synth_camera(cfg, trans, rot)
    truth = CalibrationState(
        trans, rot, cfg.R_cr, cfg.r_rc, cfg.alpha_true, cfg.tau
    )
    return SimDataset(trans, rot, tuple(radar), tuple(camera), truth, r_drop, c_drop)


def truth_to_dict(ds: SimDataset) -> dict:
    from .geometry import quat_from_rotation

    s = ds.truth
    return {
        "trajectory": spline_pair_to_dict(ds.trans_spline, ds.rot_spline),
        "extrinsic_rotation_wxyz": quat_from_rotation(s.R_cr).tolist(),
        "extrinsic_translation_m": np.asarray(s.r_rc).tolist(),
        "alpha": s.alpha,
        "tau_s": s.tau,
    }


def write_dataset(ds: SimDataset, out_dir) -> dict:
    """Write radar CSV, camera CSV (+ covariance sidecar), ground-truth
    JSON, and a metadata file declaring units. Returns the file map."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    radar_path = out_dir / "radar_egovel.csv"
    camera_path = out_dir / "camera_poses.csv"
    sidecar_path = out_dir / "camera_poses.cov.json"
    truth_path = out_dir / "ground_truth.json"
    meta_path = out_dir / "meta.json"
    save_ego_velocities_csv(radar_path, ds.radar)
    save_camera_poses_csv(camera_path, ds.camera, sidecar=sidecar_path)
    with open(truth_path, "w") as f:
        json.dump(truth_to_dict(ds), f, indent=1)
    meta = {
        "source": "spatiocal simulator",
        "units": {
            "time": "s",
            "translation": "m",
            "velocity": "m/s",
            "angle": "rad",
        },
        "conventions": {
            "camera_pose": "R_cw quaternion wxyz; translation is the world "
            "origin in the camera frame, monocular scale included",
            "radar": "ego velocity of the radar frame, radar coordinates",
        },
        "files": {
            "radar": radar_path.name,
            "camera": camera_path.name,
            "camera_covariance": sidecar_path.name,
            "ground_truth": truth_path.name,
        },
        "counts": {
            "radar": len(ds.radar),
            "camera": len(ds.camera),
            "radar_dropped": ds.n_radar_dropped,
            "camera_dropped": ds.n_camera_dropped,
        },
    }
    with open(meta_path, "w") as f:
        json.dump(meta, f, indent=1)
    return {k: str(out_dir / v) for k, v in meta["files"].items()}


# ---------------------------------------------------------------------------
# Noise sweep


def _trial_seed(base_seed: int, cell: int, trial: int) -> int:
    return int(
        np.random.SeedSequence([base_seed, cell, trial]).generate_state(1)[0]
    )


def run_trial(
    cfg: SimConfig, problem_cfg: ProblemConfig
) -> tuple[str, dict | None]:
    """One simulate-calibrate round; returns (status, error dict)."""
    ds = make_dataset(cfg)
    try:
        state0 = initialize_state(list(ds.radar), list(ds.camera), problem_cfg)
        report = solve(state0, list(ds.radar), list(ds.camera), problem_cfg)
    except NotConverged as exc:
        return type(exc).__name__, None
    except Exception as exc:  # failure rows must never abort the sweep
        return type(exc).__name__, None
    s = report.state
    truth = ds.truth
    dr = (np.asarray(s.r_rc) - np.asarray(truth.r_rc)) * 100.0
    return "ok", {
        "rot_err_deg": float(np.degrees(rotation_angle(s.R_cr @ truth.R_cr.T))),
        "trans_err_x_cm": float(dr[0]),
        "trans_err_y_cm": float(dr[1]),
        "trans_err_z_cm": float(dr[2]),
        "trans_err_norm_cm": float(np.linalg.norm(dr)),
        "alpha_err_pct": float(100.0 * (s.alpha - truth.alpha) / truth.alpha),
        "tau_err_ms": float((s.tau - truth.tau) * 1e3),
    }


def _sweep_worker(args):
    sr, sc, trial, cfg_dict, pcfg_dict = args
    cfg = SimConfig(**cfg_dict)
    pcfg = ProblemConfig(**pcfg_dict)
    status, errs = run_trial(cfg, pcfg)
    row = {"sigma_r": sr, "sigma_c": sc, "trial": trial, "status": status}
    if errs is None:
        errs = {c: float("nan") for c in SWEEP_COLUMNS[4:]}
    row.update(errs)
    return row


def run_noise_sweep(
    sigma_r_values,
    sigma_c_values,
    trials: int,
    base_cfg: SimConfig,
    problem_cfg: ProblemConfig | None = None,
    threads: int | None = None,
    out_csv=None,
) -> list[dict]:
    """Calibrate `trials` fresh datasets per (sigma_r, sigma_c) cell.

    Each trial draws its own trajectory phases and noise from an RNG
    stream keyed by (seed, cell, trial); solver failures become rows
    with a failure status. Rows are written to `out_csv` when given.
    """
    if problem_cfg is None:
        problem_cfg = ProblemConfig(
            order=base_cfg.order, knot_dt=base_cfg.knot_dt, tau_bound=0.2
        )
    from dataclasses import asdict

    jobs = []
    for ci, (sr, sc) in enumerate(
        (sr, sc) for sr in sigma_r_values for sc in sigma_c_values
    ):
        for trial in range(trials):
            cfg = replace(
                base_cfg,
                sigma_r=sr,
                sigma_c=sc,
                seed=_trial_seed(base_cfg.seed, ci, trial),
            )
            jobs.append((sr, sc, trial, asdict(cfg), asdict(problem_cfg)))

    if threads is None:
        threads = min(os.cpu_count() or 1, 8)
    if threads > 1 and len(jobs) > 1:
        # Spawn (not fork): the solver's AD backend is multithreaded
        # and forking it deadlocks.
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            rows = list(pool.map(_sweep_worker, jobs, chunksize=1))
    else:
        rows = [_sweep_worker(j) for j in jobs]

    if out_csv is not None:
        write_sweep_csv(out_csv, rows)
    return rows


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
