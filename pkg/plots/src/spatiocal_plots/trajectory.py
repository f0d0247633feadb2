"""3D trajectory figure from a spline dump JSON.

The dump format (written by the calibration tool's --dump-trajectory
flag and by the simulator's ground-truth file) carries a uniform
B-spline: t0, dt, n_control, order, translation control points, and
rotation control points as wxyz quaternions. The cumulative-form curve
equals the standard B-spline over the same control points, so scipy
evaluates the polyline here.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
import numpy as np
from scipy.interpolate import BSpline

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .sweep import DEFAULT_STYLE  # noqa: E402

REQUIRED_KEYS = ("t0", "dt", "n_control", "order", "translation_control_points")


def load_trajectory(path) -> dict:
    """Read and validate a trajectory dump (or a ground-truth file
    wrapping one under a 'trajectory' key)."""
    path = Path(path)
    with open(path) as f:
        d = json.load(f)
    if "trajectory" in d:
        d = d["trajectory"]
    missing = [k for k in REQUIRED_KEYS if k not in d]
    if missing:
        raise ValueError(f"{path}: missing trajectory keys: {', '.join(missing)}")
    n = int(d["n_control"])
    k = int(d["order"])
    cps = np.asarray(d["translation_control_points"], dtype=float)
    if n == 0 or cps.size == 0:
        raise ValueError(f"{path}: empty spline (no control points)")
    if cps.shape != (n, 3):
        raise ValueError(
            f"{path}: expected {n} x 3 control points, got {cps.shape}"
        )
    if n < k:
        raise ValueError(f"{path}: {n} control points < spline order {k}")
    return {
        "t0": float(d["t0"]),
        "dt": float(d["dt"]),
        "n_control": n,
        "order": k,
        "control_points": cps,
    }


def domain(traj: dict) -> tuple:
    """Half-open valid time interval of the spline."""
    t0, dt = traj["t0"], traj["dt"]
    return t0, t0 + (traj["n_control"] - traj["order"] + 1) * dt


def evaluate_positions(traj: dict, times: np.ndarray) -> np.ndarray:
    t0, dt, n, k = traj["t0"], traj["dt"], traj["n_control"], traj["order"]
    knots = (np.arange(n + k) - (k - 1)) * dt + t0
    return BSpline(knots, traj["control_points"], k - 1)(times)


def active_control_points(traj: dict, t: float) -> np.ndarray:
    """Indices of the `order` control points governing the curve at t."""
    lo, hi = domain(traj)
    if not (lo <= t < hi):
        raise ValueError(
            f"time {t:g} outside the spline domain [{lo:g}, {hi:g})"
        )
    i = int(np.floor((t - lo) / traj["dt"]))
    i = min(i, traj["n_control"] - traj["order"])
    return np.arange(i, i + traj["order"])


def plot_trajectory(
    traj_path,
    out_dir,
    at: float | None = None,
    stem: str = "trajectory",
    samples: int = 600,
    style: dict | None = None,
) -> list:
    """Render the 3D position curve with its control polygon.

    With `at` given, the rig position at that time and the active
    control points are highlighted. Returns the written file paths.
    """
    traj = load_trajectory(traj_path)
    lo, hi = domain(traj)
    times = np.linspace(lo, hi - 1e-9, samples)
    curve = evaluate_positions(traj, times)
    cps = traj["control_points"]

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rc = dict(DEFAULT_STYLE)
    rc.update(style or {})
    with matplotlib.rc_context(rc):
        fig = plt.figure(figsize=(7, 6))
        ax = fig.add_subplot(projection="3d")
        ax.plot(*curve.T, color="tab:blue", lw=1.5, label="trajectory")
        ax.plot(
            *cps.T, color="0.6", lw=0.7, marker="o", markersize=3,
            label="control points",
        )
        if at is not None:
            idx = active_control_points(traj, at)
            active = cps[idx]
            pos = evaluate_positions(traj, np.array([at]))[0]
            ax.scatter(
                *active.T, color="tab:red", s=45, depthshade=False,
                label=f"active control points (t = {at:g} s)",
            )
            ax.scatter(
                *pos, color="tab:green", marker="*", s=120, depthshade=False,
                label=f"position at t = {at:g} s",
            )
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_zlabel("z [m]")
        ax.legend(loc="upper left", fontsize=8)
        written = []
        for ext in ("svg", "png"):
            target = out_dir / f"{stem}.{ext}"
            fig.savefig(target, metadata={"Date": None} if ext == "svg" else None)
            written.append(str(target))
        plt.close(fig)
    return written
