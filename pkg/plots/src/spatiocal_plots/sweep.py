"""Per-parameter error histograms arranged by noise cell.

Consumes the long-format sweep CSV produced by the calibration tool's
sweep command. Rendering is file-to-file and deterministic: a fixed
SVG hash salt, no timestamps in the output metadata.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

REQUIRED_COLUMNS = [
    "sigma_r", "sigma_c", "trial", "status", "rot_err_deg",
    "trans_err_x_cm", "trans_err_y_cm", "trans_err_z_cm",
    "trans_err_norm_cm", "alpha_err_pct", "tau_err_ms",
]

# (column, axis label) in panel order.
PARAMETERS = [
    ("rot_err_deg", "rotation error [deg]"),
    ("trans_err_norm_cm", "translation error [cm]"),
    ("alpha_err_pct", "scale error [%]"),
    ("tau_err_ms", "temporal offset error [ms]"),
]

DEFAULT_STYLE = {
    "svg.hashsalt": "spatiocal-plots",
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


@dataclass
class SweepTable:
    """Converged error samples grouped by (sigma_r, sigma_c) cell."""

    path: str
    cells: list  # sorted (sigma_r, sigma_c) pairs
    data: dict  # (cell, column) -> np.ndarray of converged-trial values
    n_trials: dict = field(default_factory=dict)  # cell -> total rows
    n_failed: dict = field(default_factory=dict)  # cell -> non-ok rows


def load_sweep_table(path) -> SweepTable:
    """Parse and validate a sweep CSV.

    Failed trials (status != ok) are excluded from the histogram data
    but counted so the figure can report them; they are never silently
    dropped.
    """
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ValueError(
                f"{path}: missing required columns: {', '.join(missing)}"
            )
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: sweep table has no data rows")

    cells = sorted({(float(r["sigma_r"]), float(r["sigma_c"])) for r in rows})
    data: dict = {}
    n_trials = {c: 0 for c in cells}
    n_failed = {c: 0 for c in cells}
    for cell in cells:
        for col, _ in PARAMETERS:
            data[(cell, col)] = []
    for r in rows:
        cell = (float(r["sigma_r"]), float(r["sigma_c"]))
        n_trials[cell] += 1
        if r["status"] != "ok":
            n_failed[cell] += 1
            continue
        for col, _ in PARAMETERS:
            data[(cell, col)].append(abs(float(r[col])))
    data = {k: np.asarray(v, dtype=float) for k, v in data.items()}
    return SweepTable(str(path), cells, data, n_trials, n_failed)


def freedman_diaconis_bins(values: np.ndarray, limits: tuple) -> np.ndarray:
    """Bin edges over `limits` with the Freedman-Diaconis width; falls
    back to a single bin when the data carry no spread."""
    lo, hi = limits
    if hi <= lo:
        return np.array([lo - 0.5, hi + 0.5])
    q75, q25 = np.percentile(values, [75, 25])
    width = 2.0 * (q75 - q25) / max(len(values), 1) ** (1.0 / 3.0)
    if width <= 0:
        return np.linspace(lo, hi, 2)
    n_bins = int(np.clip(np.ceil((hi - lo) / width), 1, 200))
    return np.linspace(lo, hi, n_bins + 1)


def _column_limits(tables, col) -> tuple:
    vals = np.concatenate(
        [t.data[(cell, col)] for t in tables for cell in t.cells]
        or [np.zeros(1)]
    )
    if vals.size == 0:
        return (0.0, 1.0)
    lo, hi = float(vals.min()), float(vals.max())
    pad = 0.05 * (hi - lo) if hi > lo else 0.5
    return (lo - pad, hi + pad)


def _footnote(tables, labels) -> str:
    notes = []
    for t, label in zip(tables, labels):
        for cell in t.cells:
            if t.n_failed[cell]:
                notes.append(
                    f"{label}: cell ({cell[0]:g}, {cell[1]:g}) excludes "
                    f"{t.n_failed[cell]}/{t.n_trials[cell]} failed trials"
                )
    return "; ".join(notes) if notes else "all trials converged"


def plot_sweep_histograms(
    csv_paths,
    out_dir,
    labels=None,
    stem: str = "sweep_histograms",
    style: dict | None = None,
) -> list:
    """Render the noise-cell x parameter histogram panel.

    `csv_paths` may hold one CSV or several to overlay (legend shows the
    run labels). Rows are noise cells, columns the four calibration
    parameters; bins follow the Freedman-Diaconis rule with x-limits
    shared down each column. Returns the written file paths.
    """
    csv_paths = [csv_paths] if isinstance(csv_paths, (str, Path)) else list(csv_paths)
    tables = [load_sweep_table(p) for p in csv_paths]
    if labels is None:
        labels = [Path(p).stem for p in csv_paths]
    if len(labels) != len(tables):
        raise ValueError("need one label per CSV")
    cells = tables[0].cells
    for t in tables[1:]:
        if t.cells != cells:
            raise ValueError(
                f"{t.path}: noise cells differ from {tables[0].path}; "
                "overlaid sweeps must share the cell grid"
            )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rc = dict(DEFAULT_STYLE)
    rc.update(style or {})
    with matplotlib.rc_context(rc):
        n_rows, n_cols = len(cells), len(PARAMETERS)
        fig, axes = plt.subplots(
            n_rows, n_cols,
            figsize=(3.2 * n_cols, 2.2 * n_rows),
            squeeze=False,
        )
        limits = {col: _column_limits(tables, col) for col, _ in PARAMETERS}
        for i, cell in enumerate(cells):
            for j, (col, label) in enumerate(PARAMETERS):
                ax = axes[i][j]
                for t, run_label in zip(tables, labels):
                    vals = t.data[(cell, col)]
                    if vals.size == 0:
                        continue
                    bins = freedman_diaconis_bins(vals, limits[col])
                    ax.hist(
                        vals, bins=bins, alpha=0.65 if len(tables) > 1 else 0.9,
                        label=run_label,
                    )
                ax.set_xlim(*limits[col])
                if i == n_rows - 1:
                    ax.set_xlabel(label)
                if j == 0:
                    ax.set_ylabel(
                        f"$\\sigma_r$={cell[0]:g}, $\\sigma_c$={cell[1]:g}\ntrials"
                    )
        if len(tables) > 1:
            axes[0][0].legend(fontsize=8)
        fig.suptitle("Calibration error distributions by noise cell")
        fig.text(
            0.01, 0.005, _footnote(tables, labels),
            fontsize=7, style="italic",
        )
        fig.tight_layout(rect=(0, 0.02, 1, 0.97))
        written = []
        for ext in ("svg", "png"):
            target = out_dir / f"{stem}.{ext}"
            fig.savefig(target, metadata={"Date": None} if ext == "svg" else None)
            written.append(str(target))
        plt.close(fig)
    return written
