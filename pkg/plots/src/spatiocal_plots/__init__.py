"""Figure generation for calibration sweep CSVs and trajectory dumps."""

from .sweep import load_sweep_table, plot_sweep_histograms
from .trajectory import load_trajectory, plot_trajectory

__all__ = [
    "load_sweep_table",
    "plot_sweep_histograms",
    "load_trajectory",
    "plot_trajectory",
]
