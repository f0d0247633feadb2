import csv
import hashlib
import json
import math

import numpy as np
import pytest

from spatiocal_plots import (
    load_sweep_table,
    load_trajectory,
    plot_sweep_histograms,
    plot_trajectory,
)
from spatiocal_plots.cli import EXIT_ERROR, EXIT_OK, main
from spatiocal_plots.sweep import REQUIRED_COLUMNS, freedman_diaconis_bins
from spatiocal_plots.trajectory import active_control_points, domain, evaluate_positions


def write_sweep_csv(path, cells, n_trials, rng, n_failed=0):
    """Synthetic sweep CSV matching the calibration tool's format."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(REQUIRED_COLUMNS)
        for sr, sc in cells:
            scale = 1.0 + 5.0 * sr
            for trial in range(n_trials):
                if trial < n_failed:
                    writer.writerow(
                        [sr, sc, trial, "solver_failed"] + ["nan"] * 7
                    )
                    continue
                tx, ty, tz = rng.normal(scale=2.0 * scale, size=3)
                writer.writerow([
                    sr, sc, trial, "ok",
                    abs(rng.normal(scale=0.5 * scale)),
                    tx, ty, tz, math.sqrt(tx * tx + ty * ty + tz * tz),
                    rng.normal(scale=0.4 * scale),
                    rng.normal(scale=3.0 * scale),
                ])
    return path


def write_trajectory_json(path, n_control=20, order=4, dt=0.1, t0=0.0):
    rng = np.random.default_rng(7)
    t = np.arange(n_control) * dt
    cps = np.stack([np.sin(t), np.cos(0.7 * t), 0.2 * t], axis=1)
    cps += 0.01 * rng.normal(size=cps.shape)
    quats = np.tile([1.0, 0.0, 0.0, 0.0], (n_control, 1))
    with open(path, "w") as f:
        json.dump({
            "t0": t0,
            "dt": dt,
            "n_control": n_control,
            "order": order,
            "translation_control_points": cps.tolist(),
            "rotation_control_points_wxyz": quats.tolist(),
        }, f)
    return path


@pytest.fixture
def sweep_csv(tmp_path):
    rng = np.random.default_rng(0)
    cells = [(0.05, 0.1), (0.05, 0.4), (0.2, 0.1), (0.2, 0.4)]
    return write_sweep_csv(tmp_path / "sweep.csv", cells, 40, rng)


@pytest.fixture
def traj_json(tmp_path):
    return write_trajectory_json(tmp_path / "trajectory.json")


class TestSweepTable:
    def test_load(self, sweep_csv):
        table = load_sweep_table(sweep_csv)
        assert len(table.cells) == 4
        assert table.cells == sorted(table.cells)
        for cell in table.cells:
            assert table.n_trials[cell] == 40
            assert table.n_failed[cell] == 0
            vals = table.data[(cell, "rot_err_deg")]
            assert len(vals) == 40
            assert np.all(vals >= 0.0)

    def test_failed_trials_counted_not_plotted(self, tmp_path):
        rng = np.random.default_rng(1)
        path = write_sweep_csv(
            tmp_path / "s.csv", [(0.2, 0.4)], 30, rng, n_failed=4
        )
        table = load_sweep_table(path)
        cell = table.cells[0]
        assert table.n_failed[cell] == 4
        assert len(table.data[(cell, "tau_err_ms")]) == 26

    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "bad.csv"
        cols = [c for c in REQUIRED_COLUMNS if c != "tau_err_ms"]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(cols)
            w.writerow([0.05, 0.1, 0, "ok"] + [0.0] * 6)
        with pytest.raises(ValueError, match="tau_err_ms"):
            load_sweep_table(path)

    def test_empty_table(self, tmp_path):
        path = tmp_path / "empty.csv"
        with open(path, "w", newline="") as f:
            csv.writer(f).writerow(REQUIRED_COLUMNS)
        with pytest.raises(ValueError, match="no data rows"):
            load_sweep_table(path)


class TestHistogramPanel:
    def test_panel_written(self, sweep_csv, tmp_path):
        written = plot_sweep_histograms(sweep_csv, tmp_path / "out")
        assert len(written) == 2
        suffixes = {p.rsplit(".", 1)[1] for p in written}
        assert suffixes == {"svg", "png"}
        for p in written:
            assert (tmp_path / "out" / p.split("/")[-1]).stat().st_size > 0

    def test_single_zero_noise_trial(self, tmp_path):
        """A lone noiseless trial gives zero-width data; the degenerate
        single-bar histogram must render without crashing."""
        path = tmp_path / "one.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(REQUIRED_COLUMNS)
            w.writerow([0.0, 0.0, 0, "ok"] + [0.0] * 7)
        written = plot_sweep_histograms(path, tmp_path / "out")
        assert len(written) == 2

    def test_failed_trials_in_footnote(self, tmp_path, monkeypatch):
        rng = np.random.default_rng(2)
        path = write_sweep_csv(
            tmp_path / "s.csv", [(0.2, 0.4)], 20, rng, n_failed=3
        )
        captured = {}
        import matplotlib.figure

        orig = matplotlib.figure.Figure.text

        def spy(self, x, y, s, **kw):
            captured.setdefault("texts", []).append(s)
            return orig(self, x, y, s, **kw)

        monkeypatch.setattr(matplotlib.figure.Figure, "text", spy)
        plot_sweep_histograms(path, tmp_path / "out")
        notes = " ".join(captured["texts"])
        assert "3/20 failed trials" in notes

    def test_compare_overlay(self, sweep_csv, tmp_path):
        rng = np.random.default_rng(3)
        cells = [(0.05, 0.1), (0.05, 0.4), (0.2, 0.1), (0.2, 0.4)]
        other = write_sweep_csv(tmp_path / "other.csv", cells, 40, rng)
        written = plot_sweep_histograms(
            [sweep_csv, other], tmp_path / "out",
            labels=["run A", "run B"],
        )
        assert len(written) == 2

    def test_compare_rejects_mismatched_cells(self, sweep_csv, tmp_path):
        rng = np.random.default_rng(4)
        other = write_sweep_csv(tmp_path / "other.csv", [(0.1, 0.2)], 10, rng)
        with pytest.raises(ValueError, match="cell grid"):
            plot_sweep_histograms([sweep_csv, other], tmp_path / "out")

    def test_deterministic_png(self, sweep_csv, tmp_path):
        hashes = []
        for run in ("a", "b"):
            written = plot_sweep_histograms(sweep_csv, tmp_path / run)
            png = [p for p in written if p.endswith(".png")][0]
            hashes.append(hashlib.sha256(open(png, "rb").read()).hexdigest())
        assert hashes[0] == hashes[1]

    def test_bin_rule(self):
        rng = np.random.default_rng(5)
        vals = rng.normal(size=500)
        edges = freedman_diaconis_bins(vals, (vals.min(), vals.max()))
        assert len(edges) >= 3
        # single value falls back to one bin without dividing by zero
        edges = freedman_diaconis_bins(np.zeros(5), (0.0, 0.0))
        assert len(edges) == 2


class TestTrajectory:
    def test_load(self, traj_json):
        traj = load_trajectory(traj_json)
        assert traj["n_control"] == 20
        assert traj["control_points"].shape == (20, 3)
        lo, hi = domain(traj)
        assert lo == 0.0
        assert np.isclose(hi, 1.7)

    def test_endpoint_interpolation_of_flat_segments(self, tmp_path):
        """With identical leading control points the curve starts there."""
        path = tmp_path / "t.json"
        cps = np.zeros((8, 3))
        cps[4:] = [1.0, 0.0, 0.0]
        with open(path, "w") as f:
            json.dump({
                "t0": 0.0, "dt": 0.1, "n_control": 8, "order": 4,
                "translation_control_points": cps.tolist(),
                "rotation_control_points_wxyz": [[1, 0, 0, 0]] * 8,
            }, f)
        traj = load_trajectory(path)
        pos = evaluate_positions(traj, np.array([0.0]))
        assert np.allclose(pos, 0.0, atol=1e-12)

    def test_empty_spline_rejected(self, tmp_path):
        path = tmp_path / "empty.json"
        with open(path, "w") as f:
            json.dump({
                "t0": 0.0, "dt": 0.1, "n_control": 0, "order": 4,
                "translation_control_points": [],
            }, f)
        with pytest.raises(ValueError, match="empty spline"):
            load_trajectory(path)

    def test_missing_keys_rejected(self, tmp_path):
        path = tmp_path / "partial.json"
        with open(path, "w") as f:
            json.dump({"t0": 0.0, "dt": 0.1}, f)
        with pytest.raises(ValueError, match="missing trajectory keys"):
            load_trajectory(path)

    def test_active_control_points(self, traj_json):
        traj = load_trajectory(traj_json)
        assert list(active_control_points(traj, 0.0)) == [0, 1, 2, 3]
        assert list(active_control_points(traj, 0.55)) == [5, 6, 7, 8]
        with pytest.raises(ValueError, match="outside"):
            active_control_points(traj, 5.0)

    def test_figure_written(self, traj_json, tmp_path):
        written = plot_trajectory(traj_json, tmp_path / "out")
        assert len(written) == 2

    def test_figure_with_highlight(self, traj_json, tmp_path):
        written = plot_trajectory(traj_json, tmp_path / "out", at=0.8)
        assert len(written) == 2

    def test_deterministic_png(self, traj_json, tmp_path):
        hashes = []
        for run in ("a", "b"):
            written = plot_trajectory(traj_json, tmp_path / run, at=0.3)
            png = [p for p in written if p.endswith(".png")][0]
            hashes.append(hashlib.sha256(open(png, "rb").read()).hexdigest())
        assert hashes[0] == hashes[1]


class TestCli:
    def test_sweep_hist(self, sweep_csv, tmp_path, capsys):
        code = main(["sweep-hist", str(sweep_csv), "--out", str(tmp_path / "o")])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "sweep_histograms.svg" in out
        assert "sweep_histograms.png" in out

    def test_sweep_hist_compare(self, sweep_csv, tmp_path):
        rng = np.random.default_rng(6)
        cells = [(0.05, 0.1), (0.05, 0.4), (0.2, 0.1), (0.2, 0.4)]
        other = write_sweep_csv(tmp_path / "b.csv", cells, 15, rng)
        code = main([
            "sweep-hist", str(sweep_csv),
            "--compare", str(other),
            "--label", "baseline", "--label", "candidate",
            "--out", str(tmp_path / "o"),
        ])
        assert code == EXIT_OK

    def test_trajectory(self, traj_json, tmp_path):
        code = main([
            "trajectory", str(traj_json), "--at", "0.4",
            "--out", str(tmp_path / "o"),
        ])
        assert code == EXIT_OK

    def test_missing_file(self, tmp_path, capsys):
        code = main(["sweep-hist", str(tmp_path / "nope.csv"), "--out", str(tmp_path)])
        assert code == EXIT_ERROR
        assert "error:" in capsys.readouterr().err

    def test_style_yaml(self, traj_json, tmp_path):
        style = tmp_path / "style.yaml"
        style.write_text("figure.dpi: 72\nfont.size: 9\n")
        code = main([
            "trajectory", str(traj_json),
            "--style", str(style), "--out", str(tmp_path / "o"),
        ])
        assert code == EXIT_OK

    def test_bad_style_yaml(self, traj_json, tmp_path, capsys):
        style = tmp_path / "style.yaml"
        style.write_text("- not\n- a\n- mapping\n")
        code = main([
            "trajectory", str(traj_json),
            "--style", str(style), "--out", str(tmp_path / "o"),
        ])
        assert code == EXIT_ERROR
