"""Command-line entry points: sweep-hist and trajectory."""

from __future__ import annotations

import argparse
import json
import sys

import yaml

from .sweep import plot_sweep_histograms
from .trajectory import plot_trajectory

EXIT_OK = 0
EXIT_ERROR = 2


def _load_style(path) -> dict | None:
    if path is None:
        return None
    with open(path) as f:
        style = yaml.safe_load(f)
    if not isinstance(style, dict):
        raise ValueError(f"{path}: style config must be a mapping of rcParams")
    return style


def cmd_sweep_hist(args) -> int:
    paths = [args.csv] + (args.compare or [])
    labels = None
    if args.label:
        labels = args.label
        if len(labels) != len(paths):
            raise ValueError(
                f"got {len(labels)} labels for {len(paths)} CSV files"
            )
    written = plot_sweep_histograms(
        paths, args.out, labels=labels, style=_load_style(args.style)
    )
    for p in written:
        print(p)
    return EXIT_OK


def cmd_trajectory(args) -> int:
    written = plot_trajectory(
        args.json, args.out, at=args.at, style=_load_style(args.style)
    )
    for p in written:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatiocal-plots",
        description="Render calibration sweep histograms and trajectory figures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_hist = sub.add_parser(
        "sweep-hist", help="noise-cell x parameter histogram panel from sweep.csv"
    )
    p_hist.add_argument("csv", help="sweep CSV file")
    p_hist.add_argument(
        "--compare", action="append", metavar="CSV",
        help="overlay another sweep CSV (repeatable)",
    )
    p_hist.add_argument(
        "--label", action="append",
        help="legend label, one per CSV in order (repeatable)",
    )
    p_hist.add_argument("--out", default="plots_out", help="output directory")
    p_hist.add_argument("--style", help="YAML file of matplotlib rcParams")
    p_hist.set_defaults(func=cmd_sweep_hist)

    p_traj = sub.add_parser(
        "trajectory", help="3D trajectory figure from a spline dump JSON"
    )
    p_traj.add_argument("json", help="trajectory dump (or ground-truth) JSON")
    p_traj.add_argument(
        "--at", type=float,
        help="highlight the active control points at this time [s]",
    )
    p_traj.add_argument("--out", default="plots_out", help="output directory")
    p_traj.add_argument("--style", help="YAML file of matplotlib rcParams")
    p_traj.set_defaults(func=cmd_trajectory)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
