"""Command-line interface: simulate, calibrate, identifiability, sweep.

Configuration layering is file < environment < flags: values load from
a TOML/JSON config file, are overridden by SPATIOCAL_* environment
variables, then by explicit command-line flags. Every run writes a
resolved-config snapshot beside its outputs so results are reproducible
from the snapshot alone.

Exit codes: 0 success, 2 configuration/parse errors, 3 identifiability
failures, 4 solver failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import (
    ConfigDegenerate,
    DivergedNumerically,
    IdentifiabilityError,
    NotConverged,
    SingularHessian,
    SpatiocalError,
)
from .geometry import RigidTransform, rotation_from_quat, rotation_from_rpy
from .identifiability import trajectory_excitation_scan
from .pipeline import load_dataset, run_pipeline
from .residuals import ExtrinsicPrior
from .sim import SimConfig, make_dataset, run_noise_sweep, write_dataset
from .solver import ProblemConfig, initialize_state
from .spline import spline_pair_from_dict, spline_pair_to_dict

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IDENTIFIABILITY = 3
EXIT_SOLVER = 4

ENV_PREFIX = "SPATIOCAL_"

# Top-level keys the environment may override.
ENV_KEYS = (
    "seed", "out", "threads", "knot_dt", "spline_order", "tau_bound",
    "flip_doppler_sign",
)


def _load_config_file(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def _env_overrides() -> dict:
    out = {}
    for key in ENV_KEYS:
        raw = os.environ.get(ENV_PREFIX + key.upper())
        if raw is None:
            continue
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge config file, environment, and flags (later wins)."""
    cfg = {}
    if getattr(args, "config", None):
        cfg.update(_load_config_file(args.config))
    cfg.update(_env_overrides())
    for key in ENV_KEYS + ("fix", "prior", "dump_trajectory"):
        val = getattr(args, key, None)
        if val is not None and val is not False:
            cfg[key] = val
    return cfg


def _write_snapshot(out_dir: Path, command: str, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    snap = {"command": command, "resolved_config": cfg}
    with open(out_dir / "resolved_config.json", "w") as f:
        json.dump(snap, f, indent=1, default=str)


def _problem_config(cfg: dict) -> ProblemConfig:
    kwargs = dict(cfg.get("problem", {}))
    if "knot_dt" in cfg:
        kwargs["knot_dt"] = float(cfg["knot_dt"])
    if "spline_order" in cfg:
        kwargs["order"] = int(cfg["spline_order"])
    if "tau_bound" in cfg:
        kwargs["tau_bound"] = float(cfg["tau_bound"])
    if "fix" in cfg:
        kwargs["fixed"] = frozenset(cfg["fix"])
        kwargs["use_prior"] = kwargs.get("use_prior", False)
    return ProblemConfig(**kwargs)


def _sim_config(cfg: dict) -> SimConfig:
    kwargs = dict(cfg.get("sim", {}))
    for key in ("trans_amplitude", "trans_frequency", "rot_amplitude",
                "rot_frequency", "extrinsic_rpy", "extrinsic_translation",
                "principal_point"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    if "seed" in cfg:
        kwargs["seed"] = int(cfg["seed"])
    if "knot_dt" in cfg:
        kwargs["knot_dt"] = float(cfg["knot_dt"])
    if "spline_order" in cfg:
        kwargs["order"] = int(cfg["spline_order"])
    return SimConfig(**kwargs)


def load_prior(path) -> ExtrinsicPrior:
    """Prior file: JSON with rotation (wxyz quaternion or rpy radians),
    translation (m), and optional sigmas."""
    with open(path) as f:
        d = json.load(f)
    if "rotation_wxyz" in d:
        R = rotation_from_quat(np.asarray(d["rotation_wxyz"], dtype=float))
    elif "rotation_rpy" in d:
        R = rotation_from_rpy(np.asarray(d["rotation_rpy"], dtype=float))
    else:
        raise SpatiocalError(f"{path}: prior needs rotation_wxyz or rotation_rpy")
    t = np.asarray(d["translation"], dtype=float)
    kwargs = {}
    if "sigma_translation" in d:
        kwargs["sigma_translation"] = float(d["sigma_translation"])
    if "sigma_rotation_deg" in d:
        kwargs["sigma_rotation"] = float(np.deg2rad(d["sigma_rotation_deg"]))
    return ExtrinsicPrior(RigidTransform(R, t), **kwargs)


def _print_calibration(report) -> None:
    d = report.to_dict()
    r = np.asarray(d["extrinsic_translation_m"]) * 100.0
    rpy = d["extrinsic_rotation_rpy_rad"]
    print(f"status: {d['status']} ({d['iterations']} iterations)")
    print(f"translation r_c^rc [cm]:  [{r[0]:+.3f}, {r[1]:+.3f}, {r[2]:+.3f}]")
    print(
        "rotation roll-pitch-yaw [rad]: "
        f"[{rpy[0]:+.4f}, {rpy[1]:+.4f}, {rpy[2]:+.4f}]"
    )
    print(f"scale alpha: {d['alpha']:.6f}")
    print(f"temporal offset tau [ms]: {d['tau_s'] * 1e3:+.2f}")
    print(f"final cost: {d['final_cost']:.6g}")
    if d["prior_cost_fraction"] > 0:
        print(f"prior cost fraction: {100 * d['prior_cost_fraction']:.3f} %")


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    sim_cfg = _sim_config(cfg)
    out_dir = Path(cfg.get("out", "simout"))
    ds = make_dataset(sim_cfg)
    files = write_dataset(ds, out_dir)
    _write_snapshot(out_dir, "simulate", {**cfg, "sim": sim_cfg.to_dict()})
    for name, path in files.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = resolve_config(args)
    out_dir = Path(cfg.get("out", "."))
    prior = load_prior(cfg["prior"]) if cfg.get("prior") else None
    pcfg = _problem_config(cfg)
    if prior is not None:
        pcfg = dataclasses.replace(pcfg, use_prior=True)
    dataset = load_dataset(
        args.dataset,
        flip_doppler_sign=bool(cfg.get("flip_doppler_sign", False)),
        seed=int(cfg.get("seed", 0)),
    )
    report, info = run_pipeline(dataset, pcfg, prior=prior)
    _write_snapshot(out_dir, "calibrate", cfg)
    out = report.to_dict()
    out["preprocessing"] = {
        "radar_rejected": info.radar_filter.n_rejected,
        "camera_rejected": info.camera_filter.n_rejected,
        "scans_dropped": dataset.n_scans_dropped,
    }
    with open(out_dir / "report.json", "w") as f:
        json.dump(out, f, indent=1)
    if cfg.get("dump_trajectory"):
        s = report.state
        with open(out_dir / "trajectory.json", "w") as f:
            json.dump(
                spline_pair_to_dict(s.trans_spline, s.rot_spline), f, indent=1
            )
    _print_calibration(report)
    return EXIT_OK


def cmd_identifiability(args) -> int:
    cfg = resolve_config(args)
    path = Path(args.input)
    if path.is_dir():
        dataset = load_dataset(
            path,
            flip_doppler_sign=bool(cfg.get("flip_doppler_sign", False)),
            seed=int(cfg.get("seed", 0)),
        )
        pcfg = _problem_config(cfg)
        state0 = initialize_state(dataset.radar, dataset.camera, pcfg)
        scan = trajectory_excitation_scan(
            state0.trans_spline, state0.rot_spline, state0.R_cr,
            state0.r_rc, state0.alpha,
        )
    else:
        with open(path) as f:
            d = json.load(f)
        traj = d.get("trajectory", d)
        trans, rot = spline_pair_from_dict(traj)
        R_cr = (
            rotation_from_quat(np.asarray(d["extrinsic_rotation_wxyz"]))
            if "extrinsic_rotation_wxyz" in d
            else np.eye(3)
        )
        r_rc = np.asarray(d.get("extrinsic_translation_m", [0.0, 0.0, 0.0]))
        alpha = float(d.get("alpha", 1.0))
        scan = trajectory_excitation_scan(trans, rot, R_cr, r_rc, alpha)
    print(f"verdict: {scan.verdict}")
    print(f"rank: {scan.rank}/8 over {scan.n_samples} samples")
    print(f"singular values: {np.array2string(scan.singular_values, precision=4)}")
    if scan.degenerate_flags:
        print("degenerate motion conditions: " + ", ".join(scan.degenerate_flags))
    return EXIT_OK if scan.identifiable else EXIT_IDENTIFIABILITY


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    sweep_cfg = cfg.get("sweep", {})
    sigma_r = [float(x) for x in sweep_cfg.get("sigma_r", (0.05, 0.2))]
    sigma_c = [float(x) for x in sweep_cfg.get("sigma_c", (0.1, 0.4))]
    trials = int(sweep_cfg.get("trials", 50))
    out_dir = Path(cfg.get("out", "sweepout"))
    out_dir.mkdir(parents=True, exist_ok=True)
    sim_cfg = _sim_config(cfg)
    pcfg = _problem_config(cfg) if ("problem" in cfg or "knot_dt" in cfg) else None
    threads = int(cfg["threads"]) if "threads" in cfg else None
    _write_snapshot(
        out_dir,
        "sweep",
        {**cfg, "sim": sim_cfg.to_dict(),
         "sweep": {"sigma_r": sigma_r, "sigma_c": sigma_c, "trials": trials}},
    )
    rows = run_noise_sweep(
        sigma_r, sigma_c, trials, sim_cfg,
        problem_cfg=pcfg, threads=threads, out_csv=out_dir / "sweep.csv",
    )
    n_ok = sum(1 for r in rows if r["status"] == "ok")
    print(f"sweep complete: {n_ok}/{len(rows)} trials converged")
    print(f"csv: {out_dir / 'sweep.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatiocal",
        description="Targetless spatiotemporal calibration of a 3D radar "
        "and a monocular camera from ego-motion.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML or JSON config file")
        p.add_argument("--seed", type=int, help="RNG seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="worker process cap")
        p.add_argument("--knot-dt", dest="knot_dt", type=float,
                       help="spline knot spacing [s] (default 0.1)")
        p.add_argument("--spline-order", dest="spline_order", type=int,
                       help="B-spline order k (default 4)")
        p.add_argument("--tau-bound", dest="tau_bound", type=float,
                       help="temporal offset search bound [s] (default 0.5)")

    p_sim = sub.add_parser("simulate", help="write a synthetic dataset")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_cal = sub.add_parser("calibrate", help="calibrate from a dataset directory")
    common(p_cal)
    p_cal.add_argument("dataset", help="dataset directory (with meta.json)")
    p_cal.add_argument("--fix", action="append",
                       choices=("alpha", "tau", "extrinsics"),
                       help="hold a parameter block at its initial value")
    p_cal.add_argument("--prior", help="extrinsic prior JSON file")
    p_cal.add_argument("--flip-doppler-sign", dest="flip_doppler_sign",
                       action="store_true", default=None,
                       help="negate raw Doppler range rates on load")
    p_cal.add_argument("--dump-trajectory", dest="dump_trajectory",
                       action="store_true", default=None,
                       help="also write the estimated trajectory splines")
    p_cal.set_defaults(func=cmd_calibrate)

    p_id = sub.add_parser(
        "identifiability", help="excitation analysis of a dataset or trajectory"
    )
    common(p_id)
    p_id.add_argument("input", help="dataset directory or trajectory JSON")
    p_id.add_argument("--flip-doppler-sign", dest="flip_doppler_sign",
                      action="store_true", default=None)
    p_id.set_defaults(func=cmd_identifiability)

    p_sweep = sub.add_parser("sweep", help="noise sweep study, writes sweep.csv")
    common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger("jax").setLevel(logging.WARNING)
    try:
        return args.func(args)
    except (IdentifiabilityError, ConfigDegenerate) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IDENTIFIABILITY
    except (NotConverged, DivergedNumerically, SingularHessian) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SpatiocalError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
