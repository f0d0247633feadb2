"""Targetless spatiotemporal calibration of a 3D Doppler radar and a
monocular camera.

The estimator recovers the radar-to-camera rigid transform, the metric
scale of the camera's up-to-scale trajectory, and the time offset
between the two sensor clocks, using only ego-motion: per-scan radar
ego-velocities and monocular pose estimates, fused through a
continuous-time B-spline trajectory.
"""

from .egovel import (
    EgoVelocityMeasurement,
    RadarDetection,
    RadarScan,
    RansacConfig,
    load_ego_velocities_csv,
    load_radar_scans_csv,
    ransac_ego_velocity,
    save_ego_velocities_csv,
    solve_ego_velocity,
)
from .errors import (
    DegenerateGeometry,
    IdentifiabilityError,
    InsufficientData,
    NoConsensus,
    NotConverged,
    OutOfDomain,
    OutOfSpan,
    ParseError,
    SpatiocalError,
    TooFewDetections,
    TooFewSamples,
    UnitMismatch,
)
from .geometry import RigidTransform, exp_se3, exp_so3, log_se3, log_so3
from .identifiability import (
    IdentifiabilityReport,
    MotionSample,
    build_identifiability_matrix,
    degenerate_motion_check,
    trajectory_excitation_scan,
)
from .pipeline import (
    Dataset,
    MedianFilterConfig,
    filter_camera_stream,
    filter_radar_stream,
    load_dataset,
    run_pipeline,
)
from .residuals import (
    CalibrationState,
    CameraPoseMeasurement,
    ExtrinsicPrior,
    load_camera_poses_csv,
    save_camera_poses_csv,
)
from .sim import SimConfig, SimDataset, make_dataset, run_noise_sweep, write_dataset
from .solver import (
    CalibrationReport,
    ProblemConfig,
    initialize_state,
    marginal_covariance,
    solve,
)
from .spline import (
    KnotGrid,
    RotationSpline,
    TranslationSpline,
    spline_pair_from_dict,
    spline_pair_to_dict,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationReport",
    "CalibrationState",
    "CameraPoseMeasurement",
    "Dataset",
    "DegenerateGeometry",
    "EgoVelocityMeasurement",
    "ExtrinsicPrior",
    "IdentifiabilityError",
    "IdentifiabilityReport",
    "InsufficientData",
    "KnotGrid",
    "MedianFilterConfig",
    "MotionSample",
    "NoConsensus",
    "NotConverged",
    "OutOfDomain",
    "OutOfSpan",
    "ParseError",
    "ProblemConfig",
    "RadarDetection",
    "RadarScan",
    "RansacConfig",
    "RigidTransform",
    "RotationSpline",
    "SimConfig",
    "SimDataset",
    "SpatiocalError",
    "TooFewDetections",
    "TooFewSamples",
    "TranslationSpline",
    "UnitMismatch",
    "build_identifiability_matrix",
    "degenerate_motion_check",
    "exp_se3",
    "exp_so3",
    "filter_camera_stream",
    "filter_radar_stream",
    "initialize_state",
    "load_camera_poses_csv",
    "load_dataset",
    "load_ego_velocities_csv",
    "load_radar_scans_csv",
    "log_se3",
    "log_so3",
    "make_dataset",
    "marginal_covariance",
    "ransac_ego_velocity",
    "run_noise_sweep",
    "run_pipeline",
    "save_camera_poses_csv",
    "save_ego_velocities_csv",
    "solve",
    "solve_ego_velocity",
    "spline_pair_from_dict",
    "spline_pair_to_dict",
    "trajectory_excitation_scan",
    "write_dataset",
]
