"""Exception hierarchy shared across the calibration toolkit."""

from __future__ import annotations


class SpatiocalError(Exception):
    """Base class for all library errors."""


class OutOfDomain(SpatiocalError):
    """Spline queried outside its valid time interval."""

    def __init__(self, t: float, t_min: float, t_max: float):
        self.t = t
        self.t_min = t_min
        self.t_max = t_max
        super().__init__(
            f"time {t:.6f} s outside spline domain [{t_min:.6f}, {t_max:.6f})"
        )


class OutOfSpan(SpatiocalError):
    """Interpolation query outside the sampled span."""


class TooFewDetections(SpatiocalError):
    """Fewer than three radar detections in a scan."""


class DegenerateGeometry(SpatiocalError):
    """Radar detection directions do not span 3D (rank(H) < 3)."""


class NoConsensus(SpatiocalError):
    """RANSAC failed to find an acceptable inlier set."""


class TooFewSamples(SpatiocalError):
    """Not enough motion samples for the identifiability matrix."""


class InsufficientData(SpatiocalError):
    """Not enough measurements to initialize the calibration state."""


class NotConverged(SpatiocalError):
    """Solver hit the iteration cap; carries the best state found so far."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class DivergedNumerically(SpatiocalError):
    """Non-finite cost encountered; carries the best state found so far."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class SingularHessian(SpatiocalError):
    """Calibration block of the normal matrix is numerically singular."""

    def __init__(self, message: str, null_direction=None):
        self.null_direction = null_direction
        super().__init__(message)


class IdentifiabilityError(SpatiocalError):
    """Trajectory excitation too weak for the requested solve."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class ConfigDegenerate(SpatiocalError):
    """Simulation config produces a degenerate (non-identifiable) motion."""

    def __init__(self, message: str, flags=None):
        self.flags = list(flags or [])
        super().__init__(message)


class TargetNotVisible(SpatiocalError):
    """Simulated checkerboard fell outside the camera frustum."""


class ParseError(SpatiocalError):
    """Malformed input file; names the offending file and line."""

    def __init__(self, path, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class UnitMismatch(SpatiocalError):
    """Dataset metadata is missing or declares non-SI units."""
