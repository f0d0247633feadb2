"""Uniform cumulative B-splines on R^3 and SO(3) with analytic derivatives.

The trajectory is a pair of splines sharing one knot grid: a vector
spline for the translation track and a cumulative spline on SO(3) for
the rotation track. Value/derivative evaluation is reentrant; splines
are immutable value objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import OutOfDomain
from .geometry import (
    cross3,
    exp_so3,
    log_so3,
    quat_from_rotation,
    rotation_from_quat,
)

MAX_ORDER = 10


@lru_cache(maxsize=None)
def mixing_matrix(k: int) -> np.ndarray:
    """Cumulative mixing matrix M~_k of a uniform B-spline of order k.

    Entry (a, n) is sum_{s=a}^{k-1} m_k^(s,n) with

        m_k^(s,n) = C(k-1,n)/(k-1)! *
                    sum_{l=s}^{k-1} (-1)^(l-s) C(k,l-s) (k-1-l)^(k-1-n)

    evaluated exactly in rational arithmetic before conversion to float.
    """
    if not (1 <= k <= MAX_ORDER):
        raise ValueError(f"spline order must be in [1, {MAX_ORDER}], got {k}")
    m = [[Fraction(0)] * k for _ in range(k)]
    fact = math.factorial(k - 1)
    for s in range(k):
        for n in range(k):
            acc = Fraction(0)
            for l in range(s, k):
                acc += (-1) ** (l - s) * math.comb(k, l - s) * Fraction(
                    (k - 1 - l) ** (k - 1 - n)
                )
            m[s][n] = Fraction(math.comb(k - 1, n), fact) * acc
    M = np.empty((k, k))
    for a in range(k):
        for n in range(k):
            M[a, n] = float(sum(m[s][n] for s in range(a, k)))
    M.setflags(write=False)
    return M


def _u_powers(u: float, k: int, deriv: int) -> np.ndarray:
    """d^deriv/du^deriv of (1, u, u^2, ..., u^(k-1))."""
    out = np.zeros(k)
    for n in range(deriv, k):
        coeff = 1.0
        for m in range(deriv):
            coeff *= n - m
        out[n] = coeff * u ** (n - deriv)
    return out


def basis_weights(k: int, u: float, deriv: int = 0) -> np.ndarray:
    """Cumulative weights lambda(u) (rows 0..k-1) or their u-derivatives."""
    return mixing_matrix(k) @ _u_powers(u, k, deriv)


@dataclass(frozen=True)
class KnotGrid:
    """Uniform knot grid: control point i sits at t0 + i*dt."""

    t0: float
    dt: float
    n_control: int

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("knot spacing must be positive")
        if self.n_control < 1:
            raise ValueError("need at least one control point")

    def knot(self, i: int) -> float:
        return self.t0 + i * self.dt

    def domain(self, k: int) -> tuple[float, float]:
        """Valid half-open query interval [t0, t_{N-k+1}) for order k."""
        if self.n_control < k:
            raise ValueError(f"grid has {self.n_control} control points, order {k} needs >= {k}")
        return self.t0, self.t0 + (self.n_control - k + 1) * self.dt

    def locate(self, t: float, k: int) -> tuple[int, float]:
        """Segment index i and normalized time u = (t - t_i)/dt in [0, 1)."""
        lo, hi = self.domain(k)
        if not (lo <= t < hi):
            raise OutOfDomain(t, lo, hi)
        i = int(math.floor((t - self.t0) / self.dt))
        i = min(i, self.n_control - k)  # guard float roundoff at segment ends
        u = (t - self.knot(i)) / self.dt
        if u >= 1.0:  # roundoff pushed u to the next segment
            i += 1
            u = (t - self.knot(i)) / self.dt
        return i, max(0.0, u)


@dataclass(frozen=True)
class TranslationSpline:
    """Vector-valued cumulative B-spline r(t) with analytic derivatives."""

    grid: KnotGrid
    control_points: np.ndarray  # (n_control, 3)
    order: int = 4

    def __post_init__(self):
        cps = np.asarray(self.control_points, dtype=float)
        if cps.shape != (self.grid.n_control, 3):
            raise ValueError("control point array shape mismatch")
        object.__setattr__(self, "control_points", cps)

    @property
    def domain(self) -> tuple[float, float]:
        return self.grid.domain(self.order)

    def evaluate(self, t: float, n_derivs: int = 2) -> tuple[np.ndarray, ...]:
        """Position and its first n_derivs time derivatives at t."""
        k = self.order
        i, u = self.grid.locate(t, k)
        cps = self.control_points[i : i + k]
        diffs = np.diff(cps, axis=0)  # d_j = p_{i+j} - p_{i+j-1}
        out = []
        for d in range(n_derivs + 1):
            lam = basis_weights(k, u, d) / self.grid.dt**d
            val = lam[1:] @ diffs if k > 1 else np.zeros(3)
            if d == 0:
                val = cps[0] + val
            out.append(val)
        return tuple(out)

    def with_control_points(self, cps: np.ndarray) -> "TranslationSpline":
        return TranslationSpline(self.grid, cps, self.order)


def eval_translation(s: TranslationSpline, t: float):
    """Position, velocity, acceleration of the translation spline at t."""
    return s.evaluate(t, n_derivs=2)


@dataclass(frozen=True)
class RotationSpline:
    """Cumulative B-spline on SO(3): R(u) = R_i prod_j exp(lambda_j phi_j)."""

    grid: KnotGrid
    control_points: np.ndarray  # (n_control, 3, 3)
    order: int = 4
    # Cached relative rotation vectors phi_i = log(R_{i-1}^T R_i).
    _phis: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cps = np.asarray(self.control_points, dtype=float)
        if cps.shape != (self.grid.n_control, 3, 3):
            raise ValueError("control point array shape mismatch")
        object.__setattr__(self, "control_points", cps)
        phis = np.zeros((self.grid.n_control, 3))
        for i in range(1, self.grid.n_control):
            phis[i] = log_so3(cps[i - 1].T @ cps[i])
        object.__setattr__(self, "_phis", phis)

    @property
    def domain(self) -> tuple[float, float]:
        return self.grid.domain(self.order)

    def evaluate(self, t: float, with_accel: bool = False):
        """Rotation R(t) and body angular velocity (and optionally body
        angular acceleration).

        The body rate satisfies skew(omega) = R^T dR/dt and is built by
        the recursive product rule over the cumulative factors.
        """
        k = self.order
        i, u = self.grid.locate(t, k)
        dt = self.grid.dt
        lam = basis_weights(k, u, 0)
        dlam = basis_weights(k, u, 1) / dt
        ddlam = basis_weights(k, u, 2) / dt**2

        R = self.control_points[i].copy()
        omega = np.zeros(3)
        domega = np.zeros(3)
        for j in range(1, k):
            phi = self._phis[i + j]
            A = exp_so3(lam[j] * phi)
            w_in = A.T @ omega
            dw_in = A.T @ domega
            R = R @ A
            domega = dw_in - dlam[j] * cross3(phi, w_in) + ddlam[j] * phi
            omega = w_in + dlam[j] * phi
        if with_accel:
            return R, omega, domega
        return R, omega

    def with_control_points(self, cps: np.ndarray) -> "RotationSpline":
        return RotationSpline(self.grid, cps, self.order)


def eval_rotation(s: RotationSpline, t: float):
    """Rotation and body-frame angular velocity at t."""
    return s.evaluate(t)


def spline_pair_to_dict(trans: TranslationSpline, rot: RotationSpline) -> dict:
    """JSON-ready dump of a trajectory spline pair (rotations as wxyz
    unit quaternions)."""
    if trans.grid != rot.grid:
        raise ValueError("spline pair must share one knot grid")
    return {
        "t0": trans.grid.t0,
        "dt": trans.grid.dt,
        "n_control": trans.grid.n_control,
        "order": trans.order,
        "translation_control_points": trans.control_points.tolist(),
        "rotation_control_points_wxyz": [
            quat_from_rotation(R).tolist() for R in rot.control_points
        ],
    }


def spline_pair_from_dict(d: dict) -> tuple[TranslationSpline, RotationSpline]:
    grid = KnotGrid(float(d["t0"]), float(d["dt"]), int(d["n_control"]))
    k = int(d["order"])
    trans = TranslationSpline(grid, np.array(d["translation_control_points"]), k)
    rots = np.array([rotation_from_quat(np.array(q)) for q in d["rotation_control_points_wxyz"]])
    return trans, RotationSpline(grid, rots, k)
