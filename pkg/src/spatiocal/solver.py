"""Batch nonlinear least squares over the calibration state.

Levenberg-Marquardt on the whitened stacked residuals with
manifold-aware updates: additive steps for translation control points,
the extrinsic translation, alpha and tau; left-multiplicative
exponential steps for rotation control points and R_cr. The normal
equations exploit spline locality (each measurement touches k control
point blocks plus the 8 calibration parameters) through sparse
assembly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_triangular

from . import _kernels
from .egovel import EgoVelocityMeasurement
from .errors import (
    DivergedNumerically,
    IdentifiabilityError,
    InsufficientData,
    NotConverged,
    SingularHessian,
)
from .geometry import (
    cross3,
    exp_so3,
    project_to_so3,
    quat_from_rotation,
    rpy_from_rotation,
    slerp,
)
from .identifiability import trajectory_excitation_scan
from .residuals import CalibrationState, CameraPoseMeasurement, ExtrinsicPrior
from .spline import KnotGrid, RotationSpline, TranslationSpline, basis_weights

log = logging.getLogger(__name__)

HUBER_SCALE = 1.345  # in whitened units

FIXABLE_BLOCKS = ("alpha", "tau", "extrinsics")


@dataclass(frozen=True)
class ProblemConfig:
    """Solver and problem-construction settings."""

    order: int = 4
    knot_dt: float = 0.1
    tau_bound: float = 0.5
    max_iterations: int = 100
    gradient_tol: float = 1e-8
    cost_tol: float = 1e-10
    step_tol: float = 1e-11
    use_prior: bool = False
    huber: bool = False
    fixed: frozenset = frozenset()
    tau_grid_init: bool = True
    tau_grid_points: int = 21
    identifiability_min_sv: float = 1e-3
    identifiability_sample_rate: float = 10.0
    skip_identifiability_check: bool = False

    def __post_init__(self):
        if self.knot_dt <= 0 or self.gradient_tol <= 0 or self.cost_tol <= 0:
            raise ValueError("tolerances and knot spacing must be positive")
        bad = set(self.fixed) - set(FIXABLE_BLOCKS)
        if bad:
            raise ValueError(f"unknown fixed blocks: {sorted(bad)}")
        object.__setattr__(self, "fixed", frozenset(self.fixed))


@dataclass
class CalibrationReport:
    """Solver outcome with diagnostics."""

    state: CalibrationState
    status: str  # CONVERGED | MAX_ITERATIONS | DIVERGED
    initial_cost: float
    final_cost: float
    cost_breakdown: dict
    iterations: int
    gradient_norm: float
    prior_cost_fraction: float
    n_radar: int
    n_camera: int
    n_radar_dropped: int
    covariance: np.ndarray | None = None  # 8x8 over (dR_cr, dr_rc, dalpha, dtau)
    covariance_error: str | None = None

    def to_dict(self) -> dict:
        s = self.state
        return {
            "status": self.status,
            "initial_cost": self.initial_cost,
            "final_cost": self.final_cost,
            "cost_breakdown": self.cost_breakdown,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "prior_cost_fraction": self.prior_cost_fraction,
            "n_radar": self.n_radar,
            "n_camera": self.n_camera,
            "n_radar_dropped": self.n_radar_dropped,
            "extrinsic_rotation_wxyz": quat_from_rotation(s.R_cr).tolist(),
            "extrinsic_rotation_rpy_rad": rpy_from_rotation(s.R_cr).tolist(),
            "extrinsic_translation_m": np.asarray(s.r_rc).tolist(),
            "alpha": s.alpha,
            "tau_s": s.tau,
            "covariance_calibration": (
                self.covariance.tolist() if self.covariance is not None else None
            ),
            "covariance_error": self.covariance_error,
        }


class _Problem:
    """Measurement bookkeeping and sparse residual/Jacobian assembly."""

    def __init__(
        self,
        state: CalibrationState,
        radar: list[EgoVelocityMeasurement],
        camera: list[CameraPoseMeasurement],
        cfg: ProblemConfig,
        prior: ExtrinsicPrior | None = None,
    ):
        self.cfg = cfg
        self.prior = prior
        grid = state.trans_spline.grid
        self.grid = grid
        self.k = state.trans_spline.order
        self.n = grid.n_control
        self.dim = 6 * self.n + 8
        lo, hi = grid.domain(self.k)

        tau_free = "tau" not in cfg.fixed
        margin = cfg.tau_bound if tau_free else 0.0
        kept = [
            m
            for m in radar
            if lo <= m.timestamp + state.tau - margin
            and m.timestamp + state.tau + margin < hi
        ]
        self.n_radar_dropped = len(radar) - len(kept)
        self.radar = kept
        self.camera = [m for m in camera if lo <= m.timestamp < hi]

        # Whitening factors W = L^-1 with Sigma = L L^T.
        def whiten(cov):
            L = np.linalg.cholesky(np.asarray(cov, dtype=float))
            return solve_triangular(L, np.eye(len(cov)), lower=True)

        self.radar_t = np.array([m.timestamp for m in self.radar])
        self.radar_h = np.array([m.velocity for m in self.radar]).reshape(-1, 3)
        self.radar_W = np.array([whiten(m.covariance) for m in self.radar]).reshape(
            -1, 3, 3
        )

        self.cam_t = np.array([m.timestamp for m in self.camera])
        self.cam_R = np.array([m.rotation for m in self.camera]).reshape(-1, 3, 3)
        self.cam_p = np.array([m.translation for m in self.camera]).reshape(-1, 3)
        self.cam_Wr = np.array([whiten(m.cov_rotation) for m in self.camera]).reshape(
            -1, 3, 3
        )
        self.cam_Wt = np.array(
            [whiten(m.cov_translation) for m in self.camera]
        ).reshape(-1, 3, 3)
        ci, cu = self._locate_many(self.cam_t)
        self.cam_idx = ci
        self.cam_u = cu
        self.prior_W = whiten(prior.covariance) if prior is not None else None

    def _locate_many(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grid, k = self.grid, self.k
        idx = np.floor((times - grid.t0) / grid.dt).astype(int)
        idx = np.clip(idx, 0, grid.n_control - k)
        u = (times - (grid.t0 + idx * grid.dt)) / grid.dt
        over = u >= 1.0
        bump = over & (idx < grid.n_control - k)
        idx[bump] += 1
        u = (times - (grid.t0 + idx * grid.dt)) / grid.dt
        return idx, np.clip(u, 0.0, np.nextafter(1.0, 0.0))

    # -- column index helpers ------------------------------------------------
    def _cp_cols(self, idx: np.ndarray, rot: bool) -> np.ndarray:
        """(M, 3k) packed-state columns of the k active control points."""
        base = 3 * self.n if rot else 0
        offs = 3 * (idx[:, None] + np.arange(self.k)[None, :])
        cols = base + (offs[:, :, None] + np.arange(3)[None, None, :])
        return cols.reshape(len(idx), 3 * self.k)

    @property
    def col_phi_cr(self):
        return 6 * self.n

    def assemble(self, state: CalibrationState):
        """Whitened residual vector, sparse Jacobian, cost breakdown."""
        k, n = self.k, self.n
        dt = self.grid.dt
        tcp = state.trans_spline.control_points
        rcp = state.rot_spline.control_points
        rows_e = []
        trip_r, trip_c, trip_v = [], [], []
        breakdown = {"radar": 0.0, "camera_rotation": 0.0, "camera_translation": 0.0,
                     "prior": 0.0}
        row0 = 0

        def add_block(e_wh, J_wh, cols, key):
            nonlocal row0
            m = len(e_wh)
            if m == 0:
                return
            if self.cfg.huber:
                norms = np.linalg.norm(e_wh, axis=1)
                w = np.sqrt(np.minimum(1.0, HUBER_SCALE / np.maximum(norms, 1e-30)))
                e_wh = e_wh * w[:, None]
                J_wh = J_wh * w[:, None, None]
            breakdown[key] += float(np.sum(e_wh**2))
            rows_e.append(e_wh.reshape(-1))
            nc = J_wh.shape[2]
            r = row0 + 3 * np.arange(m)[:, None, None] + np.arange(3)[None, :, None]
            r = np.broadcast_to(r, (m, 3, nc))
            c = np.broadcast_to(cols[:, None, :], (m, 3, nc))
            trip_r.append(r.reshape(-1))
            trip_c.append(c.reshape(-1))
            trip_v.append(J_wh.reshape(-1))
            row0 += 3 * m

        if len(self.radar):
            ri, ru = self._locate_many(self.radar_t + state.tau)
            kern = _kernels.radar_kernel(k)
            gather = ri[:, None] + np.arange(k)[None, :]
            e, J = kern(ru, tcp[gather], rcp[gather], self.radar_h, dt)
            e = np.asarray(e)
            J = np.asarray(J)
            e_wh = np.einsum("mij,mj->mi", self.radar_W, e)
            J_wh = np.einsum("mij,mjc->mic", self.radar_W, J)
            cols = np.concatenate(
                [
                    self._cp_cols(ri, rot=False),
                    self._cp_cols(ri, rot=True),
                    np.full((len(ri), 1), 6 * n + 7),
                ],
                axis=1,
            )
            add_block(e_wh, J_wh, cols, "radar")

        if len(self.camera):
            gather = self.cam_idx[:, None] + np.arange(k)[None, :]
            kern_r = _kernels.camrot_kernel(k)
            e, J = kern_r(self.cam_u, rcp[gather], self.cam_R, state.R_cr, dt)
            e_wh = np.einsum("mij,mj->mi", self.cam_Wr, np.asarray(e))
            J_wh = np.einsum("mij,mjc->mic", self.cam_Wr, np.asarray(J))
            cols = np.concatenate(
                [
                    self._cp_cols(self.cam_idx, rot=True),
                    np.tile(6 * n + np.arange(3), (len(self.cam_idx), 1)),
                ],
                axis=1,
            )
            add_block(e_wh, J_wh, cols, "camera_rotation")

            kern_t = _kernels.camtrans_kernel(k)
            e, J = kern_t(
                self.cam_u, tcp[gather], self.cam_p, state.R_cr, state.r_rc,
                state.alpha, dt,
            )
            e_wh = np.einsum("mij,mj->mi", self.cam_Wt, np.asarray(e))
            J_wh = np.einsum("mij,mjc->mic", self.cam_Wt, np.asarray(J))
            cols = np.concatenate(
                [
                    self._cp_cols(self.cam_idx, rot=False),
                    np.tile(6 * n + np.arange(7), (len(self.cam_idx), 1)),
                ],
                axis=1,
            )
            add_block(e_wh, J_wh, cols, "camera_translation")

        if self.prior is not None:
            e, J = _kernels.prior_kernel(
                state.R_cr, state.r_rc, self.prior.transform.rotation,
                self.prior.transform.translation,
            )
            e_wh = self.prior_W @ e
            J_wh = self.prior_W @ J
            breakdown["prior"] = float(e_wh @ e_wh)
            rows_e.append(e_wh)
            cols6 = 6 * n + np.arange(6)
            rr, cc = np.meshgrid(row0 + np.arange(6), cols6, indexing="ij")
            trip_r.append(rr.reshape(-1))
            trip_c.append(cc.reshape(-1))
            trip_v.append(J_wh.reshape(-1))
            row0 += 6

        e_all = np.concatenate(rows_e) if rows_e else np.zeros(0)
        Jsp = sp.coo_matrix(
            (
                np.concatenate(trip_v) if trip_v else np.zeros(0),
                (
                    np.concatenate(trip_r) if trip_r else np.zeros(0, dtype=int),
                    np.concatenate(trip_c) if trip_c else np.zeros(0, dtype=int),
                ),
            ),
            shape=(row0, self.dim),
        ).tocsr()
        return e_all, Jsp, breakdown

    def free_columns(self) -> np.ndarray:
        free = np.ones(self.dim, dtype=bool)
        n6 = 6 * self.n
        if "extrinsics" in self.cfg.fixed:
            free[n6 : n6 + 6] = False
        if "alpha" in self.cfg.fixed:
            free[n6 + 6] = False
        if "tau" in self.cfg.fixed:
            free[n6 + 7] = False
        if not len(self.radar):
            free[n6 + 7] = False  # tau unobservable without radar
        return free

    def apply_step(self, state: CalibrationState, dx: np.ndarray) -> CalibrationState:
        n = self.n
        tcp = state.trans_spline.control_points + dx[: 3 * n].reshape(n, 3)
        theta = dx[3 * n : 6 * n].reshape(n, 3)
        rcp = state.rot_spline.control_points.copy()
        for m in np.nonzero(np.abs(theta).sum(axis=1) > 0)[0]:
            rcp[m] = exp_so3(theta[m]) @ rcp[m]
        n6 = 6 * n
        R_cr = exp_so3(dx[n6 : n6 + 3]) @ state.R_cr
        r_rc = state.r_rc + dx[n6 + 3 : n6 + 6]
        alpha = max(state.alpha + dx[n6 + 6], 1e-9)
        tau = float(np.clip(state.tau + dx[n6 + 7], -self.cfg.tau_bound, self.cfg.tau_bound))
        return CalibrationState(
            state.trans_spline.with_control_points(tcp),
            state.rot_spline.with_control_points(rcp),
            R_cr,
            r_rc,
            alpha,
            tau,
        )


def _fit_translation_spline(
    grid: KnotGrid, k: int, times: np.ndarray, targets: np.ndarray
) -> np.ndarray:
    """Linear least-squares control points fitting spline values to
    (times, targets); one shared scalar system for all 3 axes."""
    n = grid.n_control
    rows, cols, vals = [], [], []
    for r, t in enumerate(times):
        i, u = grid.locate(float(t), k)
        lam = basis_weights(k, u)
        w = np.empty(k)
        w[0] = 1.0 - lam[1] if k > 1 else 1.0
        for j in range(1, k - 1):
            w[j] = lam[j] - lam[j + 1]
        if k > 1:
            w[k - 1] = lam[k - 1]
        rows.extend([r] * k)
        cols.extend(range(i, i + k))
        vals.extend(w)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(len(times), n)).tocsc()
    AtA = (A.T @ A).tocsc()
    Atb = A.T @ targets
    try:
        lu = spla.splu(AtA)
        return np.column_stack([lu.solve(Atb[:, a]) for a in range(3)])
    except RuntimeError:
        sol = np.column_stack(
            [spla.lsqr(A, targets[:, a], atol=1e-14, btol=1e-14)[0] for a in range(3)]
        )
        return sol


def _fit_rotation_spline(
    grid: KnotGrid,
    k: int,
    times: np.ndarray,
    rotations: np.ndarray,
    max_iterations: int = 25,
) -> np.ndarray:
    """Fit rotation spline control points to sampled rotations by
    Gauss-Newton on log(R_meas R_spline(t)^T ... ) residuals."""
    n = grid.n_control
    # Seed control points by geodesic interpolation of the samples.
    cps = np.empty((n, 3, 3))
    for i in range(n):
        t = grid.knot(i)
        j = int(np.searchsorted(times, t))
        if j == 0:
            cps[i] = rotations[0]
        elif j >= len(times):
            cps[i] = rotations[-1]
        else:
            w = (t - times[j - 1]) / (times[j] - times[j - 1])
            cps[i] = slerp(rotations[j - 1], rotations[j], w)

    idx = np.empty(len(times), dtype=int)
    us = np.empty(len(times))
    for r, t in enumerate(times):
        idx[r], us[r] = grid.locate(float(t), k)
    gather = idx[:, None] + np.arange(k)[None, :]
    kern = _kernels.camrot_kernel(k)
    R_meas = rotations.transpose(0, 2, 1)  # residual uses R_meas @ R_spline
    eye = np.eye(3)
    prev = np.inf
    for _ in range(max_iterations):
        e, J = kern(us, cps[gather], R_meas, eye, grid.dt)
        e = np.asarray(e)
        J = np.asarray(J)[:, :, : 3 * k]  # drop the R_cr columns
        cost = float(np.sum(e**2))
        rows = np.repeat(3 * np.arange(len(times)), 3 * 3 * k) + np.tile(
            np.repeat(np.arange(3), 3 * k), len(times)
        )
        cols = 3 * (gather[:, :, None] + np.zeros((1, 1, 3), dtype=int)) + np.arange(3)
        cols = np.broadcast_to(
            cols.reshape(len(times), 1, 3 * k), (len(times), 3, 3 * k)
        )
        A = sp.coo_matrix(
            (J.reshape(-1), (rows, cols.reshape(-1))), shape=(3 * len(times), 3 * n)
        ).tocsr()
        H = (A.T @ A).tocsc()
        g = A.T @ e.reshape(-1)
        damp = 1e-10 * max(H.diagonal().max(), 1.0)
        try:
            dx = spla.splu(H + damp * sp.identity(3 * n, format="csc")).solve(-g)
        except RuntimeError:
            break
        for m in range(n):
            cps[m] = exp_so3(dx[3 * m : 3 * m + 3]) @ cps[m]
        if cost < 1e-24 or abs(prev - cost) < 1e-16 + 1e-9 * cost:
            break
        prev = cost
    return cps


def initialize_state(
    radar: list[EgoVelocityMeasurement],
    camera: list[CameraPoseMeasurement],
    cfg: ProblemConfig,
    R_cr0: np.ndarray | None = None,
    r_rc0: np.ndarray | None = None,
    alpha0: float = 1.0,
) -> CalibrationState:
    """Initial state: splines fitted to the camera stream under the
    initial extrinsic guess, alpha0 = 1, and tau0 from a coarse speed
    correlation grid search (when enabled)."""
    k = cfg.order
    camera = sorted(camera, key=lambda m: m.timestamp)
    if len(camera) < k:
        raise InsufficientData(f"need >= {k} camera poses, got {len(camera)}")
    t0 = camera[0].timestamp
    t_max = camera[-1].timestamp
    if t_max - t0 <= k * cfg.knot_dt:
        raise InsufficientData(
            f"camera poses span {t_max - t0:.3f} s; need > {k * cfg.knot_dt:.3f} s"
        )
    bootstrap = R_cr0 is None
    R_cr0 = np.eye(3) if R_cr0 is None else np.asarray(R_cr0, dtype=float)
    r_rc0 = np.zeros(3) if r_rc0 is None else np.asarray(r_rc0, dtype=float)
    q = (t_max - t0) / cfg.knot_dt
    n = k + int(math.floor(q + 1e-9))
    grid = KnotGrid(t0, cfg.knot_dt, n)
    times = np.array([m.timestamp for m in camera])

    def fit(R_c, r_c, a):
        # Trajectory samples implied by the camera stream under a
        # candidate calibration.
        rot_samples = np.array([m.rotation.T @ R_c for m in camera])
        trans_samples = np.array([R_c.T @ (m.translation / a - r_c) for m in camera])
        tcp = _fit_translation_spline(grid, k, times, trans_samples)
        rcp = _fit_rotation_spline(grid, k, times, rot_samples)
        return TranslationSpline(grid, tcp, k), RotationSpline(grid, rcp, k)

    trans, rot = fit(R_cr0, r_rc0, alpha0)
    if bootstrap and len(radar) >= 10:
        est = _bootstrap_extrinsics(trans, rot, radar)
        if est is not None:
            R_cr0, alpha0 = est
            trans, rot = fit(R_cr0, r_rc0, alpha0)

    tau0 = 0.0
    if cfg.tau_grid_init and "tau" not in cfg.fixed and len(radar) >= 10:
        tau0 = _tau_grid_search(trans, rot, radar, cfg)
    return CalibrationState(trans, rot, R_cr0, r_rc0, alpha0, tau0)


def _bootstrap_extrinsics(trans, rot, radar) -> tuple[np.ndarray, float] | None:
    """Global guess for (R_cr, alpha) by aligning measured ego
    velocities with those implied by an identity-extrinsic spline fit.

    Under (R_cr = I, alpha = 1) the fitted splines carry the camera
    stream verbatim, so their implied ego velocity is alpha R_cr h plus
    a small lever-arm term; orthogonal Procrustes over the velocity
    pairs recovers the rotation and the speed ratio the scale."""
    lo, hi = trans.domain
    pairs_h, pairs_g = [], []
    for m in radar:
        if not (lo <= m.timestamp < hi):
            continue
        r, dr, _ = trans.evaluate(m.timestamp)
        _, om = rot.evaluate(m.timestamp)
        pairs_h.append(m.velocity)
        pairs_g.append(-(dr + cross3(om, r)))
    h = np.array(pairs_h)
    g = np.array(pairs_g)
    speed = np.linalg.norm(h, axis=1)
    keep = speed > 0.05
    if keep.sum() < 10:
        return None
    h, g = h[keep], g[keep]
    ratios = np.linalg.norm(g, axis=1) / np.linalg.norm(h, axis=1)
    alpha0 = float(np.median(ratios))
    if not (1e-3 < alpha0 < 1e3):
        return None
    hn = h / np.linalg.norm(h, axis=1, keepdims=True)
    gn = g / np.linalg.norm(g, axis=1, keepdims=True)
    R_cr0 = project_to_so3(gn.T @ hn)
    return R_cr0, alpha0


def _tau_grid_search(trans, rot, radar, cfg: ProblemConfig) -> float:
    """1-D search on speed-profile correlation between measured ego
    speeds and spline speeds shifted by candidate offsets."""
    t_meas = np.array([m.timestamp for m in radar])
    speed_meas = np.array([np.linalg.norm(m.velocity) for m in radar])
    lo, hi = trans.domain
    best = (-(np.inf), 0.0)
    for c in np.linspace(-cfg.tau_bound, cfg.tau_bound, cfg.tau_grid_points):
        ts = t_meas + c
        ok = (ts >= lo) & (ts < hi)
        if ok.sum() < 10:
            continue
        sp_speed = np.empty(int(ok.sum()))
        for j, t in enumerate(ts[ok]):
            r, dr, _ = trans.evaluate(float(t))
            _, om = rot.evaluate(float(t))
            sp_speed[j] = np.linalg.norm(dr + cross3(om, r))
        a = speed_meas[ok]
        if a.std() < 1e-12 or sp_speed.std() < 1e-12:
            continue
        corr = float(np.corrcoef(a, sp_speed)[0, 1])
        if corr > best[0]:
            best = (corr, float(c))
    return best[1]


def _arrowhead_solve(A, b: np.ndarray, ns: int) -> np.ndarray:
    """Solve A x = b where the leading ns x ns block is sparse/banded
    and the trailing columns are dense.

    The handful of calibration columns couple every measurement, so a
    direct factorization of A fills in catastrophically; eliminating
    the sparse block first and solving the small Schur complement for
    the dense tail keeps the factorization fill at the banded level.
    """
    nc = A.shape[0] - ns
    if nc <= 0:
        return spla.splu(A).solve(b)
    Hss = A[:ns, :ns].tocsc()
    Hsc = A[:ns, ns:].toarray()
    Hcc = A[ns:, ns:].toarray()
    lu = spla.splu(Hss)
    X = lu.solve(Hsc)
    y = lu.solve(b[:ns])
    S = Hcc - Hsc.T @ X
    xc = np.linalg.solve(S, b[ns:] - Hsc.T @ y)
    return np.concatenate([y - X @ xc, xc])


def solve(
    state: CalibrationState,
    radar: list[EgoVelocityMeasurement],
    camera: list[CameraPoseMeasurement],
    cfg: ProblemConfig,
    prior: ExtrinsicPrior | None = None,
) -> CalibrationReport:
    """Minimize the batch cost from the given initial state.

    Raises IdentifiabilityError when the excitation precheck fails and
    no prior (or explicit skip) covers for it; NotConverged /
    DivergedNumerically carry the best report found so far.
    """
    if prior is None and cfg.use_prior:
        raise ValueError("cfg.use_prior set but no prior supplied")
    if not cfg.skip_identifiability_check:
        scan = trajectory_excitation_scan(
            state.trans_spline,
            state.rot_spline,
            state.R_cr,
            state.r_rc,
            state.alpha,
            sample_rate=cfg.identifiability_sample_rate,
        )
        weak = (not scan.identifiable) or (
            scan.min_singular_value < cfg.identifiability_min_sv
        )
        if weak and prior is None:
            raise IdentifiabilityError(
                "trajectory excitation too weak "
                f"(rank {scan.rank}/8, min singular value "
                f"{scan.min_singular_value:.3g}, flags {list(scan.degenerate_flags)}); "
                "add an extrinsic prior or override",
                report=scan,
            )
        if weak:
            log.warning(
                "weak excitation (min singular value %.3g); relying on the "
                "extrinsic prior", scan.min_singular_value,
            )

    problem = _Problem(state, radar, camera, cfg, prior)
    free = problem.free_columns()
    e, J, breakdown = problem.assemble(state)
    cost = float(e @ e)
    initial_cost = cost
    if not np.isfinite(cost):
        raise DivergedNumerically("non-finite initial cost")

    lam = 1e-4
    status = "MAX_ITERATIONS"
    iterations = 0
    grad_norm = np.inf
    for iterations in range(1, cfg.max_iterations + 1):
        Jf = J[:, free]
        g = Jf.T @ e
        grad_norm = float(np.abs(g).max()) if g.size else 0.0
        if grad_norm < cfg.gradient_tol:
            status = "CONVERGED"
            break
        H = (Jf.T @ Jf).tocsc()
        d = H.diagonal()
        d = np.where(d > 1e-12, d, 1.0)
        accepted = False
        while lam < 1e14:
            A = (H + sp.diags(lam * d)).tocsc()
            try:
                dx_f = _arrowhead_solve(A, -g, 6 * problem.n)
            except (RuntimeError, np.linalg.LinAlgError):
                lam *= 10.0
                continue
            dx = np.zeros(problem.dim)
            dx[free] = dx_f
            if np.abs(dx_f).max() < cfg.step_tol:
                # Step below numerical resolution of the state: the
                # whitened gradient scale makes the absolute gradient
                # test unreachable, so this is the stationarity test.
                status = "CONVERGED"
                accepted = True
                break
            trial = problem.apply_step(state, dx)
            e2, J2, breakdown2 = problem.assemble(trial)
            cost2 = float(e2 @ e2)
            if not np.isfinite(cost2):
                lam *= 10.0
                continue
            if cost2 < cost:
                rel_drop = (cost - cost2) / max(cost, 1e-300)
                state, e, J, breakdown, cost = trial, e2, J2, breakdown2, cost2
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                if rel_drop < cfg.cost_tol:
                    status = "CONVERGED"
                break
            lam *= 10.0
        if not accepted:
            # Damping exhausted without improvement: treat as converged
            # if the gradient is already tiny, else report.
            status = "CONVERGED" if grad_norm < 1e-4 else "STALLED"
            break
        if status == "CONVERGED":
            break

    total = max(cost, 1e-300)
    report = CalibrationReport(
        state=state,
        status=status,
        initial_cost=initial_cost,
        final_cost=cost,
        cost_breakdown=breakdown,
        iterations=iterations,
        gradient_norm=grad_norm,
        prior_cost_fraction=breakdown.get("prior", 0.0) / total,
        n_radar=len(problem.radar),
        n_camera=len(problem.camera),
        n_radar_dropped=problem.n_radar_dropped,
    )
    if status == "CONVERGED":
        try:
            report.covariance = marginal_covariance(
                state, radar, camera, cfg, prior=prior
            )
        except SingularHessian as exc:
            report.covariance_error = str(exc)
        return report
    if status == "STALLED" or status == "MAX_ITERATIONS":
        raise NotConverged(
            f"no convergence after {iterations} iterations "
            f"(cost {cost:.6g}, gradient {grad_norm:.3g})",
            report=report,
        )
    return report


def marginal_covariance(
    state: CalibrationState,
    radar: list[EgoVelocityMeasurement],
    camera: list[CameraPoseMeasurement],
    cfg: ProblemConfig,
    prior: ExtrinsicPrior | None = None,
) -> np.ndarray:
    """8x8 covariance of (dR_cr, dr_rc, dalpha, dtau): Schur complement
    of the Gauss-Newton normal matrix onto the calibration block."""
    problem = _Problem(state, radar, camera, cfg, prior)
    e, J, _ = problem.assemble(state)
    n6 = 6 * problem.n
    H = (J.T @ J).tocsc()
    H_ss = H[:n6, :n6]
    H_sc = H[:n6, n6:].toarray()
    H_cc = H[n6:, n6:].toarray()
    try:
        lu = spla.splu(H_ss)
        X = lu.solve(H_sc)
    except RuntimeError as exc:
        raise SingularHessian(f"spline block singular: {exc}") from None
    S = H_cc - H_sc.T @ X
    S = 0.5 * (S + S.T)
    evals, evecs = np.linalg.eigh(S)
    if evals[0] <= max(evals[-1], 1.0) * 1e-12:
        raise SingularHessian(
            f"calibration information singular (eigenvalues {evals})",
            null_direction=evecs[:, 0],
        )
    return np.linalg.inv(S)
