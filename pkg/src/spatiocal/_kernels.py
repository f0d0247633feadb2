"""Residual/Jacobian kernels (JAX, float64).

Per-measurement residuals are expressed as functions of a packed local
perturbation vector evaluated at zero: additive for translation control
points, alpha, tau and the extrinsic translation; left-multiplicative
exponential for rotation control points and R_cr. Forward-mode AD then
yields the analytic Jacobians (spline time-derivative terms included,
since tau enters through the normalized spline time).

Compiled kernels are cached per spline order; evaluation is vmapped
over measurements.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

import jax

jax.config.update("jax_enable_x64", True)
jax.config.update("jax_platform_name", "cpu")

import jax.numpy as jnp  # noqa: E402

from .spline import mixing_matrix  # noqa: E402

_EPS = 1e-12


def _jskew(v):
    x, y, z = v
    return jnp.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _jexp_so3(phi):
    t2 = phi @ phi
    t2s = jnp.where(t2 < _EPS, 1.0, t2)
    t = jnp.sqrt(t2s)
    a = jnp.where(t2 < _EPS, 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0), jnp.sin(t) / t)
    b = jnp.where(
        t2 < _EPS, 0.5 * (1.0 - t2 / 12.0 * (1.0 - t2 / 30.0)), (1.0 - jnp.cos(t)) / t2s
    )
    K = _jskew(phi)
    return jnp.eye(3) + a * K + b * (K @ K)


def _jlog_so3(R):
    # Valid for rotation angles below ~pi - 0.01 (solver residuals and
    # inter-control-point increments stay far from pi).
    w = 0.5 * jnp.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    c = 0.5 * (jnp.trace(R) - 1.0)
    s2 = w @ w
    s = jnp.sqrt(jnp.where(s2 < _EPS, 1.0, s2))
    factor = jnp.where(
        s2 < _EPS,
        (1.0 - s2 / (3.0 * c * c)) / c,
        jnp.arctan2(s, c) / s,
    )
    return factor * w


def _jleft_jacobian_inv(phi):
    t2 = phi @ phi
    t2s = jnp.where(t2 < _EPS, 1.0, t2)
    t = jnp.sqrt(t2s)
    half = 0.5 * t
    e = jnp.where(
        t2 < _EPS,
        (1.0 + t2 / 60.0) / 12.0,
        (1.0 - half * jnp.cos(half) / jnp.sin(half)) / t2s,
    )
    K = _jskew(phi)
    return jnp.eye(3) - 0.5 * K + e * (K @ K)


def _u_vec(u, k: int):
    return jnp.stack([u**n if n else jnp.ones_like(u) for n in range(k)])


def _du_vec(u, k: int):
    return jnp.stack(
        [n * u ** (n - 1) if n else jnp.zeros_like(u) for n in range(k)]
    )


def _trans_eval(cps, M, u, dt):
    """Position and velocity of the local translation segment."""
    lam = M @ _u_vec(u, M.shape[0])
    dlam = (M @ _du_vec(u, M.shape[0])) / dt
    diffs = cps[1:] - cps[:-1]
    p = cps[0] + lam[1:] @ diffs
    v = dlam[1:] @ diffs
    return p, v


def _rot_eval(rots, M, u, dt):
    """Rotation and body rate of the local rotation segment."""
    k = M.shape[0]
    lam = M @ _u_vec(u, k)
    dlam = (M @ _du_vec(u, k)) / dt
    R = rots[0]
    omega = jnp.zeros(3)
    for j in range(1, k):
        phi = _jlog_so3(rots[j - 1].T @ rots[j])
        A = _jexp_so3(lam[j] * phi)
        omega = A.T @ omega + dlam[j] * phi
        R = R @ A
    return R, omega


def _perturbed_cps(trans_cps, rot_cps, dp, dth):
    p = trans_cps + dp if trans_cps is not None else None
    r = (
        jnp.stack([_jexp_so3(dth[m]) @ rot_cps[m] for m in range(rot_cps.shape[0])])
        if rot_cps is not None
        else None
    )
    return p, r


@lru_cache(maxsize=None)
def radar_kernel(k: int):
    """(data, dt) -> (e (M,3), J (M,3,6k+1)).

    Perturbation layout: [dp (k*3) | dtheta (k*3) | dtau].
    Data per measurement: u0, trans_cps (k,3), rot_cps (k,3,3), h (3,).
    """
    M = jnp.asarray(mixing_matrix(k))

    def residual(delta, u0, trans_cps, rot_cps, h, dt):
        dp = delta[: 3 * k].reshape(k, 3)
        dth = delta[3 * k : 6 * k].reshape(k, 3)
        dtau = delta[6 * k]
        u = u0 + dtau / dt
        p_cps, r_cps = _perturbed_cps(trans_cps, rot_cps, dp, dth)
        r, dr = _trans_eval(p_cps, M, u, dt)
        _, omega = _rot_eval(r_cps, M, u, dt)
        return h + dr + jnp.cross(omega, r)

    def one(u0, trans_cps, rot_cps, h, dt):
        zeros = jnp.zeros(6 * k + 1)
        f = lambda d: residual(d, u0, trans_cps, rot_cps, h, dt)
        return f(zeros), jax.jacfwd(f)(zeros)

    return jax.jit(jax.vmap(one, in_axes=(0, 0, 0, 0, None)))


@lru_cache(maxsize=None)
def camrot_kernel(k: int):
    """(data, R_cr, dt) -> (e (M,3), J (M,3,3k+3)).

    Perturbation layout: [dtheta (k*3) | dphi_cr (3)].
    Data per measurement: u0, rot_cps (k,3,3), R_meas (3,3).
    """
    M = jnp.asarray(mixing_matrix(k))

    def residual(delta, u0, rot_cps, R_meas, R_cr, dt):
        dth = delta[: 3 * k].reshape(k, 3)
        dphi = delta[3 * k :]
        _, r_cps = _perturbed_cps(None, rot_cps, None, dth)
        R_wr, _ = _rot_eval(r_cps, M, u0, dt)
        Rc = _jexp_so3(dphi) @ R_cr
        return _jlog_so3(R_meas @ R_wr @ Rc.T)

    def one(u0, rot_cps, R_meas, R_cr, dt):
        zeros = jnp.zeros(3 * k + 3)
        f = lambda d: residual(d, u0, rot_cps, R_meas, R_cr, dt)
        return f(zeros), jax.jacfwd(f)(zeros)

    return jax.jit(jax.vmap(one, in_axes=(0, 0, 0, None, None)))


@lru_cache(maxsize=None)
def camtrans_kernel(k: int):
    """(data, R_cr, r_rc, alpha, dt) -> (e (M,3), J (M,3,3k+7)).

    Perturbation layout: [dp (k*3) | dphi_cr (3) | dr_rc (3) | dalpha].
    Data per measurement: u0, trans_cps (k,3), t_meas (3,).
    """
    M = jnp.asarray(mixing_matrix(k))

    def residual(delta, u0, trans_cps, t_meas, R_cr, r_rc, alpha, dt):
        dp = delta[: 3 * k].reshape(k, 3)
        dphi = delta[3 * k : 3 * k + 3]
        dr = delta[3 * k + 3 : 3 * k + 6]
        dalpha = delta[3 * k + 6]
        p_cps = trans_cps + dp
        r, _ = _trans_eval(p_cps, M, u0, dt)
        Rc = _jexp_so3(dphi) @ R_cr
        return t_meas - (alpha + dalpha) * (Rc @ r + (r_rc + dr))

    def one(u0, trans_cps, t_meas, R_cr, r_rc, alpha, dt):
        zeros = jnp.zeros(3 * k + 7)
        f = lambda d: residual(d, u0, trans_cps, t_meas, R_cr, r_rc, alpha, dt)
        return f(zeros), jax.jacfwd(f)(zeros)

    return jax.jit(jax.vmap(one, in_axes=(0, 0, 0, None, None, None, None)))


def _jlog_se3(R, t):
    phi = _jlog_so3(R)
    rho = _jleft_jacobian_inv(phi) @ t
    return jnp.concatenate([rho, phi])


@jax.jit
def _prior_one(R_cr, r_rc, R_p, t_p):
    def residual(delta):
        dphi, dr = delta[:3], delta[3:]
        Rc = _jexp_so3(dphi) @ R_cr
        rc = r_rc + dr
        # T_cr^-1 T_prior
        R = Rc.T @ R_p
        t = Rc.T @ (t_p - rc)
        return _jlog_se3(R, t)

    zeros = jnp.zeros(6)
    return residual(zeros), jax.jacfwd(residual)(zeros)


def prior_kernel(R_cr, r_rc, R_prior, t_prior):
    """Prior residual and Jacobian; columns [dphi_cr | dr_rc]."""
    e, J = _prior_one(
        jnp.asarray(R_cr), jnp.asarray(r_rc), jnp.asarray(R_prior), jnp.asarray(t_prior)
    )
    return np.asarray(e), np.asarray(J)
