"""VPMPCC: contouring control with a velocity-prediction cost.

Decision vector layout (multiple shooting): states ``zeta_0..zeta_N`` as
``(x, y, phi, s)`` followed by controls ``u_0..u_{N-1}`` as ``(v, delta, vp)``.

Stage indexing used throughout:

* contouring/lag errors are evaluated at the predicted states
  ``zeta_1..zeta_N`` (``zeta_0`` is fixed by the current measurement);
* progress reward and velocity prediction pair control ``u_k`` with the
  state it is applied from, ``k = 0..N-1``, so ``v_0`` is compared with the
  reference speed at the current position;
* the rate penalty sums ``||u_k - u_{k-1}||_R^2`` for ``k = 0..N-1`` with
  ``u_{-1}`` the last applied control.

Every stage sum therefore has exactly ``N`` terms.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import solver as nlp
from .errors import DimensionMismatch, Infeasible, LengthMismatch, SolverFailure
from .track import ReferenceVelocityProfile, TrackModel
from .vehicle import Control

CORRIDOR_WEIGHT = 1e4
CORRIDOR_HARD_TOL = 1e-3
# penalty escalation when a plan leaves the corridor by more than the tolerance
CORRIDOR_STEP = 100.0
CORRIDOR_ESCALATIONS = 3


@dataclass(frozen=True)
class PlannerConstants:
    T_s: float = 0.1
    L: float = 0.32
    u_min: tuple = (-15.0, -0.4, -15.0)
    u_max: tuple = (15.0, 0.4, 15.0)
    e_con_max: float = 0.5
    e_lag_max: float = 0.5
    v_delta_max: float = 10.0

    def __post_init__(self):
        if len(self.u_min) != 3 or len(self.u_max) != 3:
            raise ValueError("control bounds need three entries (v, delta, vp)")
        if not all(a < b for a, b in zip(self.u_min, self.u_max)):
            raise ValueError("u_min must be below u_max component-wise")
        for name in ("T_s", "L", "e_con_max", "e_lag_max", "v_delta_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def v_max(self) -> float:
        return float(self.u_max[0])


@dataclass(frozen=True)
class PlannerParams:
    """The nine tunable planner parameters."""

    N_p: int = 20
    q_v: float = 3.0
    gamma: float = 6.0
    q_e_con: float = 3.9
    q_e_lag: float = 1.0
    q_dv: float = 19.0
    q_ddelta: float = 28.0
    q_dvp: float = 15.7
    xi: float = 0.3

    def __post_init__(self):
        if int(self.N_p) != self.N_p or self.N_p < 2:
            raise ValueError("N_p must be an integer >= 2")
        for name in ("q_v", "gamma", "q_e_con", "q_e_lag", "q_dv", "q_ddelta", "q_dvp"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.xi < 1:
            raise ValueError("xi must lie in (0, 1)")

    @classmethod
    def from_theta(cls, theta, D_ref: float) -> "PlannerParams":
        """Map a raw 9-vector; the first entry is a horizon fraction of the lap,
        ``N_p = floor(theta_1 * D_ref)``."""
        th = [float(t) for t in theta]
        if len(th) != 9:
            raise DimensionMismatch("theta must have 9 entries")
        n_p = max(2, int(math.floor(th[0] * D_ref)))
        return cls(n_p, *th[1:])

    def as_mpcc(self) -> "PlannerParams":
        return PlannerParams(self.N_p, 0.0, *[getattr(self, k) for k in
                             ("gamma", "q_e_con", "q_e_lag", "q_dv", "q_ddelta", "q_dvp", "xi")])

    @property
    def R(self) -> np.ndarray:
        return np.array([self.q_dv, self.q_ddelta, self.q_dvp])


@dataclass
class HorizonPlan:
    states: np.ndarray  # (N+1, 4)
    controls: np.ndarray  # (N, 3)
    cost: float = float("nan")
    vp_cost: float = float("nan")
    mpcc_cost: float = float("nan")
    penalty: float = 0.0
    solve_status: str = ""
    solve_time_ms: float = 0.0
    iterations: int = 0
    corridor_violation: float = 0.0
    recovered: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.controls)


# ---------------------------------------------------------------------------
# cost pieces

def tracking_errors(p, s, track: TrackModel):
    """Contouring (normal) and lag (tangential) error of ``p`` w.r.t. ``tau(s)``."""
    g = track.geometry(s)
    r = np.asarray(p, dtype=float) - g.point[0]
    return float(g.normal[0] @ r), float(g.tangent[0] @ r)


def vp_cost(velocities, s_list, rvp: Optional[ReferenceVelocityProfile], q_v: float,
            v_delta_max: float) -> float:
    v = np.asarray(velocities, dtype=float)
    s = np.asarray(s_list, dtype=float)
    if v.shape != s.shape:
        raise LengthMismatch(f"{v.shape} velocities vs {s.shape} arc positions")
    if q_v == 0 or rvp is None:
        return 0.0
    return float(q_v / v_delta_max * np.sum((v - rvp(s)) ** 2))


def _rate_terms(controls, u_prev, R):
    prev = np.vstack([np.asarray(u_prev, dtype=float)[None, :], controls[:-1]])
    du = controls - prev
    return float(np.sum(du * du * R[None, :]))


def mpcc_cost(plan: HorizonPlan, track: TrackModel, params: PlannerParams,
              constants: PlannerConstants, u_prev) -> float:
    X = np.asarray(plan.states, dtype=float)
    U = np.asarray(plan.controls, dtype=float)
    if X.ndim != 2 or U.ndim != 2 or X.shape[1] != 4 or U.shape[1] != 3 or len(X) != len(U) + 1:
        raise DimensionMismatch("plan needs states (N+1, 4) and controls (N, 3)")
    g = track.geometry(X[1:, 3])
    r = X[1:, :2] - g.point
    e_con = np.sum(g.normal * r, axis=1)
    e_lag = np.sum(g.tangent * r, axis=1)
    progress = -params.gamma * constants.T_s / constants.v_max * np.sum(U[:, 2])
    err = (params.q_e_con * np.sum((e_con / constants.e_con_max) ** 2)
           + params.q_e_lag * np.sum((e_lag / constants.e_lag_max) ** 2))
    return float(progress + err + _rate_terms(U, u_prev, params.R))


# ---------------------------------------------------------------------------
# transcription

class Transcription:
    """Objective, constraints and Gauss-Newton Hessian of one VPMPCC problem."""

    def __init__(self, zeta_cur, u_prev, track: TrackModel, params: PlannerParams,
                 constants: PlannerConstants, rvp: Optional[ReferenceVelocityProfile] = None,
                 exact_hessian: bool = True, corridor_weight: float = CORRIDOR_WEIGHT):
        self.exact = exact_hessian
        self.w_corr = float(corridor_weight)
        self.zeta_cur = np.asarray(zeta_cur, dtype=float)
        self.u_prev = np.asarray(u_prev, dtype=float)
        self.track = track
        self.p = params
        self.c = constants
        self.rvp = rvp if params.q_v > 0 else None
        self.N = N = params.N_p
        self.nX = 4 * (N + 1)
        self.n = self.nX + 3 * N
        self.R = params.R
        self.w_con = params.q_e_con / constants.e_con_max ** 2
        self.w_lag = params.q_e_lag / constants.e_lag_max ** 2
        self.w_vp = params.q_v / constants.v_delta_max
        self.w_prog = params.gamma * constants.T_s / constants.v_max
        lb = np.full(self.n, -np.inf)
        ub = np.full(self.n, np.inf)
        lb[self.nX:] = np.tile(constants.u_min, N)
        ub[self.nX:] = np.tile(constants.u_max, N)
        self.lb, self.ub = lb, ub
        self.dependent = np.arange(self.nX)
        # index helpers
        k = np.arange(1, N + 1)
        self.ix = 4 * k
        self.iy = 4 * k + 1
        self.is_ = 4 * k + 3
        kk = np.arange(N)
        self.iu = self.nX + 3 * kk
        self.is0 = 4 * kk + 3

    def split(self, z):
        return z[:self.nX].reshape(self.N + 1, 4), z[self.nX:].reshape(self.N, 3)

    def pack(self, X, U):
        return np.concatenate([np.asarray(X, dtype=float).ravel(), np.asarray(U, dtype=float).ravel()])

    # -- objective ---------------------------------------------------
    def _terms(self, z):
        X, U = self.split(z)
        g = self.track.geometry(X[1:, 3])
        r = X[1:, :2] - g.point
        e_con = np.sum(g.normal * r, axis=1)
        e_lag = np.sum(g.tangent * r, axis=1)
        de_con_ds = np.sum(g.dnormal * r, axis=1)
        de_lag_ds = np.sum(g.dtangent * r, axis=1) - g.speed
        width = self.p.xi * self.track.full_width(X[1:, 3])
        viol = np.abs(e_con) - width
        return X, U, g, e_con, e_lag, de_con_ds, de_lag_ds, viol

    def cost_parts(self, z):
        X, U, g, e_con, e_lag, _, _, viol = self._terms(z)
        prog = -self.w_prog * np.sum(U[:, 2])
        err = self.w_con * np.sum(e_con ** 2) + self.w_lag * np.sum(e_lag ** 2)
        rate = _rate_terms(U, self.u_prev, self.R)
        if self.rvp is not None:
            vp = self.w_vp * float(np.sum((U[:, 0] - self.rvp(X[:-1, 3])) ** 2))
        else:
            vp = 0.0
        pen = self.w_corr * float(np.sum(np.maximum(viol, 0.0) ** 2))
        return {"vp": vp, "mpcc": float(prog + err + rate), "penalty": pen,
                "max_violation": float(np.max(viol, initial=-np.inf))}

    def objective(self, z):
        X, U, g, e_con, e_lag, dcs, dls, viol = self._terms(z)
        grad = np.zeros(self.n)
        f = 0.0
        # contouring and lag
        f += self.w_con * float(e_con @ e_con) + self.w_lag * float(e_lag @ e_lag)
        a_con = 2 * self.w_con * e_con
        a_lag = 2 * self.w_lag * e_lag
        grad[self.ix] += a_con * g.normal[:, 0] + a_lag * g.tangent[:, 0]
        grad[self.iy] += a_con * g.normal[:, 1] + a_lag * g.tangent[:, 1]
        grad[self.is_] += a_con * dcs + a_lag * dls
        # corridor penalty
        act = viol > 0
        if np.any(act):
            sg = np.sign(e_con)
            dw = self.p.xi * self.track.full_width_derivative(X[1:, 3])
            vpos = np.where(act, viol, 0.0)
            f += self.w_corr * float(vpos @ vpos)
            a = 2 * self.w_corr * vpos
            grad[self.ix] += a * sg * g.normal[:, 0]
            grad[self.iy] += a * sg * g.normal[:, 1]
            grad[self.is_] += a * (sg * dcs - dw)
        # progress
        f += -self.w_prog * float(np.sum(U[:, 2]))
        grad[self.iu + 2] += -self.w_prog
        # control rates
        prev = np.vstack([self.u_prev[None, :], U[:-1]])
        du = U - prev
        f += float(np.sum(du * du * self.R[None, :]))
        gdu = 2 * du * self.R[None, :]
        gU = gdu.copy()
        gU[:-1] -= gdu[1:]
        grad[self.nX:] += gU.ravel()
        # velocity prediction
        if self.rvp is not None:
            s0 = X[:-1, 3]
            ev = U[:, 0] - self.rvp(s0)
            f += self.w_vp * float(ev @ ev)
            grad[self.iu] += 2 * self.w_vp * ev
            grad[self.is0] += -2 * self.w_vp * ev * self.rvp.derivative(s0)
        return f, grad

    def hessian(self, z):
        """Objective Hessian; with ``exact_hessian=False`` the residual curvature
        terms are dropped (Gauss-Newton)."""
        X, U, g, e_con, e_lag, dcs, dls, viol = self._terms(z)
        H = np.zeros((self.n, self.n))
        idx = np.stack([self.ix, self.iy, self.is_], axis=1)  # (N, 3)
        j_con = np.stack([g.normal[:, 0], g.normal[:, 1], dcs], axis=1)
        j_lag = np.stack([g.tangent[:, 0], g.tangent[:, 1], dls], axis=1)
        blocks = 2 * self.w_con * j_con[:, :, None] * j_con[:, None, :] \
            + 2 * self.w_lag * j_lag[:, :, None] * j_lag[:, None, :]
        act = viol > 0
        if np.any(act):
            sg = np.sign(e_con)
            dw = self.p.xi * self.track.full_width_derivative(X[1:, 3])
            j_c = np.stack([sg * g.normal[:, 0], sg * g.normal[:, 1], sg * dcs - dw], axis=1)
            blocks += (2 * self.w_corr * act)[:, None, None] * j_c[:, :, None] * j_c[:, None, :]
        if self.exact:
            # residual curvature: e * Hess(e), exact in (x, y, s)
            r = X[1:, :2] - g.point
            hc_ps = g.dnormal
            hl_ps = g.dtangent
            hc_ss = np.sum(g.ddnormal * r, axis=1) - g.speed * np.sum(g.dnormal * g.tangent, axis=1)
            hl_ss = np.sum(g.ddtangent * r, axis=1) - np.sum(g.tangent * g.accel, axis=1)
            a_c = 2 * self.w_con * e_con
            a_l = 2 * self.w_lag * e_lag
            if np.any(act):
                a_v = 2 * self.w_corr * np.where(act, viol, 0.0)
                sgv = a_v * np.sign(e_con)
                a_c = a_c + sgv
                blocks[:, 2, 2] -= a_v * self.p.xi * self.track.full_width_derivative(X[1:, 3], nu=2)
            off = a_c[:, None] * hc_ps + a_l[:, None] * hl_ps
            blocks[:, 0, 2] += off[:, 0]
            blocks[:, 1, 2] += off[:, 1]
            blocks[:, 2, 0] += off[:, 0]
            blocks[:, 2, 1] += off[:, 1]
            blocks[:, 2, 2] += a_c * hc_ss + a_l * hl_ss
        rows = np.repeat(idx, 3, axis=1)
        cols = np.tile(idx, (1, 3))
        H[rows.ravel(), cols.ravel()] += blocks.ravel()
        # rate terms (tridiagonal per control component)
        N = self.N
        diag = np.tile(2 * self.R, N)
        diag[:-3] += np.tile(2 * self.R, N - 1)
        iu_all = np.arange(self.nX, self.n)
        H[iu_all, iu_all] += diag
        off_i = iu_all[3:]
        off_j = iu_all[:-3]
        off = -np.tile(2 * self.R, N - 1)
        H[off_i, off_j] += off
        H[off_j, off_i] += off
        # velocity prediction couples v_k with s_k
        if self.rvp is not None:
            d = -self.rvp.derivative(X[:-1, 3])
            w = 2 * self.w_vp
            H[self.iu, self.iu] += w
            H[self.is0, self.is0] += w * d * d
            if self.exact:
                ev = U[:, 0] - self.rvp(X[:-1, 3])
                H[self.is0, self.is0] -= w * ev * self.rvp.second_derivative(X[:-1, 3])
            H[self.iu, self.is0] += w * d
            H[self.is0, self.iu] += w * d
        return H

    # -- dynamics --------------------------------------------------------
    def constraints(self, z):
        X, U = self.split(z)
        T, L = self.c.T_s, self.c.L
        N = self.N
        phi = X[:-1, 2]
        v, delta, vp = U[:, 0], U[:, 1], U[:, 2]
        cph, sph, tde = np.cos(phi), np.sin(phi), np.tan(delta)
        nxt = np.empty((N, 4))
        nxt[:, 0] = X[:-1, 0] + T * (cph * v)
        nxt[:, 1] = X[:-1, 1] + T * (sph * v)
        nxt[:, 2] = X[:-1, 2] + T * (v * tde / L)
        nxt[:, 3] = X[:-1, 3] + T * vp
        c = np.empty(self.nX)
        c[:4] = X[0] - self.zeta_cur
        c[4:] = (X[1:] - nxt).ravel()

        J = np.zeros((self.nX, self.n))
        ar = np.arange(self.nX)
        J[ar, ar] = 1.0
        k = np.arange(N)
        r0 = 4 * (k + 1)
        cs = 4 * k
        J[r0, cs] = -1.0
        J[r0 + 1, cs + 1] = -1.0
        J[r0 + 2, cs + 2] = -1.0
        J[r0 + 3, cs + 3] = -1.0
        J[r0, cs + 2] = T * sph * v
        J[r0 + 1, cs + 2] = -T * cph * v
        cu = self.nX + 3 * k
        J[r0, cu] = -T * cph
        J[r0 + 1, cu] = -T * sph
        J[r0 + 2, cu] = -T * tde / L
        J[r0 + 2, cu + 1] = -T * v / (L * np.cos(delta) ** 2)
        J[r0 + 3, cu + 2] = -T
        return c, J

    def constraint_hessian(self, z, lam):
        """``sum_i lam_i * Hess c_i`` for the Euler dynamics rows."""
        X, U = self.split(z)
        T, L = self.c.T_s, self.c.L
        N = self.N
        lx = lam[4:].reshape(N, 4)
        phi = X[:-1, 2]
        v, delta = U[:, 0], U[:, 1]
        cph, sph = np.cos(phi), np.sin(phi)
        sec2 = 1.0 / np.cos(delta) ** 2
        k = np.arange(N)
        iphi = 4 * k + 2
        iv = self.nX + 3 * k
        idl = iv + 1
        H = np.zeros((self.n, self.n))
        H[iphi, iphi] = T * v * (lx[:, 0] * cph + lx[:, 1] * sph)
        pv = T * (lx[:, 0] * sph - lx[:, 1] * cph)
        H[iphi, iv] = pv
        H[iv, iphi] = pv
        vd = -T * sec2 / L * lx[:, 2]
        H[iv, idl] = vd
        H[idl, iv] = vd
        H[idl, idl] = -2 * T * v * sec2 * np.tan(delta) / L * lx[:, 2]
        return H

    def rollout(self, U):
        """States from ``zeta_cur`` under ``U`` with the constraint's arithmetic."""
        T, L = self.c.T_s, self.c.L
        X = np.empty((len(U) + 1, 4))
        X[0] = self.zeta_cur
        for k, (v, delta, vp) in enumerate(U):
            x, y, phi, s = X[k]
            X[k + 1, 0] = x + T * (math.cos(phi) * v)
            X[k + 1, 1] = y + T * (math.sin(phi) * v)
            X[k + 1, 2] = phi + T * (v * math.tan(delta) / L)
            X[k + 1, 3] = s + T * vp
        return X

    def tracking_rollout(self, U, X_ref, k_y: float = 2.0, k_phi: float = 1.5):
        """Roll out ``U`` while correcting the steering toward the path ``X_ref``
        (rows aligned with the rolled-out states); returns ``(X, U_used)``."""
        T, L = self.c.T_s, self.c.L
        lo, hi = self.c.u_min[1], self.c.u_max[1]
        U = np.array(U, dtype=float)
        X = np.empty((len(U) + 1, 4))
        X[0] = self.zeta_cur
        for k in range(len(U)):
            x, y, phi, s = X[k]
            xr, yr, pr = X_ref[k, 0], X_ref[k, 1], X_ref[k, 2]
            e_y = -math.sin(pr) * (x - xr) + math.cos(pr) * (y - yr)
            e_phi = (phi - pr + math.pi) % (2 * math.pi) - math.pi
            U[k, 1] = min(max(U[k, 1] - k_y * e_y - k_phi * e_phi, lo), hi)
            v, delta, vp = U[k]
            X[k + 1, 0] = x + T * (math.cos(phi) * v)
            X[k + 1, 1] = y + T * (math.sin(phi) * v)
            X[k + 1, 2] = phi + T * (v * math.tan(delta) / L)
            X[k + 1, 3] = s + T * vp
        return X, U

    def problem(self, z0) -> nlp.NlpProblem:
        return nlp.NlpProblem(self.objective, z0, self.lb, self.ub, self.constraints,
                              self.hessian, self.dependent, self.constraint_hessian,
                              self.restore)

    def restore(self, z):
        """Re-integrate the states from the controls in ``z``."""
        U = z[self.nX:].reshape(self.N, 3)
        return self.pack(self.rollout(U), U)


def cold_start_controls(zeta_cur, u_prev, track: TrackModel, params: PlannerParams,
                        constants: PlannerConstants) -> np.ndarray:
    """Constant-speed guess along the reference line with curvature feed-forward."""
    N = params.N_p
    v0 = float(np.clip(max(abs(float(u_prev[0])), 1.0), 0.0, constants.u_max[0]))
    s = zeta_cur[3] + v0 * constants.T_s * np.arange(N)
    delta = np.arctan(constants.L * track.curvature(s))
    U = np.empty((N, 3))
    U[:, 0] = v0
    U[:, 1] = np.clip(delta, constants.u_min[1], constants.u_max[1])
    U[:, 2] = v0
    return np.clip(U, constants.u_min, constants.u_max)


def shifted_controls(plan: HorizonPlan, N: int, constants: PlannerConstants) -> np.ndarray:
    U = np.asarray(plan.controls, dtype=float)
    if len(U) == 0:
        raise DimensionMismatch("empty warm start")
    U = np.vstack([U[1:], U[-1:]])
    if len(U) < N:
        U = np.vstack([U, np.repeat(U[-1:], N - len(U), axis=0)])
    return np.clip(U[:N], constants.u_min, constants.u_max)


def build_and_solve(zeta_cur, u_prev, track: TrackModel, params: PlannerParams,
                    constants: PlannerConstants, warm_start: Optional[HorizonPlan] = None,
                    rvp: Optional[ReferenceVelocityProfile] = None, *,
                    options: Optional[nlp.SolverOptions] = None, strict: bool = True,
                    initial_controls=None) -> HorizonPlan:
    """Solve one VPMPCC problem from ``zeta_cur``.

    ``rvp`` defaults to ``track.rvp``; with ``q_v = 0`` it is ignored. With
    ``strict`` the current position must lie inside the ``xi``-scaled corridor,
    otherwise :class:`Infeasible` is raised; the closed loop passes
    ``strict=False`` to let the soft corridor pull the car back.
    """
    zeta_cur = np.asarray(zeta_cur, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float)
    if zeta_cur.shape != (4,) or not np.all(np.isfinite(zeta_cur)):
        raise DimensionMismatch("zeta_cur must be 4 finite numbers")
    if u_prev.shape != (3,):
        raise DimensionMismatch("u_prev must have 3 entries")
    rvp = rvp if rvp is not None else track.rvp
    if params.q_v > 0 and rvp is None:
        raise ValueError("velocity prediction needs a reference velocity profile")
    e_con0, _ = tracking_errors(zeta_cur[:2], zeta_cur[3], track)
    corridor0 = params.xi * float(track.full_width(zeta_cur[3]))
    outside = abs(e_con0) > corridor0 + 1e-9
    if outside and strict:
        raise Infeasible(f"|e_con| = {abs(e_con0):.3f} m outside the corridor +/-{corridor0:.3f} m")

    t0 = time.perf_counter()
    tr = Transcription(zeta_cur, u_prev, track, params, constants, rvp)
    if initial_controls is not None:
        U0 = np.clip(np.asarray(initial_controls, dtype=float).reshape(params.N_p, 3),
                     constants.u_min, constants.u_max)
        z0 = tr.pack(tr.rollout(U0), U0)
    else:
        U0 = cold_start_controls(zeta_cur, u_prev, track, params, constants)
        z0 = tr.pack(tr.rollout(U0), U0)
        if warm_start is not None:
            # the open-loop shift drifts away on long horizons, so also try a
            # rollout steered back onto the previous plan; keep the cheapest
            Us = shifted_controls(warm_start, params.N_p, constants)
            Xp = np.asarray(warm_start.states, dtype=float)[1:]
            if len(Xp) < params.N_p:
                Xp = np.vstack([Xp, np.repeat(Xp[-1:], params.N_p - len(Xp), axis=0)])
            Xt, Ut = tr.tracking_rollout(Us, Xp[:params.N_p])
            cands = [z0, tr.pack(tr.rollout(Us), Us), tr.pack(Xt, Ut)]
            z0 = min(cands, key=lambda z: tr.objective(z)[0])

    opts = options or nlp.SolverOptions(max_iter=30)
    try:
        sol = nlp.solve(tr.problem(z0), opts)
        if sol.status == nlp.LINE_SEARCH_FAIL and sol.iterations == 0:
            raise SolverFailure("line search collapsed at the first iteration")
        # the soft corridor may trade a small excess against the other terms;
        # from an admissible start a plan inside it exists (stand still), so
        # stiffen the penalty until the excess is within CORRIDOR_HARD_TOL
        w = tr.w_corr
        for _ in range(CORRIDOR_ESCALATIONS):
            if outside or tr.cost_parts(tr.restore(sol.x))["max_violation"] <= CORRIDOR_HARD_TOL:
                break
            w *= CORRIDOR_STEP
            tr2 = Transcription(zeta_cur, u_prev, track, params, constants, rvp, corridor_weight=w)
            sol2 = nlp.solve(tr2.problem(tr2.restore(sol.x)), opts)
            if sol2.status == nlp.LINE_SEARCH_FAIL and sol2.iterations == 0:
                break
            tr, sol = tr2, sol2
        if not outside:
            excess = tr.cost_parts(tr.restore(sol.x))["max_violation"]
            if excess > CORRIDOR_HARD_TOL:
                # forward-driving guesses can sit in a local minimum outside the
                # corridor; restart from standing still, which is inside it
                U_stop = np.zeros((params.N_p, 3))
                U_stop[:, 1] = np.clip(u_prev[1], constants.u_min[1], constants.u_max[1])
                sol_s = nlp.solve(tr.problem(tr.pack(tr.rollout(U_stop), U_stop)), opts)
                if tr.cost_parts(tr.restore(sol_s.x))["max_violation"] < excess:
                    sol = sol_s
    except FloatingPointError as exc:
        raise SolverFailure(str(exc)) from exc
    X, U = tr.split(sol.x)
    U = np.clip(U, constants.u_min, constants.u_max)
    if not np.all(np.isfinite(U)):
        raise SolverFailure("non-finite controls")
    # close the remaining dynamics residual exactly
    X = tr.rollout(U)
    z = tr.pack(X, U)
    parts = tr.cost_parts(z)
    elapsed = 1e3 * (time.perf_counter() - t0)
    return HorizonPlan(states=X, controls=U, cost=parts["vp"] + parts["mpcc"],
                       vp_cost=parts["vp"], mpcc_cost=parts["mpcc"], penalty=parts["penalty"],
                       solve_status=sol.status, solve_time_ms=elapsed,
                       iterations=sol.iterations,
                       corridor_violation=max(0.0, parts["max_violation"]), recovered=outside)


# ---------------------------------------------------------------------------
# estimator

class VPMPCC(BaseEstimator):
    """Receding-horizon VPMPCC planner with sklearn-style parameters.

    ``fit(track)`` binds the reference line (and its RVP); ``predict(zeta)``
    runs one receding step and returns the control to apply. Set
    ``use_rvp=False`` for plain MPCC (velocity prediction weight forced to 0).
    """

    def __init__(self, horizon=20, q_v=3.0, gamma=6.0, q_e_con=3.9, q_e_lag=1.0, q_dv=19.0,
                 q_ddelta=28.0, q_dvp=15.7, xi=0.3, use_rvp=True, warm_start=True,
                 max_iter=30, tol=1e-6, constants=None):
        self.horizon = horizon
        self.q_v = q_v
        self.gamma = gamma
        self.q_e_con = q_e_con
        self.q_e_lag = q_e_lag
        self.q_dv = q_dv
        self.q_ddelta = q_ddelta
        self.q_dvp = q_dvp
        self.xi = xi
        self.use_rvp = use_rvp
        self.warm_start = warm_start
        self.max_iter = max_iter
        self.tol = tol
        self.constants = constants

    @classmethod
    def from_theta(cls, theta, D_ref: float, **kwargs) -> "VPMPCC":
        p = PlannerParams.from_theta(theta, D_ref)
        return cls(horizon=p.N_p, q_v=p.q_v, gamma=p.gamma, q_e_con=p.q_e_con,
                   q_e_lag=p.q_e_lag, q_dv=p.q_dv, q_ddelta=p.q_ddelta, q_dvp=p.q_dvp,
                   xi=p.xi, **kwargs)

    def fit(self, track: TrackModel, rvp: Optional[ReferenceVelocityProfile] = None):
        params = PlannerParams(int(self.horizon), self.q_v, self.gamma, self.q_e_con,
                               self.q_e_lag, self.q_dv, self.q_ddelta, self.q_dvp, self.xi)
        self.params_ = params if self.use_rvp else params.as_mpcc()
        self.constants_ = self.constants or PlannerConstants()
        self.track_ = track
        self.rvp_ = None if not self.use_rvp else (rvp if rvp is not None else track.rvp)
        if self.use_rvp and self.rvp_ is None:
            raise ValueError("use_rvp=True needs a track with an RVP or an explicit rvp")
        self.options_ = nlp.SolverOptions(max_iter=int(self.max_iter), tol=self.tol)
        self.plan_ = None
        self.n_failures_ = 0
        return self

    def reset(self):
        self.plan_ = None
        self.n_failures_ = 0
        return self

    def step(self, zeta, u_prev):
        check_is_fitted(self, "params_")
        return receding_step(self, zeta, u_prev)

    def predict(self, zeta, u_prev=None) -> Control:
        if u_prev is None:
            u_prev = Control(0.0, 0.0, 0.0)
        return self.step(zeta, u_prev)[0]


def receding_step(planner: VPMPCC, zeta, u_prev):
    """Solve, apply ``u_0`` and keep the plan for the next warm start.

    On :class:`SolverFailure` the previous steering is held and speeds decay by
    20%; the returned plan is ``None`` and ``planner.n_failures_`` counts it.
    """
    warm = planner.plan_ if planner.warm_start else None
    try:
        plan = build_and_solve(zeta, u_prev, planner.track_, planner.params_,
                               planner.constants_, warm, planner.rvp_,
                               options=planner.options_, strict=False)
    except SolverFailure:
        planner.n_failures_ += 1
        planner.plan_ = None
        up = Control(*[float(x) for x in u_prev])
        return Control(0.8 * up.v, up.delta, 0.8 * up.vp), None
    planner.plan_ = plan
    u0 = plan.controls[0]
    return Control(float(u0[0]), float(u0[1]), float(u0[2])), plan
