"""Closed-loop lap simulation.

The planner works on the kinematic model; the car is the dynamic bicycle of
:mod:`vehicle`, integrated with ``SUBSTEPS`` RK4 steps per control period.
Each lap yields a :class:`LapObservation` holding the lap time, the signed
orthogonal distances ``d`` and the trajectory points ``P`` sampled once per
control period, plus a per-step log.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .planner import PlannerConstants, PlannerParams, VPMPCC, receding_step, tracking_errors
from .track import TrackModel, project
from .vehicle import Control, DynParams, DynState, KinState, dyn_step, kin_euler_step

QUALIFIED = "Qualified"
TELEPORT = "Teleport"
TOO_SHORT = "TooShort"
CRASHED = "Crashed"
TIMEOUT = "Timeout"
VERDICTS = (QUALIFIED, TELEPORT, TOO_SHORT, CRASHED, TIMEOUT)

SUBSTEPS = 10
START_SPEED = 1.0
# a lap with less than STALL_PROGRESS metres of progress over STALL_WINDOW
# control periods is cut short as a timeout
STALL_WINDOW = 100
STALL_PROGRESS = 0.5

LOG_HEADER = ["t_s", "x_m", "y_m", "phi_rad", "v_mps", "delta_rad", "vp_mps", "s_m",
              "e_con_m", "e_lag_m", "cost", "solve_ms"]


@dataclass
class LapObservation:
    """Observation bundle of one episode.

    ``P`` is ``(N_z, 2)``, ``d`` is ``(N_z,)``. ``log`` has one row per
    control period with the columns of :data:`LOG_HEADER`; ``v_mps`` and
    ``delta_rad`` are the measured speed and road-wheel angle, ``vp_mps`` the
    applied projected velocity.
    """

    T_lap: float
    d: np.ndarray
    P: np.ndarray
    verdict: str
    traj_length: float
    log: np.ndarray = field(default_factory=lambda: np.zeros((0, len(LOG_HEADER))))
    n_fallbacks: int = 0
    solve_ms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        self.P = np.asarray(self.P, dtype=float).reshape(-1, 2)
        if len(self.d) != len(self.P):
            raise ValueError("d and P must have equal length")

    @property
    def N_z(self) -> int:
        return len(self.d)

    @property
    def qualified(self) -> bool:
        return self.verdict == QUALIFIED

    @property
    def max_abs_d(self) -> float:
        return float(np.max(np.abs(self.d), initial=0.0))


def trajectory_length(P) -> float:
    P = np.asarray(P, dtype=float)
    if len(P) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(P, axis=0), axis=1)))


def qualify(obs: LapObservation, d_ub: float = 0.6, D_lb: float = 60.0) -> str:
    """Filter verdict: Crashed/Timeout pass through, then the teleport gap
    test, then the minimum-length test."""
    if obs.verdict in (CRASHED, TIMEOUT):
        return obs.verdict
    P = obs.P
    if len(P) >= 2 and np.any(np.linalg.norm(np.diff(P, axis=0), axis=1) >= d_ub):
        return TELEPORT
    if trajectory_length(P) < D_lb:
        return TOO_SHORT
    return QUALIFIED


def start_state(track: TrackModel, seed: Optional[int] = None, speed: float = START_SPEED,
                lateral: float = 0.05, heading: float = 0.02) -> DynState:
    """Rest pose on the reference line at ``s = 0`` rolling at ``speed``.

    With a seed the pose is perturbed by a uniform lateral offset of up to
    ``lateral`` metres and a heading error of up to ``heading`` radians.
    """
    g = track.geometry(0.0)
    p, t, n = g.point[0], g.tangent[0], g.normal[0]
    phi = math.atan2(t[1], t[0])
    if seed is not None:
        rng = np.random.default_rng(seed)
        off, dphi = rng.uniform(-1.0, 1.0, size=2)
        p = p + lateral * off * n
        phi += heading * dphi
    return DynState(float(p[0]), float(p[1]), phi, float(speed), 0.0, 0.0, 0.0)


def _wall(track: TrackModel, s: float, d: float) -> float:
    return float(track.width_left(s) if d >= 0 else track.width_right(s))


def _episode(track, planner: VPMPCC, start: DynState, dyn_params: Optional[DynParams],
             kinematic: bool, timeout_steps: Optional[int], deterministic: bool):
    T_s = planner.constants_.T_s
    L = planner.constants_.L
    D = track.total_length
    if timeout_steps is None:
        timeout_steps = int(math.ceil(4.0 * D / 1.0 / T_s))
    dt = T_s / SUBSTEPS

    state = start
    pr = project(track, (state.x, state.y))
    # a start on the seam may project to s = D - eps; count it from zero
    s_prev = pr.s - D if pr.s > D - 1e-6 else pr.s
    s_unwrap = s_prev
    s0 = s_unwrap
    kin_s = s_unwrap  # progress state of the pure kinematic loop
    u_prev = Control(state.vx, 0.0, state.vx)

    P = [(state.x, state.y)]
    d = [pr.distance]
    prog = [0.0]
    rows = []
    solve_ms = []
    iters = []
    verdict = TIMEOUT
    T_lap = float("nan")

    for k in range(timeout_steps):
        s_plan = kin_s if kinematic else s_unwrap
        zeta = KinState(state.x, state.y, state.phi, s_plan)
        u, plan = receding_step(planner, zeta, u_prev)
        e_con, e_lag = plan_errors(track, zeta)
        if plan is not None:
            cost, ms = plan.cost, plan.solve_time_ms
            iters.append(plan.iterations)
        else:
            cost, ms = float("nan"), 0.0
            iters.append(-1)
        solve_ms.append(ms)
        rows.append([k * T_s, state.x, state.y, state.phi, state.vx, state.steer, u.vp, s_plan,
                     e_con, e_lag, cost, 0.0 if deterministic else ms])

        if kinematic:
            z = (state.x, state.y, state.phi, kin_s)
            for _ in range(SUBSTEPS):
                z = kin_euler_step(z, u, dt, L)
            kin_s = z[3]
            state = DynState(z[0], z[1], z[2], u.v, 0.0, u.v * math.tan(u.delta) / L, u.delta)
        else:
            for _ in range(SUBSTEPS):
                state = dyn_step(state, u, dyn_params, dt)
        u_prev = u

        if not all(math.isfinite(v) for v in state):
            verdict = CRASHED
            break
        pr = project(track, (state.x, state.y), hint_s=s_prev)
        ds = pr.s - s_prev
        ds -= D * round(ds / D)
        s_prev = pr.s
        s_unwrap += ds
        progress = s_unwrap - s0
        P.append((state.x, state.y))
        d.append(pr.distance)
        prog.append(progress)

        if abs(pr.distance) > _wall(track, pr.s, pr.distance):
            verdict = CRASHED
            break
        if progress >= D:
            a = (D - prog[-2]) / (prog[-1] - prog[-2])
            T_lap = (k + a) * T_s
            # end the trajectory exactly on the line
            pe = (1 - a) * np.asarray(P[-2]) + a * np.asarray(P[-1])
            pre = project(track, pe, hint_s=pr.s)
            P[-1] = (float(pe[0]), float(pe[1]))
            d[-1] = pre.distance
            verdict = QUALIFIED
            break
        if k >= STALL_WINDOW and progress - prog[-1 - STALL_WINDOW] < STALL_PROGRESS:
            verdict = TIMEOUT
            break

    log = np.asarray(rows, dtype=float).reshape(-1, len(LOG_HEADER))
    obs = LapObservation(T_lap=T_lap, d=np.asarray(d), P=np.asarray(P), verdict=verdict,
                         traj_length=trajectory_length(P), log=log,
                         n_fallbacks=planner.n_failures_, solve_ms=np.asarray(solve_ms),
                         iterations=np.asarray(iters, dtype=int))
    return obs


def plan_errors(track: TrackModel, zeta):
    return tracking_errors((zeta[0], zeta[1]), zeta[3], track)


def _make_planner(track, params, constants, use_rvp, max_iter, rvp=None) -> VPMPCC:
    if isinstance(params, VPMPCC):
        return params.fit(track, rvp) if not hasattr(params, "params_") else params.reset()
    p = params if isinstance(params, PlannerParams) else PlannerParams.from_theta(params, track.total_length)
    pl = VPMPCC(horizon=p.N_p, q_v=p.q_v, gamma=p.gamma, q_e_con=p.q_e_con, q_e_lag=p.q_e_lag,
                q_dv=p.q_dv, q_ddelta=p.q_ddelta, q_dvp=p.q_dvp, xi=p.xi, use_rvp=use_rvp,
                max_iter=max_iter, constants=constants)
    return pl.fit(track, rvp)


def run_lap(track: TrackModel, params, constants: Optional[PlannerConstants] = None,
            dyn_params: Optional[DynParams] = None, start: Optional[DynState] = None,
            seed: Optional[int] = None, *, use_rvp: bool = True, max_iter: int = 30,
            d_ub: float = 0.6, D_lb: float = 60.0, timeout_steps: Optional[int] = None,
            deterministic: bool = False, rvp=None) -> LapObservation:
    """Drive one lap with the dynamic model and return the filtered observation.

    ``params`` is a :class:`PlannerParams`, a raw 9-vector ``theta`` or a
    :class:`VPMPCC` instance. Without ``start`` the car starts on the
    reference line at ``s = 0`` (perturbed by ``seed`` if given).
    """
    constants = constants or PlannerConstants()
    dyn_params = dyn_params or DynParams()
    planner = _make_planner(track, params, constants, use_rvp, max_iter, rvp)
    start = start if start is not None else start_state(track, seed)
    obs = _episode(track, planner, start, dyn_params, False, timeout_steps, deterministic)
    obs.verdict = qualify(obs, d_ub, D_lb)
    return obs


def kinematic_only_lap(track: TrackModel, params, constants: Optional[PlannerConstants] = None,
                       start: Optional[DynState] = None, seed: Optional[int] = None, *,
                       use_rvp: bool = True, max_iter: int = 30, d_ub: float = 0.6,
                       D_lb: float = 60.0, timeout_steps: Optional[int] = None,
                       deterministic: bool = False, rvp=None) -> LapObservation:
    """As :func:`run_lap` but the plan is executed on the kinematic model itself
    (Euler substeps), with the progress state integrated rather than projected."""
    constants = constants or PlannerConstants()
    planner = _make_planner(track, params, constants, use_rvp, max_iter, rvp)
    start = start if start is not None else start_state(track, seed)
    obs = _episode(track, planner, start, None, True, timeout_steps, deterministic)
    obs.verdict = qualify(obs, d_ub, D_lb)
    return obs


def write_lap_log(obs: LapObservation, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for row in obs.log:
            w.writerow([_fmt(v) for v in row])


def read_lap_log(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != LOG_HEADER:
            raise ValueError(f"unexpected lap log header in {path}")
    return np.atleast_2d(np.genfromtxt(path, delimiter=",", skip_header=1))


def _fmt(v: float) -> str:
    return repr(float(v))
