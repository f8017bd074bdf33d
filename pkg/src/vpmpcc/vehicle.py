"""Vehicle models.

``kin_derivative``/``kin_euler_step`` are the rear-axle kinematic bicycle
with a progress state used by the planner. ``dyn_step`` integrates a
single-track dynamic model that the simulator uses to execute commands.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import SteeringOutOfRange

G = 9.81


class KinState(NamedTuple):
    x: float
    y: float
    phi: float
    s: float


class Control(NamedTuple):
    v: float
    delta: float
    vp: float


class DynState(NamedTuple):
    """Simulator state. ``(x, y)`` is the rear-axle centre, ``vx``/``vy`` are
    body-frame velocities of the centre of gravity, ``steer`` is the actual
    (rate-limited) road-wheel angle."""

    x: float
    y: float
    phi: float
    vx: float
    vy: float
    omega: float
    steer: float = 0.0

    @classmethod
    def at_rest(cls, x=0.0, y=0.0, phi=0.0):
        return cls(x, y, phi, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class DynParams:
    """Dynamic bicycle parameters (1:10 scale car defaults).

    ``mu`` caps each axle's lateral force at ``mu`` times its static load with
    a smooth ``tanh`` saturation; ``None`` gives purely linear tyres.
    """

    mass: float = 3.47
    yaw_inertia: float = 0.04712
    l_f: float = 0.155
    l_r: float = 0.165
    c_f: float = 82.0
    c_r: float = 90.0
    k_v: float = 4.0
    a_max: float = 4.0
    a_brake: float = 4.0
    steer_rate: float = 3.2
    mu: Optional[float] = 0.7
    v_blend: float = 0.5

    def __post_init__(self):
        for name in ("mass", "yaw_inertia", "l_f", "l_r", "c_f", "c_r", "k_v", "a_max",
                     "a_brake", "steer_rate", "v_blend"):
            if not getattr(self, name) > 0:
                raise ValueError(f"DynParams.{name} must be positive")
        if self.mu is not None and not self.mu > 0:
            raise ValueError("DynParams.mu must be positive or None")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r

    def understeer_gradient(self) -> float:
        """``K`` in ``delta = (L + K v^2) / R`` for the linear model."""
        return self.mass / self.wheelbase * (self.l_r / self.c_f - self.l_f / self.c_r)


def kin_derivative(zeta, u, L: float) -> np.ndarray:
    """Time derivative of ``(x, y, phi, s)`` under control ``(v, delta, vp)``."""
    x, y, phi, s = zeta
    v, delta, vp = u
    if not L > 0:
        raise ValueError("wheelbase must be positive")
    if abs(delta) >= 0.5 * math.pi:
        raise SteeringOutOfRange(f"|delta| = {abs(delta)} >= pi/2")
    return np.array([math.cos(phi) * v, math.sin(phi) * v, v * math.tan(delta) / L, vp])


def kin_euler_step(zeta, u, T_s: float, L: float) -> KinState:
    """One explicit Euler step, ``zeta + T_s * f(zeta, u)``.

    Evaluated component-wise in the same order as the planner's dynamics
    constraint (``planner._shoot``), so the two agree bit for bit.
    """
    if not T_s > 0:
        raise ValueError("T_s must be positive")
    f = kin_derivative(zeta, u, L)
    return KinState(zeta[0] + T_s * f[0], zeta[1] + T_s * f[1],
                    zeta[2] + T_s * f[2], zeta[3] + T_s * f[3])


def _lateral_force(c, alpha, f_max):
    if f_max is None:
        return c * alpha
    return f_max * math.tanh(c * alpha / f_max)


def _dyn_rhs(state, v_cmd, steer, p: DynParams):
    x, y, phi, vx, vy, om = state
    L = p.l_f + p.l_r
    ax = p.k_v * (v_cmd - vx)
    ax = min(max(ax, -p.a_brake), p.a_max)
    c, s = math.cos(phi), math.sin(phi)
    # rear axle velocity in the body frame is (vx, vy - l_r * omega)
    dx = vx * c - (vy - p.l_r * om) * s
    dy = vx * s + (vy - p.l_r * om) * c

    tan_d = math.tan(steer)
    om_kin = vx * tan_d / L
    lo = 0.5 * p.v_blend
    w = min(max((vx - lo) / (p.v_blend - lo), 0.0), 1.0)

    if w > 0.0:
        af = steer - math.atan2(vy + p.l_f * om, vx)
        ar = -math.atan2(vy - p.l_r * om, vx)
        if p.mu is None:
            ff = rr = None
        else:
            ff = p.mu * p.mass * G * p.l_r / L
            rr = p.mu * p.mass * G * p.l_f / L
        fyf = _lateral_force(p.c_f, af, ff)
        fyr = _lateral_force(p.c_r, ar, rr)
        cd, sd = math.cos(steer), math.sin(steer)
        dvx_d = ax + om * vy - fyf * sd / p.mass
        dvy_d = (fyr + fyf * cd) / p.mass - om * vx
        dom_d = (p.l_f * fyf * cd - p.l_r * fyr) / p.yaw_inertia
    else:
        dvx_d = dvy_d = dom_d = 0.0

    if w < 1.0:
        tau = 0.05
        dom_k = ax * tan_d / L + (om_kin - om) / tau
        dvy_k = p.l_r * dom_k + (p.l_r * om_kin - vy) / tau
        dvx_k = ax
    else:
        dvx_k = dvy_k = dom_k = 0.0

    return (dx, dy, om,
            w * dvx_d + (1 - w) * dvx_k,
            w * dvy_d + (1 - w) * dvy_k,
            w * dom_d + (1 - w) * dom_k)


def dyn_step(state: DynState, u, params: DynParams, dt: float) -> DynState:
    """Advance the dynamic bicycle by ``dt`` with one RK4 step.

    The steering angle first moves toward ``u.delta`` at the rate limit and is
    held over the step; the longitudinal acceleration tracks ``u.v`` with gain
    ``k_v``, saturated at ``a_max``/``a_brake``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    v_cmd, d_cmd = float(u[0]), float(u[1])
    st = state.steer
    step = params.steer_rate * dt
    st = st + min(max(d_cmd - st, -step), step)
    st = min(max(st, -1.2), 1.2)

    y0 = (state.x, state.y, state.phi, state.vx, state.vy, state.omega)
    k1 = _dyn_rhs(y0, v_cmd, st, params)
    y1 = tuple(a + 0.5 * dt * b for a, b in zip(y0, k1))
    k2 = _dyn_rhs(y1, v_cmd, st, params)
    y2 = tuple(a + 0.5 * dt * b for a, b in zip(y0, k2))
    k3 = _dyn_rhs(y2, v_cmd, st, params)
    y3 = tuple(a + dt * b for a, b in zip(y0, k3))
    k4 = _dyn_rhs(y3, v_cmd, st, params)
    out = [a + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
           for a, b1, b2, b3, b4 in zip(y0, k1, k2, k3, k4)]
    return DynState(*out, st)


def dyn_to_kin(state: DynState, s: float) -> KinState:
    return KinState(state.x, state.y, state.phi, s)
