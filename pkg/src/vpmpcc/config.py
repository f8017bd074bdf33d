"""Experiment configuration: a hierarchical YAML document checked against a schema.

Every key has a type and a unit; unknown keys are rejected. Missing keys take
the defaults below. ``python -m vpmpcc.config`` prints the full default file.

=====================  ==========  ===========================================
key                    unit        meaning
=====================  ==========  ===========================================
vehicle.L              m           wheelbase of the planning model
vehicle.mass           kg          dynamic model mass
vehicle.yaw_inertia    kg m^2      yaw moment of inertia
vehicle.l_f, l_r       m           CoG to front / rear axle
vehicle.c_f, c_r       N/rad       cornering stiffness front / rear
vehicle.k_v            1/s         speed-command tracking gain
vehicle.a_max          m/s^2       drive acceleration limit
vehicle.a_brake        m/s^2       braking limit
vehicle.steer_rate     rad/s       steering slew limit
vehicle.mu             -           tyre friction cap (null: linear tyres)
vehicle.v_blend        m/s         kinematic blending speed
mpc.Ts                 s           control period
mpc.u_min, u_max       m/s,rad     control box for (v, delta, v_p)
mpc.e_con_max          m           contouring error normalizer
mpc.e_lag_max          m           lag error normalizer
mpc.v_delta_max        m/s         velocity-prediction normalizer
mpc.max_iter           -           SQP iteration cap per receding step
ofr.lambda             -           weights (lambda_1..lambda_4)
ofr.t_lb               s           lap-time reward threshold
ofr.d_tol              m           barrier onset distance
ofr.d_ub               m           teleport filter step
ofr.D_lb               m           minimum qualified trajectory length
ofr.J_fail             -           objective of unqualified laps
ofr.alpha              1/m         baseline distance weight
bo.N_BO                -           evaluation budget
bo.n_init              -           initial Latin-hypercube evaluations
bo.n_restarts          -           GP hyperparameter restarts
track.path             -           centerline CSV (null: bundled sharp-corner)
track.raceline         -           raceline CSV with speeds (optional)
track.half_width       m           width used when the file has none
rvp.v_cap              m/s         generated profile speed cap
rvp.a_lat              m/s^2       lateral acceleration limit
rvp.a_long             m/s^2       acceleration limit of the forward pass
rvp.a_brake            m/s^2       deceleration limit of the backward pass
=====================  ==========  ===========================================
"""
from __future__ import annotations

import copy
import os
import sys

import yaml

from .errors import ConfigError
from .planner import PlannerConstants
from .track import DEFAULT_HALF_WIDTH, TrackModel, generate_rvp, load_raceline, load_track_csv, sharp_corner_track
from .tuner import OfrConfig
from .vehicle import DynParams

_num = (int, float)

# section -> key -> (default, accepted types, length of list or None)
SCHEMA = {
    "vehicle": {
        "L": (0.32, _num, None),
        "mass": (3.47, _num, None),
        "yaw_inertia": (0.04712, _num, None),
        "l_f": (0.155, _num, None),
        "l_r": (0.165, _num, None),
        "c_f": (82.0, _num, None),
        "c_r": (90.0, _num, None),
        "k_v": (4.0, _num, None),
        "a_max": (4.0, _num, None),
        "a_brake": (4.0, _num, None),
        "steer_rate": (3.2, _num, None),
        "mu": (0.7, _num + (type(None),), None),
        "v_blend": (0.5, _num, None),
    },
    "mpc": {
        "Ts": (0.1, _num, None),
        "u_min": ([-15.0, -0.4, -15.0], list, 3),
        "u_max": ([15.0, 0.4, 15.0], list, 3),
        "e_con_max": (0.5, _num, None),
        "e_lag_max": (0.5, _num, None),
        "v_delta_max": (10.0, _num, None),
        "max_iter": (30, int, None),
    },
    "ofr": {
        "lambda": ([20.0, 10.0, 0.5, -100.0], list, 4),
        "t_lb": (17.6, _num, None),
        "d_tol": (0.5, _num, None),
        "d_ub": (0.6, _num, None),
        "D_lb": (60.0, _num, None),
        "J_fail": (17.6, _num, None),
        "alpha": (10.0, _num, None),
    },
    "bo": {
        "N_BO": (200, int, None),
        "n_init": (18, int, None),
        "n_restarts": (8, int, None),
    },
    "track": {
        "path": (None, (str, type(None)), None),
        "raceline": (None, (str, type(None)), None),
        "half_width": (DEFAULT_HALF_WIDTH, _num, None),
    },
    "rvp": {
        "v_cap": (5.5, _num, None),
        "a_lat": (4.0, _num, None),
        "a_long": (3.0, _num, None),
        "a_brake": (3.0, _num, None),
    },
}


def default_config() -> dict:
    return {sec: {k: copy.deepcopy(v[0]) for k, v in keys.items()} for sec, keys in SCHEMA.items()}


def validate(doc: dict) -> dict:
    """Merge ``doc`` over the defaults, checking every key and type."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    out = default_config()
    for sec, body in doc.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown config section {sec!r}")
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"section {sec!r} must be a mapping")
        for key, val in body.items():
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown config key {sec}.{key}")
            _, types, n = SCHEMA[sec][key]
            if isinstance(val, bool) or not isinstance(val, types):
                raise ConfigError(f"{sec}.{key}: unexpected value {val!r}")
            if n is not None:
                if len(val) != n or not all(isinstance(x, _num) and not isinstance(x, bool) for x in val):
                    raise ConfigError(f"{sec}.{key} needs {n} numbers")
                val = [float(x) for x in val]
            elif types is _num:
                val = float(val)
            out[sec][key] = val
    if out["bo"]["N_BO"] < 1:
        raise ConfigError("bo.N_BO must be at least 1")
    return out


def load_config(path=None) -> dict:
    """Read and validate a YAML config; ``None`` gives the defaults."""
    if path is None:
        return validate({})
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    cfg = validate(doc)
    base = os.path.dirname(os.path.abspath(path))
    for key in ("path", "raceline"):
        p = cfg["track"][key]
        if p is not None and not os.path.isabs(p):
            cfg["track"][key] = os.path.join(base, p)
    return cfg


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=False)


def planner_constants(cfg: dict) -> PlannerConstants:
    m = cfg["mpc"]
    try:
        return PlannerConstants(T_s=m["Ts"], L=cfg["vehicle"]["L"], u_min=tuple(m["u_min"]),
                                u_max=tuple(m["u_max"]), e_con_max=m["e_con_max"],
                                e_lag_max=m["e_lag_max"], v_delta_max=m["v_delta_max"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def dyn_params(cfg: dict) -> DynParams:
    v = {k: val for k, val in cfg["vehicle"].items() if k != "L"}
    try:
        return DynParams(**v)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def ofr_config(cfg: dict, variant: str = "ofr") -> OfrConfig:
    """Objective settings; Ablation1 keeps its own failure value unless the
    config overrides ``ofr.J_fail``."""
    o = cfg["ofr"]
    kw = dict(lam=tuple(o["lambda"]), t_lb=o["t_lb"], d_tol=o["d_tol"], d_ub=o["d_ub"],
              D_lb=o["D_lb"], alpha=o["alpha"])
    if not (variant == "ablation1" and o["J_fail"] == SCHEMA["ofr"]["J_fail"][0]):
        kw["J_fail"] = o["J_fail"]
    try:
        return OfrConfig.for_variant(variant, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def experiment_track(cfg: dict) -> TrackModel:
    """Track named by the config with its velocity profile attached.

    A raceline file supplies the profile; otherwise a curvature-limited one
    is generated from the ``rvp`` section.
    """
    t = cfg["track"]
    if t["raceline"] is not None:
        track, _ = load_raceline(t["raceline"], half_width=t["half_width"])
        return track
    if t["path"] is not None:
        track = load_track_csv(t["path"], default_half_width=t["half_width"])
    else:
        track = sharp_corner_track(half_width=t["half_width"])
    r = cfg["rvp"]
    return track.with_rvp(generate_rvp(track, r["v_cap"], r["a_lat"], r["a_long"], r["a_brake"]))


if __name__ == "__main__":  # pragma: no cover
    sys.stdout.write(dump_config(default_config()))
