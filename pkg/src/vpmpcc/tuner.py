"""Bayesian-optimization tuning of the planner parameters.

The campaign minimizes a lap objective ``J(theta)``: an initial Latin
hypercube design, then expected-improvement steps on a Matern-5/2 GP
surrogate. The racing objective combines a lap-time term ``L``, a
trajectory-length term ``I`` and a distance barrier ``B``, and replaces any
unqualified lap by the constant ``J_fail``.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm, qmc

from .gp import GpModel, gp_fit
from .simloop import LapObservation, QUALIFIED, kinematic_only_lap, run_lap

VARIANTS = ("ofr", "baseline", "ablation1", "ablation2", "ablation3")

THETA_LOWER = np.array([0.1, 1, 1, 1, 1, 0.1, 1, 1, 0.01], dtype=float)
THETA_UPPER = np.array([1, 50, 10, 10, 10, 20, 50, 20, 0.4], dtype=float)
THETA_NAMES = ("horizon_frac", "q_v", "gamma", "q_e_con", "q_e_lag", "q_dv", "q_ddelta",
               "q_dvp", "xi")

N_CANDIDATES = 512
N_REFINE = 8


@dataclass(frozen=True)
class OfrConfig:
    """Weights and thresholds of the racing objective and its variants."""

    lam: tuple = (20.0, 10.0, 0.5, -100.0)
    t_lb: float = 17.6
    d_tol: float = 0.5
    d_ub: float = 0.6
    D_lb: float = 60.0
    J_fail: float = 17.6
    D_ref: float = 62.8
    variant: str = "ofr"
    alpha: float = 10.0

    def __post_init__(self):
        if len(self.lam) != 4:
            raise ValueError("lam needs four weights")
        if not self.lam[3] < 0:
            raise ValueError("lambda_4 must be negative")
        if not self.d_tol > 0:
            raise ValueError("d_tol must be positive")
        if not math.isfinite(self.J_fail):
            raise ValueError("J_fail must be finite")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown objective variant {self.variant!r}; choose from {VARIANTS}")

    @classmethod
    def for_variant(cls, variant: str, **kw) -> "OfrConfig":
        """Config for ``variant``; Ablation1 defaults to ``J_fail = 35`` since
        its qualified values run higher (no length reward)."""
        if variant == "ablation1" and "J_fail" not in kw:
            kw["J_fail"] = 35.0
        return cls(variant=variant, **kw)


# ---------------------------------------------------------------------------
# objective terms

def ofr_L(T_lap: float, cfg: OfrConfig) -> float:
    """Lap-time term, rewarding laps faster than ``t_lb`` with slope ``lambda_1``."""
    if not T_lap > 0:
        raise ValueError("T_lap must be positive")
    return T_lap + cfg.lam[0] * min(T_lap - cfg.t_lb, 0.0)


def ofr_I(P, cfg: OfrConfig) -> float:
    """Trajectory-length term ``lambda_2 tanh(lambda_3 (len(P) - D_ref))``."""
    P = np.asarray(P, dtype=float)
    if len(P) < 2:
        raise ValueError("need at least two trajectory points")
    length = float(np.sum(np.linalg.norm(np.diff(P, axis=0), axis=1)))
    return cfg.lam[1] * math.tanh(cfg.lam[2] * (length - cfg.D_ref))


def ofr_B(d, cfg: OfrConfig) -> float:
    """Barrier on the largest orthogonal distance beyond ``d_tol``."""
    d = np.asarray(d, dtype=float)
    if d.size == 0:
        raise ValueError("d must be non-empty")
    ratio = max(float(np.max(np.abs(d))) / cfg.d_tol, 1.0)
    return cfg.lam[3] * math.log(1.0 / ratio)


def objective(obs: LapObservation, cfg: OfrConfig) -> float:
    """``J`` of one observation under ``cfg.variant``."""
    if obs.verdict != QUALIFIED:
        return cfg.J_fail
    v = cfg.variant
    if v == "baseline":
        return obs.T_lap + cfg.alpha * float(np.mean(np.abs(obs.d)))
    if v == "ofr":
        return ofr_L(obs.T_lap, cfg) + ofr_I(obs.P, cfg) + ofr_B(obs.d, cfg)
    if v == "ablation1":
        return ofr_L(obs.T_lap, cfg) + ofr_B(obs.d, cfg)
    if v == "ablation2":
        return obs.T_lap + ofr_B(obs.d, cfg) + ofr_I(obs.P, cfg)
    return ofr_L(obs.T_lap, cfg) + ofr_I(obs.P, cfg)


# ---------------------------------------------------------------------------
# acquisition

def ei(model: GpModel, theta, best: float):
    """Expected improvement below ``best`` at ``theta`` (unit cube; one point
    or a batch). Zero where the posterior variance vanishes."""
    theta = np.asarray(theta, dtype=float)
    mu, var = model.posterior(np.atleast_2d(theta))
    out = _ei(mu, np.sqrt(var), best)
    return float(out[0]) if theta.ndim == 1 else out


def _ei(mu, sigma, best):
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    out = np.zeros(np.broadcast(mu, sigma).shape)
    pos = sigma > 0
    imp = best - mu
    z = np.where(pos, imp / np.where(pos, sigma, 1.0), 0.0)
    out[pos] = (imp * norm.cdf(z) + sigma * norm.pdf(z))[pos]
    return out


def ei_closed_form(mu: float, sigma: float, best: float) -> float:
    """Scalar closed form, ``(best - mu) Phi(z) + sigma phi(z)``."""
    return float(_ei(np.array([mu]), np.array([sigma]), best)[0])


def _neg_ei_and_grad(x, model, best):
    mu, var, dmu, dvar = model.posterior(x[None, :], return_grad=True)
    s = math.sqrt(var[0])
    if s <= 0:
        return 0.0, np.zeros_like(x)
    z = (best - mu[0]) / s
    Phi, phi = norm.cdf(z), norm.pdf(z)
    val = (best - mu[0]) * Phi + s * phi
    ds = dvar[0] / (2.0 * s)
    grad = -Phi * dmu[0] + phi * ds
    return -float(val), -grad


def acquire_next(model: GpModel, best: float, seed: Optional[int] = 0,
                 n_candidates: int = N_CANDIDATES, n_refine: int = N_REFINE) -> np.ndarray:
    """Maximize EI over the unit cube.

    Scores a scrambled Sobol set of ``n_candidates`` points, refines the best
    ``n_refine`` with bounded L-BFGS-B and returns the best point found. If
    every candidate scores exactly zero the first candidate is returned.
    """
    d = model.dim
    sob = qmc.Sobol(d, scramble=True, seed=np.random.default_rng(seed))
    cand = sob.random(n_candidates)
    vals = ei(model, cand, best)
    if not np.any(vals > 0):
        return cand[0].copy()
    order = np.argsort(-vals, kind="stable")[:n_refine]
    best_x, best_v = cand[order[0]].copy(), float(vals[order[0]])
    for i in order:
        res = minimize(_neg_ei_and_grad, cand[i], args=(model, best), jac=True,
                       method="L-BFGS-B", bounds=[(0.0, 1.0)] * d, options={"maxiter": 50})
        x = np.clip(res.x, 0.0, 1.0)
        v = ei(model, x, best)
        if v > best_v:
            best_x, best_v = x, v
    return best_x


# ---------------------------------------------------------------------------
# campaign

@dataclass
class TuneRecord:
    iteration: int
    theta: np.ndarray
    J: float
    verdict: str
    best_J: float
    wall_s: float
    info: dict = field(default_factory=dict)


@dataclass
class EvalResult:
    J: float
    verdict: str = QUALIFIED
    info: dict = field(default_factory=dict)


def to_unit(theta, lower, upper):
    return (np.asarray(theta, dtype=float) - lower) / (upper - lower)


def from_unit(u, lower, upper):
    return lower + np.asarray(u, dtype=float) * (upper - lower)


def _as_result(out) -> EvalResult:
    if isinstance(out, EvalResult):
        return out
    if isinstance(out, tuple):
        return EvalResult(float(out[0]), str(out[1]) if len(out) > 1 else QUALIFIED)
    return EvalResult(float(out))


def run_campaign(evaluator: Callable, lower, upper, n_init: int, n_bo: int, seed: int = 0,
                 *, n_restarts: int = 8, jobs: int = 1, deterministic: bool = False,
                 callback: Optional[Callable] = None) -> list:
    """Run ``n_bo`` evaluations: ``n_init`` Latin-hypercube points, then EI.

    ``evaluator(theta_raw)`` returns an :class:`EvalResult`, a ``(J, verdict)``
    pair or a bare ``J``. With ``jobs > 1`` the initial design is evaluated in
    worker processes (results kept in submission order). ``deterministic``
    zeroes the wall-clock column.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or np.any(lower >= upper):
        raise ValueError("bounds must satisfy lower < upper component-wise")
    if n_bo < 1:
        raise ValueError("budget must be at least 1")
    d = lower.size
    n_init = min(max(int(n_init), 1), n_bo)
    rng = np.random.default_rng(seed)
    lhs = qmc.LatinHypercube(d, seed=rng).random(n_init)

    records: list[TuneRecord] = []
    best = math.inf
    t_start = time.perf_counter()

    def push(u, res):
        nonlocal best
        res = _as_result(res)
        if not math.isfinite(res.J):
            raise ValueError("evaluator returned a non-finite objective")
        best = min(best, res.J)
        rec = TuneRecord(len(records) + 1, from_unit(u, lower, upper), res.J, res.verdict, best,
                         0.0 if deterministic else time.perf_counter() - t_start, res.info)
        records.append(rec)
        if callback is not None:
            callback(rec)

    init_thetas = [from_unit(u, lower, upper) for u in lhs]
    if jobs > 1 and n_init > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outs = list(ex.map(evaluator, init_thetas))
    else:
        outs = None
    for i, u in enumerate(lhs):
        push(u, outs[i] if outs is not None else evaluator(init_thetas[i]))

    hyper_seed = int(rng.integers(2 ** 31))
    while len(records) < n_bo:
        U = np.array([to_unit(r.theta, lower, upper) for r in records])
        U = np.clip(U, 0.0, 1.0)
        y = np.array([r.J for r in records])
        model = gp_fit(U, y, n_restarts=n_restarts, seed=hyper_seed + len(records))
        u_next = acquire_next(model, float(np.min(y)), seed=int(rng.integers(2 ** 31)))
        push(u_next, evaluator(from_unit(u_next, lower, upper)))
    return records


# ---------------------------------------------------------------------------
# lap evaluator

class LapEvaluator:
    """``theta -> J`` through one closed-loop lap; picklable for worker pools.

    ``planner`` is ``"vpmpcc"`` or ``"mpcc"`` (velocity prediction disabled,
    ``q_v`` ignored). ``dynamics=False`` runs the kinematic-only loop.
    """

    def __init__(self, track, cfg: OfrConfig, constants=None, dyn_params=None,
                 planner: str = "vpmpcc", max_iter: int = 30, dynamics: bool = True,
                 keep_observations: bool = False):
        if planner not in ("vpmpcc", "mpcc"):
            raise ValueError("planner must be 'vpmpcc' or 'mpcc'")
        self.track = track
        self.cfg = replace(cfg, D_ref=track.total_length)
        self.constants = constants
        self.dyn_params = dyn_params
        self.planner = planner
        self.max_iter = max_iter
        self.dynamics = dynamics
        self.keep_observations = keep_observations

    def lap(self, theta) -> LapObservation:
        use_rvp = self.planner == "vpmpcc"
        kw = dict(use_rvp=use_rvp, max_iter=self.max_iter, d_ub=self.cfg.d_ub,
                  D_lb=self.cfg.D_lb, deterministic=True)
        if self.dynamics:
            return run_lap(self.track, theta, self.constants, self.dyn_params, **kw)
        return kinematic_only_lap(self.track, theta, self.constants, **kw)

    def __call__(self, theta) -> EvalResult:
        obs = self.lap(theta)
        J = objective(obs, self.cfg)
        info = {
            "T_lap": obs.T_lap if obs.qualified else float("nan"),
            "length": obs.traj_length,
            "mean_abs_d": float(np.mean(np.abs(obs.d))),
            "max_abs_d": obs.max_abs_d,
            "steps": int(len(obs.log)),
            "fallbacks": int(obs.n_fallbacks),
        }
        if self.keep_observations:
            info["obs"] = obs
        return EvalResult(J, obs.verdict, info)


# ---------------------------------------------------------------------------
# logs

def log_header(dim: int) -> list:
    return ["iter"] + [f"theta{i + 1}" for i in range(dim)] + ["J", "verdict", "best_J", "wall_s"]


LAPS_HEADER = ["iter", "verdict", "T_lap", "length", "mean_abs_d", "max_abs_d", "steps",
               "fallbacks"]


def _f(v) -> str:
    return repr(float(v))


def write_tune_log(records: Sequence[TuneRecord], path) -> None:
    dim = len(records[0].theta) if records else 9
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(log_header(dim))
        for r in records:
            w.writerow([r.iteration, *[_f(t) for t in r.theta], _f(r.J), r.verdict, _f(r.best_J),
                        _f(r.wall_s)])


def write_laps_log(records: Sequence[TuneRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LAPS_HEADER)
        for r in records:
            i = r.info
            w.writerow([r.iteration, r.verdict] + [_f(i.get(k, float("nan"))) for k in LAPS_HEADER[2:6]]
                       + [int(i.get("steps", 0)), int(i.get("fallbacks", 0))])


def read_tune_log(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "iter" or rows[0][-4:] != ["J", "verdict", "best_J", "wall_s"]:
        raise ValueError(f"{path} is not a tuning log")
    dim = len(rows[0]) - 5
    out = []
    for row in rows[1:]:
        out.append(TuneRecord(int(row[0]), np.array([float(x) for x in row[1:1 + dim]]),
                              float(row[1 + dim]), row[2 + dim], float(row[3 + dim]),
                              float(row[4 + dim])))
    return out


def read_laps_log(path) -> list:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return [dict(r) for r in rd]


def write_meta(path, **meta) -> None:
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def best_record(records: Sequence[TuneRecord]) -> TuneRecord:
    """Earliest record attaining the minimum ``J``."""
    return min(records, key=lambda r: (r.J, r.iteration))


def config_dict(cfg: OfrConfig) -> dict:
    d = asdict(cfg)
    d["lam"] = list(d["lam"])
    return d


# ---------------------------------------------------------------------------
# campaign analysis

CONVERGENCE_TOL = 0.02


def incumbent_lap_times(J, verdicts, lap_times) -> np.ndarray:
    """Lap time of the best-J qualified record among the first ``i`` records,
    for every ``i`` (``inf`` before the first qualified lap)."""
    out = np.full(len(J), np.inf)
    best, cur = math.inf, math.inf
    for i, (j, v, t) in enumerate(zip(J, verdicts, lap_times)):
        if v == QUALIFIED and j < best:
            best, cur = j, float(t)
        out[i] = cur
    return out


def convergence_iteration(J, verdicts, lap_times, tol: float = CONVERGENCE_TOL) -> Optional[int]:
    """First (1-based) iteration from which the incumbent lap time stays within
    ``tol`` of its final value; ``None`` if no lap qualified."""
    c = incumbent_lap_times(J, verdicts, lap_times)
    if len(c) == 0 or not math.isfinite(c[-1]):
        return None
    ok = c <= (1.0 + tol) * c[-1]
    bad = np.nonzero(~ok)[0]
    return int(bad[-1] + 2) if len(bad) else 1


def optimal_lap_time(J, verdicts, lap_times) -> float:
    """Lap time of the best-J qualified record (``nan`` if none qualified)."""
    c = incumbent_lap_times(J, verdicts, lap_times)
    return float(c[-1]) if len(c) and math.isfinite(c[-1]) else float("nan")


def efficiency_gain(N_bl, N_opt) -> float:
    """Relative reduction of the convergence iteration, in percent."""
    return 100.0 * (N_bl - N_opt) / N_bl


def lap_time_change(T_bl, T_opt) -> float:
    """Relative lap-time change against the baseline, in percent (negative is faster)."""
    return 100.0 * (T_opt - T_bl) / T_bl
