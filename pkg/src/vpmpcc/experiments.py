"""Tuning campaigns behind the comparison studies.

``python -m vpmpcc.experiments objective|planner --out DIR`` runs

* ``objective``: OFR vs. the baseline objective, budget 120, seeds 1..5;
* ``planner``: VPMPCC vs. plain MPCC, both tuned with OFR, budget 80, seeds 1..3;

and writes one campaign directory per run plus ``summary.json``. Each summary
carries a fingerprint of the code that produced it (comments and docstrings
excluded) so stale results can be detected.
"""
from __future__ import annotations

import argparse
import ast
import hashlib
import json
import os
import time
from typing import Optional

from . import config as cfgmod
from .errors import ConfigError
from .tuner import (QUALIFIED, THETA_LOWER, THETA_UPPER, VARIANTS, LapEvaluator, config_dict,
                    convergence_iteration, optimal_lap_time, run_campaign, write_laps_log,
                    write_meta, write_tune_log)
from .simloop import write_lap_log

FINGERPRINT_MODULES = ("vehicle", "track", "solver", "planner", "simloop", "gp", "tuner", "config",
                       "experiments")

STUDIES = {
    "objective": {"budget": 120, "seeds": (1, 2, 3, 4, 5),
                  "arms": (("ofr", "vpmpcc"), ("baseline", "vpmpcc"))},
    "planner": {"budget": 80, "seeds": (1, 2, 3),
                "arms": (("ofr", "vpmpcc"), ("ofr", "mpcc"))},
}


def _strip_docstrings(tree):
    for node in ast.walk(tree):
        if isinstance(node, (ast.Module, ast.ClassDef, ast.FunctionDef, ast.AsyncFunctionDef)):
            body = node.body
            if body and isinstance(body[0], ast.Expr) and isinstance(body[0].value, ast.Constant) \
                    and isinstance(body[0].value.value, str):
                node.body = body[1:] or [ast.Pass()]
    return tree


def code_fingerprint() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    h = hashlib.sha256()
    for name in FINGERPRINT_MODULES:
        with open(os.path.join(here, name + ".py")) as fh:
            tree = _strip_docstrings(ast.parse(fh.read()))
        h.update(name.encode())
        h.update(ast.dump(tree).encode())
    return h.hexdigest()[:16]


def track_id(track) -> str:
    return f"{track.name or 'track'}:{track.total_length:.6f}"


def run_tuning(cfg: dict, variant: str, planner: str, budget: int, seed: int, out: str, *,
               jobs: int = 1, n_init: Optional[int] = None, deterministic: bool = False,
               kinematic: bool = False, save_laps: bool = True, callback=None):
    """Run one campaign and write ``tune.csv``, ``laps.csv``, ``best_theta.json``
    and ``meta.json`` (plus per-evaluation trajectories and step logs under
    ``evals/`` when ``save_laps``) to ``out``. Returns the records."""
    if budget < 1:
        raise ConfigError("budget must be at least 1")
    if variant not in VARIANTS:
        raise ConfigError(f"unknown objective {variant!r}")
    track = cfgmod.experiment_track(cfg)
    ofr = cfgmod.ofr_config(cfg, variant)
    ev = LapEvaluator(track, ofr, cfgmod.planner_constants(cfg), cfgmod.dyn_params(cfg),
                      planner=planner, max_iter=cfg["mpc"]["max_iter"], dynamics=not kinematic,
                      keep_observations=save_laps)
    os.makedirs(out, exist_ok=True)
    if save_laps:
        os.makedirs(os.path.join(out, "evals"), exist_ok=True)

    def on_record(rec):
        obs = rec.info.pop("obs", None)
        if obs is not None:
            stem = os.path.join(out, "evals", f"iter_{rec.iteration:04d}")
            write_trajectory(obs, stem + "_traj.csv")
            write_lap_log(obs, stem + "_lap.csv")
        if callback is not None:
            callback(rec)

    n0 = cfg["bo"]["n_init"] if n_init is None else n_init
    records = run_campaign(ev, THETA_LOWER, THETA_UPPER, n0, budget, seed=seed,
                           n_restarts=cfg["bo"]["n_restarts"], jobs=jobs,
                           deterministic=deterministic, callback=on_record)
    write_tune_log(records, os.path.join(out, "tune.csv"))
    write_laps_log(records, os.path.join(out, "laps.csv"))
    best = min(records, key=lambda r: (r.J, r.iteration))
    write_meta(os.path.join(out, "best_theta.json"), theta=[float(v) for v in best.theta],
               J=best.J, iteration=best.iteration, verdict=best.verdict)
    write_meta(os.path.join(out, "meta.json"), track=track_id(track), variant=variant,
               planner=planner, budget=budget, seed=seed, objective=config_dict(ofr),
               dynamics=not kinematic)
    return records


def write_trajectory(obs, path) -> None:
    with open(path, "w") as fh:
        fh.write("x_m,y_m,d_m\n")
        for p, d in zip(obs.P, obs.d):
            fh.write(f"{float(p[0])!r},{float(p[1])!r},{float(d)!r}\n")


def arm_name(variant: str, planner: str, seed: int) -> str:
    return f"{variant}_{planner}_seed{seed}"


def run_study(study: str, out: str, cfg: Optional[dict] = None, verbose: bool = True) -> dict:
    """Run every campaign of ``study`` and write ``out/summary.json``."""
    spec = STUDIES[study]
    cfg = cfg or cfgmod.load_config()
    os.makedirs(out, exist_ok=True)
    summary = {"study": study, "fingerprint": code_fingerprint(), "budget": spec["budget"],
               "campaigns": {}}
    t_all = time.perf_counter()
    for seed in spec["seeds"]:
        for variant, planner in spec["arms"]:
            name = arm_name(variant, planner, seed)
            t0 = time.perf_counter()
            recs = run_tuning(cfg, variant, planner, spec["budget"], seed, os.path.join(out, name),
                              save_laps=False)
            J = [r.J for r in recs]
            ver = [r.verdict for r in recs]
            T = [r.info.get("T_lap", float("nan")) for r in recs]
            entry = {"variant": variant, "planner": planner, "seed": seed,
                     "best_J": min(J), "T_opt": optimal_lap_time(J, ver, T),
                     "N_conv": convergence_iteration(J, ver, T),
                     "qualified": sum(v == QUALIFIED for v in ver),
                     "wall_s": time.perf_counter() - t0}
            summary["campaigns"][name] = entry
            if verbose:
                print(name, json.dumps(entry), flush=True)
    summary["wall_s"] = time.perf_counter() - t_all
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="python -m vpmpcc.experiments")
    p.add_argument("study", choices=sorted(STUDIES))
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    args = p.parse_args(argv)
    run_study(args.study, args.out, cfgmod.load_config(args.config))
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
