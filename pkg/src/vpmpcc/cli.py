"""Command-line driver: ``vpmpcc {track,race,tune,report}``.

Every command accepts ``--config``, ``--seed``, ``--out`` and ``--jobs``.
All printed statistics are recomputable from the CSV files written to
``--out``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import config as cfgmod
from .errors import ConfigError, MismatchedTracks, VpmpccError
from .simloop import QUALIFIED, kinematic_only_lap, run_lap, start_state, write_lap_log
from .track import TrackModel, load_track_csv, save_raceline, save_track_csv
from .experiments import run_tuning, write_trajectory
from .tuner import (THETA_LOWER, THETA_UPPER, VARIANTS, convergence_iteration, efficiency_gain,
                    lap_time_change, optimal_lap_time, read_laps_log, read_tune_log)

EXIT_USAGE = 2


def _fmt(v) -> str:
    return repr(float(v))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def curvature_peaks(track: TrackModel, n: int = 4000, rel: float = 0.5) -> int:
    """Number of separate arcs where ``|kappa|`` exceeds ``rel`` times its maximum."""
    s = np.linspace(0.0, track.total_length, n, endpoint=False)
    k = np.abs(track.curvature(s))
    above = k > rel * k.max()
    if above.all():
        return 1
    # count rising edges on the periodic sample sequence
    return int(np.sum(above & ~np.roll(above, 1)))


# ---------------------------------------------------------------------------
# track

def cmd_track(args) -> int:
    cfg = cfgmod.load_config(args.config)
    if args.action == "inspect":
        if args.path is None:
            raise ConfigError("track inspect needs a centerline file")
        track = load_track_csv(args.path, default_half_width=cfg["track"]["half_width"])
    else:
        if args.path is not None:
            cfg["track"]["path"] = os.path.abspath(args.path)
        track = cfgmod.experiment_track(cfg)
    wl, wr = track.width_left_samples, track.width_right_samples
    peaks = curvature_peaks(track)
    print(f"track       {track.name or os.path.basename(args.path or '')}")
    print(f"points      {len(track.control_points)}")
    print(f"D_ref       {track.total_length:.4f} m")
    print(f"width left  min {wl.min():.3f} mean {wl.mean():.3f} max {wl.max():.3f} m")
    print(f"width right min {wr.min():.3f} mean {wr.mean():.3f} max {wr.max():.3f} m")
    print(f"curvature   max {np.max(np.abs(track.curvature(track.knot_s))):.3f} 1/m, peaks {peaks}")
    if args.action == "build":
        os.makedirs(args.out, exist_ok=True)
        save_track_csv(os.path.join(args.out, "track.csv"), track)
        save_raceline(os.path.join(args.out, "raceline.csv"), track)
        s = np.arange(0.0, track.total_length, args.ds)
        g = track.geometry(s)
        rows = [[_fmt(v) for v in r] for r in np.column_stack([
            s, g.point, g.tangent, g.normal, track.curvature(s), track.width_left(s),
            track.width_right(s), track.rvp(s)])]
        _write_rows(os.path.join(args.out, "frames.csv"),
                    ["s_m", "x_m", "y_m", "tx", "ty", "nx", "ny", "kappa_1pm", "w_left_m",
                     "w_right_m", "v_rvp_mps"], rows)
        print(f"wrote {args.out}/track.csv, raceline.csv, frames.csv")
    return 0


# ---------------------------------------------------------------------------
# race

def _load_theta(args) -> np.ndarray:
    if args.theta is not None:
        theta = np.array([float(v) for v in args.theta.split(",")])
    elif args.from_tune is not None:
        with open(os.path.join(args.from_tune, "best_theta.json")) as fh:
            theta = np.array(json.load(fh)["theta"], dtype=float)
    else:
        raise ConfigError("race needs --theta or --from-tune")
    if theta.shape != (9,):
        raise ConfigError("theta needs nine values")
    if np.any(theta < THETA_LOWER) or np.any(theta > THETA_UPPER):
        raise ConfigError("theta outside the tuning bounds")
    return theta


def cmd_race(args) -> int:
    cfg = cfgmod.load_config(args.config)
    if args.track is not None:
        if not os.path.exists(args.track):
            raise FileNotFoundError(f"track file not found: {args.track}")
        cfg["track"]["path"] = os.path.abspath(args.track)
    track = cfgmod.experiment_track(cfg)
    theta = _load_theta(args)
    consts = cfgmod.planner_constants(cfg)
    ofr = cfgmod.ofr_config(cfg)
    os.makedirs(args.out, exist_ok=True)
    use_rvp = args.planner == "vpmpcc"
    rows, all_ms = [], []
    for i in range(args.laps):
        start = start_state(track, seed=[args.seed, i])
        kw = dict(start=start, use_rvp=use_rvp, max_iter=cfg["mpc"]["max_iter"], d_ub=ofr.d_ub,
                  D_lb=ofr.D_lb, deterministic=args.deterministic)
        if args.kinematic:
            obs = kinematic_only_lap(track, theta, consts, **kw)
        else:
            obs = run_lap(track, theta, consts, cfgmod.dyn_params(cfg), **kw)
        write_lap_log(obs, os.path.join(args.out, f"lap_{i + 1:02d}.csv"))
        write_trajectory(obs, os.path.join(args.out, f"traj_{i + 1:02d}.csv"))
        ms = obs.solve_ms[obs.iterations >= 0]
        all_ms.append(ms if not args.deterministic else np.zeros_like(ms))
        vp = track.total_length / obs.T_lap if obs.qualified else float("nan")
        rows.append([i + 1, obs.verdict, obs.T_lap, vp, obs.traj_length, obs.max_abs_d,
                     obs.n_fallbacks])
        print(f"lap {i + 1}: {obs.verdict:9s} T_lap {obs.T_lap:7.3f} s  mean v_p {vp:6.3f} m/s  "
              f"max|d| {obs.max_abs_d:.3f} m")
    _write_rows(os.path.join(args.out, "summary.csv"),
                ["lap", "verdict", "T_lap_s", "mean_vp_mps", "length_m", "max_abs_d_m", "fallbacks"],
                [[r[0], r[1], *[_fmt(v) for v in r[2:6]], r[6]] for r in rows])
    q = [r for r in rows if r[1] == QUALIFIED]
    ms = np.concatenate(all_ms) if all_ms else np.zeros(0)
    print(f"planner {args.planner}, N_p = {int(math.floor(theta[0] * track.total_length))}, "
          f"{len(q)}/{len(rows)} qualified")
    if q:
        print(f"mean lap time {np.mean([r[2] for r in q]):.3f} s, "
              f"mean projected velocity {np.mean([r[3] for r in q]):.3f} m/s")
    if ms.size:
        print(f"solve time mean {ms.mean():.2f} ms, std {ms.std():.2f} ms")
    return 0


# ---------------------------------------------------------------------------
# tune

def cmd_tune(args) -> int:
    cfg = cfgmod.load_config(args.config)
    budget = cfg["bo"]["N_BO"] if args.budget is None else args.budget
    if budget < 1:
        raise ConfigError("budget must be at least 1")
    def progress(rec):
        if not args.quiet:
            print(f"{rec.iteration:4d}  J {rec.J:9.4f}  {rec.verdict:9s}  best {rec.best_J:9.4f}",
                  flush=True)

    records = run_tuning(cfg, args.objective, args.planner, budget, args.seed, args.out,
                         jobs=args.jobs, n_init=args.n_init, deterministic=args.deterministic,
                         kinematic=args.kinematic, callback=progress)
    best = min(records, key=lambda r: (r.J, r.iteration))
    print(f"best J {best.J:.4f} at iteration {best.iteration} ({best.verdict})")
    print("theta* = " + ",".join(f"{v:.6g}" for v in best.theta))
    return 0


# ---------------------------------------------------------------------------
# report

def summarize_campaign(directory: str) -> dict:
    """Optimal lap time and convergence iteration of one campaign directory."""
    recs = read_tune_log(os.path.join(directory, "tune.csv"))
    laps = read_laps_log(os.path.join(directory, "laps.csv"))
    if len(laps) != len(recs):
        raise VpmpccError(f"{directory}: tune.csv and laps.csv disagree")
    meta_path = os.path.join(directory, "meta.json")
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
    J = [r.J for r in recs]
    verdicts = [r.verdict for r in recs]
    T = [float(row["T_lap"]) for row in laps]
    return {
        "name": os.path.basename(os.path.normpath(directory)),
        "track": meta.get("track", ""),
        "variant": meta.get("variant", ""),
        "planner": meta.get("planner", ""),
        "evaluations": len(recs),
        "qualified": sum(v == QUALIFIED for v in verdicts),
        "best_J": min(J),
        "T_opt": optimal_lap_time(J, verdicts, T),
        "N_conv": convergence_iteration(J, verdicts, T),
    }


def report_table(summaries: Sequence[dict]) -> list:
    """Rows comparing each campaign to the first (the baseline)."""
    tracks = {s["track"] for s in summaries}
    if len(tracks) > 1:
        raise MismatchedTracks(f"campaigns ran on different tracks: {sorted(tracks)}")
    base = summaries[0]
    rows = []
    for i, s in enumerate(summaries):
        dT = dN = "-"
        if i > 0:
            if math.isfinite(base["T_opt"]) and math.isfinite(s["T_opt"]):
                dT = f"{lap_time_change(base['T_opt'], s['T_opt']):.2f}%"
            if base["N_conv"] and s["N_conv"] is not None:
                dN = f"{efficiency_gain(base['N_conv'], s['N_conv']):.2f}%"
        rows.append([s["name"], s["variant"], s["planner"], str(s["evaluations"]),
                     str(s["qualified"]), f"{s['best_J']:.4f}",
                     "-" if not math.isfinite(s["T_opt"]) else f"{s['T_opt']:.3f}", dT,
                     "-" if s["N_conv"] is None else str(s["N_conv"]), dN])
    return rows


REPORT_HEADER = ["campaign", "variant", "planner", "evaluations", "qualified", "best_J",
                 "optimal_lap_s", "lap_time_change", "convergence_iter", "efficiency_gain"]


def cmd_report(args) -> int:
    summaries = [summarize_campaign(d) for d in args.logs]
    rows = report_table(summaries)
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(REPORT_HEADER)]
    print("  ".join(h.ljust(w) for h, w in zip(REPORT_HEADER, widths)))
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_rows(os.path.join(args.out, "report.csv"), REPORT_HEADER, rows)
    return 0


# ---------------------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=_seed, default=0)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--jobs", type=_positive_int, default=1,
                        help="worker processes for the initial design")

    p = argparse.ArgumentParser(prog="vpmpcc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("track", parents=[common], help="build or inspect a track")
    t.add_argument("action", choices=["build", "inspect"])
    t.add_argument("path", nargs="?", help="centerline CSV (build: default bundled sharp-corner)")
    t.add_argument("--ds", type=float, default=0.05, help="frame sampling step [m]")
    t.set_defaults(func=cmd_track)

    r = sub.add_parser("race", parents=[common], help="drive laps with fixed parameters")
    r.add_argument("--theta", help="nine comma-separated parameters")
    r.add_argument("--from-tune", help="campaign directory holding best_theta.json")
    r.add_argument("--track", help="centerline CSV (default from config)")
    r.add_argument("--laps", type=_positive_int, default=1)
    r.add_argument("--planner", choices=["vpmpcc", "mpcc"], default="vpmpcc")
    r.add_argument("--kinematic", action="store_true", help="simulate the planning model itself")
    r.add_argument("--deterministic", action="store_true", help="zero the timing columns")
    r.set_defaults(func=cmd_race)

    u = sub.add_parser("tune", parents=[common], help="run a tuning campaign")
    u.add_argument("--objective", choices=VARIANTS, default="ofr")
    u.add_argument("--budget", type=int, help="evaluations (default bo.N_BO)")
    u.add_argument("--n-init", type=_positive_int)
    u.add_argument("--planner", choices=["vpmpcc", "mpcc"], default="vpmpcc")
    u.add_argument("--kinematic", action="store_true")
    u.add_argument("--deterministic", action="store_true", help="zero the timing columns")
    u.add_argument("--quiet", action="store_true")
    u.set_defaults(func=cmd_tune)

    o = sub.add_parser("report", parents=[common], help="compare campaigns (first is the baseline)")
    o.add_argument("logs", nargs="+", help="campaign directories")
    o.set_defaults(func=cmd_report, out=None)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (VpmpccError, OSError, ValueError) as exc:
        print(f"vpmpcc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
