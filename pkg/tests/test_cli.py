import csv
import json

import numpy as np
import pytest

from vpmpcc.cli import main, report_table, summarize_campaign
from vpmpcc.errors import MismatchedTracks
from vpmpcc.tuner import read_laps_log, read_tune_log

THETA = "0.33,10,5,5,5,1,5,1,0.3"


def _csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_track_build_reports_four_corners(tmp_path, capsys):
    assert main(["track", "build", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "peaks 4" in out and "D_ref       62.7" in out
    frames = _csv(tmp_path / "frames.csv")
    assert abs(float(frames[1]["s_m"]) - 0.05) < 1e-12
    assert main(["track", "inspect", str(tmp_path / "track.csv")]) == 0
    assert "peaks 4" in capsys.readouterr().out


def test_track_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x_m,y_m\n0,0\n1,oops\n")
    assert main(["track", "inspect", str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_race_missing_track(tmp_path, capsys):
    assert main(["race", "--theta", THETA, "--track", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_race_theta_validation(tmp_path):
    assert main(["race", "--theta", "1,2,3", "--out", str(tmp_path)]) == 2
    assert main(["race", "--out", str(tmp_path)]) == 2


def test_race_writes_recomputable_summary(tmp_path, capsys):
    assert main(["race", "--theta", THETA, "--kinematic", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    row = _csv(tmp_path / "summary.csv")[0]
    assert row["verdict"] == "Qualified"
    traj = np.loadtxt(tmp_path / "traj_01.csv", delimiter=",", skiprows=1)
    length = float(np.sum(np.linalg.norm(np.diff(traj[:, :2], axis=0), axis=1)))
    assert abs(length - float(row["length_m"])) < 1e-9
    assert abs(np.max(np.abs(traj[:, 2])) - float(row["max_abs_d_m"])) < 1e-12
    assert f"mean lap time {float(row['T_lap_s']):.3f} s" in out
    assert "solve time mean" in out


def test_race_plain_mpcc(tmp_path, capsys):
    assert main(["race", "--theta", THETA, "--kinematic", "--planner", "mpcc",
                 "--out", str(tmp_path)]) == 0
    assert "planner mpcc" in capsys.readouterr().out


def test_tune_rejects_zero_budget(tmp_path, capsys):
    assert main(["tune", "--budget", "0", "--out", str(tmp_path)]) == 2


@pytest.fixture(scope="module")
def baseline_campaign(tmp_path_factory):
    out = tmp_path_factory.mktemp("tune")
    assert main(["tune", "--objective", "baseline", "--budget", "3", "--n-init", "2",
                 "--kinematic", "--seed", "4", "--deterministic", "--quiet",
                 "--out", str(out)]) == 0
    return out


def test_tune_objective_recomputable(baseline_campaign):
    recs = read_tune_log(baseline_campaign / "tune.csv")
    laps = read_laps_log(baseline_campaign / "laps.csv")
    assert len(recs) == 3 and any(r.verdict == "Qualified" for r in recs)
    for rec, lap in zip(recs, laps):
        if rec.verdict != "Qualified":
            assert rec.J == 17.6
            continue
        traj = np.loadtxt(baseline_campaign / "evals" / f"iter_{rec.iteration:04d}_traj.csv",
                          delimiter=",", skiprows=1)
        assert abs(rec.J - (float(lap["T_lap"]) + 10.0 * np.mean(np.abs(traj[:, 2])))) < 1e-9
    best = json.loads((baseline_campaign / "best_theta.json").read_text())
    assert best["J"] == min(r.J for r in recs)


def test_tune_deterministic_logs(baseline_campaign, tmp_path):
    assert main(["tune", "--objective", "baseline", "--budget", "3", "--n-init", "2",
                 "--kinematic", "--seed", "4", "--deterministic", "--quiet",
                 "--out", str(tmp_path)]) == 0
    for name in ("tune.csv", "laps.csv", "best_theta.json", "meta.json",
                 "evals/iter_0003_lap.csv", "evals/iter_0003_traj.csv"):
        assert (tmp_path / name).read_bytes() == (baseline_campaign / name).read_bytes()


def test_report_single_and_pair(baseline_campaign, tmp_path, capsys):
    assert main(["report", str(baseline_campaign)]) == 0
    rows = report_table([summarize_campaign(baseline_campaign)])
    assert rows[0][7] == "-" and rows[0][9] == "-"
    assert main(["report", str(baseline_campaign), str(baseline_campaign),
                 "--out", str(tmp_path)]) == 0
    rep = _csv(tmp_path / "report.csv")
    if rep[1]["lap_time_change"] != "-":
        assert rep[1]["lap_time_change"] == "0.00%"


def test_report_mismatched_tracks(baseline_campaign):
    a = summarize_campaign(baseline_campaign)
    b = dict(a, track="other:10.0")
    with pytest.raises(MismatchedTracks):
        report_table([a, b])


def test_report_missing_directory(tmp_path, capsys):
    assert main(["report", str(tmp_path / "none")]) == 2
