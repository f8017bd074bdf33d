import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import polyline_length
from vpmpcc.errors import (DuplicatePoints, NonClosedRaceline, NonPositiveLimit, ParseError,
                           SelfIntersecting, TooFewPoints)
from vpmpcc.track import (ReferenceVelocityProfile, build_track, circle_centerline, frame_at,
                          generate_rvp, load_raceline, load_track_csv, oval_centerline, project,
                          save_raceline, save_track_csv, sharp_corner_track)


def test_square_length_within_five_percent():
    pts = [(0, 0), (5, 0), (10, 0), (10, 5), (10, 10), (5, 10), (0, 10), (0, 5)]
    tr = build_track(pts, 1.0)
    s = np.linspace(0, tr.total_length, 20001)
    dense = polyline_length(tr.position(s))
    assert abs(tr.total_length - dense) < 1e-4
    assert abs(tr.total_length - 40.0) / 40.0 < 0.05


def test_64gon_circumference():
    tr = build_track(circle_centerline(10.0, n=64), 1.0)
    assert abs(tr.total_length - 2 * math.pi * 10) / (2 * math.pi * 10) < 0.005


def test_too_few_points():
    with pytest.raises(TooFewPoints):
        build_track([(0, 0), (1, 0), (0, 1)], 1.0)


def test_duplicate_points():
    with pytest.raises(DuplicatePoints):
        build_track([(0, 0), (1, 0), (1, 0), (1, 1), (0, 1)], 1.0)


def test_self_intersecting():
    with pytest.raises(SelfIntersecting):
        build_track([(0, 0), (2, 2), (2, 0), (0, 2), (-1, 1)], 1.0)


def test_straight_frame(oval_track):
    # the bottom straight of the oval runs along +x from s = 0
    fr = frame_at(oval_track, 5.0)
    np.testing.assert_allclose(fr.tangent, [1, 0], atol=1e-6)
    np.testing.assert_allclose(fr.normal, [0, 1], atol=1e-6)
    assert abs(fr.curvature) < 1e-4


def test_circle_curvature_ccw(circle_track):
    s = np.linspace(0, circle_track.total_length, 50, endpoint=False)
    np.testing.assert_allclose(circle_track.curvature(s), 0.1, rtol=0.01)


def test_circle_curvature_at_control_points(circle_track):
    np.testing.assert_allclose(circle_track.curvature(circle_track.knot_s), 0.1, rtol=0.01)


def test_frame_periodic(sharp_track):
    a = frame_at(sharp_track, sharp_track.total_length + 1.0)
    b = frame_at(sharp_track, 1.0)
    np.testing.assert_allclose(a.point, b.point, atol=1e-9)
    np.testing.assert_allclose(a.tangent, b.tangent, atol=1e-9)


def test_closed_c1_seam(sharp_track):
    D = sharp_track.total_length
    g0 = sharp_track.geometry(np.array([0.0, D - 1e-9]))
    np.testing.assert_allclose(g0.point[0], g0.point[1], atol=1e-7)
    np.testing.assert_allclose(g0.tangent[0], g0.tangent[1], atol=1e-6)


def test_arc_length_parameterization(sharp_track):
    s = np.linspace(0, sharp_track.total_length, 3000, endpoint=False)
    g = sharp_track.geometry(s)
    assert np.max(np.abs(g.speed - 1.0)) < 1e-3


@given(st.floats(0, 200, allow_nan=False))
@settings(max_examples=60, deadline=None)
def test_frame_orthonormal(s):
    tr = _SHARP
    fr = frame_at(tr, s)
    assert abs(fr.tangent @ fr.normal) < 1e-12
    assert abs(np.linalg.norm(fr.tangent) - 1) < 1e-12
    assert abs(np.linalg.norm(fr.normal) - 1) < 1e-12


_SHARP = sharp_corner_track()


def test_project_point_on_line(sharp_track):
    s0 = 13.7
    pr = project(sharp_track, sharp_track.position(s0))
    assert abs(pr.distance) < 1e-9
    assert abs(pr.s - s0) < 1e-7


@pytest.mark.parametrize("theta", [0.3, 1.0, 2.5, 4.0])
def test_project_circle_analytic(circle_track, theta):
    # 64-gon spline is a near-circle; compare with the analytic projection on it
    p = 10.4 * np.array([math.cos(theta), math.sin(theta)])
    pr = project(circle_track, p)
    fr = frame_at(circle_track, pr.s)
    radius = np.linalg.norm(fr.point)
    # outside a CCW circle is to the right of travel
    assert abs(pr.distance - (radius - 10.4)) < 1e-6
    ang = math.atan2(fr.point[1], fr.point[0]) % (2 * math.pi)
    assert abs(ang - theta) < 1e-3
    assert abs(pr.s - circle_track.total_length * theta / (2 * math.pi)) < 0.02


def test_project_center_is_ambiguous(circle_track):
    assert project(circle_track, (0.0, 0.0)).ambiguous


@given(st.floats(0, 62, allow_nan=False), st.floats(-0.7, 0.7, allow_nan=False))
@settings(max_examples=60, deadline=None)
def test_project_orthogonal_residual(s, off):
    tr = _SHARP
    fr = frame_at(tr, s)
    p = fr.point + off * fr.normal
    pr = project(tr, p)
    f2 = frame_at(tr, pr.s)
    assert abs((p - f2.point) @ f2.tangent) < 1e-9


def test_project_with_hint_window(sharp_track):
    p = sharp_track.position(30.0)
    pr = project(sharp_track, p, hint_s=28.0)
    assert abs(pr.s - 30.0) < 1e-7


def test_rvp_straight_dominant_is_capped():
    tr = build_track(circle_centerline(1000.0, n=256), 1.0)
    rvp = generate_rvp(tr, 5.0, 4.0, 3.0, 3.0)
    np.testing.assert_allclose(rvp.v, 5.0)


def test_rvp_circle_lateral_limit():
    tr = build_track(circle_centerline(2.0, n=64), 0.5)
    rvp = generate_rvp(tr, 15.0, 4.0, 3.0, 3.0)
    np.testing.assert_allclose(rvp.v, math.sqrt(8.0), rtol=2e-3)


def test_rvp_acceleration_out_of_corner(oval_track):
    # a_long 3, corner speed sqrt(4 * 5): along the straight v^2 grows by 2 a ds
    rvp = generate_rvp(oval_track, 15.0, 4.0, 3.0, 30.0, ds=0.01)
    D = oval_track.total_length
    s_exit = D - 1e-9  # the oval's last arc ends at s = D, then the straight starts
    v0 = float(rvp(s_exit))
    for ds in (1.0, 3.0):
        expected = math.sqrt(v0 ** 2 + 2 * 3.0 * ds)
        assert abs(float(rvp(ds)) - expected) < 0.03 * expected


def test_rvp_properties(sharp_track):
    tr = sharp_track
    rvp = generate_rvp(tr, 5.5, 4.0, 3.0, 2.0, ds=0.05)
    k = np.abs(tr.curvature(rvp.s))
    v_curv = np.minimum(5.5, np.sqrt(4.0 / np.maximum(k, 1e-12)))
    assert np.all(rvp.v <= v_curv + 1e-9)
    v2 = np.append(rvp.v, rvp.v[0]) ** 2
    h = tr.total_length / len(rvp.v)
    dv2 = np.diff(v2) / h
    assert np.all(dv2 <= 2 * 3.0 + 1e-6)
    assert np.all(-dv2 <= 2 * 2.0 + 1e-6)


def test_rvp_invariant_under_rigid_motion():
    from vpmpcc.track import sharp_corner_centerline
    pts = sharp_corner_centerline()
    a = 0.7
    Rm = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    t1 = build_track(pts, 0.8)
    t2 = build_track(pts @ Rm.T + [3.0, -2.0], 0.8)
    r1 = generate_rvp(t1, 5.5, 4, 3, 3)
    r2 = generate_rvp(t2, 5.5, 4, 3, 3)
    np.testing.assert_allclose(r1.v, r2.v, atol=1e-9)


def test_rvp_nonpositive_limit(sharp_track):
    with pytest.raises(NonPositiveLimit):
        generate_rvp(sharp_track, 5.0, 0.0, 3.0, 3.0)


def test_rvp_validation():
    with pytest.raises(ValueError):
        ReferenceVelocityProfile(np.array([0.0, 1.0]), np.array([1.0, -1.0]), 2.0)
    with pytest.raises(ValueError):
        ReferenceVelocityProfile(np.array([1.0, 0.5]), np.array([1.0, 1.0]), 2.0)


def test_track_csv_roundtrip(tmp_path, sharp_track):
    p = tmp_path / "t.csv"
    save_track_csv(p, sharp_track)
    tr = load_track_csv(p)
    assert abs(tr.total_length - sharp_track.total_length) < 1e-9


def test_track_csv_without_widths(tmp_path):
    p = tmp_path / "t.csv"
    pts = circle_centerline(5.0, n=40)
    p.write_text("x_m,y_m\n" + "\n".join(f"{x},{y}" for x, y in pts) + "\n")
    tr = load_track_csv(p, default_half_width=0.6)
    assert np.allclose(tr.width_left_samples, 0.6)


def test_track_csv_malformed(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x_m,y_m\n1,2\n3,abc\n4,5\n6,7\n")
    with pytest.raises(ParseError):
        load_track_csv(p)


def test_raceline_roundtrip_circle(tmp_path):
    pts = circle_centerline(8.0, n=120)
    s = np.concatenate([[0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    p = tmp_path / "rl.csv"
    p.write_text("s_m,x_m,y_m,v_mps\n" + "\n".join(
        f"{a},{x},{y},3.0" for a, (x, y) in zip(s, pts)) + "\n")
    tr, rvp = load_raceline(p)
    assert abs(tr.total_length - 2 * math.pi * 8) < 0.05
    np.testing.assert_allclose(rvp(np.linspace(0, tr.total_length, 30)), 3.0)
    q = tmp_path / "rl2.csv"
    save_raceline(q, tr)
    tr2, _ = load_raceline(q)
    assert abs(tr2.total_length - tr.total_length) < 1e-6


def test_raceline_non_monotone_s(tmp_path):
    p = tmp_path / "rl.csv"
    p.write_text("s_m,x_m,y_m,v_mps\n0,0,0,1\n2,1,0,1\n1,1,1,1\n3,0,1,1\n")
    with pytest.raises(ParseError):
        load_raceline(p)


def test_raceline_open(tmp_path):
    p = tmp_path / "rl.csv"
    rows = [(0, 0, 0), (1, 1, 0), (2, 2, 0), (3, 2, 1), (4, 2, 2)]
    p.write_text("s_m,x_m,y_m,v_mps\n" + "\n".join(f"{a},{x},{y},1" for a, x, y in rows) + "\n")
    with pytest.raises(NonClosedRaceline):
        load_raceline(p)


def test_sharp_corner_layout():
    tr = sharp_corner_track()
    assert abs(tr.total_length - 62.8) < 0.05
    oval = build_track(oval_centerline(), 1.0)
    assert oval.total_length > 0
