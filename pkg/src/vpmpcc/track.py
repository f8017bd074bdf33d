"""Closed-track geometry.

A track is a periodic cubic spline re-parameterized by arc length, with
per-position track widths and an optional reference velocity profile (RVP).
All position queries wrap ``s`` modulo the lap length.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .errors import (
    DuplicatePoints,
    NonClosedRaceline,
    NonPositiveLimit,
    ParseError,
    SelfIntersecting,
    TooFewPoints,
)

DEFAULT_HALF_WIDTH = 0.8
PROJECTION_GRID = 0.05  # m
PROJECTION_WINDOW = 5.0  # m, either side of the hint
AMBIGUITY_TOL = 1e-9  # m

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class PeriodicPchip:
    """Shape-preserving C1 interpolant on a periodic domain."""

    def __init__(self, s, values, period: float):
        s = np.asarray(s, dtype=float)
        values = np.asarray(values, dtype=float)
        k = min(3, len(s))
        ss = np.concatenate([s[-k:] - period, s, s[:k] + period])
        vv = np.concatenate([values[-k:], values, values[:k]])
        self.period = float(period)
        self._f = PchipInterpolator(ss, vv, extrapolate=True)
        self._df = [self._f, self._f.derivative(1), self._f.derivative(2)]

    def __call__(self, s, nu: int = 0):
        return self._df[nu](np.mod(s, self.period))


@dataclass(frozen=True)
class ReferenceVelocityProfile:
    """Target speeds sampled along the arc length of a closed track.

    Samples must satisfy ``0 <= s[0] < ... < s[-1] < period`` and ``v > 0``.
    """

    s: np.ndarray
    v: np.ndarray
    period: float

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if s.ndim != 1 or s.shape != v.shape or len(s) < 2:
            raise ValueError("RVP needs matching 1-D s and v arrays with >= 2 samples")
        if np.any(np.diff(s) <= 0) or s[0] < 0 or s[-1] >= self.period:
            raise ValueError("RVP s samples must be strictly increasing in [0, period)")
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("RVP velocities must be positive")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "_interp", PeriodicPchip(s, v, self.period))

    def __call__(self, s):
        return self._interp(s)

    def derivative(self, s):
        return self._interp(s, nu=1)

    def second_derivative(self, s):
        """Piecewise second derivative (the profile is only C1)."""
        return self._interp(s, nu=2)

    @classmethod
    def constant(cls, v: float, period: float, n: int = 16) -> "ReferenceVelocityProfile":
        s = np.linspace(0.0, period, n, endpoint=False)
        return cls(s, np.full(n, float(v)), period)


class Frame(NamedTuple):
    point: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    curvature: float


class Projection(NamedTuple):
    s: float
    distance: float
    ambiguous: bool = False


class Geometry(NamedTuple):
    """Vectorized reference-line quantities at a set of arc positions."""

    point: np.ndarray  # (n, 2)
    tangent: np.ndarray  # (n, 2), unit
    normal: np.ndarray  # (n, 2), unit, tangent rotated +90 deg
    dtangent: np.ndarray  # (n, 2), d tangent / ds
    dnormal: np.ndarray  # (n, 2), d normal / ds
    speed: np.ndarray  # (n,), |d tau / ds|, 1 up to fit error
    ddtangent: np.ndarray  # (n, 2), second derivative of the tangent
    ddnormal: np.ndarray  # (n, 2)
    accel: np.ndarray  # (n, 2), d^2 tau / ds^2


def _rot90(v):
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


class TrackModel:
    """Arc-length parameterized closed reference line.

    Use :func:`build_track` (or the file loaders) rather than calling the
    constructor directly.
    """

    def __init__(self, control_points, spline: CubicSpline, total_length: float,
                 knot_s, width_left, width_right, rvp: Optional[ReferenceVelocityProfile] = None,
                 name: str = ""):
        self.control_points = np.asarray(control_points, dtype=float)
        self.spline = spline
        self.total_length = float(total_length)
        self.knot_s = np.asarray(knot_s, dtype=float)
        self.width_left_samples = np.asarray(width_left, dtype=float)
        self.width_right_samples = np.asarray(width_right, dtype=float)
        self.rvp = rvp
        self.name = name
        self._d1 = spline.derivative(1)
        self._d2 = spline.derivative(2)
        self._d3 = spline.derivative(3)
        self._wl = PeriodicPchip(self.knot_s, self.width_left_samples, self.total_length)
        self._wr = PeriodicPchip(self.knot_s, self.width_right_samples, self.total_length)
        n = max(int(math.ceil(self.total_length / PROJECTION_GRID)), 8)
        self._grid_s = np.linspace(0.0, self.total_length, n, endpoint=False)
        self._grid_xy = self.spline(self._grid_s)

    # -- basic queries -------------------------------------------------
    @property
    def length(self) -> float:
        return self.total_length

    def wrap(self, s):
        return np.mod(s, self.total_length)

    def position(self, s):
        return self.spline(self.wrap(s))

    def width_left(self, s):
        return self._wl(s)

    def width_right(self, s):
        return self._wr(s)

    def half_width(self, s):
        """Conservative half-width: the narrower side at ``s``."""
        return np.minimum(self._wl(s), self._wr(s))

    def full_width(self, s):
        return self._wl(s) + self._wr(s)

    def full_width_derivative(self, s, nu: int = 1):
        return self._wl(s, nu=nu) + self._wr(s, nu=nu)

    def curvature(self, s):
        s = self.wrap(s)
        d1 = self._d1(s)
        d2 = self._d2(s)
        sp = np.hypot(d1[..., 0], d1[..., 1])
        return (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]) / sp**3

    def geometry(self, s) -> Geometry:
        s = self.wrap(np.atleast_1d(np.asarray(s, dtype=float)))
        p = self.spline(s)
        d1 = self._d1(s)
        d2 = self._d2(s)
        d3 = self._d3(s)
        speed = np.hypot(d1[:, 0], d1[:, 1])
        t = d1 / speed[:, None]
        a1 = np.sum(t * d2, axis=1)[:, None]  # d speed / ds
        dt = (d2 - t * a1) / speed[:, None]
        ddt = (d3 - dt * a1 - t * (np.sum(dt * d2, axis=1) + np.sum(t * d3, axis=1))[:, None]
               - dt * a1) / speed[:, None]
        return Geometry(p, t, _rot90(t), dt, _rot90(dt), speed, ddt, _rot90(ddt), d2)

    def with_rvp(self, rvp: ReferenceVelocityProfile) -> "TrackModel":
        if abs(rvp.period - self.total_length) > 1e-9 * max(1.0, self.total_length):
            raise ValueError("RVP period does not match the track length")
        return TrackModel(self.control_points, self.spline, self.total_length, self.knot_s,
                          self.width_left_samples, self.width_right_samples, rvp, self.name)

    def __repr__(self):
        return (f"TrackModel(name={self.name!r}, length={self.total_length:.3f}, "
                f"points={len(self.control_points)})")


# ---------------------------------------------------------------------------
# construction

def _segments_intersect(points: np.ndarray) -> bool:
    """Pairwise test of the closed polygon's non-adjacent edges."""
    n = len(points)
    a = points
    b = np.roll(points, -1, axis=0)
    idx = np.arange(n)

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - \
               (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    chunk = max(1, 4_000_000 // n)
    for start in range(0, n, chunk):
        i = idx[start:start + chunk, None]
        j = idx[None, :]
        # only j > i + 1, and skip the wrap-adjacent pair (0, n-1)
        mask = (j > i + 1) & ~((i == 0) & (j == n - 1))
        if not mask.any():
            continue
        ii, jj = np.nonzero(mask)
        ii = ii + start
        p1, p2, p3, p4 = a[ii], b[ii], a[jj], b[jj]
        d1 = orient(p3, p4, p1)
        d2 = orient(p3, p4, p2)
        d3 = orient(p1, p2, p3)
        d4 = orient(p1, p2, p4)
        if np.any((d1 * d2 < 0) & (d3 * d4 < 0)):
            return True
    return False


def _normalize_widths(widths, n: int, default: float):
    if widths is None:
        w = np.full((n, 2), float(default))
    else:
        w = np.asarray(widths, dtype=float)
        if w.ndim == 0:
            w = np.full((n, 2), float(w))
        elif w.ndim == 1:
            if len(w) != n:
                raise ValueError("widths length does not match the number of points")
            w = np.stack([w, w], axis=1)
        elif w.shape != (n, 2):
            raise ValueError("widths must be scalar, (n,) or (n, 2) [left, right]")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("track half-widths must be positive")
    return w


def _arc_length_table(cs: CubicSpline, t_knots: np.ndarray, sub: int):
    """Cumulative arc length at ``sub`` equal sub-steps of every knot interval."""
    d1 = cs.derivative(1)
    t_grid = np.concatenate([
        np.linspace(t_knots[i], t_knots[i + 1], sub, endpoint=False)
        for i in range(len(t_knots) - 1)
    ] + [t_knots[-1:]])
    a, b = t_grid[:-1], t_grid[1:]
    half = 0.5 * (b - a)
    nodes = (a + half)[:, None] + half[:, None] * _GL_X[None, :]
    v = d1(nodes.ravel())
    sp = np.hypot(v[:, 0], v[:, 1]).reshape(nodes.shape)
    seg = half * (sp @ _GL_W)
    return t_grid, np.concatenate([[0.0], np.cumsum(seg)])


def _invert_arc_length(cs, t_grid, s_grid, targets):
    d1 = cs.derivative(1)

    def speed(t):
        v = d1(t)
        return np.hypot(v[..., 0], v[..., 1])

    i = np.clip(np.searchsorted(s_grid, targets, side="right") - 1, 0, len(t_grid) - 2)
    frac = (targets - s_grid[i]) / (s_grid[i + 1] - s_grid[i])
    t = t_grid[i] + frac * (t_grid[i + 1] - t_grid[i])
    for _ in range(6):
        half = 0.5 * (t - t_grid[i])
        nodes = t_grid[i][:, None] + half[:, None] * (1.0 + _GL_X[None, :])
        partial = half * (speed(nodes.ravel()).reshape(nodes.shape) @ _GL_W)
        r = s_grid[i] + partial - targets
        t = t - r / speed(t)
        if np.max(np.abs(r)) < 1e-13 * max(1.0, s_grid[-1]):
            break
    return t


def build_track(centerline, widths=None, *, default_half_width: float = DEFAULT_HALF_WIDTH,
                rvp: Optional[ReferenceVelocityProfile] = None, name: str = "",
                min_samples: int = 1024) -> TrackModel:
    """Fit a closed arc-length spline through ``centerline``.

    Parameters
    ----------
    centerline : array_like, shape (n, 2)
        Ordered points of the closed reference line. A repeated closing point
        is dropped.
    widths : None, float, (n,) or (n, 2) array
        Half-widths. A (n, 2) array gives ``[left, right]``. ``None`` uses
        ``default_half_width`` everywhere.
    """
    pts = np.asarray(centerline, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("centerline must have shape (n, 2)")
    w_in = widths
    if len(pts) > 1 and np.allclose(pts[0], pts[-1], atol=1e-9):
        pts = pts[:-1]
        if widths is not None and np.ndim(widths) > 0:
            w_in = np.asarray(widths)[:-1]
    if len(pts) < 4:
        raise TooFewPoints(f"need at least 4 distinct points, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("centerline contains non-finite values")
    if cKDTree(pts).query_pairs(1e-9):
        raise DuplicatePoints("centerline contains repeated points")
    if _segments_intersect(pts):
        raise SelfIntersecting("centerline polygon intersects itself")
    w = _normalize_widths(w_in, len(pts), default_half_width)

    closed = np.vstack([pts, pts[:1]])
    chord = np.hypot(*np.diff(closed, axis=0).T)
    t_knots = np.concatenate([[0.0], np.cumsum(chord)])
    cs = CubicSpline(t_knots, closed, bc_type="periodic")
    d1 = cs.derivative(1)

    def speed(t):
        v = d1(t)
        return math.hypot(v[0], v[1])

    seg_len = np.array([
        quad(speed, t_knots[i], t_knots[i + 1], epsabs=0.0, epsrel=1e-10, limit=200)[0]
        for i in range(len(chord))
    ])
    knot_s = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = float(knot_s[-1])

    sub = max(4, int(math.ceil(4 * min_samples / len(chord))))
    t_grid, s_grid = _arc_length_table(cs, t_knots, sub)
    # pin the table to the adaptive-quadrature knot positions
    s_grid = s_grid * (total / s_grid[-1])

    m = max(min_samples, 2 * len(pts))
    while True:
        s_nodes = np.linspace(0.0, total, m + 1)
        t_nodes = _invert_arc_length(cs, t_grid, s_grid, s_nodes[:-1])
        xy = cs(t_nodes)
        spline = CubicSpline(s_nodes, np.vstack([xy, xy[:1]]), bc_type="periodic")
        probe = np.linspace(0.0, total, 4 * m, endpoint=False)
        v = spline.derivative(1)(probe)
        if np.max(np.abs(np.hypot(v[:, 0], v[:, 1]) - 1.0)) < 1e-3 or m > 1 << 18:
            break
        m *= 2

    return TrackModel(pts, spline, total, knot_s[:-1], w[:, 0], w[:, 1], rvp=rvp, name=name)


# ---------------------------------------------------------------------------
# queries

def frame_at(track: TrackModel, s: float) -> Frame:
    """Reference point, unit tangent, unit normal and signed curvature at ``s``."""
    g = track.geometry(s)
    return Frame(g.point[0], g.tangent[0], g.normal[0], float(track.curvature(s)))


def _refine(track: TrackModel, p, s0, lo, hi):
    d1 = track._d1

    def g(s):
        r = track.position(s) - p
        return float(r @ d1(track.wrap(s)))

    s0 = min(max(s0, lo), hi)
    glo, ghi = g(lo), g(hi)
    if glo < 0.0 < ghi:
        return brentq(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    return s0


def project(track: TrackModel, p, hint_s: Optional[float] = None) -> Projection:
    """Orthogonal projection of ``p`` on the reference line.

    Without ``hint_s`` the whole lap is searched on a 0.05 m grid; with it,
    only ``hint_s +/- 5 m``. ``distance`` is signed positive to the left of
    the direction of travel. When two distinct local minima are within 1e-9 m
    of each other the smaller ``s`` wins and ``ambiguous`` is set.
    """
    p = np.asarray(p, dtype=float)
    D = track.total_length
    h = PROJECTION_GRID
    if hint_s is None:
        cand_s = track._grid_s
        pts = track._grid_xy
        d2 = np.sum((pts - p) ** 2, axis=1)
        prev, nxt = np.roll(d2, 1), np.roll(d2, -1)
        idx = np.nonzero((d2 <= prev) & (d2 <= nxt))[0]
        brackets = [(cand_s[i] - h, cand_s[i] + h) for i in idx]
    else:
        n = int(round(2 * PROJECTION_WINDOW / h))
        cand_s = hint_s + np.linspace(-PROJECTION_WINDOW, PROJECTION_WINDOW, n + 1)
        pts = track.position(cand_s)
        d2 = np.sum((pts - p) ** 2, axis=1)
        prev = np.concatenate([[np.inf], d2[:-1]])
        nxt = np.concatenate([d2[1:], [np.inf]])
        idx = np.nonzero((d2 <= prev) & (d2 <= nxt))[0]
        brackets = [(max(cand_s[i] - h, cand_s[0]), min(cand_s[i] + h, cand_s[-1])) for i in idx]

    found = []
    for i, (lo, hi) in zip(idx, brackets):
        s = _refine(track, p, cand_s[i], lo, hi)
        r = p - track.position(s)
        found.append((float(np.hypot(r[0], r[1])), float(track.wrap(s))))
    found.sort()
    best_d = found[0][0]
    # distinct minima close to the best distance
    ties = []
    for dist, s in found:
        if dist - best_d >= AMBIGUITY_TOL:
            break
        if all(min(abs(s - t), D - abs(s - t)) > 1e-6 for t in ties):
            ties.append(s)
    s_star = min(ties)
    fr = track.geometry(s_star)
    signed = float(fr.normal[0] @ (p - fr.point[0]))
    return Projection(s_star, signed, len(ties) > 1)


def generate_rvp(track: TrackModel, v_cap: float, a_lat_max: float, a_long_max: float,
                 a_brake_max: float, ds: float = 0.05) -> ReferenceVelocityProfile:
    """Curvature-limited speed profile with periodic forward/backward passes."""
    for name, val in (("v_cap", v_cap), ("a_lat_max", a_lat_max),
                      ("a_long_max", a_long_max), ("a_brake_max", a_brake_max), ("ds", ds)):
        if not val > 0:
            raise NonPositiveLimit(f"{name} must be positive, got {val}")
    D = track.total_length
    n = max(int(math.ceil(D / ds)), 8)
    s = np.linspace(0.0, D, n, endpoint=False)
    h = D / n
    kappa = np.abs(track.curvature(s))
    with np.errstate(divide="ignore"):
        v_curv = np.where(kappa > 1e-12, np.sqrt(a_lat_max / kappa), np.inf)
    v_curv = np.minimum(v_curv, v_cap)
    v = v_curv.copy()
    acc = 2.0 * a_long_max * h
    dec = 2.0 * a_brake_max * h
    start = int(np.argmin(v))
    for _ in range(100):
        old = v.copy()
        for j in range(n):
            i = (start + j) % n
            k = (i + 1) % n
            lim = math.sqrt(v[i] * v[i] + acc)
            if v[k] > lim:
                v[k] = lim
        for j in range(n):
            i = (start - j) % n
            k = (i - 1) % n
            lim = math.sqrt(v[i] * v[i] + dec)
            if v[k] > lim:
                v[k] = lim
        if np.max(np.abs(v - old)) <= 1e-12:
            break
    return ReferenceVelocityProfile(s, v, D)


# ---------------------------------------------------------------------------
# files

def _read_table(path):
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = [h.strip().lstrip("#").strip() for h in lines[0].split(",")]
    rows = []
    for lineno, ln in enumerate(csv.reader(lines[1:]), start=2):
        if len(ln) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(ln)}")
        try:
            rows.append([float(x) for x in ln])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    data = np.array(rows)
    if not np.all(np.isfinite(data)):
        raise ParseError(f"{path}: non-finite values")
    return {h: data[:, i] for i, h in enumerate(header)}


def load_track_csv(path, default_half_width: float = DEFAULT_HALF_WIDTH) -> TrackModel:
    """Read ``x_m,y_m[,w_tr_left_m,w_tr_right_m]`` and build the track."""
    cols = _read_table(path)
    if "x_m" not in cols or "y_m" not in cols:
        raise ParseError(f"{path}: header must contain x_m and y_m")
    pts = np.column_stack([cols["x_m"], cols["y_m"]])
    widths = None
    if "w_tr_left_m" in cols and "w_tr_right_m" in cols:
        widths = np.column_stack([cols["w_tr_left_m"], cols["w_tr_right_m"]])
    elif "w_tr_left_m" in cols or "w_tr_right_m" in cols:
        raise ParseError(f"{path}: both width columns are required")
    return build_track(pts, widths, default_half_width=default_half_width, name=Path(path).stem)


def save_track_csv(path, track: TrackModel):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["x_m", "y_m", "w_tr_left_m", "w_tr_right_m"])
        for (x, y), wl, wr in zip(track.control_points, track.width_left_samples,
                                  track.width_right_samples):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(wl)), repr(float(wr))])


def load_raceline(path, half_width: float = DEFAULT_HALF_WIDTH):
    """Read ``s_m,x_m,y_m,v_mps``; return ``(track, rvp)`` with the RVP attached."""
    cols = _read_table(path)
    for key in ("s_m", "x_m", "y_m", "v_mps"):
        if key not in cols:
            raise ParseError(f"{path}: missing column {key}")
    s = cols["s_m"]
    if np.any(np.diff(s) <= 0):
        raise ParseError(f"{path}: s_m must be strictly increasing")
    pts = np.column_stack([cols["x_m"], cols["y_m"]])
    v = cols["v_mps"]
    if np.any(v <= 0):
        raise ParseError(f"{path}: v_mps must be positive")
    gap = float(np.hypot(*(pts[-1] - pts[0])))
    if gap > 0.5:
        raise NonClosedRaceline(f"{path}: endpoints are {gap:.3f} m apart")
    if gap < 1e-9:
        pts, v = pts[:-1], v[:-1]
    track = build_track(pts, half_width, name=Path(path).stem)
    rvp = ReferenceVelocityProfile(track.knot_s, v, track.total_length)
    return track.with_rvp(rvp), rvp


def save_raceline(path, track: TrackModel, rvp: Optional[ReferenceVelocityProfile] = None):
    rvp = rvp or track.rvp
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["s_m", "x_m", "y_m", "v_mps"])
        for s, (x, y) in zip(track.knot_s, track.control_points):
            w.writerow([repr(float(s)), repr(float(x)), repr(float(y)), repr(float(rvp(s)))])


# ---------------------------------------------------------------------------
# bundled layouts

def sharp_corner_centerline(length: float = 62.8, height: float = 8.0,
                            corner_radius: float = 1.0, spacing: float = 0.25) -> np.ndarray:
    """Rounded rectangle with four tight corners, counter-clockwise from the
    middle of the bottom straight. The long side is sized to hit ``length``."""
    r = corner_radius
    short = height - 2 * r
    long_ = (length - 2 * math.pi * r - 2 * short) / 2
    if long_ <= 0 or short <= 0:
        raise ValueError("track dimensions are inconsistent with the corner radius")
    w2, h2 = long_ / 2, short / 2
    # piecewise: straight, arc, straight, arc, ... starting at (0, -h2 - r)
    pieces = [
        ("line", (-0.0, -h2 - r), (w2, -h2 - r)),
        ("arc", (w2, -h2), -math.pi / 2),
        ("line", (w2 + r, -h2), (w2 + r, h2)),
        ("arc", (w2, h2), 0.0),
        ("line", (w2, h2 + r), (-w2, h2 + r)),
        ("arc", (-w2, h2), math.pi / 2),
        ("line", (-w2 - r, h2), (-w2 - r, -h2)),
        ("arc", (-w2, -h2), math.pi),
        ("line", (-w2, -h2 - r), (0.0, -h2 - r)),
    ]
    out = []
    for kind, a, b in pieces:
        if kind == "line":
            a, b = np.array(a), np.array(b)
            n = max(1, int(round(np.hypot(*(b - a)) / spacing)))
            for k in range(n):
                out.append(a + (b - a) * k / n)
        else:
            c, th0 = np.array(a), b
            n = max(2, int(round(0.5 * math.pi * r / spacing)))
            for k in range(n):
                th = th0 + 0.5 * math.pi * k / n
                out.append(c + r * np.array([math.cos(th), math.sin(th)]))
    return np.array(out)


def sharp_corner_track(half_width: float = DEFAULT_HALF_WIDTH, **kwargs) -> TrackModel:
    return build_track(sharp_corner_centerline(**kwargs), half_width, name="sharp_corner")


def circle_centerline(radius: float, n: int = 128, center=(0.0, 0.0)) -> np.ndarray:
    th = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    return np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])


def oval_centerline(straight: float = 10.0, radius: float = 4.0, spacing: float = 0.25) -> np.ndarray:
    """Stadium shape: two straights joined by half circles, counter-clockwise."""
    out = []
    n_line = max(1, int(round(straight / spacing)))
    n_arc = max(4, int(round(math.pi * radius / spacing)))
    h = straight / 2
    for k in range(n_line):
        out.append((-h + straight * k / n_line, -radius))
    for k in range(n_arc):
        th = -math.pi / 2 + math.pi * k / n_arc
        out.append((h + radius * math.cos(th), radius * math.sin(th)))
    for k in range(n_line):
        out.append((h - straight * k / n_line, radius))
    for k in range(n_arc):
        th = math.pi / 2 + math.pi * k / n_arc
        out.append((-h + radius * math.cos(th), radius * math.sin(th)))
    return np.array(out)
