"""Smooth bound- and equality-constrained NLP solver.

Sequential quadratic programming in the space of *independent* variables:
each equality-constrained QP is reduced by eliminating a set of dependent
variables through the linearized constraints (for a multiple-shooting
transcription these are the states), leaving a box-constrained QP that is
solved by a primal active-set method. Steps are globalized with a
backtracking line search on the l1 merit function ``f + mu * ||c||_1``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .errors import InconsistentDerivatives, NonFiniteObjective

CONVERGED = "Converged"
MAX_ITER = "MaxIter"
LINE_SEARCH_FAIL = "LineSearchFail"


@dataclass
class NlpProblem:
    """Problem ``min f(x) s.t. c(x) = 0, lb <= x <= ub``.

    ``objective(x)`` returns ``(f, grad)``; ``constraints(x)`` returns
    ``(c, J)`` with a dense Jacobian. ``hessian(x)`` may return an exact or
    Gauss-Newton Hessian of the objective; without it a damped BFGS
    approximation of the Lagrangian Hessian is used. With ``hessian``,
    ``constraint_hessian(x, lam)`` may add ``sum_i lam_i * Hess c_i(x)`` at the
    multipliers of the previous QP. ``restore(x)``, if given, maps a
    trial point back onto ``c(x) = 0`` by recomputing the dependent variables
    (e.g. re-integrating explicit dynamics), so every iterate is feasible and
    the line search acts on ``f`` alone. ``dependent`` lists the
    variables eliminated by the equalities; they must be unbounded and their
    Jacobian block square and non-singular. Left as ``None`` it is chosen by
    pivoted QR at the initial point.
    """

    objective: Callable
    x0: np.ndarray
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    constraints: Optional[Callable] = None
    hessian: Optional[Callable] = None
    dependent: Optional[np.ndarray] = None
    constraint_hessian: Optional[Callable] = None
    restore: Optional[Callable] = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).copy()
        n = self.x0.size
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("bounds must match the decision dimension")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.x0.size


@dataclass
class SolverOptions:
    max_iter: int = 100
    tol: float = 1e-6
    eq_tol: float = 1e-6
    check_derivatives: bool = False
    derivative_tol: float = 1e-4
    max_backtracks: int = 40
    armijo: float = 1e-4


@dataclass
class NlpSolution:
    x: np.ndarray
    f: float
    eq_residual: float
    iterations: int
    status: str
    wall_ms: float
    kkt: float = np.nan
    merit: list = field(default_factory=list)
    alphas: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.status == CONVERGED


def _fd_gradient(fun, x, h):
    g = np.empty_like(x)
    xp = x.copy()
    for i in range(x.size):
        hi = h * max(1.0, abs(x[i]))
        xp[i] = x[i] + hi
        fp = fun(xp)
        xp[i] = x[i] - hi
        fm = fun(xp)
        xp[i] = x[i]
        g[i] = (fp - fm) / (2 * hi)
    return g


def check_gradients(problem: NlpProblem, point=None, h: float = 1e-6) -> float:
    """Max relative difference between the analytic objective gradient and
    central differences; per coordinate the scale is ``max(|g|, |g_fd|, 1)``."""
    x = problem.x0 if point is None else np.asarray(point, dtype=float)
    _, g = problem.objective(x)
    g_fd = _fd_gradient(lambda z: problem.objective(z)[0], x, h)
    scale = np.maximum(np.maximum(np.abs(g), np.abs(g_fd)), 1.0)
    return float(np.max(np.abs(g - g_fd) / scale))


def _check_jacobian(problem: NlpProblem, x, h=1e-6) -> float:
    c, J = problem.constraints(x)
    err = 0.0
    xp = x.copy()
    for i in range(x.size):
        hi = h * max(1.0, abs(x[i]))
        xp[i] = x[i] + hi
        cp = problem.constraints(xp)[0]
        xp[i] = x[i] - hi
        cm = problem.constraints(xp)[0]
        xp[i] = x[i]
        col = (cp - cm) / (2 * hi)
        scale = np.maximum(np.maximum(np.abs(col), np.abs(J[:, i])), 1.0)
        err = max(err, float(np.max(np.abs(col - J[:, i]) / scale)))
    return err


def box_qp(H, h, lo, hi, max_iter: Optional[int] = None, tol: float = 1e-12):
    """Minimize ``0.5 d'Hd + h'd`` over ``lo <= d <= hi`` (H positive definite,
    ``lo <= 0 <= hi``) with a primal active-set method started at ``d = 0``.

    The working set holds variables fixed at a bound; each iteration solves
    the equality-constrained problem on the free variables, then either adds
    the first blocking bound or releases the bound with the most negative
    multiplier.
    """
    n = h.size
    d = np.clip(np.zeros(n), lo, hi)
    if n == 0:
        return d
    if max_iter is None:
        max_iter = 4 * n + 20
    at_lo = (d <= lo) & (h > 0)
    at_hi = (d >= hi) & (h < 0)
    work = at_lo | at_hi
    scale = max(1.0, float(np.max(np.abs(h))))
    solved = False  # free subproblem solved at the current d
    for _ in range(max_iter):
        grad = H @ d + h
        if solved:
            # multipliers of the working bounds: outward gradient is fine
            mult = np.where(d <= lo, grad, -grad)
            mult = np.where(work, mult, np.inf)
            j = int(np.argmin(mult))
            if not work.any() or mult[j] >= -tol * scale:
                break
            work[j] = False
        free = ~work
        p = np.zeros(n)
        if free.any():
            Hf = H[np.ix_(free, free)]
            p[free] = -sla.cho_solve(sla.cho_factor(Hf, check_finite=False), grad[free],
                                     check_finite=False)
        neg = free & (p < 0)
        pos = free & (p > 0)
        r = np.full(n, np.inf)
        r[neg] = (lo[neg] - d[neg]) / p[neg]
        r[pos] = (hi[pos] - d[pos]) / p[pos]
        j = int(np.argmin(r))
        if r[j] < 1.0:
            d = d + max(r[j], 0.0) * p
            d[j] = lo[j] if p[j] < 0 else hi[j]
            work[j] = True
            solved = False
        else:
            d = d + p
            solved = True
        d = np.clip(d, lo, hi)
    return d


def _make_pd(H):
    """Positive definite modification of H: eigenvalues are replaced by
    ``max(|lambda|, delta)`` with ``delta`` relative to the largest one."""
    n = H.shape[0]
    if n == 0:
        return H
    Hs = 0.5 * (H + H.T)
    try:
        np.linalg.cholesky(Hs)
        return Hs
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(Hs)
    delta = max(1e-8, 1e-8 * float(np.max(np.abs(w))))
    w = np.maximum(np.abs(w), delta)
    return (V * w) @ V.T


def _choose_dependent(J, lb, ub):
    m = J.shape[0]
    free = np.nonzero(np.isinf(lb) & np.isinf(ub))[0]
    if len(free) < m:
        raise ValueError("not enough unbounded variables to eliminate the equalities")
    _, R, piv = sla.qr(J[:, free], mode="economic", pivoting=True)
    if abs(R[m - 1, m - 1]) < 1e-12 * max(1.0, abs(R[0, 0])):
        raise ValueError("equality Jacobian is rank deficient")
    return np.sort(free[piv[:m]])


class _Eliminator:
    """Solves with the dependent Jacobian block, using a triangular solve when
    the block is lower triangular (multiple-shooting structure)."""

    def __init__(self, JD, structure=None):
        if structure is None:
            structure = _structure(JD)
        self.tri, self.unit = structure
        if self.tri:
            self.JD = JD
        else:
            self.lu = sla.lu_factor(JD, check_finite=False)

    def solve(self, b):
        if self.tri:
            return sla.solve_triangular(self.JD, b, lower=True, unit_diagonal=self.unit,
                                        check_finite=False)
        return sla.lu_solve(self.lu, b, check_finite=False)

    def solve_t(self, b):
        if self.tri:
            return sla.solve_triangular(self.JD, b, lower=True, trans="T",
                                        unit_diagonal=self.unit, check_finite=False)
        return sla.lu_solve(self.lu, b, trans=1, check_finite=False)


def _structure(JD):
    tri = bool(np.allclose(np.triu(JD, 1), 0.0))
    return tri, tri and bool(np.allclose(np.diag(JD), 1.0))


def _index(idx):
    """A slice when ``idx`` is a contiguous range (cheap views), else ``idx``."""
    if len(idx) and idx[-1] - idx[0] == len(idx) - 1:
        return slice(int(idx[0]), int(idx[-1]) + 1)
    return idx


def solve(problem: NlpProblem, options: Optional[SolverOptions] = None) -> NlpSolution:
    """Run the SQP iteration; see the module docstring."""
    opt = options or SolverOptions()
    t_start = time.perf_counter()
    lb, ub = problem.lb, problem.ub
    x = np.clip(problem.x0, lb, ub)
    if problem.restore is not None:
        x = np.asarray(problem.restore(x), dtype=float)
    n = x.size

    f, g = problem.objective(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteObjective("objective is not finite at the initial point")
    if problem.constraints is not None:
        c, J = problem.constraints(x)
        c = np.asarray(c, dtype=float)
        J = np.asarray(J, dtype=float)
    else:
        c, J = np.zeros(0), np.zeros((0, n))
    m = c.size

    if opt.check_derivatives:
        err = check_gradients(problem, x)
        if m:
            err = max(err, _check_jacobian(problem, x))
        if err > opt.derivative_tol:
            raise InconsistentDerivatives(f"derivative check failed: max rel. error {err:.3e}")

    if m:
        dep = (np.asarray(problem.dependent, dtype=int) if problem.dependent is not None
               else _choose_dependent(J, lb, ub))
        if len(dep) != m:
            raise ValueError("number of dependent variables must equal the number of equalities")
        if np.any(np.isfinite(lb[dep])) or np.any(np.isfinite(ub[dep])):
            raise ValueError("dependent variables must be unbounded")
    else:
        dep = np.zeros(0, dtype=int)
    mask = np.ones(n, dtype=bool)
    mask[dep] = False
    ind = np.nonzero(mask)[0]
    lbI, ubI = lb[ind], ub[ind]
    si, sd = _index(ind), _index(dep)
    structure = None

    use_bfgs = problem.hessian is None
    B = np.eye(n) if use_bfgs else None
    mu = 1.0
    lam = np.zeros(m)
    merit_hist = []
    alphas = []
    status = MAX_ITER
    kkt = np.inf
    it = 0

    for it in range(opt.max_iter + 1):
        eq_res = float(np.max(np.abs(c), initial=0.0))
        if m:
            JD = J[:, sd]
            if structure is None:
                # the sparsity pattern is fixed, so classify it once
                structure = _structure(JD)
            elim = _Eliminator(JD, structure)
            G = -elim.solve(J[:, si])
            e = -elim.solve(c)
        else:
            G = np.zeros((0, ind.size))
            e = np.zeros(0)
        zg = g[ind] + G.T @ g[dep]
        xI = x[ind]
        kkt = float(np.max(np.abs(xI - np.clip(xI - zg, lbI, ubI)), initial=0.0))
        if kkt <= opt.tol and eq_res <= opt.eq_tol:
            status = CONVERGED
            break
        if it == opt.max_iter:
            status = MAX_ITER
            break

        if use_bfgs:
            H = B
        else:
            H = np.asarray(problem.hessian(x), dtype=float)
            if m and problem.constraint_hessian is not None and it > 0:
                # multipliers of the previous QP: accurate near the solution,
                # unlike a first-order estimate far from it
                H = H + problem.constraint_hessian(x, lam)
        if isinstance(si, slice) and isinstance(sd, slice):
            H_II, H_ID, H_DD = H[si, si], H[si, sd], H[sd, sd]
        else:
            H_II = H[np.ix_(ind, ind)]
            H_ID = H[np.ix_(ind, dep)]
            H_DD = H[np.ix_(dep, dep)]
        HDG = H_DD @ G
        Hr = H_II + H_ID @ G + (H_ID @ G).T + G.T @ HDG
        hr = zg + H_ID @ e + G.T @ (H_DD @ e)
        Hr = _make_pd(Hr)
        dI = box_qp(Hr, hr, lbI - xI, ubI - xI)
        d = np.empty(n)
        d[ind] = dI
        d[dep] = G @ dI + e

        if m:
            lam = -elim.solve_t(g[dep] + (H @ d)[dep])
            mu = max(mu, 1.1 * float(np.max(np.abs(lam))) + 1e-6)
        phi0 = f + mu * float(np.sum(np.abs(c)))
        merit_hist.append(phi0)
        dphi = float(g @ d) - mu * float(np.sum(np.abs(c)))
        if dphi > -1e-14 * max(1.0, abs(phi0)) and eq_res <= opt.eq_tol:
            # no descent direction left: stationary to working precision
            status = CONVERGED if kkt <= max(opt.tol, 1e-8) * 1e3 else LINE_SEARCH_FAIL
            break

        alpha = 1.0
        accepted = False
        for _ in range(opt.max_backtracks):
            xn = x + alpha * d
            xn[ind] = np.clip(xn[ind], lbI, ubI)
            if problem.restore is not None:
                xn = np.asarray(problem.restore(xn), dtype=float)
            fn, gn = problem.objective(xn)
            if np.isfinite(fn):
                if m:
                    cn, Jn = problem.constraints(xn)
                else:
                    cn, Jn = c, J
                phin = fn + mu * float(np.sum(np.abs(cn)))
                if np.isfinite(phin) and phin <= phi0 + opt.armijo * alpha * min(dphi, 0.0):
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            status = LINE_SEARCH_FAIL
            break

        if use_bfgs:
            s_vec = xn - x
            y_vec = (gn + Jn.T @ lam) - (g + J.T @ lam) if m else gn - g
            Bs = B @ s_vec
            sBs = float(s_vec @ Bs)
            sy = float(s_vec @ y_vec)
            if sBs > 1e-16:
                if sy < 0.2 * sBs:
                    th = 0.8 * sBs / (sBs - sy)
                    y_vec = th * y_vec + (1 - th) * Bs
                    sy = float(s_vec @ y_vec)
                B = B - np.outer(Bs, Bs) / sBs + np.outer(y_vec, y_vec) / sy

        alphas.append(alpha)
        x, f, g = xn, fn, gn
        if m:
            c, J = np.asarray(cn, dtype=float), np.asarray(Jn, dtype=float)

    eq_res = float(np.max(np.abs(c), initial=0.0))
    return NlpSolution(x=x, f=float(f), eq_residual=eq_res, iterations=it, status=status,
                       wall_ms=1e3 * (time.perf_counter() - t_start), kkt=kkt, merit=merit_hist, alphas=alphas)
