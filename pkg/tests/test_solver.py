import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import box_qp_reference
from vpmpcc.errors import InconsistentDerivatives, NonFiniteObjective
from vpmpcc.solver import (CONVERGED, NlpProblem, SolverOptions, box_qp, check_gradients,
                           solve)


def quad(x):
    return float((x[0] - 1) ** 2), np.array([2 * (x[0] - 1)])


def rosen(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return float(f), g


def test_active_bound():
    sol = solve(NlpProblem(quad, [0.2], lb=[0.0], ub=[0.5]))
    assert sol.status == CONVERGED
    assert sol.x[0] == 0.5


def test_rosenbrock():
    sol = solve(NlpProblem(rosen, [-1.2, 1.0]), SolverOptions(max_iter=500, tol=1e-10))
    np.testing.assert_allclose(sol.x, [1, 1], atol=1e-6)


def test_equality_qp():
    def obj(x):
        return float(x @ x), 2 * x

    def con(x):
        return np.array([x[0] + x[1] - 1]), np.array([[1.0, 1.0]])

    sol = solve(NlpProblem(obj, [2.0, -3.0], constraints=con))
    np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-8)
    assert sol.eq_residual < 1e-9


def test_solution_within_bounds():
    lb, ub = np.array([-1.0, 0.3]), np.array([0.2, 2.0])
    sol = solve(NlpProblem(rosen, [0.0, 1.0], lb=lb, ub=ub), SolverOptions(max_iter=200))
    assert np.all(sol.x >= lb - 1e-12) and np.all(sol.x <= ub + 1e-12)


def test_merit_non_increasing():
    sol = solve(NlpProblem(rosen, [-1.2, 1.0]), SolverOptions(max_iter=200))
    m = np.array(sol.merit)
    assert np.all(np.diff(m) <= 1e-12 * np.maximum(1.0, np.abs(m[:-1])))


def test_deterministic():
    a = solve(NlpProblem(rosen, [-1.2, 1.0]))
    b = solve(NlpProblem(rosen, [-1.2, 1.0]))
    assert np.array_equal(a.x, b.x) and a.merit == b.merit


def test_gradient_check_quadratic():
    def obj(x):
        return float(x @ x + 3 * x[0]), 2 * x + np.array([3.0, 0, 0])
    assert check_gradients(NlpProblem(obj, [0.3, -1.2, 2.0])) < 1e-9


def test_gradient_check_detects_corruption():
    def obj(x):
        return float(x @ x), 2 * x + np.array([0.1, 0, 0])
    assert check_gradients(NlpProblem(obj, [0.3, -1.2, 2.0])) > 1e-2


def test_inconsistent_derivatives_raised():
    def obj(x):
        return float(x @ x), 3 * x
    with pytest.raises(InconsistentDerivatives):
        solve(NlpProblem(obj, [1.0, 2.0]), SolverOptions(check_derivatives=True))


def test_non_finite_objective():
    def obj(x):
        return float("nan"), np.zeros_like(x)
    with pytest.raises(NonFiniteObjective):
        solve(NlpProblem(obj, [1.0]))


@given(st.integers(1, 12), st.integers(0, 10_000))
@settings(max_examples=80, deadline=None)
def test_box_qp_matches_reference(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    H = A @ A.T + 0.1 * np.eye(n)
    h = rng.normal(size=n) * 3
    lo = -rng.uniform(0, 1, n)
    hi = rng.uniform(0, 1, n)
    d = box_qp(H, h, lo, hi)
    ref = box_qp_reference(H, h, lo, hi)
    q = lambda x: 0.5 * x @ H @ x + h @ x  # noqa: E731
    assert np.all(d >= lo - 1e-12) and np.all(d <= hi + 1e-12)
    assert q(d) <= q(ref) + 1e-9 * max(1.0, abs(q(ref)))
