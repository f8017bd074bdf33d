"""Gaussian-process surrogate with a Matern-5/2 ARD kernel.

Inputs are expected in the unit cube; targets are standardized internally
(zero mean, unit variance) and predictions are returned on the original
scale. Hyperparameters (log lengthscales, log signal variance, log noise
variance) are fitted by maximizing the log marginal likelihood with
L-BFGS-B from several starts, or held fixed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import SingularCovariance

SQRT5 = math.sqrt(5.0)
NOISE_FLOOR = 1e-6
JITTER_MAX = 1e-6
# log-space bounds of the hyperparameters (standardized targets, unit cube)
LENGTHSCALE_BOUNDS = (1e-2, 1e2)
SIGNAL_BOUNDS = (1e-2, 1e2)
NOISE_BOUNDS = (NOISE_FLOOR, 1.0)


def matern52(A, B, lengthscales, signal_var):
    """Matern-5/2 covariance between the rows of ``A`` and ``B``."""
    A = np.atleast_2d(A) / lengthscales
    B = np.atleast_2d(B) / lengthscales
    sq = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T)
    r = np.sqrt(np.maximum(sq, 0.0))
    return signal_var * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * np.exp(-SQRT5 * r)


def _pairwise(A, B, lengthscales):
    diff = (A[:, None, :] - B[None, :, :]) / lengthscales
    r = np.sqrt(np.sum(diff * diff, axis=2))
    return diff, r


@dataclass
class GpModel:
    """Fitted surrogate state.

    ``X`` in the unit cube, ``y`` the raw targets; ``chol`` is the lower
    Cholesky factor of ``K + (noise + jitter) I`` for the standardized
    targets and ``alpha`` the corresponding weight vector.
    """

    X: np.ndarray
    y: np.ndarray
    lengthscales: np.ndarray
    signal_var: float
    noise_var: float
    y_mean: float
    y_std: float
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0
    log_marginal_likelihood: float = float("nan")

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def posterior(self, Xs, return_grad: bool = False):
        """Posterior mean and variance at the rows of ``Xs`` (original scale).

        With ``return_grad`` also returns their gradients w.r.t. ``Xs`` as
        ``(n, d)`` arrays.
        """
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        ks = matern52(Xs, self.X, self.lengthscales, self.signal_var)  # (m, n)
        mu_s = ks @ self.alpha
        v = sla.solve_triangular(self.chol, ks.T, lower=True, check_finite=False)
        var_s = np.maximum(self.signal_var - np.sum(v * v, axis=0), 0.0)
        mu = self.y_mean + self.y_std * mu_s
        var = self.y_std ** 2 * var_s
        if not return_grad:
            return mu, var
        diff, r = _pairwise(Xs, self.X, self.lengthscales)  # (m, n, d), (m, n)
        # d k / d x* = -5/3 s2 (1 + sqrt5 r) exp(-sqrt5 r) (x* - x) / l^2
        w = -5.0 / 3.0 * self.signal_var * (1.0 + SQRT5 * r) * np.exp(-SQRT5 * r)
        dk = w[:, :, None] * diff / self.lengthscales  # (m, n, d)
        dmu = self.y_std * np.einsum("mnd,n->md", dk, self.alpha)
        kinv_ks = sla.solve_triangular(self.chol, v, lower=True, trans="T", check_finite=False)
        dvar = -2.0 * self.y_std ** 2 * np.einsum("mnd,nm->md", dk, kinv_ks)
        dvar[var <= 0] = 0.0
        return mu, var, dmu, dvar


def _factor(K, noise):
    """Cholesky of ``K + noise I`` with jitter escalation up to JITTER_MAX."""
    n = K.shape[0]
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(K + (noise + jitter) * np.eye(n))
            if np.all(np.isfinite(L)):
                return L, jitter
        except np.linalg.LinAlgError:
            pass
        if jitter >= JITTER_MAX:
            raise SingularCovariance(f"covariance not positive definite with jitter {jitter:g}")
        jitter = 1e-12 if jitter == 0.0 else min(jitter * 10.0, JITTER_MAX)


def _nlml(logp, X, y, d):
    """Negative log marginal likelihood and its gradient in log-parameters."""
    ell = np.exp(logp[:d])
    s2 = math.exp(logp[d])
    sn2 = math.exp(logp[d + 1])
    n = len(y)
    diff, r = _pairwise(X, X, ell)
    e = np.exp(-SQRT5 * r)
    K = s2 * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * e
    try:
        L, jit = _factor(K, sn2)
    except SingularCovariance:
        return 1e25, np.zeros_like(logp)
    alpha = sla.cho_solve((L, True), y, check_finite=False)
    nll = 0.5 * y @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * n * math.log(2 * math.pi)
    Kinv = sla.cho_solve((L, True), np.eye(n), check_finite=False)
    W = np.outer(alpha, alpha) - Kinv
    grad = np.empty_like(logp)
    base = s2 * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e
    for j in range(d):
        dK = base * diff[:, :, j] ** 2
        grad[j] = -0.5 * np.sum(W * dK)
    grad[d] = -0.5 * np.sum(W * K)
    grad[d + 1] = -0.5 * sn2 * np.trace(W)
    return float(nll), grad


def _bounds(d):
    lo = [math.log(LENGTHSCALE_BOUNDS[0])] * d + [math.log(SIGNAL_BOUNDS[0]), math.log(NOISE_BOUNDS[0])]
    hi = [math.log(LENGTHSCALE_BOUNDS[1])] * d + [math.log(SIGNAL_BOUNDS[1]), math.log(NOISE_BOUNDS[1])]
    return np.array(lo), np.array(hi)


def gp_fit(X, y, *, lengthscales=None, signal_var=None, noise_var=None, n_restarts: int = 8,
           seed: Optional[int] = 0, maxiter: int = 200) -> GpModel:
    """Fit the surrogate to ``(X, y)``.

    If ``lengthscales``, ``signal_var`` and ``noise_var`` are all given they are
    used as is (no optimization; ``noise_var`` may be 0). Otherwise the log
    marginal likelihood is maximized from ``n_restarts`` starts (the first at
    a fixed default, the rest drawn uniformly in log space).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(X) != len(y):
        raise ValueError("X and y lengths differ")
    if len(y) < 2:
        raise ValueError("need at least two observations")
    if np.any(X < -1e-12) or np.any(X > 1 + 1e-12):
        raise ValueError("inputs must lie in the unit cube")
    n, d = X.shape
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    if not y_std > 1e-12:
        y_std = 1.0
    ys = (y - y_mean) / y_std

    fixed = lengthscales is not None and signal_var is not None and noise_var is not None
    if fixed:
        ell = np.broadcast_to(np.asarray(lengthscales, dtype=float), (d,)).copy()
        s2, sn2 = float(signal_var), float(noise_var)
        lml = float("nan")
    else:
        lo, hi = _bounds(d)
        rng = np.random.default_rng(seed)
        starts = [np.concatenate([np.full(d, math.log(0.5)), [0.0, math.log(1e-2)]])]
        for _ in range(max(0, n_restarts - 1)):
            starts.append(rng.uniform(lo, hi))
        best = None
        for x0 in starts:
            res = minimize(_nlml, x0, args=(X, ys, d), jac=True, method="L-BFGS-B",
                           bounds=list(zip(lo, hi)), options={"maxiter": maxiter})
            if best is None or res.fun < best.fun:
                best = res
        ell = np.exp(best.x[:d])
        s2 = float(np.exp(best.x[d]))
        sn2 = max(float(np.exp(best.x[d + 1])), NOISE_FLOOR)
        lml = -float(best.fun)
    K = matern52(X, X, ell, s2)
    L, jit = _factor(K, sn2)
    alpha = sla.cho_solve((L, True), ys, check_finite=False)
    return GpModel(X=X, y=y, lengthscales=ell, signal_var=s2, noise_var=sn2, y_mean=y_mean,
                   y_std=y_std, chol=L, alpha=alpha, jitter=jit, log_marginal_likelihood=lml)


def gp_posterior(model: GpModel, theta):
    """``(mu, var)`` at one point or a batch of points in the unit cube."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < -1e-12) or np.any(theta > 1 + 1e-12):
        raise ValueError("query must lie in the unit cube")
    mu, var = model.posterior(np.atleast_2d(theta))
    if theta.ndim == 1:
        return float(mu[0]), float(var[0])
    return mu, var


class GaussianProcessSurrogate(BaseEstimator, RegressorMixin):
    """sklearn-compatible wrapper around :func:`gp_fit`.

    >>> gp = GaussianProcessSurrogate(seed=0).fit(X, y)      # doctest: +SKIP
    >>> mean, std = gp.predict(X_new, return_std=True)        # doctest: +SKIP
    """

    def __init__(self, n_restarts=8, seed=0, lengthscales=None, signal_var=None, noise_var=None):
        self.n_restarts = n_restarts
        self.seed = seed
        self.lengthscales = lengthscales
        self.signal_var = signal_var
        self.noise_var = noise_var

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.model_ = gp_fit(X, y, lengthscales=self.lengthscales, signal_var=self.signal_var,
                             noise_var=self.noise_var, n_restarts=self.n_restarts, seed=self.seed)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, return_std: bool = False):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        mu, var = self.model_.posterior(X)
        return (mu, np.sqrt(var)) if return_std else mu
