"""Independent reference computations used as test oracles.

These deliberately avoid the package code paths they check: dense inverses
instead of Cholesky solves, Monte Carlo instead of closed forms, generic
scipy optimizers instead of the custom QP and SQP routines.
"""
import math

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm, qmc


def matern52_dense(A, B, ell, s2):
    out = np.empty((len(A), len(B)))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            r = math.sqrt(sum(((a[k] - b[k]) / ell[k]) ** 2 for k in range(len(a))))
            out[i, j] = s2 * (1 + math.sqrt(5) * r + 5 * r * r / 3) * math.exp(-math.sqrt(5) * r)
    return out


def gp_posterior_dense(X, y, Xs, ell, s2, sn2):
    """Textbook posterior with explicit inverse; targets standardized as in the package."""
    y = np.asarray(y, dtype=float)
    m, sd = y.mean(), y.std()
    sd = sd if sd > 1e-12 else 1.0
    ys = (y - m) / sd
    K = matern52_dense(X, X, ell, s2) + sn2 * np.eye(len(X))
    Kinv = np.linalg.inv(K)
    ks = matern52_dense(Xs, X, ell, s2)
    mu = ks @ Kinv @ ys
    var = s2 - np.einsum("ij,jk,ik->i", ks, Kinv, ks)
    return m + sd * mu, sd ** 2 * np.maximum(var, 0.0)


def ei_monte_carlo(mu, sigma, best, n=2 ** 20, seed=0):
    """E[max(best - Y, 0)] for Y ~ N(mu, sigma^2) with scrambled-Sobol normal draws."""
    u = qmc.Sobol(1, scramble=True, seed=seed).random(n)[:, 0]
    z = norm.ppf(np.clip(u, 1e-16, 1 - 1e-16))
    return float(np.mean(np.maximum(best - (mu + sigma * z), 0.0)))


def box_qp_reference(H, h, lo, hi):
    res = minimize(lambda d: 0.5 * d @ H @ d + h @ d, np.zeros(len(h)), jac=lambda d: H @ d + h,
                   method="L-BFGS-B", bounds=list(zip(lo, hi)),
                   options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10000})
    return res.x


def rk4_unicycle(state, v, omega, T, n):
    """Fine-step RK4 of the planar unicycle x' = v cos phi, y' = v sin phi, phi' = omega."""
    def f(z):
        return np.array([v * math.cos(z[2]), v * math.sin(z[2]), omega])
    z = np.array(state, dtype=float)
    dt = T / n
    for _ in range(n):
        k1 = f(z)
        k2 = f(z + 0.5 * dt * k1)
        k3 = f(z + 0.5 * dt * k2)
        k4 = f(z + dt * k3)
        z = z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return z


def linear_bicycle_yaw_rate(v, delta, m, lf, lr, cf, cr):
    """Steady-state yaw rate of the linear single-track model."""
    L = lf + lr
    K = m * (lr * cr - lf * cf) / (L * cf * cr)
    return v * delta / (L + K * v * v)


def polyline_length(P):
    P = np.asarray(P)
    return float(np.sum(np.hypot(*np.diff(P, axis=0).T)))


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2 * e[i])
    return g
