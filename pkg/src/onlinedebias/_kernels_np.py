"""Pure-numpy fallback implementations of the hot numerical kernels.

Semantics must match `_kernels_numba` exactly; `_backend` selects between
the two (env var ``ONLINEDEBIAS_BACKEND``).  All solvers mutate their
state vector in place and return iteration diagnostics.
"""
from __future__ import annotations

import numpy as np

# Iterates beyond this magnitude are treated as divergent (unbounded program).
_DIVERGE_LIMIT = 1e12


def _soft(z: float, mu: float) -> float:
    if z > mu:
        return z - mu
    if z < -mu:
        return z + mu
    return 0.0


def project_l1(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the l1 ball of the given radius (sort method)."""
    if not np.isfinite(radius):
        return v.copy()
    if np.sum(np.abs(v)) <= radius:
        return v.copy()
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, u.size + 1, dtype=np.float64)
    rho = np.nonzero(u * idx > css - radius)[0][-1]
    tau = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def lasso_cd_gram(G, b, lam, theta, tol, max_sweeps):
    """Cyclic CD on the lasso objective given Gram matrix G = X'X/n, b = X'y/n."""
    p = G.shape[0]
    diag = np.ascontiguousarray(np.diag(G))
    s = G @ theta
    sweeps = 0
    delta = np.inf
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            old = theta[j]
            gjj = diag[j]
            new = _soft(gjj * old + b[j] - s[j], lam) / gjj if gjj > 0.0 else 0.0
            d = new - old
            if d != 0.0:
                s += d * G[j]
                theta[j] = new
                if abs(d) > delta:
                    delta = abs(d)
        sweeps += 1
        if delta < tol:
            break
    return sweeps, delta


def lasso_cd_naive(X, y, lam, theta, tol, max_sweeps):
    """Cyclic CD on the lasso objective with residual updates (n < p regime)."""
    n, p = X.shape
    g = np.einsum("ij,ij->j", X, X) / n
    r = y - X @ theta
    sweeps = 0
    delta = np.inf
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            old = theta[j]
            if g[j] <= 0.0:
                new = 0.0
            else:
                z = g[j] * old + (X[:, j] @ r) / n
                new = _soft(z, lam) / g[j]
            d = new - old
            if d != 0.0:
                r -= d * X[:, j]
                theta[j] = new
                if abs(d) > delta:
                    delta = abs(d)
        sweeps += 1
        if delta < tol:
            break
    return sweeps, delta


def decor_cd(S, a, mu, radius, m, tol, max_sweeps):
    """Cyclic CD for the decorrelator row program, with per-sweep l1 projection."""
    p = S.shape[0]
    diag = np.ascontiguousarray(np.diag(S))
    s = S @ m
    sweeps = 0
    delta = np.inf
    diverged = False
    bounded = np.isfinite(radius)
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            old = m[j]
            z = (1.0 if j == a else 0.0) - s[j] + diag[j] * old
            new = _soft(z, mu) / diag[j]
            d = new - old
            if d != 0.0:
                s += d * S[j]
                m[j] = new
                if abs(d) > delta:
                    delta = abs(d)
        if bounded and np.sum(np.abs(m)) > radius:
            proj = project_l1(m, radius)
            delta = max(delta, float(np.max(np.abs(proj - m))))
            m[:] = proj
            s = S @ m
        sweeps += 1
        peak = np.max(np.abs(m))
        if not np.isfinite(peak) or peak > _DIVERGE_LIMIT:
            diverged = True
            break
        if delta < tol:
            break
    return sweeps, delta, diverged


def decor_pgd(S, a, mu, radius, step, m, tol, max_iters):
    """Projected gradient descent for the decorrelator row program."""
    thr = mu * step
    iters = 0
    delta = np.inf
    diverged = False
    bounded = np.isfinite(radius)
    for _ in range(max_iters):
        g = S @ m
        g[a] -= 1.0
        cand = m - step * g
        new = np.sign(cand) * np.maximum(np.abs(cand) - thr, 0.0)
        if bounded and np.sum(np.abs(new)) > radius:
            new = project_l1(new, radius)
        delta = float(np.max(np.abs(new - m)))
        m[:] = new
        iters += 1
        peak = np.max(np.abs(m))
        if not np.isfinite(peak) or peak > _DIVERGE_LIMIT:
            diverged = True
            break
        if delta < tol:
            break
    return iters, delta, diverged


def ridge_online_W(X, lam):
    """Row-recursive ridge decorrelator; returns W with one column per sample."""
    n, p = X.shape
    R = np.eye(p)
    W = np.zeros((p, n))
    for i in range(n):
        x = X[i]
        w = (R @ x) / (x @ x + lam)
        W[:, i] = w
        R -= np.outer(w, x)
    return W


def var_recurse(coeffs, noise):
    """Run the VAR recursion z_t = sum_l A_l z_{t-l} + noise_t from zero history."""
    T, p = noise.shape
    d = coeffs.shape[0]
    z = np.zeros((T, p))
    for t in range(T):
        acc = noise[t].copy()
        for lag in range(min(d, t)):
            acc += coeffs[lag] @ z[t - 1 - lag]
        z[t] = acc
    return z
