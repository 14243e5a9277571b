"""Numba-compiled implementations of the hot numerical kernels.

Loop-heavy coordinate descent sweeps dominate the runtime of the row
solvers, so these are written as explicit loops for the JIT.  Signatures
and semantics match `_kernels_np` one for one.
"""
from __future__ import annotations

import numpy as np
from numba import njit

_DIVERGE_LIMIT = 1e12


@njit(cache=True, nogil=True)
def _soft(z, mu):
    if z > mu:
        return z - mu
    if z < -mu:
        return z + mu
    return 0.0


@njit(cache=True, nogil=True)
def project_l1(v, radius):
    if not np.isfinite(radius):
        return v.copy()
    norm1 = 0.0
    for i in range(v.size):
        norm1 += abs(v[i])
    if norm1 <= radius:
        return v.copy()
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    rho = 0
    for j in range(u.size):
        if u[j] * (j + 1.0) > css[j] - radius:
            rho = j
    tau = (css[rho] - radius) / (rho + 1.0)
    out = np.empty_like(v)
    for i in range(v.size):
        mag = abs(v[i]) - tau
        if mag < 0.0:
            mag = 0.0
        out[i] = mag if v[i] >= 0.0 else -mag
    return out


@njit(cache=True, nogil=True)
def lasso_cd_gram(G, b, lam, theta, tol, max_sweeps):
    p = G.shape[0]
    s = G @ theta
    sweeps = 0
    delta = np.inf
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            old = theta[j]
            gjj = G[j, j]
            if gjj > 0.0:
                new = _soft(gjj * old + b[j] - s[j], lam) / gjj
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                for k in range(p):
                    s[k] += d * G[j, k]
                theta[j] = new
                if abs(d) > delta:
                    delta = abs(d)
        sweeps += 1
        if delta < tol:
            break
    return sweeps, delta


@njit(cache=True, nogil=True)
def lasso_cd_naive(X, y, lam, theta, tol, max_sweeps):
    n, p = X.shape
    g = np.zeros(p)
    for i in range(n):
        for j in range(p):
            g[j] += X[i, j] * X[i, j]
    g /= n
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
                dot = 0.0
                for i in range(n):
                    dot += X[i, j] * r[i]
                new = _soft(g[j] * old + dot / n, lam) / g[j]
            d = new - old
            if d != 0.0:
                for i in range(n):
                    r[i] -= d * X[i, j]
                theta[j] = new
                if abs(d) > delta:
                    delta = abs(d)
        sweeps += 1
        if delta < tol:
            break
    return sweeps, delta


@njit(cache=True, nogil=True)
def decor_cd(S, a, mu, radius, m, tol, max_sweeps):
    p = S.shape[0]
    s = S @ m
    sweeps = 0
    delta = np.inf
    diverged = False
    bounded = np.isfinite(radius)
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            old = m[j]
            e = 1.0 if j == a else 0.0
            new = _soft(e - s[j] + S[j, j] * old, mu) / S[j, j]
            d = new - old
            if d != 0.0:
                for k in range(p):
                    s[k] += d * S[j, k]
                m[j] = new
                if abs(d) > delta:
                    delta = abs(d)
        if bounded:
            norm1 = 0.0
            for j in range(p):
                norm1 += abs(m[j])
            if norm1 > radius:
                proj = project_l1(m, radius)
                for j in range(p):
                    move = abs(proj[j] - m[j])
                    if move > delta:
                        delta = move
                    m[j] = proj[j]
                s = S @ m
        sweeps += 1
        peak = 0.0
        for j in range(p):
            if abs(m[j]) > peak:
                peak = abs(m[j])
        if not np.isfinite(peak) or peak > _DIVERGE_LIMIT:
            diverged = True
            break
        if delta < tol:
            break
    return sweeps, delta, diverged


@njit(cache=True, nogil=True)
def decor_pgd(S, a, mu, radius, step, m, tol, max_iters):
    p = S.shape[0]
    thr = mu * step
    iters = 0
    delta = np.inf
    diverged = False
    bounded = np.isfinite(radius)
    for _ in range(max_iters):
        g = S @ m
        g[a] -= 1.0
        new = np.empty(p)
        for j in range(p):
            new[j] = _soft(m[j] - step * g[j], thr)
        if bounded:
            norm1 = 0.0
            for j in range(p):
                norm1 += abs(new[j])
            if norm1 > radius:
                new = project_l1(new, radius)
        delta = 0.0
        for j in range(p):
            move = abs(new[j] - m[j])
            if move > delta:
                delta = move
            m[j] = new[j]
        iters += 1
        peak = 0.0
        for j in range(p):
            if abs(m[j]) > peak:
                peak = abs(m[j])
        if not np.isfinite(peak) or peak > _DIVERGE_LIMIT:
            diverged = True
            break
        if delta < tol:
            break
    return iters, delta, diverged


@njit(cache=True, nogil=True)
def ridge_online_W(X, lam):
    n, p = X.shape
    R = np.eye(p)
    W = np.zeros((p, n))
    for i in range(n):
        x = X[i]
        denom = lam
        for j in range(p):
            denom += x[j] * x[j]
        w = (R @ x) / denom
        for j in range(p):
            W[j, i] = w[j]
            for k in range(p):
                R[j, k] -= w[j] * x[k]
    return W


@njit(cache=True, nogil=True)
def var_recurse(coeffs, noise):
    T, p = noise.shape
    d = coeffs.shape[0]
    z = np.zeros((T, p))
    for t in range(T):
        for j in range(p):
            z[t, j] = noise[t, j]
        nlag = d if d < t else t
        for lag in range(nlag):
            zprev = z[t - 1 - lag]
            A = coeffs[lag]
            for j in range(p):
                acc = 0.0
                for k in range(p):
                    acc += A[j, k] * zprev[k]
                z[t, j] += acc
    return z
