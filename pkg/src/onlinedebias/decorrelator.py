"""Row solvers for the decorrelating-matrix program.

Each row a minimizes the quadratic form m' S m over the l1 ball subject
to an l-infinity closeness constraint between S m and the basis vector
e_a.  The solvers work on the Lagrangian form

    minimize_{||m||_1 <= L}  (1/2) m' S m - m_a + mu ||m||_1,

whose solutions are solutions of the constrained program whenever that
program is feasible.  Two iterative methods are provided (cyclic
coordinate descent and projected gradient descent) along with KKT and
feasibility diagnostics.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from ._backend import kernels


class SingularityError(ValueError):
    """Raised when a covariance diagonal entry is nonpositive."""


@dataclass(frozen=True)
class DecorrelatorConfig:
    """Knobs for the row program.

    ``mu`` is the soft-threshold level of a single solve (callers that
    build per-episode matrices derive it from ``c_mu``); ``L`` is the l1
    budget (``inf`` = unconstrained, None lets episode builders pick
    their mode default).  ``step`` is the PGD step size and defaults to
    1/lambda_max(S) estimated by power iteration.
    """

    mu: Optional[float] = None
    c_mu: float = 1.0
    L: Optional[float] = None
    tol: float = 1e-9
    max_iter: int = 20_000
    solver: str = "cd"
    step: Optional[float] = None
    max_doublings: int = 6
    l0: float = 2.0

    def __post_init__(self):
        if self.mu is not None and self.mu < 0:
            raise ValueError("mu must be nonnegative")
        if self.c_mu <= 0:
            raise ValueError("c_mu must be positive")
        if self.L is not None and self.L <= 0:
            raise ValueError("L must be positive (use inf for unbounded)")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter >= 1")
        if self.solver not in ("cd", "pgd"):
            raise ValueError("solver must be 'cd' or 'pgd'")
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be positive")


@dataclass(frozen=True)
class DecorrelatorRow:
    """One solved row with its diagnostics."""

    m: np.ndarray
    feasibility_gap: float
    objective: float
    converged: bool
    mu: float
    sweeps: int


@dataclass(frozen=True)
class DecorrelatorMatrix:
    """Stacked rows of the decorrelator program against one covariance.

    Only the rows listed in ``rows`` were solved; the rest of ``M`` is
    zero and must not be consumed.
    """

    M: np.ndarray
    rows: tuple
    feasibility_gap: np.ndarray
    mu: np.ndarray
    converged: np.ndarray
    mu_base: float
    L: float


def soft_threshold(z, mu):
    """Soft-thresholding eta(z, mu); ties |z| = mu resolve to 0. Entrywise on arrays."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    z = np.asarray(z, dtype=np.float64)
    out = np.sign(z) * np.maximum(np.abs(z) - mu, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def project_l1(v: np.ndarray, L: float) -> np.ndarray:
    """Euclidean projection of v onto the l1 ball of radius L."""
    if L <= 0:
        raise ValueError("L must be positive")
    return kernels.project_l1(np.ascontiguousarray(v, dtype=np.float64), float(L))


def lagrangian_value(sigma_hat: np.ndarray, m: np.ndarray, a: int, mu: float) -> float:
    """Objective (1/2) m' S m - m_a + mu ||m||_1 of the Lagrangian program."""
    return float(0.5 * m @ sigma_hat @ m - m[a] + mu * np.sum(np.abs(m)))


def kkt_residual(
    sigma_hat: np.ndarray,
    row: Union[DecorrelatorRow, np.ndarray],
    a: int,
    mu: float,
) -> float:
    """Worst stationarity violation of the Lagrangian program at the row.

    Active coordinates must satisfy (S m - e_a)_j = -mu sign(m_j); zeros
    are allowed the full subgradient interval [-mu, mu].  The certificate
    applies on the interior of the l1 ball (an active l1 constraint adds
    a multiplier this residual does not model).
    """
    m = row.m if isinstance(row, DecorrelatorRow) else np.asarray(row, dtype=np.float64)
    g = sigma_hat @ m
    g[a] -= 1.0
    active = m != 0.0
    worst = 0.0
    if np.any(active):
        worst = float(np.max(np.abs(g[active] + mu * np.sign(m[active]))))
    if np.any(~active):
        worst = max(worst, float(np.max(np.maximum(np.abs(g[~active]) - mu, 0.0))))
    return worst


def _power_lambda_max(S: np.ndarray, iters: int = 60) -> float:
    """Largest eigenvalue of a PSD matrix by power iteration."""
    p = S.shape[0]
    v = np.full(p, 1.0 / math.sqrt(p))
    lam = 0.0
    for _ in range(iters):
        w = S @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam = norm
    return lam


def ridge_inverse_l1_norm(S: np.ndarray, ridge_frac: float = 1e-3) -> float:
    """Max column l1 norm of a ridge-regularized inverse of S.

    Used to set the default l1 budget when the precision norm the theory
    asks for is unobservable; the ridge keeps the estimate finite for
    singular sample covariances.
    """
    p = S.shape[0]
    eps = ridge_frac * max(float(np.trace(S)) / p, 1e-12)
    inv = np.linalg.solve(S + eps * np.eye(p), np.eye(p))
    return float(np.max(np.sum(np.abs(inv), axis=0)))


def _resolve_radius(config: DecorrelatorConfig) -> float:
    return np.inf if config.L is None else float(config.L)


def _solve_row(
    sigma_hat: np.ndarray,
    a: int,
    config: DecorrelatorConfig,
    init: Optional[np.ndarray],
    use_pgd: bool,
) -> DecorrelatorRow:
    if config.mu is None:
        raise ValueError("config.mu must be set for a single row solve")
    diag = np.diagonal(sigma_hat)
    if np.any(diag <= 0.0):
        raise SingularityError("sigma_hat has a nonpositive diagonal entry")
    p = sigma_hat.shape[0]
    if not 0 <= a < p:
        raise IndexError(f"row index {a} out of range for p0={p}")
    radius = _resolve_radius(config)
    m = np.zeros(p) if init is None else np.ascontiguousarray(init, dtype=np.float64).copy()
    if np.isfinite(radius) and np.sum(np.abs(m)) > radius:
        m = kernels.project_l1(m, radius)
    mu = float(config.mu)
    step = config.step
    if use_pgd and step is None:
        lam_max = _power_lambda_max(sigma_hat)
        step = 1.0 / lam_max if lam_max > 0 else 1.0
    sweeps = 0
    delta = np.inf
    for attempt in range(config.max_doublings + 1):
        if use_pgd:
            it, delta, diverged = kernels.decor_pgd(
                sigma_hat, a, mu, radius, step, m, config.tol, config.max_iter
            )
        else:
            it, delta, diverged = kernels.decor_cd(
                sigma_hat, a, mu, radius, m, config.tol, config.max_iter
            )
        sweeps += it
        if diverged:
            m[:] = 0.0
        gap = float(np.max(np.abs(sigma_hat @ m - _basis(p, a))))
        # mu was too small for the constrained program; retry at double
        infeasible = diverged or gap > mu * (1.0 + 1e-6) + 1e-10
        if not infeasible or attempt == config.max_doublings:
            break
        mu *= 2.0
    obj = float(m @ sigma_hat @ m)
    return DecorrelatorRow(
        m=m,
        feasibility_gap=gap,
        objective=obj,
        converged=bool(delta < config.tol),
        mu=mu,
        sweeps=sweeps,
    )


def _basis(p: int, a: int) -> np.ndarray:
    e = np.zeros(p)
    e[a] = 1.0
    return e


def solve_row_cd(
    sigma_hat: np.ndarray,
    a: int,
    config: DecorrelatorConfig,
    init: Optional[np.ndarray] = None,
) -> DecorrelatorRow:
    """Solve row a by cyclic coordinate descent with per-sweep l1 projection.

    Warm-startable via ``init`` (e.g. the previous episode's row).  When
    the post-solve feasibility gap exceeds mu, the solve is retried with
    mu doubled, at most ``config.max_doublings`` times; the mu actually
    used is recorded on the returned row.
    """
    return _solve_row(sigma_hat, a, config, init, use_pgd=False)


def solve_row_pgd(
    sigma_hat: np.ndarray,
    a: int,
    config: DecorrelatorConfig,
    init: Optional[np.ndarray] = None,
) -> DecorrelatorRow:
    """Solve row a by projected gradient descent (same contract as solve_row_cd)."""
    return _solve_row(sigma_hat, a, config, init, use_pgd=True)


def solve_matrix(
    sigma_hat: np.ndarray,
    config: DecorrelatorConfig,
    init: Optional[np.ndarray] = None,
    rows: Optional[Sequence[int]] = None,
    threads: int = 1,
) -> DecorrelatorMatrix:
    """Solve the row program for every requested row against a shared covariance.

    Rows are independent, so with ``threads > 1`` they are dispatched to a
    thread pool (the kernels release the GIL under the numba backend).
    ``init`` may carry a full warm-start matrix, rows aligned with row
    indices.
    """
    if config.mu is None:
        raise ValueError("config.mu must be set (episode builders derive it from c_mu)")
    sigma_hat = np.ascontiguousarray(sigma_hat, dtype=np.float64)
    p = sigma_hat.shape[0]
    row_ids = tuple(range(p)) if rows is None else tuple(int(r) for r in rows)
    solve = solve_row_pgd if config.solver == "pgd" else solve_row_cd

    def run(a: int) -> DecorrelatorRow:
        warm = init[a] if init is not None else None
        return solve(sigma_hat, a, config, init=warm)

    if threads > 1 and len(row_ids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            solved = list(pool.map(run, row_ids))
    else:
        solved = [run(a) for a in row_ids]

    M = np.zeros((p, p))
    gaps = np.zeros(len(row_ids))
    mus = np.zeros(len(row_ids))
    conv = np.zeros(len(row_ids), dtype=bool)
    for k, (a, row) in enumerate(zip(row_ids, solved)):
        M[a] = row.m
        gaps[k] = row.feasibility_gap
        mus[k] = row.mu
        conv[k] = row.converged
    return DecorrelatorMatrix(
        M=M,
        rows=row_ids,
        feasibility_gap=gaps,
        mu=mus,
        converged=conv,
        mu_base=float(config.mu),
        L=_resolve_radius(config),
    )


def episode_mu(p0: int, n_ell: int, c_mu: float = 1.0) -> float:
    """Default threshold level c_mu * sqrt(log(p0) / n_ell)."""
    return c_mu * math.sqrt(math.log(p0) / n_ell)


def episode_config(
    config: DecorrelatorConfig, sigma_hat: np.ndarray, n_ell: int
) -> DecorrelatorConfig:
    """Resolve mu and the l1 budget of a config for one episode covariance."""
    mu = episode_mu(sigma_hat.shape[0], n_ell, config.c_mu)
    if config.L is None:
        L = config.l0 * ridge_inverse_l1_norm(sigma_hat)
    else:
        L = config.L
    return replace(config, mu=mu, L=L)
