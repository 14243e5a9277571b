"""Offline baselines: classical debiasing, program-built offline M, ridge recursion."""
from __future__ import annotations

import math
from typing import Optional, Sequence, Union

import numpy as np

from ._backend import kernels
from .decorrelator import DecorrelatorConfig, DecorrelatorMatrix, solve_matrix
from .debias_ts import DebiasedEstimate, _resolve_sigma
from .lasso import LassoConfig, fit_lasso
from .model_core import DimensionError, RegressionProblem


def offline_debias(
    theta_lasso: np.ndarray,
    problem: RegressionProblem,
    M: Union[np.ndarray, DecorrelatorMatrix],
    sigma: Optional[float] = None,
    method: str = "offline",
    compute_bias_norm: bool = True,
) -> DebiasedEstimate:
    """Classical debiased estimate theta_L + (1/n) M X'(y - X theta_L).

    Works with any square decorrelating matrix M, e.g. a program-built one
    from :func:`build_offline_M` or a known precision matrix.  The
    conditional variance is sigma^2 (M S M')_aa with S the full-sample
    covariance.
    """
    Mmat = M.M if isinstance(M, DecorrelatorMatrix) else np.asarray(M, dtype=np.float64)
    if Mmat.shape != (problem.p0, problem.p0):
        raise DimensionError("M must be p0 x p0")
    theta_lasso = np.asarray(theta_lasso, dtype=np.float64)
    X, y = problem.X, problem.y
    n = problem.n
    resid = y - X @ theta_lasso
    theta = theta_lasso + (Mmat @ (X.T @ resid)) / n
    sigma_used = _resolve_sigma(problem, theta_lasso, sigma)
    U = X @ Mmat.T
    variance = sigma_used**2 * np.einsum("ij,ij->j", U, U) / n
    noise = None
    if problem.theta0 is not None:
        eps = y - X @ problem.theta0
        noise = (Mmat @ (X.T @ eps)) / math.sqrt(n)
    bias_norm = None
    if compute_bias_norm:
        B = np.eye(problem.p0) - Mmat @ (X.T @ X) / n
        bias_norm = float(math.sqrt(n) * np.max(np.abs(B)))
    return DebiasedEstimate(
        theta=theta,
        variance=variance,
        method=method,
        n=n,
        sigma=sigma_used,
        noise=noise,
        bias_matrix_norm=bias_norm,
    )


def build_offline_M(
    sigma_hat: np.ndarray,
    mu: Optional[float] = None,
    n: Optional[int] = None,
    tau: float = 1.0,
    config: DecorrelatorConfig = DecorrelatorConfig(),
    rows: Optional[Sequence[int]] = None,
    threads: int = 1,
) -> DecorrelatorMatrix:
    """Offline decorrelating matrix from the full-sample covariance.

    Row a solves the Lagrangian program with an unbounded l1 budget.  The
    default threshold is mu = 2 tau sqrt(log(p0)/n), so either ``mu`` or
    ``n`` must be given.
    """
    sigma_hat = np.ascontiguousarray(sigma_hat, dtype=np.float64)
    p0 = sigma_hat.shape[0]
    if mu is None:
        if n is None:
            raise ValueError("supply mu directly or n for the default rule")
        mu = 2.0 * tau * math.sqrt(math.log(p0) / n)
    cfg = DecorrelatorConfig(
        mu=float(mu),
        c_mu=config.c_mu,
        L=np.inf if config.L is None else config.L,
        tol=config.tol,
        max_iter=config.max_iter,
        solver=config.solver,
        step=config.step,
        max_doublings=config.max_doublings,
        l0=config.l0,
    )
    return solve_matrix(sigma_hat, cfg, rows=rows, threads=threads)


def offline_noise_component(
    M: Union[np.ndarray, DecorrelatorMatrix],
    problem: RegressionProblem,
    eps: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Noise component W_off = n^{-1/2} M X' eps of the offline estimator."""
    Mmat = M.M if isinstance(M, DecorrelatorMatrix) else np.asarray(M, dtype=np.float64)
    if eps is None:
        if problem.theta0 is None:
            raise ValueError("need eps or problem.theta0")
        eps = problem.y - problem.X @ problem.theta0
    return (Mmat @ (problem.X.T @ eps)) / math.sqrt(problem.n)


def ridge_online_baseline(
    problem: RegressionProblem,
    lam: float = 1.0,
    theta_lasso: Optional[np.ndarray] = None,
    sigma: Optional[float] = None,
    lasso_config: LassoConfig = LassoConfig(),
    compute_bias_norm: bool = True,
) -> DebiasedEstimate:
    """Ridge-recursive online debiasing baseline.

    Builds the decorrelating columns one sample at a time via the closed
    form w_i = R_{i-1} x_i / (||x_i||^2 + lam), R_i = R_{i-1} - w_i x_i',
    then corrects the lasso estimate by W (y - X theta_L).  The
    recursion never reads responses, so (w_i) is a predictable sequence.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    X, y = problem.X, problem.y
    n, p0 = X.shape
    if theta_lasso is None:
        theta_lasso = fit_lasso(problem, lasso_config).theta
    theta_lasso = np.asarray(theta_lasso, dtype=np.float64)
    W = kernels.ridge_online_W(np.ascontiguousarray(X), float(lam))
    resid = y - X @ theta_lasso
    theta = theta_lasso + W @ resid
    sigma_used = _resolve_sigma(problem, theta_lasso, sigma)
    # V scaled so that V/n is the conditional variance of theta_a itself
    variance = sigma_used**2 * n * np.einsum("ij,ij->i", W, W)
    noise = None
    if problem.theta0 is not None:
        eps = y - X @ problem.theta0
        noise = math.sqrt(n) * (W @ eps)
    bias_norm = None
    if compute_bias_norm:
        B = np.eye(p0) - W @ X
        bias_norm = float(math.sqrt(n) * np.max(np.abs(B)))
    return DebiasedEstimate(
        theta=theta,
        variance=variance,
        method="ridge-online",
        n=n,
        sigma=sigma_used,
        noise=noise,
        bias_matrix_norm=bias_norm,
    )


def ridge_online_W(X: np.ndarray, lam: float) -> np.ndarray:
    """The (p0, n) matrix of ridge-recursive decorrelating columns."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return kernels.ridge_online_W(np.ascontiguousarray(X, dtype=np.float64), float(lam))
