"""Cyclic coordinate-descent LASSO with the sqrt(log p / n) penalty rule."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._backend import kernels
from .model_core import RegressionProblem


class DegreesOfFreedomError(ValueError):
    """Raised when residual degrees of freedom are nonpositive."""


@dataclass(frozen=True)
class LassoConfig:
    """Solver configuration.

    ``lam`` is the penalty; when None it is auto-selected as
    ``lambda0 * sigma * sqrt(log(p0)/n)`` using the problem's noise level.
    """

    lam: Optional[float] = None
    tol: float = 1e-8
    max_iter: int = 10_000
    lambda0: float = 1.0

    def __post_init__(self):
        if self.lam is not None and self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")


@dataclass(frozen=True)
class LassoFit:
    """Fitted coefficients plus convergence diagnostics."""

    theta: np.ndarray
    lam: float
    converged: bool
    sweeps: int


def default_lambda(n: int, p0: int, sigma: float, lambda0: float = 1.0) -> float:
    """Penalty rule lambda0 * sigma * sqrt(log(p0) / n)."""
    if n < 2 or p0 < 2:
        raise ValueError("need n >= 2 and p0 >= 2")
    if sigma <= 0 or lambda0 <= 0:
        raise ValueError("sigma and lambda0 must be positive")
    return lambda0 * sigma * math.sqrt(math.log(p0) / n)


def fit_lasso(problem: RegressionProblem, config: LassoConfig = LassoConfig()) -> LassoFit:
    """Solve the l1-penalized least squares problem by cyclic coordinate descent.

    Uses a precomputed Gram matrix when n > p0, residual updates
    otherwise.  Stops when the largest coordinate move in a sweep falls
    below ``config.tol``; a non-converged fit is returned with
    ``converged=False`` rather than raising.
    """
    lam = config.lam
    if lam is None:
        if problem.sigma is None:
            raise ValueError("auto lambda needs problem.sigma; supply config.lam instead")
        lam = default_lambda(problem.n, problem.p0, problem.sigma, config.lambda0)
    X, y = problem.X, problem.y
    theta = np.zeros(problem.p0)
    if problem.n > problem.p0:
        G = X.T @ X / problem.n
        b = X.T @ y / problem.n
        sweeps, delta = kernels.lasso_cd_gram(G, b, lam, theta, config.tol, config.max_iter)
    else:
        sweeps, delta = kernels.lasso_cd_naive(X, y, lam, theta, config.tol, config.max_iter)
    return LassoFit(theta=theta, lam=float(lam), converged=bool(delta < config.tol), sweeps=int(sweeps))


def kkt_violation(problem: RegressionProblem, theta: np.ndarray, lam: float) -> float:
    """Largest violation of the LASSO subgradient conditions at theta.

    Zero coordinates must satisfy |X'(y - X theta)/n| <= lam; active ones
    must match lam * sign(theta) exactly.
    """
    c = problem.X.T @ (problem.y - problem.X @ theta) / problem.n
    active = theta != 0.0
    viol_zero = np.maximum(np.abs(c[~active]) - lam, 0.0)
    viol_active = np.abs(c[active] - lam * np.sign(theta[active]))
    worst = 0.0
    if viol_zero.size:
        worst = max(worst, float(viol_zero.max()))
    if viol_active.size:
        worst = max(worst, float(viol_active.max()))
    return worst


def lasso_objective(problem: RegressionProblem, theta: np.ndarray, lam: float) -> float:
    """Value of the penalized objective ||y - X theta||^2 / (2n) + lam ||theta||_1."""
    r = problem.y - problem.X @ theta
    return float(r @ r / (2.0 * problem.n) + lam * np.sum(np.abs(theta)))


def estimate_sigma(problem: RegressionProblem, theta: np.ndarray) -> float:
    """Residual plug-in noise level sqrt(RSS / (n - ||theta||_0))."""
    theta = np.asarray(theta, dtype=np.float64)
    nnz = int(np.count_nonzero(theta))
    dof = problem.n - nnz
    if dof <= 0:
        raise DegreesOfFreedomError(f"n={problem.n} <= support size {nnz}")
    r = problem.y - problem.X @ theta
    return float(np.sqrt(r @ r / dof))
