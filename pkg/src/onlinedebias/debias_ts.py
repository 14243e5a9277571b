"""Episodic online-debiased estimator for VAR regression views.

The decorrelating matrix is held fixed within an episode and rebuilt at
episode boundaries from the sample covariance of all *prior* episodes,
which makes the sequence predictable: perturbing data at or after an
episode's start leaves that episode's matrix bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .decorrelator import DecorrelatorConfig, DecorrelatorMatrix, episode_config, solve_matrix
from .lasso import estimate_sigma
from .model_core import DimensionError, EpisodeSchedule, RegressionProblem


@dataclass(frozen=True)
class DebiasedEstimate:
    """A debiased point estimate with its studentization ingredients.

    ``variance`` holds the per-coordinate conditional variance of the
    scaled noise component (the V used to studentize sqrt(n)(theta_a -
    theta0_a)); ``noise`` is that component itself when the truth was
    available, and ``bias_matrix_norm`` is the sup-norm of the scaled
    bias matrix, both diagnostics only.
    """

    theta: np.ndarray
    variance: np.ndarray
    method: str
    n: int
    sigma: float
    noise: Optional[np.ndarray] = None
    bias_matrix_norm: Optional[float] = None


def _check_ts_inputs(problem: RegressionProblem, schedule: EpisodeSchedule):
    if schedule.n != problem.n:
        raise DimensionError(
            f"schedule covers {schedule.n} samples but problem has {problem.n}"
        )


def build_M_sequence(
    problem: RegressionProblem,
    schedule: EpisodeSchedule,
    config: DecorrelatorConfig = DecorrelatorConfig(),
    rows: Optional[Sequence[int]] = None,
    threads: int = 1,
) -> List[DecorrelatorMatrix]:
    """Decorrelating matrices M^(1) .. M^(K-1), one per debiasing episode.

    M^(ell) is solved against the sample covariance of the first n_ell
    rows with threshold level c_mu * sqrt(log(p0)/n_ell), warm-started
    from the previous episode's rows.  Episode 0 never gets a matrix (it
    contributes no correction term).
    """
    _check_ts_inputs(problem, schedule)
    X = problem.X
    p0 = problem.p0
    out: List[DecorrelatorMatrix] = []
    gram = np.zeros((p0, p0))
    prev: Optional[np.ndarray] = None
    for ell in range(1, schedule.K):
        start, stop = schedule.bounds(ell - 1)
        block = X[start:stop]
        gram += block.T @ block
        n_ell = schedule.starts[ell]
        sigma_hat = gram / n_ell
        cfg = episode_config(config, sigma_hat, n_ell)
        mat = solve_matrix(sigma_hat, cfg, init=prev, rows=rows, threads=threads)
        out.append(mat)
        prev = mat.M
    return out


def online_debias_ts(
    theta_lasso: np.ndarray,
    problem: RegressionProblem,
    schedule: EpisodeSchedule,
    M_seq: Sequence[DecorrelatorMatrix],
    sigma: Optional[float] = None,
) -> DebiasedEstimate:
    """Assemble the online-debiased estimate from a prebuilt M sequence.

    Adds (1/n) sum_{ell>=1} M^(ell) X_ell' r_ell to the base estimate,
    where r is the lasso residual restricted to episode ell.  The noise
    component and the scaled bias matrix norm are attached when the
    problem carries its ground truth.
    """
    _check_ts_inputs(problem, schedule)
    if len(M_seq) != schedule.K - 1:
        raise DimensionError(f"expected {schedule.K - 1} matrices, got {len(M_seq)}")
    theta_lasso = np.asarray(theta_lasso, dtype=np.float64)
    if theta_lasso.shape != (problem.p0,):
        raise DimensionError("theta_lasso length must match problem.p0")
    X, y = problem.X, problem.y
    n = problem.n
    resid = y - X @ theta_lasso
    correction = np.zeros(problem.p0)
    for ell in range(1, schedule.K):
        start, stop = schedule.bounds(ell)
        block = X[start:stop]
        correction += M_seq[ell - 1].M @ (block.T @ resid[start:stop])
    theta = theta_lasso + correction / n

    sigma_used = _resolve_sigma(problem, theta_lasso, sigma)
    variance = conditional_variance_ts(M_seq, problem, schedule, sigma_used)

    noise = None
    bias_norm = None
    if problem.theta0 is not None:
        eps = y - X @ problem.theta0
        noise = noise_component_ts(M_seq, problem, schedule, eps=eps)
        bias_norm = bias_matrix_norm_ts(M_seq, problem, schedule)
    return DebiasedEstimate(
        theta=theta,
        variance=variance,
        method="online-ts",
        n=n,
        sigma=sigma_used,
        noise=noise,
        bias_matrix_norm=bias_norm,
    )


def _resolve_sigma(problem, theta_lasso, sigma) -> float:
    if sigma is not None:
        return float(sigma)
    if problem.sigma is not None:
        return float(problem.sigma)
    return estimate_sigma(problem, theta_lasso)


def conditional_variance_ts(
    M_seq: Sequence[DecorrelatorMatrix],
    problem: RegressionProblem,
    schedule: EpisodeSchedule,
    sigma: float,
) -> np.ndarray:
    """Per-coordinate conditional variance (sigma^2/n) sum <m_a, x_t>^2.

    The sum runs over debiasing episodes only (episode 0 contributes no
    correction and hence no variance).
    """
    _check_ts_inputs(problem, schedule)
    X = problem.X
    acc = np.zeros(problem.p0)
    for ell in range(1, schedule.K):
        start, stop = schedule.bounds(ell)
        U = X[start:stop] @ M_seq[ell - 1].M.T
        acc += np.einsum("ij,ij->j", U, U)
    return (sigma**2 / problem.n) * acc


def conditional_covariance_ts(
    M_seq: Sequence[DecorrelatorMatrix],
    problem: RegressionProblem,
    schedule: EpisodeSchedule,
    sigma: float,
    coords: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Conditional covariance block (sigma^2/n) sum (M x_t)(M x_t)' on coords."""
    _check_ts_inputs(problem, schedule)
    X = problem.X
    idx = np.arange(problem.p0) if coords is None else np.asarray(coords, dtype=int)
    acc = np.zeros((idx.size, idx.size))
    for ell in range(1, schedule.K):
        start, stop = schedule.bounds(ell)
        U = X[start:stop] @ M_seq[ell - 1].M[idx].T
        acc += U.T @ U
    return (sigma**2 / problem.n) * acc


def noise_component_ts(
    M_seq: Sequence[DecorrelatorMatrix],
    problem: RegressionProblem,
    schedule: EpisodeSchedule,
    eps: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Martingale noise component W_n = n^{-1/2} sum_ell M^(ell) sum_t x_t eps_t.

    ``eps`` defaults to the true noise y - X theta0 (requires the problem
    to carry theta0).
    """
    _check_ts_inputs(problem, schedule)
    if eps is None:
        if problem.theta0 is None:
            raise ValueError("need eps or problem.theta0 to form the noise component")
        eps = problem.y - problem.X @ problem.theta0
    X = problem.X
    acc = np.zeros(problem.p0)
    for ell in range(1, schedule.K):
        start, stop = schedule.bounds(ell)
        acc += M_seq[ell - 1].M @ (X[start:stop].T @ eps[start:stop])
    return acc / math.sqrt(problem.n)


def bias_matrix_norm_ts(
    M_seq: Sequence[DecorrelatorMatrix],
    problem: RegressionProblem,
    schedule: EpisodeSchedule,
) -> float:
    """Sup-norm of sqrt(n) (I - (1/n) sum_ell r_ell M^(ell) R^(ell)).

    R^(ell) is the within-episode covariance, computed on the fly; the
    norm is restricted to solved rows when the matrices are partial.
    """
    _check_ts_inputs(problem, schedule)
    X = problem.X
    n = problem.n
    rows = M_seq[0].rows
    idx = np.asarray(rows, dtype=int)
    B = np.eye(problem.p0)[idx]
    for ell in range(1, schedule.K):
        start, stop = schedule.bounds(ell)
        block = X[start:stop]
        B -= (M_seq[ell - 1].M[idx] @ (block.T @ block)) / n
    return float(math.sqrt(n) * np.max(np.abs(B)))
