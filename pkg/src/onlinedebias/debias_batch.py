"""Two-batch online-debiased estimator.

Batch 1 is collected i.i.d.; batch 2 conditions on an intermediate
estimate computed from batch 1.  The first decorrelating matrix is a
function of batch 1 alone, the second may read both batches, which keeps
the pair predictable with respect to the collection filtration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .decorrelator import DecorrelatorConfig, DecorrelatorMatrix, episode_config, solve_matrix
from .debias_ts import DebiasedEstimate, _resolve_sigma
from .model_core import DimensionError, Origin, RegressionProblem


@dataclass(frozen=True)
class BatchDesign:
    """Two-batch dataset with the intermediate estimate that drove batch 2."""

    X1: np.ndarray
    X2: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    theta_int: Optional[np.ndarray] = None
    varsigma_bar: float = 0.0

    def __post_init__(self):
        X1 = np.ascontiguousarray(self.X1, dtype=np.float64)
        X2 = np.ascontiguousarray(self.X2, dtype=np.float64)
        if X1.ndim != 2 or X2.ndim != 2 or X1.shape[1] != X2.shape[1]:
            raise DimensionError("X1 and X2 must be 2-d with equal column counts")
        if X1.shape[0] != len(self.y1) or X2.shape[0] != len(self.y2):
            raise DimensionError("response lengths must match batch row counts")
        object.__setattr__(self, "X1", X1)
        object.__setattr__(self, "X2", X2)
        object.__setattr__(self, "y1", np.ascontiguousarray(self.y1, dtype=np.float64))
        object.__setattr__(self, "y2", np.ascontiguousarray(self.y2, dtype=np.float64))

    @property
    def n1(self) -> int:
        return self.X1.shape[0]

    @property
    def n2(self) -> int:
        return self.X2.shape[0]

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def p(self) -> int:
        return self.X1.shape[1]

    def stacked(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.vstack([self.X1, self.X2]), np.concatenate([self.y1, self.y2])

    def problem(
        self, theta0: Optional[np.ndarray] = None, sigma: Optional[float] = None
    ) -> RegressionProblem:
        X, y = self.stacked()
        return RegressionProblem(
            X=X, y=y, theta0=theta0, sigma=sigma, origin=Origin.batch(self.n1, self.n2)
        )


def batch_covariances(design: BatchDesign) -> Tuple[np.ndarray, np.ndarray]:
    """Per-batch sample covariances (X1'X1/n1, X2'X2/n2)."""
    S1 = design.X1.T @ design.X1 / design.n1
    S2 = design.X2.T @ design.X2 / design.n2
    return S1, S2


def build_batch_M(
    design: BatchDesign,
    config: DecorrelatorConfig = DecorrelatorConfig(),
    rows: Optional[Sequence[int]] = None,
    threads: int = 1,
) -> Tuple[DecorrelatorMatrix, DecorrelatorMatrix]:
    """Decorrelating matrices (M1, M2), one per batch covariance.

    M1 solves against the batch-1 covariance only; M2 against the batch-2
    covariance (warm-started from M1).  Threshold levels default to
    c_mu * sqrt(log(p)/n_batch) per batch.
    """
    S1, S2 = batch_covariances(design)
    cfg1 = episode_config(config, S1, design.n1)
    M1 = solve_matrix(S1, cfg1, rows=rows, threads=threads)
    cfg2 = episode_config(config, S2, design.n2)
    M2 = solve_matrix(S2, cfg2, init=M1.M, rows=rows, threads=threads)
    return M1, M2


def online_debias_batch(
    theta_lasso: np.ndarray,
    design: BatchDesign,
    M1: DecorrelatorMatrix,
    M2: DecorrelatorMatrix,
    sigma: Optional[float] = None,
    theta0: Optional[np.ndarray] = None,
    compute_bias_norm: bool = True,
) -> DebiasedEstimate:
    """Online-debiased estimate from per-batch corrections.

    theta = theta_L + (1/n) M1 X1' r1 + (1/n) M2 X2' r2 with r the lasso
    residuals per batch.  When ``theta0`` is given, the martingale noise
    component and the scaled bias matrix norm are attached.
    """
    theta_lasso = np.asarray(theta_lasso, dtype=np.float64)
    if theta_lasso.shape != (design.p,):
        raise DimensionError("theta_lasso length must match the design dimension")
    n = design.n
    r1 = design.y1 - design.X1 @ theta_lasso
    r2 = design.y2 - design.X2 @ theta_lasso
    theta = (
        theta_lasso
        + (M1.M @ (design.X1.T @ r1)) / n
        + (M2.M @ (design.X2.T @ r2)) / n
    )
    problem = design.problem(theta0=theta0)
    sigma_used = _resolve_sigma(problem, theta_lasso, sigma)
    variance = conditional_variance_batch(M1, M2, design, sigma_used)
    noise = None
    if theta0 is not None:
        theta0 = np.asarray(theta0, dtype=np.float64)
        e1 = design.y1 - design.X1 @ theta0
        e2 = design.y2 - design.X2 @ theta0
        noise = (M1.M @ (design.X1.T @ e1) + M2.M @ (design.X2.T @ e2)) / math.sqrt(n)
    bias_norm = None
    if compute_bias_norm:
        idx = np.asarray(M1.rows, dtype=int)
        S1, S2 = batch_covariances(design)
        B = np.eye(design.p)[idx]
        B -= (design.n1 / n) * (M1.M[idx] @ S1)
        B -= (design.n2 / n) * (M2.M[idx] @ S2)
        bias_norm = float(math.sqrt(n) * np.max(np.abs(B)))
    return DebiasedEstimate(
        theta=theta,
        variance=variance,
        method="online-batch",
        n=n,
        sigma=sigma_used,
        noise=noise,
        bias_matrix_norm=bias_norm,
    )


def conditional_variance_batch(
    M1: DecorrelatorMatrix,
    M2: DecorrelatorMatrix,
    design: BatchDesign,
    sigma: float,
) -> np.ndarray:
    """Per-coordinate variance sigma^2 [(n1/n) m1'S1 m1 + (n2/n) m2'S2 m2]."""
    n = design.n
    U1 = design.X1 @ M1.M.T
    U2 = design.X2 @ M2.M.T
    q1 = np.einsum("ij,ij->j", U1, U1) / design.n1
    q2 = np.einsum("ij,ij->j", U2, U2) / design.n2
    return sigma**2 * ((design.n1 / n) * q1 + (design.n2 / n) * q2)
