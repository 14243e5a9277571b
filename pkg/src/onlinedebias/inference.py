"""Confidence intervals, p-values, group regions, and FDR selection."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

from .debias_ts import DebiasedEstimate
from .decorrelator import SingularityError


@dataclass(frozen=True)
class InferenceReport:
    """Per-coordinate interval endpoints, p-values and rejection flags."""

    ci_low: np.ndarray
    ci_high: np.ndarray
    p_value: np.ndarray
    reject: np.ndarray
    alpha: float


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def confidence_interval(est: DebiasedEstimate, a: int, alpha: float) -> Tuple[float, float]:
    """Two-sided interval theta_a +/- Phi^{-1}(1-alpha/2) sqrt(V_a / n)."""
    _check_alpha(alpha)
    half = ndtri(1.0 - alpha / 2.0) * math.sqrt(max(est.variance[a], 0.0) / est.n)
    return float(est.theta[a] - half), float(est.theta[a] + half)


def p_value(est: DebiasedEstimate, a: int) -> float:
    """Two-sided p-value 2(1 - Phi(sqrt(n) |theta_a| / sqrt(V_a))) for theta_a = 0."""
    V = est.variance[a]
    t = est.theta[a]
    if V <= 0.0:
        return 0.0 if t != 0.0 else 1.0
    z = math.sqrt(est.n) * abs(t) / math.sqrt(V)
    return float(2.0 * ndtr(-z))


def p_values(est: DebiasedEstimate) -> np.ndarray:
    """Vector of two-sided p-values for every coordinate."""
    V = est.variance
    t = est.theta
    out = np.empty_like(t)
    degenerate = V <= 0.0
    out[degenerate] = np.where(t[degenerate] != 0.0, 0.0, 1.0)
    ok = ~degenerate
    z = math.sqrt(est.n) * np.abs(t[ok]) / np.sqrt(V[ok])
    out[ok] = 2.0 * ndtr(-z)
    return out


def report(est: DebiasedEstimate, alpha: float) -> InferenceReport:
    """Intervals, p-values and the alpha-level rejection decision per coordinate."""
    _check_alpha(alpha)
    half = ndtri(1.0 - alpha / 2.0) * np.sqrt(np.maximum(est.variance, 0.0) / est.n)
    pv = p_values(est)
    return InferenceReport(
        ci_low=est.theta - half,
        ci_high=est.theta + half,
        p_value=pv,
        reject=pv <= alpha,
        alpha=alpha,
    )


@dataclass(frozen=True)
class GroupRegion:
    """Whitening transform and membership test for a group confidence set.

    The whitened residual sqrt(n) V_G^{-1/2} (v - theta_G) is compared
    against the axis-aligned cube whose product-normal mass is 1-alpha.
    """

    theta_G: np.ndarray
    V_G: np.ndarray
    n: int
    inv_sqrt: np.ndarray

    @property
    def k(self) -> int:
        return self.theta_G.size

    def whiten(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        return math.sqrt(self.n) * (self.inv_sqrt @ (v - self.theta_G))

    def contains(self, v: np.ndarray, alpha: float) -> bool:
        _check_alpha(alpha)
        cutoff = ndtri(0.5 * (1.0 + (1.0 - alpha) ** (1.0 / self.k)))
        return bool(np.all(np.abs(self.whiten(v)) <= cutoff))


def group_region(
    est: DebiasedEstimate, G: Sequence[int], V_G: Optional[np.ndarray] = None
) -> GroupRegion:
    """Group confidence region for the coordinates in G.

    ``V_G`` is the |G| x |G| conditional covariance block; when omitted a
    diagonal block is assembled from the estimate's per-coordinate
    variances (exact for |G| = 1).
    """
    idx = np.asarray(list(G), dtype=int)
    if idx.size == 0:
        raise ValueError("G must be nonempty")
    if V_G is None:
        V_G = np.diag(est.variance[idx])
    V_G = np.asarray(V_G, dtype=np.float64)
    if V_G.shape != (idx.size, idx.size):
        raise ValueError("V_G must be |G| x |G|")
    w, Q = np.linalg.eigh(0.5 * (V_G + V_G.T))
    if w[0] <= 0.0:
        raise SingularityError("group covariance block is singular")
    inv_sqrt = (Q / np.sqrt(w)) @ Q.T
    return GroupRegion(theta_G=est.theta[idx].copy(), V_G=V_G, n=est.n, inv_sqrt=inv_sqrt)


def benjamini_yekutieli(p_vals: Sequence[float], alpha: float) -> np.ndarray:
    """Indices rejected by the step-up procedure with the harmonic correction.

    Sorts the p-values (stably), finds the largest i with
    p_(i) <= i * alpha / (m * c(m)), c(m) = sum_{j<=m} 1/j, and rejects
    the i smallest.  Valid under arbitrary dependence.
    """
    _check_alpha(alpha)
    p = np.asarray(list(p_vals), dtype=np.float64)
    if p.size == 0:
        return np.empty(0, dtype=int)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    c_m = float(np.sum(1.0 / np.arange(1, m + 1)))
    order = np.argsort(p, kind="stable")
    thresholds = np.arange(1, m + 1) * alpha / (m * c_m)
    passing = np.nonzero(p[order] <= thresholds)[0]
    if passing.size == 0:
        return np.empty(0, dtype=int)
    istar = int(passing[-1]) + 1
    return np.sort(order[:istar])
