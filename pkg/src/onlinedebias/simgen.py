"""Seeded generators and analytic moment oracles for the synthetic studies.

All generators are pure functions of (parameters, seed); replicate r of a
study draws from the Philox stream keyed by (seed, r), so Monte Carlo
results do not depend on execution order.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

from ._backend import kernels
from .debias_offline import offline_debias
from .debias_batch import BatchDesign
from .lasso import LassoConfig, fit_lasso
from .model_core import RegressionProblem, VarModel, spectral_params


class InstabilityError(RuntimeError):
    """Raised when an operation requires a stable (stationary) model."""


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based Philox generator for stream ``stream`` of a seeded study."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


def build_sigma_zeta(p: int, rho: float, kind: str = "power") -> np.ndarray:
    """Innovation covariance: ``power`` rho^|i-j| or ``equi`` rho off-diagonal."""
    if abs(rho) >= 1:
        raise ValueError("need |rho| < 1")
    if kind == "power":
        idx = np.arange(p)
        return rho ** np.abs(idx[:, None] - idx[None, :])
    if kind == "equi":
        return np.full((p, p), float(rho)) + (1.0 - rho) * np.eye(p)
    raise ValueError(f"unknown covariance kind {kind!r}")


def tridiagonal_covariance(p: int, off: float) -> np.ndarray:
    """Covariance with unit diagonal and ``off`` on the first off-diagonals."""
    S = np.eye(p)
    i = np.arange(p - 1)
    S[i, i + 1] = off
    S[i + 1, i] = off
    return S


def gen_coefficients(
    p: int,
    d: int,
    q: float,
    b: float,
    noise_sd: Optional[float] = None,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[list, list]:
    """Random lag matrices with spike-plus-noise entries.

    Each entry is b * Bern(q) * Unif({+1,-1}) plus independent Gaussian
    noise of sd ``noise_sd`` (default 1/p; pass 0 for exactly sparse
    models).

    Returns
    -------
    (coeffs, spikes)
        ``coeffs`` is the list of d matrices; ``spikes`` the list of
        boolean masks marking where the Bernoulli spike is present (the
        "true non-null" entries of the approximately sparse model).
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    if noise_sd is None:
        noise_sd = 1.0 / p
    rng = rng_for(seed) if rng is None else rng
    coeffs = []
    spikes = []
    for _ in range(d):
        mask = rng.random((p, p)) < q
        signs = rng.integers(0, 2, size=(p, p)) * 2 - 1
        A = b * mask * signs
        if noise_sd > 0:
            A = A + noise_sd * rng.standard_normal((p, p))
        coeffs.append(np.asarray(A, dtype=np.float64))
        spikes.append(mask)
    return coeffs, spikes


def diagonal_coefficients(p: int, d: int, b: float) -> list:
    """d diagonal lag matrices with value b on every diagonal."""
    return [b * np.eye(p) for _ in range(d)]


def gen_var_series(
    model: VarModel,
    T: int,
    burn_in: int = 200,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
    force: bool = False,
    return_noise: bool = False,
):
    """Simulate T states of the VAR model from zero initial history.

    Innovations are N(0, noise_cov) via Cholesky; the first ``burn_in``
    states are discarded.  Unstable models are rejected unless ``force``
    is set (explosive dynamics are sometimes simulated on purpose).

    Returns the (T, p) series, or ``(series, noise)`` with the aligned
    innovation draws when ``return_noise`` is set.
    """
    if T < 1 or burn_in < 0:
        raise ValueError("need T >= 1 and burn_in >= 0")
    if not force and not spectral_params(model, 128).stable:
        raise InstabilityError("model fails the stability check; pass force=True to simulate anyway")
    rng = rng_for(seed) if rng is None else rng
    chol = np.linalg.cholesky(model.noise_cov)
    total = T + burn_in
    noise = rng.standard_normal((total, model.p)) @ chol.T
    z = kernels.var_recurse(model.stacked_coeffs(), noise)
    if return_noise:
        return z[burn_in:], noise[burn_in:]
    return z[burn_in:]


def stationary_covariance(model: VarModel, ell: int = 0, grid_size: int = 4096) -> np.ndarray:
    """Autocovariance E[z_t z_{t+ell}'] by spectral quadrature.

    Integrates A^{-1}(e^{-i t}) S_noise A^{-*}(e^{-i t}) e^{i ell t} over
    the circle with a ``grid_size``-node periodic trapezoid rule.
    """
    if grid_size < 16:
        raise ValueError("grid_size too small")
    p, d = model.p, model.d
    thetas = -np.pi + 2.0 * np.pi * np.arange(grid_size) / grid_size
    eye = np.eye(p, dtype=np.complex128)
    acc = np.zeros((p, p), dtype=np.complex128)
    for theta in thetas:
        gamma = np.exp(-1j * theta)
        A = eye.copy()
        gpow = 1.0 + 0.0j
        for lag in range(d):
            gpow *= gamma
            A -= model.coeffs[lag] * gpow
        try:
            Ainv = np.linalg.solve(A, eye)
        except np.linalg.LinAlgError as err:
            raise InstabilityError(f"characteristic matrix singular at theta={theta}") from err
        acc += (Ainv @ model.noise_cov @ Ainv.conj().T) * np.exp(1j * ell * theta)
    return np.real(acc) / grid_size


def stacked_covariance(model: VarModel, grid_size: int = 4096) -> np.ndarray:
    """Stationary covariance of the stacked regressor (d*p, d*p): block (r, s) = Gamma(r - s)."""
    p, d = model.p, model.d
    gammas = {0: stationary_covariance(model, 0, grid_size)}
    for ell in range(1, d):
        gammas[ell] = stationary_covariance(model, ell, grid_size)
        gammas[-ell] = gammas[ell].T
    out = np.empty((d * p, d * p))
    for r in range(d):
        for s in range(d):
            out[r * p : (r + 1) * p, s * p : (s + 1) * p] = gammas[r - s]
    return out


@dataclass(frozen=True)
class ConditionalMoments:
    """Moments of the one-sided conditioned Gaussian design.

    ``mean_xi1``/``second_moment_xi1`` are the first two moments of the
    standard normal truncated to [varsigma_bar, inf); ``Sigma2`` and
    ``Omega2`` are the conditional covariance and its inverse.
    """

    mean_xi1: float
    second_moment_xi1: float
    Sigma2: np.ndarray
    Omega2: np.ndarray


def conditional_moments(
    Sigma: np.ndarray, theta: np.ndarray, varsigma_bar: float
) -> ConditionalMoments:
    """Analytic covariance/precision of x | <x, theta> >= threshold.

    The threshold is ``varsigma_bar`` standard deviations of <x, theta>.
    The precision uses the rank-one downdate obtained from the
    Sherman-Morrison identity, making Sigma2 @ Omega2 = I an exact
    algebraic pair.
    """
    Sigma = np.asarray(Sigma, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if varsigma_bar < 0:
        raise ValueError("varsigma_bar must be >= 0")
    quad = float(theta @ Sigma @ theta)
    if quad <= 0:
        raise ValueError("theta must be nonzero (and Sigma positive definite)")
    phi = math.exp(-0.5 * varsigma_bar**2) / math.sqrt(2.0 * math.pi)
    tail = float(ndtr(-varsigma_bar))
    mean_xi1 = phi / tail
    second = 1.0 + varsigma_bar * phi / tail
    St = Sigma @ theta
    Sigma2 = Sigma + (second - 1.0) * np.outer(St, St) / quad
    Omega = np.linalg.inv(Sigma)
    shrink = varsigma_bar * phi / (tail + varsigma_bar * phi)
    Omega2 = Omega - shrink * np.outer(theta, theta) / quad
    return ConditionalMoments(
        mean_xi1=mean_xi1, second_moment_xi1=second, Sigma2=Sigma2, Omega2=Omega2
    )


def sample_truncated_xi(
    varsigma_bar: float, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Inverse-CDF draws of a standard normal truncated to [varsigma_bar, inf).

    Uses the survival-function parametrization, which stays accurate in
    the far tail; with varsigma_bar = -inf this is an untruncated draw.
    """
    u = rng.random(size)
    if varsigma_bar == -np.inf:
        tail = 1.0
    else:
        tail = float(ndtr(-varsigma_bar))
    return -ndtri(u * tail)


def sample_conditional_gaussian(
    Sigma: np.ndarray,
    theta: np.ndarray,
    varsigma_bar: float,
    size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw x ~ N(0, Sigma) conditioned on <x, theta> exceeding the threshold.

    Decomposes x into the truncated component along Sigma theta and an
    independent Gaussian on the orthogonal complement.
    """
    Sigma = np.asarray(Sigma, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    p = Sigma.shape[0]
    quad = float(theta @ Sigma @ theta)
    if quad <= 0:
        raise ValueError("theta must be nonzero")
    St = Sigma @ theta
    direction = St / math.sqrt(quad)
    C = Sigma - np.outer(St, St) / quad
    w, Q = np.linalg.eigh(0.5 * (C + C.T))
    Chalf = (Q * np.sqrt(np.maximum(w, 0.0))) @ Q.T
    xi1 = sample_truncated_xi(varsigma_bar, size, rng)
    xi2 = rng.standard_normal((size, p))
    return xi1[:, None] * direction[None, :] + xi2 @ Chalf.T


def gen_batch_data(
    theta0: np.ndarray,
    Sigma: np.ndarray,
    n1: int,
    n2: int,
    varsigma_bar: float,
    intermediate: str = "ridge",
    sigma: float = 1.0,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
    ridge_lam: float = 1.0,
    lasso_config: Optional[LassoConfig] = None,
) -> Tuple[BatchDesign, RegressionProblem]:
    """Two-batch adaptive dataset.

    Batch 1 is i.i.d. N(0, Sigma); an intermediate estimate is fit on it
    (``ridge`` with a fixed penalty or ``debiased_lasso`` debiased by the
    population precision), and batch 2 covariates are drawn conditional
    on correlating with that estimate at least ``varsigma_bar`` standard
    deviations above the unconditional mean.  Responses follow the linear
    model with noise level ``sigma`` throughout.

    Returns the BatchDesign plus the stacked RegressionProblem carrying
    theta0 and sigma.
    """
    theta0 = np.asarray(theta0, dtype=np.float64)
    Sigma = np.asarray(Sigma, dtype=np.float64)
    p = Sigma.shape[0]
    rng = rng_for(seed) if rng is None else rng
    w, Q = np.linalg.eigh(0.5 * (Sigma + Sigma.T))
    if w[0] <= 0:
        raise ValueError("Sigma must be positive definite")
    half = (Q * np.sqrt(w)) @ Q.T
    X1 = rng.standard_normal((n1, p)) @ half
    y1 = X1 @ theta0 + sigma * rng.standard_normal(n1)

    theta_int = _intermediate_estimate(
        X1, y1, Sigma, sigma, intermediate, ridge_lam, lasso_config
    )
    if float(theta_int @ Sigma @ theta_int) <= 0:
        warnings.warn(
            "intermediate estimate is zero; falling back to unconditional batch-2 sampling"
        )
        X2 = rng.standard_normal((n2, p)) @ half
    else:
        X2 = sample_conditional_gaussian(Sigma, theta_int, varsigma_bar, n2, rng)
    y2 = X2 @ theta0 + sigma * rng.standard_normal(n2)
    design = BatchDesign(
        X1=X1, X2=X2, y1=y1, y2=y2, theta_int=theta_int, varsigma_bar=varsigma_bar
    )
    return design, design.problem(theta0=theta0, sigma=sigma)


def _intermediate_estimate(X1, y1, Sigma, sigma, intermediate, ridge_lam, lasso_config):
    n1, p = X1.shape
    if intermediate == "ridge":
        G = X1.T @ X1 + ridge_lam * np.eye(p)
        return np.linalg.solve(G, X1.T @ y1)
    if intermediate == "debiased_lasso":
        lam_max = float(np.linalg.eigvalsh(Sigma)[-1])
        cfg = lasso_config or LassoConfig(lam=2.5 * lam_max * math.sqrt(math.log(p) / n1))
        prob1 = RegressionProblem(X=X1, y=y1, sigma=sigma)
        fit = fit_lasso(prob1, cfg)
        # population-precision debiasing: the simulation knows Sigma
        Omega = np.linalg.inv(Sigma)
        est = offline_debias(fit.theta, prob1, Omega, sigma=sigma, compute_bias_norm=False)
        return est.theta
    raise ValueError(f"unknown intermediate estimator {intermediate!r}")


def mixture_precision(Sigma: np.ndarray, theta_int: np.ndarray, varsigma_bar: float) -> np.ndarray:
    """Inverse of the half/half mixture of Sigma and the conditional covariance.

    This is the population decorrelating matrix an offline analyst with
    full distributional knowledge would use on the pooled batches.
    """
    mom = conditional_moments(Sigma, theta_int, varsigma_bar)
    return np.linalg.inv(0.5 * np.asarray(Sigma, dtype=np.float64) + 0.5 * mom.Sigma2)
