"""Shared model and data types: VAR models, regression views, episode schedules.

Indexing convention: everything user-facing is 0-based (VAR coordinate
``i``, regression coordinate ``a``), and a VAR(d) series of length T is a
``(T, p)`` array.  The regression view of coordinate ``i`` stacks the d
most recent states per row, newest first, so the coefficient vector is
the concatenation of row ``i`` of each lag matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when input shapes are inconsistent with the model contract."""


class ScheduleError(ValueError):
    """Raised when an episode schedule cannot be constructed."""


@dataclass(frozen=True)
class Origin:
    """Provenance of a regression problem: time series, two-batch, or generic."""

    kind: str
    coord: Optional[int] = None
    n1: Optional[int] = None
    n2: Optional[int] = None

    @classmethod
    def ts(cls, coord: int) -> "Origin":
        return cls(kind="ts", coord=int(coord))

    @classmethod
    def batch(cls, n1: int, n2: int) -> "Origin":
        return cls(kind="batch", n1=int(n1), n2=int(n2))

    @classmethod
    def generic(cls) -> "Origin":
        return cls(kind="generic")


@dataclass(frozen=True)
class VarModel:
    """A Gaussian VAR(d) model.

    Parameters
    ----------
    coeffs:
        Sequence of d lag matrices, each p x p; ``coeffs[l]`` multiplies the
        state l+1 steps back.
    noise_cov:
        Symmetric positive-definite p x p innovation covariance.
    """

    coeffs: tuple
    noise_cov: np.ndarray

    def __init__(self, coeffs: Sequence[np.ndarray], noise_cov: np.ndarray):
        coeffs = tuple(np.ascontiguousarray(A, dtype=np.float64) for A in coeffs)
        noise_cov = np.ascontiguousarray(noise_cov, dtype=np.float64)
        if noise_cov.ndim != 2 or noise_cov.shape[0] != noise_cov.shape[1]:
            raise DimensionError("noise_cov must be a square matrix")
        p = noise_cov.shape[0]
        if len(coeffs) == 0:
            raise DimensionError("need at least one lag matrix")
        for A in coeffs:
            if A.shape != (p, p):
                raise DimensionError(f"lag matrix shape {A.shape} != ({p}, {p})")
        if not np.allclose(noise_cov, noise_cov.T, atol=1e-10):
            raise DimensionError("noise_cov must be symmetric")
        if np.linalg.eigvalsh(noise_cov)[0] <= 0:
            raise DimensionError("noise_cov must be positive definite")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "noise_cov", noise_cov)

    @property
    def p(self) -> int:
        return self.noise_cov.shape[0]

    @property
    def d(self) -> int:
        return len(self.coeffs)

    def stacked_coeffs(self) -> np.ndarray:
        """Lag matrices as a single (d, p, p) array."""
        return np.stack(self.coeffs)

    def regression_theta0(self, i: int) -> np.ndarray:
        """True coefficient vector of the regression view for coordinate i."""
        return np.concatenate([A[i, :] for A in self.coeffs])


@dataclass(frozen=True)
class RegressionProblem:
    """A linear regression instance y = X theta + noise with provenance."""

    X: np.ndarray
    y: np.ndarray
    theta0: Optional[np.ndarray] = None
    sigma: Optional[float] = None
    origin: Origin = field(default_factory=Origin.generic)

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1:
            raise DimensionError("X must be 2-d and y 1-d")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.theta0 is not None:
            t0 = np.ascontiguousarray(self.theta0, dtype=np.float64)
            if t0.shape != (X.shape[1],):
                raise DimensionError("theta0 length must match the column count of X")
            object.__setattr__(self, "theta0", t0)
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p0(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class EpisodeSchedule:
    """Partition of sample indices [0, n) into episodes E_0 .. E_{K-1}."""

    lengths: tuple
    beta: float

    def __post_init__(self):
        lengths = tuple(int(r) for r in self.lengths)
        if any(r < 1 for r in lengths):
            raise ScheduleError("every episode length must be >= 1")
        object.__setattr__(self, "lengths", lengths)

    @property
    def n(self) -> int:
        return sum(self.lengths)

    @property
    def K(self) -> int:
        return len(self.lengths)

    @property
    def starts(self) -> tuple:
        """Prefix counts n_0=0, n_1, ..., n_K; episode l occupies [n_l, n_{l+1})."""
        out = [0]
        for r in self.lengths:
            out.append(out[-1] + r)
        return tuple(out)

    @property
    def cumulative(self) -> tuple:
        """Cumulative counts n_1 .. n_K (samples available before each episode)."""
        return self.starts[1:]

    def bounds(self, ell: int) -> tuple:
        """(start, stop) row range of episode ell."""
        s = self.starts
        return s[ell], s[ell + 1]


@dataclass(frozen=True)
class SpectralSummary:
    """Grid extremes of the reverse characteristic polynomial spectrum.

    ``mu_min``/``mu_max`` are the grid min/max over the unit circle of the
    extreme eigenvalues of A*(g) A(g); the derived constants control the
    estimation theory of the stationary process.
    """

    mu_min: float
    mu_max: float
    lam_min_noise: float
    lam_max_noise: float
    omega: float
    alpha: float
    gamma: float
    stable: bool
    grid_size: int


def build_regression_view(
    series: np.ndarray,
    d: int,
    i: int,
    theta0: Optional[np.ndarray] = None,
    sigma: Optional[float] = None,
) -> RegressionProblem:
    """Regression view of VAR coordinate i from a (T, p) series.

    Row t of the design stacks the d states preceding response time t,
    newest first: ``(z_{t+d-1}, ..., z_t)``; the response is coordinate i
    of the next state.

    Parameters
    ----------
    series:
        Array of shape (T, p), rows are consecutive states.
    d:
        Autoregression order; requires T > d.
    i:
        Target coordinate (0-based).
    theta0, sigma:
        Optional ground truth to attach for diagnostics.

    Returns
    -------
    RegressionProblem
        With n = T - d rows and p0 = d*p columns, ``origin = ts(i)``.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2:
        raise DimensionError("series must be a (T, p) array of equal-length vectors")
    T, p = series.shape
    if d < 1:
        raise DimensionError("d must be >= 1")
    if T <= d:
        raise DimensionError(f"need T > d, got T={T}, d={d}")
    if not 0 <= i < p:
        raise DimensionError(f"coordinate i={i} out of range for p={p}")
    n = T - d
    X = np.empty((n, d * p))
    for lag in range(d):
        # lag-block l holds z_{t+d-1-l} for row t (0-based rows)
        X[:, lag * p : (lag + 1) * p] = series[d - 1 - lag : d - 1 - lag + n]
    y = series[d:, i].copy()
    return RegressionProblem(X=X, y=y, theta0=theta0, sigma=sigma, origin=Origin.ts(i))


def make_schedule(n: int, r0: Optional[int] = None, beta: float = 1.3) -> EpisodeSchedule:
    """Episode schedule with first episode r0 and geometric growth beta.

    Episode l >= 1 has length ceil(beta**l); the final episode absorbs
    whatever remains so the lengths sum to n exactly (and is trimmed when
    the proposed length would overshoot).

    Parameters
    ----------
    n:
        Total sample count.
    r0:
        First-episode length; defaults to ceil(sqrt(n)).
    beta:
        Growth factor, > 1.
    """
    if n < 2:
        raise ScheduleError(f"need n >= 2, got {n}")
    if r0 is None:
        r0 = math.isqrt(n)
        if r0 * r0 < n:
            r0 += 1
    r0 = int(r0)
    if r0 < 1:
        raise ScheduleError("r0 must be >= 1")
    if r0 >= n:
        raise ScheduleError(f"r0={r0} must be smaller than n={n}")
    if beta <= 1.0:
        raise ScheduleError("beta must be > 1")
    lengths = [r0]
    total = r0
    ell = 1
    while total < n:
        proposal = math.ceil(beta**ell)
        if total + proposal >= n:
            lengths.append(n - total)
            total = n
        else:
            lengths.append(proposal)
            total += proposal
            ell += 1
    return EpisodeSchedule(lengths=tuple(lengths), beta=float(beta))


def spectral_params(model: VarModel, grid_size: int = 512) -> SpectralSummary:
    """Grid extremes of the characteristic spectrum and derived constants.

    Evaluates A(g) = I - sum_l A_l g^l at ``grid_size`` points g on the
    unit circle and takes the extreme eigenvalues of the Hermitian
    products A*(g) A(g).  A grid minimum at (numerical) zero flags the
    model unstable; derived constants then degrade to inf rather than
    raising.
    """
    if grid_size < 64:
        raise ValueError("grid_size must be >= 64")
    p, d = model.p, model.d
    eye = np.eye(p, dtype=np.complex128)
    thetas = 2.0 * np.pi * np.arange(grid_size) / grid_size
    mu_min = np.inf
    mu_max = -np.inf
    for theta in thetas:
        gamma = np.exp(1j * theta)
        A = eye.copy()
        gpow = 1.0 + 0.0j
        for lag in range(d):
            gpow *= gamma
            A -= model.coeffs[lag] * gpow
        w = np.linalg.eigvalsh(A.conj().T @ A)
        if w[0] < mu_min:
            mu_min = w[0]
        if w[-1] > mu_max:
            mu_max = w[-1]
    noise_eigs = np.linalg.eigvalsh(model.noise_cov)
    lam_min, lam_max = float(noise_eigs[0]), float(noise_eigs[-1])
    stable = mu_min > 1e-12 * max(1.0, mu_max)
    mu_min = max(float(mu_min), 0.0)
    mu_max = float(mu_max)
    if mu_min > 0.0:
        omega = d * lam_max * mu_max / (lam_min * mu_min)
        gamma_const = d * lam_max / mu_min
    else:
        omega = np.inf
        gamma_const = np.inf
    alpha = lam_min / (2.0 * mu_max)
    return SpectralSummary(
        mu_min=mu_min,
        mu_max=mu_max,
        lam_min_noise=lam_min,
        lam_max_noise=lam_max,
        omega=omega,
        alpha=alpha,
        gamma=gamma_const,
        stable=bool(stable),
        grid_size=grid_size,
    )
