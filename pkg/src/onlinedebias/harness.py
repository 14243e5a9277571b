"""Monte Carlo experiment harness: configs, metrics, diagnostics, file I/O.

Replicate r of a study always draws from the stream keyed by (seed, r),
so results are independent of execution order and of the worker count.
Failed replicates are excluded from the aggregates but surfaced in the
result, never dropped silently.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

from .debias_offline import build_offline_M, offline_debias, offline_noise_component, ridge_online_baseline
from .debias_batch import build_batch_M, online_debias_batch
from .debias_ts import (
    DebiasedEstimate,
    build_M_sequence,
    conditional_variance_ts,
    noise_component_ts,
    online_debias_ts,
)
from .decorrelator import DecorrelatorConfig
from .inference import report
from .lasso import LassoConfig, fit_lasso
from .model_core import VarModel, build_regression_view, make_schedule
from . import simgen

TS_METHODS = ("online", "offline", "offline-sparse", "ridge-online")
BATCH_METHODS = ("online", "offline", "ridge-online")


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment row: model parameters plus the estimator chain.

    ``scenario`` is ``ts`` (VAR time series) or ``batch`` (two-batch
    collection); fields irrelevant to the active scenario are ignored.
    """

    scenario: str = "ts"
    replicates: int = 20
    seed: int = 0
    alpha: float = 0.05
    methods: Tuple[str, ...] = ("online",)
    # VAR model
    p: int = 20
    d: int = 1
    T: int = 50
    q: float = 0.01
    b: float = 1.0
    coeff_noise_sd: float = 0.0
    coeff_kind: str = "bernoulli"
    rho: float = 0.1
    cov_kind: str = "power"
    burn_in: int = 0
    # batch collection
    n1: int = 500
    n2: int = 500
    s0: int = 10
    x_cov: str = "tridiag"
    x_rho: float = 0.1
    varsigma_bar: float = 1.0
    intermediate: str = "debiased_lasso"
    intermediate_ridge_lam: float = 1.0
    sigma: float = 1.0
    batch_lambda_factor: float = 2.5
    eval_coords: str = "support"
    # estimator chain
    lambda0: float = 1.0
    c_mu: float = 1.0
    L0: float = 2.0
    L: Optional[float] = None
    r0: Optional[int] = None
    beta: float = 1.3
    tau_offline: float = 1.0
    ridge_lam: float = 1.0
    decor_tol: float = 1e-9
    decor_max_iter: int = 20_000
    solver: str = "cd"
    threads: int = 1

    def __post_init__(self):
        if self.scenario not in ("ts", "batch"):
            raise ValueError("scenario must be 'ts' or 'batch'")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        allowed = TS_METHODS if self.scenario == "ts" else BATCH_METHODS
        for m in self.methods:
            if m not in allowed:
                raise ValueError(f"method {m!r} not supported for scenario {self.scenario!r}")
        object.__setattr__(self, "methods", tuple(self.methods))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        data = json.loads(text)
        if "methods" in data:
            data["methods"] = tuple(data["methods"])
        return cls(**data)

    def decorrelator_config(self) -> DecorrelatorConfig:
        return DecorrelatorConfig(
            c_mu=self.c_mu,
            L=self.L,
            l0=self.L0,
            tol=self.decor_tol,
            max_iter=self.decor_max_iter,
            solver=self.solver,
        )


@dataclass(frozen=True)
class MetricsRow:
    """Aggregated metrics for one method of one experiment."""

    method: str
    fpr: float
    tpr: float
    coverage: float
    avg_ci_length: float
    avg_ci_length_raw: float
    ks_distance: float
    residual_mean: float
    replicates_used: int
    excluded: int
    support_mean: float = float("nan")


@dataclass(frozen=True)
class NormalityDiagnostics:
    """KS distance against N(0,1) plus plot-ready QQ and PP pairs."""

    ks_distance: float
    mean: float
    sd: float
    qq_pairs: np.ndarray
    pp_pairs: np.ndarray


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: List[MetricsRow]
    records: List[dict]
    excluded: List[dict]
    residuals: Dict[str, np.ndarray] = field(default_factory=dict)
    noise_terms: Dict[str, np.ndarray] = field(default_factory=dict)
    diagnostics: Dict[str, NormalityDiagnostics] = field(default_factory=dict)


def normality_diagnostics(samples: Sequence[float]) -> NormalityDiagnostics:
    """KS distance vs the standard normal, with QQ and PP pairs.

    QQ pairs are (Phi^{-1}((i - 0.5)/m), x_(i)); PP pairs are
    (Phi(x_(i)), i/m).  Requires at least 20 samples.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64))
    m = x.size
    if m < 20:
        raise ValueError(f"need >= 20 samples, got {m}")
    cdf = ndtr(x)
    upper = np.arange(1, m + 1) / m
    lower = np.arange(0, m) / m
    ks = float(max(np.max(upper - cdf), np.max(cdf - lower)))
    theo = ndtri((np.arange(1, m + 1) - 0.5) / m)
    qq = np.column_stack([theo, x])
    pp = np.column_stack([cdf, upper])
    return NormalityDiagnostics(
        ks_distance=ks, mean=float(x.mean()), sd=float(x.std(ddof=1)), qq_pairs=qq, pp_pairs=pp
    )


def _ts_model(config: ExperimentConfig, rng: np.random.Generator):
    """Draw (model, nonnull mask per target coordinate) for one replicate."""
    sigma_zeta = simgen.build_sigma_zeta(config.p, config.rho, config.cov_kind)
    if config.coeff_kind == "diagonal":
        coeffs = simgen.diagonal_coefficients(config.p, config.d, config.b)
        spikes = [np.eye(config.p, dtype=bool) for _ in range(config.d)]
    elif config.coeff_kind == "bernoulli":
        coeffs, spikes = simgen.gen_coefficients(
            config.p, config.d, config.q, config.b, noise_sd=config.coeff_noise_sd, rng=rng
        )
    else:
        raise ValueError(f"unknown coeff_kind {config.coeff_kind!r}")
    model = VarModel(coeffs, sigma_zeta)
    # row i of every spike mask, stacked like the regression coefficients
    nonnull = np.stack(
        [np.concatenate([spk[i, :] for spk in spikes]) for i in range(config.p)]
    )
    return model, nonnull


def _eval_estimate(
    est: DebiasedEstimate, theta0: np.ndarray, nonnull: np.ndarray, alpha: float
) -> dict:
    rep = report(est, alpha)
    covered = (rep.ci_low <= theta0) & (theta0 <= rep.ci_high)
    lengths = rep.ci_high - rep.ci_low
    ok = est.variance > 0
    resid = np.sqrt(est.n / est.variance[ok]) * (est.theta[ok] - theta0[ok])
    return {
        "rejected_null": int(np.sum(rep.reject & ~nonnull)),
        "n_null": int(np.sum(~nonnull)),
        "rejected_nonnull": int(np.sum(rep.reject & nonnull)),
        "n_nonnull": int(np.sum(nonnull)),
        "covered": int(np.sum(covered)),
        "n_coords": int(theta0.size),
        "ci_raw_sum": float(np.sum(lengths)),
        "ci_scaled_sum": float(math.sqrt(est.n) * np.sum(lengths)),
        "residuals": resid,
        "noise": None if est.noise is None else est.noise[ok] / np.sqrt(est.variance[ok]),
    }


def _run_ts_replicate(config: ExperimentConfig, r: int) -> dict:
    rng = simgen.rng_for(config.seed, r)
    model, nonnull = _ts_model(config, rng)
    series = simgen.gen_var_series(
        model, config.T, burn_in=config.burn_in, rng=rng, force=True
    )
    n = config.T - config.d
    p0 = config.d * config.p
    schedule = make_schedule(n, config.r0, config.beta)
    dcfg = config.decorrelator_config()

    # design-only objects shared by every target coordinate
    shared_problem = build_regression_view(series, config.d, 0)
    X = shared_problem.X
    M_seq = None
    if "online" in config.methods:
        M_seq = build_M_sequence(shared_problem, schedule, dcfg, threads=config.threads)
    M_off = None
    if "offline" in config.methods or "offline-sparse" in config.methods:
        S_full = X.T @ X / n
        M_off = build_offline_M(
            S_full, n=n, tau=config.tau_offline, config=dcfg, threads=config.threads
        )
    W_ridge = None
    if "ridge-online" in config.methods:
        from .debias_offline import ridge_online_W

        W_ridge = ridge_online_W(X, config.ridge_lam)

    per_method = {m: [] for m in config.methods}
    for i in range(config.p):
        sigma_i = math.sqrt(model.noise_cov[i, i])
        theta0 = model.regression_theta0(i)
        problem = build_regression_view(series, config.d, i, theta0=theta0, sigma=sigma_i)
        fit = fit_lasso(problem, LassoConfig(lambda0=config.lambda0))
        for m in config.methods:
            if m == "online":
                est = online_debias_ts(fit.theta, problem, schedule, M_seq, sigma=sigma_i)
            elif m in ("offline", "offline-sparse"):
                est = offline_debias(
                    fit.theta, problem, M_off, sigma=sigma_i, method=m, compute_bias_norm=False
                )
            elif m == "ridge-online":
                resid = problem.y - X @ fit.theta
                theta = fit.theta + W_ridge @ resid
                eps = problem.y - X @ theta0
                est = DebiasedEstimate(
                    theta=theta,
                    variance=sigma_i**2 * n * np.einsum("ij,ij->i", W_ridge, W_ridge),
                    method="ridge-online",
                    n=n,
                    sigma=sigma_i,
                    noise=math.sqrt(n) * (W_ridge @ eps),
                )
            per_method[m].append(_eval_estimate(est, theta0, nonnull[i], config.alpha))
    return {"replicate": r, "per_method": per_method}


def _build_x_cov(config: ExperimentConfig) -> np.ndarray:
    if config.x_cov == "tridiag":
        return simgen.tridiagonal_covariance(config.p, config.x_rho)
    if config.x_cov in ("power", "equi"):
        return simgen.build_sigma_zeta(config.p, config.x_rho, config.x_cov)
    if config.x_cov == "identity":
        return np.eye(config.p)
    raise ValueError(f"unknown x_cov {config.x_cov!r}")


def _run_batch_replicate(config: ExperimentConfig, r: int) -> dict:
    rng = simgen.rng_for(config.seed, r)
    p = config.p
    support = np.sort(rng.choice(p, size=config.s0, replace=False))
    theta0 = np.zeros(p)
    theta0[support] = 1.0
    Sigma = _build_x_cov(config)
    design, problem = simgen.gen_batch_data(
        theta0,
        Sigma,
        config.n1,
        config.n2,
        config.varsigma_bar,
        intermediate=config.intermediate,
        sigma=config.sigma,
        rng=rng,
        ridge_lam=config.intermediate_ridge_lam,
    )
    lam_max = float(np.linalg.eigvalsh(Sigma)[-1])
    lam = config.batch_lambda_factor * lam_max * math.sqrt(math.log(p) / design.n)
    fit = fit_lasso(problem, LassoConfig(lam=lam))
    coords = support if config.eval_coords == "support" else np.arange(p)
    nonnull = theta0[coords] != 0.0
    dcfg = config.decorrelator_config()

    per_method = {}
    for m in config.methods:
        if m == "online":
            M1, M2 = build_batch_M(design, dcfg, rows=coords, threads=config.threads)
            est = online_debias_batch(
                fit.theta, design, M1, M2, sigma=config.sigma, theta0=theta0,
                compute_bias_norm=False,
            )
        elif m == "offline":
            Omega_mix = simgen.mixture_precision(Sigma, design.theta_int, config.varsigma_bar)
            est = offline_debias(
                fit.theta, problem, Omega_mix, sigma=config.sigma, compute_bias_norm=False
            )
        elif m == "ridge-online":
            est = ridge_online_baseline(
                problem,
                lam=config.ridge_lam,
                theta_lasso=fit.theta,
                sigma=config.sigma,
                compute_bias_norm=False,
            )
        sub = DebiasedEstimate(
            theta=est.theta[coords],
            variance=est.variance[coords],
            method=est.method,
            n=est.n,
            sigma=est.sigma,
            noise=None if est.noise is None else est.noise[coords],
        )
        stats = _eval_estimate(sub, theta0[coords], nonnull, config.alpha)
        stats["support_mean"] = float(np.mean(est.theta[support]))
        per_method[m] = [stats]
    return {"replicate": r, "per_method": per_method}


def _replicate_worker(args):
    config, r = args
    if config.scenario == "ts":
        return _run_ts_replicate(config, r)
    return _run_batch_replicate(config, r)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every replicate of the config and aggregate the metrics.

    Per replicate and method: FPR = rejected true nulls / true nulls,
    TPR = rejected non-nulls / non-nulls, coverage = fraction of all
    evaluated coordinates whose interval contains the truth.  The summary
    is the mean over replicates.  CI length is reported both raw (2
    delta) and in root-n-scaled units.
    """
    jobs = [(config, r) for r in range(config.replicates)]
    outputs = []
    excluded: List[dict] = []
    if config.threads > 1 and config.replicates > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            futures = {pool.submit(_replicate_worker, job): job[1] for job in jobs}
            for fut, r in futures.items():
                try:
                    outputs.append(fut.result())
                except Exception as err:
                    excluded.append({"replicate": r, "error": f"{type(err).__name__}: {err}"})
    else:
        for job in jobs:
            try:
                outputs.append(_replicate_worker(job))
            except Exception as err:  # estimator failure: exclude, keep going
                excluded.append({"replicate": job[1], "error": f"{type(err).__name__}: {err}"})

    records: List[dict] = []
    residual_pool: Dict[str, list] = {m: [] for m in config.methods}
    noise_pool: Dict[str, list] = {m: [] for m in config.methods}
    per_method_rows: Dict[str, list] = {m: [] for m in config.methods}
    for out in sorted(outputs, key=lambda o: o["replicate"]):
        for m in config.methods:
            stats_list = out["per_method"][m]
            tot = {
                k: sum(s[k] for s in stats_list)
                for k in (
                    "rejected_null",
                    "n_null",
                    "rejected_nonnull",
                    "n_nonnull",
                    "covered",
                    "n_coords",
                    "ci_raw_sum",
                    "ci_scaled_sum",
                )
            }
            rec = {
                "replicate": out["replicate"],
                "method": m,
                "fpr": tot["rejected_null"] / tot["n_null"] if tot["n_null"] else float("nan"),
                "tpr": tot["rejected_nonnull"] / tot["n_nonnull"]
                if tot["n_nonnull"]
                else float("nan"),
                "coverage": tot["covered"] / tot["n_coords"],
                "avg_ci_length_raw": tot["ci_raw_sum"] / tot["n_coords"],
                "avg_ci_length": tot["ci_scaled_sum"] / tot["n_coords"],
                **{k: tot[k] for k in ("n_null", "n_nonnull", "n_coords")},
            }
            if "support_mean" in stats_list[0]:
                rec["support_mean"] = float(
                    np.mean([s["support_mean"] for s in stats_list])
                )
            records.append(rec)
            per_method_rows[m].append(rec)
            for s in stats_list:
                residual_pool[m].append(s["residuals"])
                if s["noise"] is not None:
                    noise_pool[m].append(s["noise"])

    metrics: List[MetricsRow] = []
    residuals: Dict[str, np.ndarray] = {}
    noise_terms: Dict[str, np.ndarray] = {}
    diagnostics: Dict[str, NormalityDiagnostics] = {}
    for m in config.methods:
        rows = per_method_rows[m]
        res = np.concatenate(residual_pool[m]) if residual_pool[m] else np.empty(0)
        residuals[m] = res
        if noise_pool[m]:
            noise_terms[m] = np.concatenate(noise_pool[m])
        ks = mean_r = float("nan")
        if res.size >= 20:
            diag = normality_diagnostics(res)
            diagnostics[m] = diag
            ks, mean_r = diag.ks_distance, diag.mean
        metrics.append(
            MetricsRow(
                method=m,
                fpr=float(np.nanmean([r["fpr"] for r in rows])) if rows else float("nan"),
                tpr=float(np.nanmean([r["tpr"] for r in rows])) if rows else float("nan"),
                coverage=float(np.mean([r["coverage"] for r in rows])) if rows else float("nan"),
                avg_ci_length=float(np.mean([r["avg_ci_length"] for r in rows])) if rows else float("nan"),
                avg_ci_length_raw=float(np.mean([r["avg_ci_length_raw"] for r in rows])) if rows else float("nan"),
                ks_distance=ks,
                residual_mean=mean_r,
                replicates_used=len(rows),
                excluded=len(excluded),
                support_mean=float(np.mean([r["support_mean"] for r in rows]))
                if rows and "support_mean" in rows[0]
                else float("nan"),
            )
        )
    return ExperimentResult(
        config=config,
        metrics=metrics,
        records=records,
        excluded=excluded,
        residuals=residuals,
        noise_terms=noise_terms,
        diagnostics=diagnostics,
    )


def ts_noise_study(
    config: ExperimentConfig,
    coord: int = 0,
    target: int = 0,
    methods: Tuple[str, ...] = ("online", "offline"),
) -> Dict[str, np.ndarray]:
    """Standardized noise components of one coordinate across replicates.

    For each replicate, builds only the decorrelator rows needed for the
    requested coordinate and returns W_a / sqrt(V_a) per method; used for
    the online-vs-offline normality comparison.
    """
    n = config.T - config.d
    dcfg = config.decorrelator_config()
    out = {m: np.empty(config.replicates) for m in methods}
    for r in range(config.replicates):
        rng = simgen.rng_for(config.seed, r)
        model, _ = _ts_model(config, rng)
        series, noise = simgen.gen_var_series(
            model, config.T, burn_in=config.burn_in, rng=rng, force=True, return_noise=True
        )
        sigma_i = math.sqrt(model.noise_cov[target, target])
        theta0 = model.regression_theta0(target)
        problem = build_regression_view(series, config.d, target, theta0=theta0, sigma=sigma_i)
        eps = noise[config.d :, target]
        schedule = make_schedule(n, config.r0, config.beta)
        if "online" in methods:
            M_seq = build_M_sequence(problem, schedule, dcfg, rows=[coord])
            w = noise_component_ts(M_seq, problem, schedule, eps=eps)[coord]
            v = conditional_variance_ts(M_seq, problem, schedule, sigma_i)[coord]
            out["online"][r] = w / math.sqrt(v)
        if "offline" in methods:
            S_full = problem.X.T @ problem.X / n
            M_off = build_offline_M(
                S_full, n=n, tau=config.tau_offline, config=dcfg, rows=[coord]
            )
            w = offline_noise_component(M_off, problem, eps=eps)[coord]
            m_row = M_off.M[coord]
            v = sigma_i**2 * float(m_row @ S_full @ m_row)
            out["offline"][r] = w / math.sqrt(v)
    return out


def write_metrics_csv(path, metrics: Sequence[MetricsRow]):
    """Metrics rows as CSV with 17-significant-digit floats."""
    cols = [
        "method",
        "fpr",
        "tpr",
        "coverage",
        "avg_ci_length",
        "avg_ci_length_raw",
        "ks_distance",
        "residual_mean",
        "replicates_used",
        "excluded",
        "support_mean",
    ]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in metrics:
            vals = []
            for c in cols:
                v = getattr(row, c)
                vals.append(v if isinstance(v, str) else _fmt(v))
            fh.write(",".join(vals) + "\n")


def write_records_json(path, result: ExperimentResult):
    payload = {
        "config": asdict(result.config),
        "records": result.records,
        "excluded": result.excluded,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def write_diagnostics_csv(path, result: ExperimentResult):
    """Plot-ready QQ/PP pairs per method, long format."""
    with open(path, "w") as fh:
        fh.write("method,series,theoretical,observed\n")
        for m, diag in result.diagnostics.items():
            for name, pairs in (("qq", diag.qq_pairs), ("pp", diag.pp_pairs)):
                for t, o in pairs:
                    fh.write(f"{m},{name},{_fmt(t)},{_fmt(o)}\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")
