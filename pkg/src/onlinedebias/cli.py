"""Command line interface.

Subcommands: ``simulate`` emits a dataset CSV, ``debias-ts`` /
``debias-batch`` turn a dataset into debiased estimates (JSON), ``infer``
adds intervals, p-values and selections, ``experiment`` runs a config
JSON through the Monte Carlo harness.  Floats in CSV output carry 17
significant digits so files round-trip exactly.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from .debias_offline import build_offline_M, offline_debias, ridge_online_baseline
from .debias_batch import BatchDesign, build_batch_M, online_debias_batch
from .debias_ts import build_M_sequence, online_debias_ts
from .decorrelator import DecorrelatorConfig
from .harness import (
    ExperimentConfig,
    run_experiment,
    write_diagnostics_csv,
    write_metrics_csv,
    write_records_json,
)
from .inference import benjamini_yekutieli, report
from .lasso import LassoConfig, estimate_sigma, fit_lasso
from .model_core import Origin, RegressionProblem, build_regression_view, make_schedule
from . import simgen

_F = ".17g"


def _fmt(x: float) -> str:
    return format(float(x), _F)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _read_ts_csv(path) -> np.ndarray:
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in row] for row in rows[1:]])


def _read_batch_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    batch = data[:, 0].astype(int)
    y = data[:, 1]
    X = data[:, 2:]
    return X[batch == 1], X[batch == 2], y[batch == 1], y[batch == 2]


def _read_generic_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    return data[:, 0], data[:, 1:]


def _out_path(args, name):
    out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def _cmd_simulate(args):
    if args.scenario == "ts":
        sigma_zeta = simgen.build_sigma_zeta(args.p, args.rho, args.cov_kind)
        coeffs, spikes = simgen.gen_coefficients(
            args.p, args.d, args.q, args.b, noise_sd=args.coeff_noise_sd, seed=args.seed
        )
        from .model_core import VarModel

        model = VarModel(coeffs, sigma_zeta)
        series = simgen.gen_var_series(
            model, args.T, burn_in=args.burn_in, seed=args.seed, force=True
        )
        path = args.out or _out_path(args, "series.csv")
        _write_csv(path, [f"z{j+1}" for j in range(args.p)], series)
        if args.with_truth:
            truth = {
                "coeffs": [A.tolist() for A in coeffs],
                "spikes": [s.astype(int).tolist() for s in spikes],
                "noise_cov": sigma_zeta.tolist(),
            }
            with open(path + ".truth.json", "w") as fh:
                json.dump(truth, fh)
        print(path)
        return
    theta0 = np.zeros(args.p)
    theta0[: args.s0] = 1.0
    Sigma = simgen.tridiagonal_covariance(args.p, args.x_rho)
    design, _ = simgen.gen_batch_data(
        theta0,
        Sigma,
        args.n1,
        args.n2,
        args.varsigma_bar,
        intermediate=args.intermediate,
        sigma=args.sigma,
        seed=args.seed,
    )
    path = args.out or _out_path(args, "batch.csv")
    header = ["batch", "y"] + [f"x{j+1}" for j in range(args.p)]
    rows = [
        [1, yv] + list(xv) for yv, xv in zip(design.y1, design.X1)
    ] + [
        [2, yv] + list(xv) for yv, xv in zip(design.y2, design.X2)
    ]
    _write_csv(path, header, rows)
    if args.with_truth:
        with open(path + ".truth.json", "w") as fh:
            json.dump({"theta0": theta0.tolist(), "sigma": args.sigma}, fh)
    print(path)


def _fit_with_sigma(problem, args):
    """Fit the LASSO; without a known sigma, bootstrap it with a plug-in pass."""
    if args.lam is not None:
        return fit_lasso(problem, LassoConfig(lam=args.lam))
    if problem.sigma is not None:
        return fit_lasso(problem, LassoConfig(lambda0=args.lambda0))
    rough = RegressionProblem(
        X=problem.X, y=problem.y, sigma=float(np.std(problem.y)) or 1.0, origin=problem.origin
    )
    fit = fit_lasso(rough, LassoConfig(lambda0=args.lambda0))
    sigma = estimate_sigma(problem, fit.theta)
    refined = RegressionProblem(X=problem.X, y=problem.y, sigma=sigma, origin=problem.origin)
    return fit_lasso(refined, LassoConfig(lambda0=args.lambda0))


def _estimate_to_dict(est):
    return {
        "method": est.method,
        "n": est.n,
        "sigma": est.sigma,
        "theta": est.theta.tolist(),
        "variance": est.variance.tolist(),
    }


def _debias_ts_estimates(args):
    series = _read_ts_csv(args.data)
    T, p = series.shape
    n = T - args.d
    coords = range(p) if args.coord is None else [args.coord]
    out = {}
    dcfg = DecorrelatorConfig(c_mu=args.c_mu, l0=args.l0)
    schedule = make_schedule(n, args.r0, args.beta)
    M_seq = None
    M_off = None
    for i in coords:
        problem = build_regression_view(series, args.d, i, sigma=args.sigma)
        fit = _fit_with_sigma(problem, args)
        sigma_i = args.sigma if args.sigma is not None else estimate_sigma(problem, fit.theta)
        if args.method == "online":
            if M_seq is None:
                M_seq = build_M_sequence(problem, schedule, dcfg, threads=args.threads)
            est = online_debias_ts(fit.theta, problem, schedule, M_seq, sigma=sigma_i)
        elif args.method in ("offline", "offline-sparse"):
            if M_off is None:
                S = problem.X.T @ problem.X / n
                M_off = build_offline_M(S, n=n, tau=args.tau, config=dcfg, threads=args.threads)
            est = offline_debias(fit.theta, problem, M_off, sigma=sigma_i, method=args.method)
        else:
            est = ridge_online_baseline(
                problem, lam=args.ridge_lam, theta_lasso=fit.theta, sigma=sigma_i
            )
        out[i] = (est, problem)
    return out


def _cmd_debias_ts(args):
    estimates = _debias_ts_estimates(args)
    payload = {str(i): _estimate_to_dict(est) for i, (est, _) in estimates.items()}
    path = args.out or _out_path(args, "estimates.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
    print(path)


def _cmd_debias_batch(args):
    X1, X2, y1, y2 = _read_batch_csv(args.data)
    design = BatchDesign(X1=X1, X2=X2, y1=y1, y2=y2)
    problem = design.problem(sigma=args.sigma)
    fit = _fit_with_sigma(problem, args)
    sigma = args.sigma if args.sigma is not None else estimate_sigma(problem, fit.theta)
    dcfg = DecorrelatorConfig(c_mu=args.c_mu, l0=args.l0)
    M1, M2 = build_batch_M(design, dcfg, threads=args.threads)
    est = online_debias_batch(fit.theta, design, M1, M2, sigma=sigma)
    path = args.out or _out_path(args, "estimates.json")
    with open(path, "w") as fh:
        json.dump(_estimate_to_dict(est), fh, indent=1)
    print(path)


def _cmd_infer(args):
    if args.scenario == "ts":
        estimates = _debias_ts_estimates(args)
        payload = {}
        for i, (est, _) in estimates.items():
            rep = report(est, args.alpha)
            entry = _estimate_to_dict(est)
            entry.update(
                ci_low=rep.ci_low.tolist(),
                ci_high=rep.ci_high.tolist(),
                p_value=rep.p_value.tolist(),
                reject=rep.reject.astype(int).tolist(),
            )
            if args.by:
                entry["by_selected"] = benjamini_yekutieli(rep.p_value, args.alpha).tolist()
            payload[str(i)] = entry
    else:
        if args.scenario == "batch":
            X1, X2, y1, y2 = _read_batch_csv(args.data)
            design = BatchDesign(X1=X1, X2=X2, y1=y1, y2=y2)
            problem = design.problem(sigma=args.sigma)
            fit = _fit_with_sigma(problem, args)
            sigma = args.sigma if args.sigma is not None else estimate_sigma(problem, fit.theta)
            dcfg = DecorrelatorConfig(c_mu=args.c_mu, l0=args.l0)
            M1, M2 = build_batch_M(design, dcfg, threads=args.threads)
            est = online_debias_batch(fit.theta, design, M1, M2, sigma=sigma)
        else:  # generic CSV: offline debiasing on an i.i.d.-style design
            y, X = _read_generic_csv(args.data)
            problem = RegressionProblem(X=X, y=y, sigma=args.sigma, origin=Origin.generic())
            fit = _fit_with_sigma(problem, args)
            sigma = args.sigma if args.sigma is not None else estimate_sigma(problem, fit.theta)
            S = X.T @ X / len(y)
            M = build_offline_M(S, n=len(y), tau=args.tau, threads=args.threads)
            est = offline_debias(fit.theta, problem, M, sigma=sigma)
        rep = report(est, args.alpha)
        payload = _estimate_to_dict(est)
        payload.update(
            ci_low=rep.ci_low.tolist(),
            ci_high=rep.ci_high.tolist(),
            p_value=rep.p_value.tolist(),
            reject=rep.reject.astype(int).tolist(),
        )
        if args.by:
            payload["by_selected"] = benjamini_yekutieli(rep.p_value, args.alpha).tolist()
    path = args.out or _out_path(args, "report.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
    print(path)


def _cmd_experiment(args):
    with open(args.config) as fh:
        config = ExperimentConfig.from_json(fh.read())
    if args.seed is not None:
        config = ExperimentConfig(**{**json.loads(config.to_json()), "seed": args.seed})
    if args.threads is not None:
        config = ExperimentConfig(**{**json.loads(config.to_json()), "threads": args.threads})
    result = run_experiment(config)
    out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), result.metrics)
    write_records_json(os.path.join(out_dir, "raw_records.json"), result)
    write_diagnostics_csv(os.path.join(out_dir, "diagnostics.csv"), result)
    for row in result.metrics:
        print(
            f"{row.method}: fpr={row.fpr:.4f} tpr={row.tpr:.4f} coverage={row.coverage:.4f} "
            f"avg_ci={row.avg_ci_length:.4f}"
        )
    print(out_dir)


def _add_common(sp):
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--out-dir", default=None)
    sp.add_argument("--out", default=None)


def _add_chain(sp):
    sp.add_argument("--sigma", type=float, default=None, help="noise sd if known")
    sp.add_argument("--lam", type=float, default=None, help="explicit lasso penalty")
    sp.add_argument("--lambda0", type=float, default=1.0)
    sp.add_argument("--c-mu", dest="c_mu", type=float, default=1.0)
    sp.add_argument("--l0", type=float, default=2.0)
    sp.add_argument("--tau", type=float, default=1.0, help="offline mu multiplier")
    sp.add_argument("--ridge-lam", dest="ridge_lam", type=float, default=1.0)
    sp.add_argument("--r0", type=int, default=None)
    sp.add_argument("--beta", type=float, default=1.3)
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--by", action="store_true", help="run the FDR selection")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="onlinedebias")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="emit a synthetic dataset CSV")
    sim.add_argument("--scenario", choices=("ts", "batch"), default="ts")
    sim.add_argument("--p", type=int, default=20)
    sim.add_argument("--d", type=int, default=1)
    sim.add_argument("--T", type=int, default=50)
    sim.add_argument("--q", type=float, default=0.1)
    sim.add_argument("--b", type=float, default=0.1)
    sim.add_argument("--coeff-noise-sd", dest="coeff_noise_sd", type=float, default=0.0)
    sim.add_argument("--rho", type=float, default=0.1)
    sim.add_argument("--cov-kind", dest="cov_kind", choices=("power", "equi"), default="power")
    sim.add_argument("--burn-in", dest="burn_in", type=int, default=0)
    sim.add_argument("--n1", type=int, default=500)
    sim.add_argument("--n2", type=int, default=500)
    sim.add_argument("--s0", type=int, default=10)
    sim.add_argument("--x-rho", dest="x_rho", type=float, default=0.1)
    sim.add_argument("--varsigma-bar", dest="varsigma_bar", type=float, default=1.0)
    sim.add_argument("--sigma", type=float, default=1.0)
    sim.add_argument("--intermediate", choices=("ridge", "debiased_lasso"), default="ridge")
    sim.add_argument("--with-truth", action="store_true")
    _add_common(sim)
    sim.set_defaults(func=_cmd_simulate)

    dts = sub.add_parser("debias-ts", help="debias a VAR series CSV")
    dts.add_argument("--data", required=True)
    dts.add_argument("--d", type=int, required=True)
    dts.add_argument("--coord", type=int, default=None, help="target coordinate (default all)")
    dts.add_argument(
        "--method",
        choices=("online", "offline", "offline-sparse", "ridge-online"),
        default="online",
    )
    _add_chain(dts)
    _add_common(dts)
    dts.set_defaults(func=_cmd_debias_ts)

    dba = sub.add_parser("debias-batch", help="debias a two-batch CSV")
    dba.add_argument("--data", required=True)
    _add_chain(dba)
    _add_common(dba)
    dba.set_defaults(func=_cmd_debias_batch)

    inf = sub.add_parser("infer", help="dataset CSV to JSON inference report")
    inf.add_argument("--data", required=True)
    inf.add_argument("--scenario", choices=("ts", "batch", "generic"), default="ts")
    inf.add_argument("--d", type=int, default=1)
    inf.add_argument("--coord", type=int, default=None)
    inf.add_argument(
        "--method",
        choices=("online", "offline", "offline-sparse", "ridge-online"),
        default="online",
    )
    _add_chain(inf)
    _add_common(inf)
    inf.set_defaults(func=_cmd_infer)

    exp = sub.add_parser("experiment", help="run a config JSON through the harness")
    exp.add_argument("--config", required=True)
    exp.add_argument("--seed", type=int, default=None)
    exp.add_argument("--threads", type=int, default=None)
    exp.add_argument("--out-dir", default=".")
    exp.set_defaults(func=_cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
