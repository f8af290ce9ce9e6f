"""Command line front end: fit, simulate, predict, and nonparam."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .data import (
    Standardizer,
    dataset_to_frame,
    read_dataset,
    standardize_index_covariates,
    write_dataset,
)
from .exceptions import (
    ConfigurationError,
    DatasetError,
    DomainError,
    SingularVarianceError,
)
from .fitting import FitOptions, fit_model, fit_ph_linear
from .hazard import choose_cuts, interval_exposure, kaplan_meier, nelson_aalen
from .simulate import (
    ScenarioSpec,
    factorial_table,
    replicate_dataset,
    run_factorial,
    run_scenario,
    true_psi,
)
from .splines import SplineCoefficients, SplineConfig, psi

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NOCONV = 3


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage failures exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}")


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _hazard_json(baseline):
    return {"cuts": list(baseline.cuts), "rates": list(baseline.rates)}


def _long_rows(parsed):
    """One record per individual, in cluster-then-member order."""
    d = parsed.dataset
    frame = dataset_to_frame(d, parsed.cluster_ids, parsed.x_names, parsed.v_names)
    return frame


def _fit_report(outdir, parsed, scaler, args):
    dataset = parsed.dataset
    if scaler is not None:
        dataset = standardize_index_covariates(dataset)[0]
    options = FitOptions(
        n_pieces=args.pieces,
        n_interior=args.knots,
        order=args.order,
        gtol=args.gtol,
        max_iter=args.max_iter,
    )
    frame = _long_rows(parsed)
    x = dataset.x
    v = dataset.v

    if args.linear:
        fit = fit_ph_linear(dataset, options=options)
        eta = x @ fit.beta + v @ fit.alpha_tilde
        index = v @ fit.alpha
        tables = [_linear_tables(fit)]
        model = {
            "phi": fit.phi,
            "b": fit.b,
            "alpha": fit.alpha.tolist(),
            "alpha_tilde": fit.alpha_tilde.tolist(),
            "beta": fit.beta.tolist(),
            "baseline1": _hazard_json(fit.rho),
            "baseline2": _hazard_json(fit.tau),
        }
        diag = {
            "loglik": fit.loglik,
            "converged": bool(fit.converged),
            "n_iter": fit.n_iter,
            "gradient_norm": fit.gradient_norm,
            "cuts_fallback": list(fit.cuts_fallback),
        }
        baselines = (fit.rho, fit.tau)
        kind = "linear"
    else:
        fit = fit_model(dataset, options)
        p = fit.params
        index = v @ p.alpha
        eta = x @ p.beta + fit.psi_at(index.reshape(-1)).reshape(index.shape)
        natural = fit.parameter_table().assign(scale="natural")
        star = fit.transformed_table().assign(scale="transformed")
        tables = [natural, star]
        model = {
            "phi": p.phi,
            "alpha": p.alpha.tolist(),
            "beta": p.beta.tolist(),
            "gamma": p.gamma.gamma.tolist(),
            "baseline1": _hazard_json(p.rho),
            "baseline2": _hazard_json(p.tau),
            "spline": {
                "order": fit.structure.spline.order,
                "interior": list(fit.structure.spline.interior),
                "lower": fit.structure.spline.lower,
                "upper": fit.structure.spline.upper,
            },
        }
        diag = {
            "loglik": fit.loglik,
            "converged": bool(fit.converged),
            "n_iter": fit.n_iter,
            "gradient_norm": fit.gradient_norm,
            "message": fit.message,
            "cuts_fallback": list(fit.cuts_fallback),
            "extrapolation_active": bool(fit.extrapolation_active),
            "n_extrapolated": int(fit.n_extrapolated),
        }
        baselines = (p.rho, p.tau)
        kind = "single-index"

    params = pd.concat(tables, ignore_index=True)[
        ["scale", "parameter", "estimate", "se"]
    ]
    params.to_csv(outdir / "params.csv", index=False)

    cumhaz = np.empty_like(dataset.y)
    for j, baseline in enumerate(baselines):
        base = interval_exposure(dataset.y[:, j], baseline.cuts) @ np.asarray(
            baseline.rates
        )
        cumhaz[:, j] = base * np.exp(eta[:, j])
    points = frame[["cluster_id", "member", "time", "status"]].assign(
        index_value=index.reshape(-1),
        linear_predictor=eta.reshape(-1),
        cumulative_hazard=cumhaz.reshape(-1),
    )
    points["survival"] = np.exp(-points["cumulative_hazard"])
    points.to_csv(outdir / "hazard_points.csv", index=False)

    manifest = {
        "kind": kind,
        "config": {
            "pieces": args.pieces,
            "knots": args.knots,
            "order": args.order,
            "standardize": scaler is not None,
        },
        "data": {
            "n_clusters": dataset.n_clusters,
            "x_names": parsed.x_names,
            "v_names": parsed.v_names,
        },
        "standardization": scaler.to_dict() if scaler is not None else None,
        "model": model,
        "fit": diag,
    }
    _write_json(outdir / "manifest.json", manifest)
    return fit


def _linear_tables(fit):
    rows = []
    se_all = (
        np.sqrt(np.diag(fit.cov)) if fit.cov is not None else None
    )

    def se_of(block, k):
        if se_all is None:
            return np.nan
        return float(se_all[fit.slices[block]][k])

    rho, tau = fit.rho, fit.tau
    rows.append(("transformed", "varrho", float(np.log(fit.phi)), se_of("varrho", 0)))
    for k, rate in enumerate(rho.rates):
        rows.append(("transformed", f"xi_{k + 1}", float(np.log(rate)), se_of("xi", k)))
    for k, rate in enumerate(tau.rates):
        rows.append(
            ("transformed", f"zeta_{k + 1}", float(np.log(rate)), se_of("zeta", k))
        )
    for k, a in enumerate(fit.alpha_tilde):
        rows.append(
            ("transformed", f"alpha_tilde_{k + 1}", float(a), se_of("alpha_tilde", k))
        )
    for k, b in enumerate(fit.beta):
        rows.append(("transformed", f"beta_{k + 1}", float(b), se_of("beta", k)))

    # natural scale: exp transform carries se by the delta method
    rows.append(("natural", "phi", fit.phi, fit.phi * se_of("varrho", 0)))
    for k, rate in enumerate(rho.rates):
        rows.append(("natural", f"rho_{k + 1}", float(rate), rate * se_of("xi", k)))
    for k, rate in enumerate(tau.rates):
        rows.append(("natural", f"tau_{k + 1}", float(rate), rate * se_of("zeta", k)))
    for k, a in enumerate(fit.alpha_tilde):
        rows.append(
            ("natural", f"alpha_tilde_{k + 1}", float(a), se_of("alpha_tilde", k))
        )
    for k, b in enumerate(fit.beta):
        rows.append(("natural", f"beta_{k + 1}", float(b), se_of("beta", k)))
    return pd.DataFrame(rows, columns=["scale", "parameter", "estimate", "se"])


def cmd_fit(args):
    parsed = read_dataset(args.data)
    scaler = None
    if not args.no_standardize:
        scaler = Standardizer.fit(parsed.dataset.v)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    fit = _fit_report(outdir, parsed, scaler, args)
    table = pd.read_csv(outdir / "params.csv")
    n_params = int((table["scale"] == "natural").sum())
    status = "yes" if fit.converged else "NO"
    print(
        f"fitted {parsed.dataset.n_clusters} clusters: loglik {fit.loglik:.4f}, "
        f"converged {status}, {n_params} parameters"
    )
    print(f"report written to {outdir}")
    if not fit.converged:
        print("warning: optimizer did not converge; report is partial", file=sys.stderr)
        return EXIT_NOCONV
    return EXIT_OK


def cmd_simulate(args):
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    options = FitOptions(
        n_pieces=args.pieces,
        n_interior=args.knots,
        order=args.order,
        gtol=args.gtol,
        max_iter=args.max_iter,
    )
    if args.factorial:
        results = run_factorial(args.replicates, seed=args.seed, options=options)
        table = factorial_table(results)
        table.to_csv(outdir / "summary.csv", index=False)
        meta = {
            "mode": "factorial",
            "replicates_per_cell": args.replicates,
            "seed": args.seed,
            "cells": len(results),
            "high_failure_cells": int(table["high_failure"].sum()),
        }
        _write_json(outdir / "meta.json", meta)
        print(f"factorial summary for {len(results)} cells written to {outdir}")
        return EXIT_OK

    spec = ScenarioSpec(
        n_clusters=args.n, phi=args.phi, shape=args.shape, censoring=args.censoring
    )
    result = run_scenario(spec, args.replicates, seed=args.seed, options=options)
    result.estimates.to_csv(outdir / "estimates.csv", index=False)
    result.summary().to_csv(outdir / "summary.csv", index=False)
    curves = result.psi_curves
    curves = curves[np.isfinite(curves).all(axis=1)]
    if curves.size:
        mean = curves.mean(axis=0)
        lo = np.quantile(curves, 0.025, axis=0)
        hi = np.quantile(curves, 0.975, axis=0)
    else:
        mean = lo = hi = np.full(result.psi_grid.size, np.nan)
    band = pd.DataFrame(
        {
            "u": result.psi_grid,
            "truth": true_psi(result.psi_grid),
            "mean": mean,
            "q025": lo,
            "q975": hi,
        }
    )
    band.to_csv(outdir / "psi_band.csv", index=False)
    if args.write_data:
        datadir = outdir / "data"
        datadir.mkdir(exist_ok=True)
        for k in range(args.replicates):
            dataset = replicate_dataset(spec, k, seed=args.seed,
                                        censor_time=result.censor_time)
            write_dataset(datadir / f"rep_{k:03d}.csv", dataset)
    meta = {
        "mode": "scenario",
        "spec": {
            "n_clusters": spec.n_clusters,
            "phi": spec.phi,
            "shape": spec.shape,
            "censoring": spec.censoring,
        },
        "replicates": args.replicates,
        "seed": args.seed,
        "censor_time": result.censor_time,
        "convergence_rate": result.convergence_rate,
        "high_failure": bool(result.high_failure),
    }
    _write_json(outdir / "meta.json", meta)
    if result.high_failure:
        print(
            f"warning: only {result.convergence_rate:.0%} of replicates converged",
            file=sys.stderr,
        )
    print(
        f"{args.replicates} replicates at n={spec.n_clusters}, phi={spec.phi}, "
        f"shape={spec.shape}, censoring={spec.censoring:.0%} written to {outdir}"
    )
    return EXIT_OK


def _load_manifest(fit_dir):
    path = Path(fit_dir) / "manifest.json"
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DatasetError(f"no manifest.json under {fit_dir}")
    except json.JSONDecodeError as exc:
        raise DatasetError(f"unreadable manifest {path}: {exc}")


def cmd_predict(args):
    manifest = _load_manifest(args.fit)
    model = manifest["model"]
    p, q = len(model["beta"]), len(model["alpha"])
    if len(args.x) != p:
        raise ConfigurationError(f"--x expects {p} values, got {len(args.x)}")
    if len(args.v) != q:
        raise ConfigurationError(f"--v expects {q} values, got {len(args.v)}")

    v = np.asarray(args.v, dtype=float)
    if manifest.get("standardization"):
        v = Standardizer.from_dict(manifest["standardization"]).transform(v)
    x = np.asarray(args.x, dtype=float)
    baseline = model["baseline1"] if args.margin == 1 else model["baseline2"]
    cuts = np.asarray(baseline["cuts"], dtype=float)
    rates = np.asarray(baseline["rates"], dtype=float)

    extrapolated = False
    if manifest["kind"] == "single-index":
        cfg = SplineConfig(
            order=model["spline"]["order"],
            interior=tuple(model["spline"]["interior"]),
            lower=model["spline"]["lower"],
            upper=model["spline"]["upper"],
        )
        index = float(v @ np.asarray(model["alpha"]))
        extrapolated = not (cfg.lower <= index <= cfg.upper)
        effect = float(psi(index, cfg, SplineCoefficients(np.asarray(model["gamma"]))))
    else:
        index = float(v @ np.asarray(model["alpha"]))
        effect = float(v @ np.asarray(model["alpha_tilde"]))
    eta = float(x @ np.asarray(model["beta"])) + effect

    t_max = args.t_max if args.t_max is not None else 2.0 * cuts[-1]
    if t_max <= 0:
        raise ConfigurationError(f"--t-max must be positive, got {t_max}")
    times = np.linspace(0.0, t_max, args.grid)
    cumhaz = (interval_exposure(times, cuts) @ rates) * np.exp(eta)
    curve = pd.DataFrame(
        {
            "time": times,
            "cumulative_hazard": cumhaz,
            "survival": np.exp(-cumhaz),
            "extrapolated": np.full(times.shape, int(extrapolated)),
        }
    )
    out = Path(args.out)
    curve.to_csv(out, index=False)
    _write_json(
        out.with_suffix(out.suffix + ".json"),
        {
            "x": list(map(float, args.x)),
            "v": list(map(float, args.v)),
            "margin": args.margin,
            "kind": manifest["kind"],
            "index_value": index,
            "linear_predictor": eta,
            "extrapolated": extrapolated,
        },
    )
    if extrapolated:
        print(
            "warning: index value outside the fitted spline domain; "
            "curve uses the linear extension",
            file=sys.stderr,
        )
    print(f"{args.grid} curve points written to {out}")
    return EXIT_OK


def cmd_nonparam(args):
    parsed = read_dataset(args.data)
    j = args.margin - 1
    times = parsed.dataset.y[:, j]
    status = parsed.dataset.delta[:, j]
    km = kaplan_meier(times, status)
    na = nelson_aalen(times, status)
    cuts, fallback = choose_cuts(times, status, args.pieces)
    steps = pd.DataFrame(
        {
            "time": km.jump_times,
            "km_survival": km.values,
            "na_cumhaz": na.values,
        }
    )
    out = Path(args.out)
    steps.to_csv(out, index=False)
    _write_json(
        out.with_suffix(out.suffix + ".json"),
        {
            "margin": args.margin,
            "n_individuals": int(times.size),
            "n_events": int(status.sum()),
            "pieces": args.pieces,
            "interior_cuts": [float(c) for c in cuts[1:]],
            "cuts_fallback": bool(fallback),
        },
    )
    print(
        f"{len(steps)} event times, {len(cuts) - 1} interior cut points "
        f"written to {out}"
    )
    return EXIT_OK


def _add_config_flags(parser):
    parser.add_argument("--pieces", type=int, default=4,
                        help="baseline hazard pieces per margin")
    parser.add_argument("--knots", type=int, default=3,
                        help="interior spline knots")
    parser.add_argument("--order", type=int, default=3, help="spline order")
    parser.add_argument("--gtol", type=float, default=1e-5,
                        help="gradient max-norm tolerance")
    parser.add_argument("--max-iter", type=int, default=500,
                        help="optimizer iteration cap")


def build_parser():
    parser = _Parser(prog="siph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the model to a dataset file")
    p_fit.add_argument("data", help="delimited dataset file")
    p_fit.add_argument("--out", default="fit_report", help="output directory")
    _add_config_flags(p_fit)
    p_fit.add_argument("--no-standardize", action="store_true",
                       help="skip centering/scaling of the v_ covariates")
    p_fit.add_argument("--linear", action="store_true",
                       help="fit the linear-index reference model instead")
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="run the simulation study")
    p_sim.add_argument("--out", default="sim_report", help="output directory")
    p_sim.add_argument("--n", type=int, default=200, help="clusters per dataset")
    p_sim.add_argument("--phi", type=float, default=0.5,
                       help="association parameter")
    p_sim.add_argument("--shape", type=float, default=1.5,
                       help="baseline Weibull shape")
    p_sim.add_argument("--censoring", type=float, default=0.5,
                       help="target censoring rate")
    p_sim.add_argument("--replicates", type=int, default=20)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--factorial", action="store_true",
                       help="run the full 24-cell design instead")
    p_sim.add_argument("--write-data", action="store_true",
                       help="also write each replicate dataset")
    _add_config_flags(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_pred = sub.add_parser("predict", help="curves for one covariate row")
    p_pred.add_argument("--fit", required=True,
                        help="directory written by the fit command")
    p_pred.add_argument("--x", type=_float_list, required=True,
                        help="comma-separated linear covariates")
    p_pred.add_argument("--v", type=_float_list, required=True,
                        help="comma-separated index covariates")
    p_pred.add_argument("--margin", type=int, choices=(1, 2), default=1)
    p_pred.add_argument("--t-max", type=float, default=None,
                        help="grid upper end (default: twice the last cut)")
    p_pred.add_argument("--grid", type=int, default=200, help="grid size")
    p_pred.add_argument("--out", default="curve.csv", help="output file")
    p_pred.set_defaults(func=cmd_predict)

    p_np = sub.add_parser("nonparam",
                          help="product-limit and cumulative-hazard steps")
    p_np.add_argument("data", help="delimited dataset file")
    p_np.add_argument("--margin", type=int, choices=(1, 2), default=1)
    p_np.add_argument("--pieces", type=int, default=4,
                      help="pieces for the cut-point report")
    p_np.add_argument("--out", default="nonparam.csv", help="output file")
    p_np.set_defaults(func=cmd_nonparam)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, DomainError, SingularVarianceError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
