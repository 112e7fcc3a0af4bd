"""Command-line entry point: fit, cluster, simulate, diagnose, compare.

Exit codes: 0 on success (including non-convergent fits, which are results,
not errors), 1 for IO/schema problems, 2 for identifiability violations.
Failures print a machine-readable JSON error to stderr.  The environment
variable ``AGGLOAD_CONFIG`` may point to a JSON file of default flag values.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as aio
from .clustering import MixtureConfig, fit_mixture
from .diagnostics import bic_of, fitted_values, fmsre_fit, \
    likelihood_ratio_test, relative_residuals
from .errors import AggloadError, IdentifiabilityError, SchemaError
from .model import ModelConfig, fit
from .simulate import FitPlan, ScenarioSpec, TrueParameters, generate_panel, \
    run_study

_EXIT_IO = 1
_EXIT_IDENT = 2


def _env_defaults() -> dict:
    path = os.environ.get("AGGLOAD_CONFIG")
    if not path:
        return {}
    with open(path) as handle:
        defaults = json.load(handle)
    if not isinstance(defaults, dict):
        raise SchemaError("AGGLOAD_CONFIG must contain a JSON object")
    return defaults


def _add_data_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--loads", required=True, help="loads CSV")
    parser.add_argument("--market", required=True, help="market CSV")
    parser.add_argument("--temperature", help="coarse temperature CSV")
    parser.add_argument("--locations", help="substation,location map CSV")
    parser.add_argument("--covariates", help="covariates CSV")
    parser.add_argument("--horizon", type=float, default=24.0,
                        help="daily time horizon T (default 24)")


def _add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--output-dir", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)


def build_parser(defaults: dict | None = None) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aggload",
        description="Disaggregate substation load panels into typical curves,"
                    " cluster substations and run simulation studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = []

    def _apply_defaults():
        # parser-level defaults beat argument-level ones, so the env-file
        # values must be installed on every subparser
        if defaults:
            for sp in subparsers:
                sp.set_defaults(**defaults)

    p_fit = sub.add_parser("fit", help="fit one aggregated-data model")
    subparsers.append(p_fit)
    _add_data_arguments(p_fit)
    _add_common_arguments(p_fit)
    p_fit.add_argument("--covariance", default="homogeneous",
                       choices=["homogeneous-uniform", "homogeneous", "complete"])
    p_fit.add_argument("--time-basis", type=int, default=24)
    p_fit.add_argument("--temp-basis", type=int, default=None,
                       help="tensor covariate basis size; omit for no surface")
    p_fit.add_argument("--variance-basis", type=int, default=6)
    p_fit.add_argument("--covariate", action="append", default=None,
                       help="covariate name to include (repeatable); default all")
    p_fit.add_argument("--xi", type=float, default=1e-6)
    p_fit.add_argument("--max-iter", type=int, default=200)
    p_fit.add_argument("--init-from", help="fit.json providing covariance starts")

    p_cl = sub.add_parser("cluster", help="fit the mixture clustering model")
    subparsers.append(p_cl)
    _add_data_arguments(p_cl)
    _add_common_arguments(p_cl)
    p_cl.add_argument("--clusters", type=int, required=True)
    p_cl.add_argument("--trials", type=int, default=10)
    p_cl.add_argument("--covariance", default="homogeneous",
                      choices=["homogeneous-uniform", "homogeneous", "complete"])
    p_cl.add_argument("--time-basis", type=int, default=24)
    p_cl.add_argument("--variance-basis", type=int, default=6)
    p_cl.add_argument("--xi", type=float, default=1e-6)
    p_cl.add_argument("--max-iter", type=int, default=200)

    p_sim = sub.add_parser("simulate", help="generate scenario panels; "
                                            "optionally fit and score them")
    subparsers.append(p_sim)
    _add_common_arguments(p_sim)
    p_sim.add_argument("--scenario", type=int, required=True, choices=range(1, 9))
    p_sim.add_argument("--replicates", type=int, default=None)
    p_sim.add_argument("--days", type=int, default=None)
    p_sim.add_argument("--grid-minutes", type=float, default=None)
    p_sim.add_argument("--noise-scale", type=float, default=1.0)
    p_sim.add_argument("--study", choices=["none", "single", "cluster"],
                       default="none",
                       help="also fit models per replicate and write a report")
    p_sim.add_argument("--time-basis", type=int, default=12)
    p_sim.add_argument("--temp-basis", type=int, default=4)
    p_sim.add_argument("--variance-basis", type=int, default=6)
    p_sim.add_argument("--trials", type=int, default=10)

    p_diag = sub.add_parser("diagnose", help="residual diagnostics of a fit")
    subparsers.append(p_diag)
    _add_data_arguments(p_diag)
    _add_common_arguments(p_diag)
    p_diag.add_argument("--fit", required=True, help="fit.json to diagnose")
    p_diag.add_argument("--plots", action="store_true",
                        help="also write PNG plots (needs matplotlib)")

    p_cmp = sub.add_parser("compare", help="LRT/BIC between two fit documents")
    subparsers.append(p_cmp)
    p_cmp.add_argument("--nested", required=True)
    p_cmp.add_argument("--larger", required=True)
    p_cmp.add_argument("--output", default=None,
                       help="write the report here instead of stdout")

    _apply_defaults()
    return parser


def _ingest_from_args(args) -> tuple:
    return aio.ingest(
        args.loads, args.market,
        temperature_path=args.temperature,
        locations_path=args.locations,
        covariates_path=args.covariates,
        horizon=args.horizon,
    )


def _model_config_from_args(args, panel) -> ModelConfig:
    if args.covariate is not None:
        covariates = tuple(args.covariate)
    else:
        covariates = tuple(panel.scalar_covariates) + \
            tuple(panel.functional_covariates)
    return ModelConfig.for_panel(
        panel,
        n_time_basis=args.time_basis,
        covariance=args.covariance,
        n_covariate_basis=getattr(args, "temp_basis", None),
        n_variance_basis=args.variance_basis,
        covariates=covariates,
        xi=args.xi,
        max_outer_iter=args.max_iter,
    )


def cmd_fit(args) -> int:
    panel, market = _ingest_from_args(args)
    config = _model_config_from_args(args, panel)
    init_cov = None
    if args.init_from:
        loaded = aio.read_result_json(args.init_from)
        prev = loaded.cov_params()
        from .simulate import _lift_cov_params

        init_cov = _lift_cov_params(prev, config)
    result = fit(panel, market, config, init_cov=init_cov)
    path = aio.write_json(aio.fit_to_dict(result),
                          Path(args.output_dir) / "fit.json")
    print(f"wrote {path} (converged={result.converged}, "
          f"loglik={result.loglik:.2f}, bic={bic_of(result):.2f})")
    return 0


def cmd_cluster(args) -> int:
    panel, market = _ingest_from_args(args)
    config = ModelConfig.for_panel(
        panel,
        n_time_basis=args.time_basis,
        covariance=args.covariance,
        n_variance_basis=args.variance_basis,
        xi=args.xi,
        max_outer_iter=args.max_iter,
    )
    mixture = MixtureConfig(
        model=config,
        n_clusters=args.clusters,
        n_trials=args.trials,
        xi=args.xi,
        max_iter=args.max_iter,
        seed=args.seed,
    )
    result = fit_mixture(panel, market, mixture)
    path = aio.write_json(aio.mixture_to_dict(result),
                          Path(args.output_dir) / "mixture.json")
    print(f"wrote {path} (converged={result.converged}, "
          f"assignments={[int(a) + 1 for a in result.assignments]})")
    return 0


def cmd_simulate(args) -> int:
    spec = ScenarioSpec.preset(
        args.scenario, seed=args.seed, replicates=args.replicates,
        days=args.days, grid_minutes=args.grid_minutes,
        noise_scale=args.noise_scale,
    )
    truth = TrueParameters.preset()
    out = Path(args.output_dir)
    children = np.random.SeedSequence(spec.seed).spawn(spec.replicates)
    for r in range(spec.replicates):
        rng = np.random.default_rng(children[r])
        panel, ground = generate_panel(spec, truth, rng)
        rep_dir = out / f"replicate-{r + 1:02d}"
        if hasattr(ground, "weather"):
            aio.write_panel_csv(
                rep_dir, panel, ground.market,
                temperature_coarse=ground.weather.temperature_coarse,
                coarse_hours=ground.weather.coarse_hours,
                location_names=ground.weather.location_names,
                location_of=ground.location_of,
            )
            truth_doc = {
                "kind": "surface",
                "gamma": ground.gamma.tolist(),
                "omega": ground.omega.tolist(),
            }
        else:
            aio.write_panel_csv(rep_dir, panel, ground.market)
            truth_doc = {
                "kind": "cluster",
                "assignment": [int(a) + 1 for a in ground.assignment],
                "sigma": ground.sigma.tolist(),
                "omega": ground.omega.tolist(),
            }
        aio.write_json({"schema_version": aio.SCHEMA_VERSION, **truth_doc},
                       rep_dir / "truth.json")
    print(f"wrote {spec.replicates} replicate bundle(s) under {out}")

    if args.study == "single":
        plans = [
            FitPlan(name="homogeneous", covariance="homogeneous",
                    n_time_basis=args.time_basis,
                    n_covariate_basis=args.temp_basis,
                    n_variance_basis=args.variance_basis),
            FitPlan(name="complete", covariance="complete",
                    n_time_basis=args.time_basis,
                    n_covariate_basis=args.temp_basis,
                    n_variance_basis=args.variance_basis,
                    init_from="homogeneous"),
        ]
        report = run_study(spec, plans,
                           nested_pairs=[("homogeneous", "complete")],
                           threads=args.threads)
    elif args.study == "cluster":
        plans = [
            FitPlan(name="clusters2", kind="mixture", n_clusters=2,
                    n_trials=args.trials, n_time_basis=args.time_basis),
            FitPlan(name="clusters3", kind="mixture", n_clusters=3,
                    n_trials=args.trials, n_time_basis=args.time_basis),
        ]
        report = run_study(spec, plans, threads=args.threads)
    else:
        return 0
    path = out / "study.json"
    path.write_text(report.to_json() + "\n")
    print(f"wrote {path}")
    return 0


def cmd_diagnose(args) -> int:
    loaded = aio.read_result_json(args.fit)
    if loaded.kind != "fit":
        raise SchemaError("diagnose expects a single-model fit document")
    panel, market = _ingest_from_args(args)
    config = loaded.model_config()

    from .model import FitResult, Workspace

    ws = Workspace(panel, market, config)
    result = FitResult(
        beta=loaded.beta(),
        cov_params=loaded.cov_params(),
        loglik=loaded.loglik,
        trace=list(loaded.payload["trace"]),
        converged=loaded.converged,
        n_outer_iter=int(loaded.payload["n_outer_iter"]),
        config=config,
        market=market,
        n_days=panel.n_days,
        n_substations=panel.n_substations,
        times=panel.times,
        horizon=panel.horizon,
        normal_matrix=np.eye(loaded.beta().size),
    )
    yhat = ws.mean_curves(result.beta)
    resid = relative_residuals(yhat, panel.loads)
    fmsre = fmsre_fit(yhat, panel.loads, panel.horizon)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for i, day in enumerate(panel.days):
        for j, sub in enumerate(panel.substations):
            for n, t in enumerate(panel.times):
                rows.append([sub, day, format(t, ".17g"),
                             format(resid.curves[i, j, n], ".17g")])
    import csv as _csv

    with open(out / "residuals.csv", "w", newline="") as handle:
        writer = _csv.writer(handle)
        writer.writerow(["substation", "day", "time", "relative_residual"])
        writer.writerows(rows)

    doc = {
        "schema_version": aio.SCHEMA_VERSION,
        "kind": "diagnostics",
        "loglik": loaded.loglik,
        "bic": bic_of(loaded),
        "fit_fmsre": {sub: float(v)
                      for sub, v in zip(panel.substations, fmsre)},
        "median_relative_residual": resid.median.tolist(),
        "converged": loaded.converged,
    }
    aio.write_json(doc, out / "diagnostics.json")
    if args.plots:
        _write_plots(out, panel, result)
    print(f"wrote {out / 'diagnostics.json'} and {out / 'residuals.csv'}")
    return 0


def _write_plots(out: Path, panel, result) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .model import typical_curve

    ts = np.linspace(panel.times[0], panel.times[-1], 241)
    fig, axes = plt.subplots(1, result.market.n_types, figsize=(11, 4),
                             squeeze=False)
    v_mid = None
    if result.config.tensor:
        lo, hi = result.config.covariate_basis.domain
        v_mid = 0.5 * (lo + hi)
    for c, ax in enumerate(axes[0]):
        band = typical_curve(result, c, ts, v=v_mid)
        ax.plot(ts, band.values, color="tab:blue")
        ax.fill_between(ts, band.lower, band.upper, alpha=0.3,
                        color="tab:blue")
        ax.set_title(f"typical curve: {result.market.types[c]}")
        ax.set_xlabel("hour")
        ax.set_ylabel("kWh")
    fig.tight_layout()
    fig.savefig(out / "typical_curves.png", dpi=120)
    plt.close(fig)

    from .diagnostics import fitted_values as _fitted

    yhat = _fitted(result, panel, result.market)
    rel = (yhat - panel.loads) / np.where(panel.loads == 0, np.nan,
                                          panel.loads)
    fig, ax = plt.subplots(figsize=(9, 4))
    for i in range(panel.n_days):
        for j in range(panel.n_substations):
            ax.plot(panel.times, rel[i, j], color="gray", alpha=0.2, lw=0.5)
    ax.axhline(0.0, color="magenta")
    ax.set_xlabel("hour")
    ax.set_ylabel("relative residual")
    fig.tight_layout()
    fig.savefig(out / "residual_fan.png", dpi=120)
    plt.close(fig)


def cmd_compare(args) -> int:
    first = aio.read_result_json(args.nested)
    second = aio.read_result_json(args.larger)
    doc = {
        "schema_version": aio.SCHEMA_VERSION,
        "kind": "comparison",
        "bic_nested": bic_of(first),
        "bic_larger": bic_of(second),
        "bic_difference": bic_of(first) - bic_of(second),
    }
    if second.n_parameters > first.n_parameters:
        report = likelihood_ratio_test(first, second)
        doc["lrt"] = {
            "statistic": report.statistic,
            "df": report.df,
            "p_value": report.p_value,
            "warning": report.warning,
        }
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return 0


_COMMANDS = {
    "fit": cmd_fit,
    "cluster": cmd_cluster,
    "simulate": cmd_simulate,
    "diagnose": cmd_diagnose,
    "compare": cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    try:
        defaults = _env_defaults()
    except Exception as exc:
        _print_error("schema", f"bad AGGLOAD_CONFIG: {exc}")
        return _EXIT_IO
    parser = build_parser(defaults)
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except IdentifiabilityError as exc:
        _print_error(exc.code, str(exc))
        return _EXIT_IDENT
    except (SchemaError, OSError) as exc:
        code = getattr(exc, "code", "io")
        _print_error(code, str(exc))
        return _EXIT_IO
    except AggloadError as exc:
        _print_error(exc.code, str(exc))
        return _EXIT_IO


def _print_error(code: str, message: str) -> None:
    json.dump({"error": {"code": code, "message": message}}, sys.stderr)
    sys.stderr.write("\n")


if __name__ == "__main__":
    sys.exit(main())
