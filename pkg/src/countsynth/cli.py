"""Command-line front end: ``count-synth fit|simulate|screen|summarize``.

Option resolution order is defaults, then command-line flags, then the
``--config`` file (a JSON object whose keys mirror the flags), so a saved
run manifest can be replayed exactly with ``--config manifest.json``.

Exit codes: 0 success, 1 input or validation error, 2 convergence failure
without ``--force``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import __version__
from .data import ingest_csv, to_csv_text
from .errors import (
    ConvergenceFailure,
    CountSynthError,
    CovariableMismatch,
    IngestError,
    NoStudiesLeft,
    TooFewStudies,
)
from .kernels import BACKEND
from .mcmc import DEFAULT_SEED, McmcConfig
from .model import HyperParams, PriorSpec
from .regression import COVARIABLES, correlation_screen, fit_model
from .report import (
    build_manifest,
    render_parameters_text,
    render_screen_text,
    render_summary_text,
    write_manifest,
    write_parameters_csv,
    write_screen_csv,
    write_shrinkage_csv,
    write_summary_csv,
    write_trend_csv,
)
from .simulate import SimConfig, simulate_portfolio
from .svg import write_trend_svg


def _load_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    # a saved run manifest is itself a valid config source
    if "config" in data and "config_hash" in data:
        return data["config"]
    return data


def _resolve_seed(flag_seed, config: dict):
    if "seed" in config:
        return int(config["seed"])
    if flag_seed is not None:
        return int(flag_seed)
    env = os.environ.get("COUNT_SYNTH_SEED")
    if env is not None:
        return int(env)
    return DEFAULT_SEED


def _merge(flags: dict, config: dict, keys) -> dict:
    """Flags override defaults; the config file overrides flags."""
    out = {}
    for key, default in keys.items():
        if key in config and config[key] is not None:
            out[key] = config[key]
        elif flags.get(key) is not None:
            out[key] = flags[key]
        else:
            out[key] = default
    return out


def _covariable_list(raw) -> list[str]:
    if isinstance(raw, (list, tuple)):
        return [str(c) for c in raw]
    return [c.strip() for c in str(raw).split(",") if c.strip()]


def _out_dir(resolved: dict) -> Path:
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fit(args) -> int:
    config = _load_config_file(args.config) if args.config else {}
    flags = {
        "input": args.input, "subset": args.subset,
        "covariables": args.covariables, "chains": args.chains,
        "samples": args.samples, "adapt": args.adapt, "thin": args.thin,
        "out": args.out, "svg": args.svg or None,
        "force": args.force or None,
        "exposure_basis": args.exposure_basis,
    }
    resolved = _merge(flags, config, {
        "input": None, "subset": "all", "covariables": "year",
        "chains": 4, "samples": 20000, "adapt": 5000, "thin": 1,
        "out": "countsynth-out", "svg": False, "force": False,
        "exposure_basis": "followup", "rate_likelihood_scale": "log",
        "year_offset": 2000.0, "priors": {},
    })
    resolved["seed"] = _resolve_seed(args.seed, config)
    resolved["covariables"] = _covariable_list(resolved["covariables"])
    if resolved["input"] is None:
        print("error: --input is required for fit", file=sys.stderr)
        return 1

    ds = ingest_csv(resolved["input"])
    prior = PriorSpec.from_dict(resolved["priors"])
    mcmc_config = McmcConfig(
        n_chains=int(resolved["chains"]), n_adapt=int(resolved["adapt"]),
        n_samples=int(resolved["samples"]), thin=int(resolved["thin"]),
        seed=int(resolved["seed"]))

    report = fit_model(
        ds, covariables=resolved["covariables"], subset=resolved["subset"],
        prior=prior, mcmc_config=mcmc_config,
        year_offset=float(resolved["year_offset"]),
        exposure_basis=resolved["exposure_basis"],
        rate_likelihood_scale=resolved["rate_likelihood_scale"],
        force=bool(resolved["force"]))

    out = _out_dir(resolved)
    manifest = build_manifest(
        "fit", resolved,
        diagnostics={"max_rhat": report.diagnostics.max_rhat,
                     "min_ess": report.diagnostics.min_ess,
                     "flagged": list(report.diagnostics.flagged),
                     "n_included": report.n_included},
        backend=BACKEND)
    h = manifest["config_hash"]
    write_manifest(manifest, out / "manifest.json")
    write_parameters_csv(report, out / "parameters.csv", h)
    write_shrinkage_csv(report, out / "shrinkage.csv", h)
    if report.trend is not None:
        write_trend_csv(report, out / "trend.csv", h)
        if resolved["svg"]:
            write_trend_svg(report, out / "trend.svg")
    print(render_parameters_text(report))
    print(f"artifacts written to {out} (run {h[:12]})")
    return 0


def cmd_simulate(args) -> int:
    config = _load_config_file(args.config) if args.config else {}
    flags = {"studies": args.studies, "out": args.out}
    resolved = _merge(flags, config, {
        "studies": 55, "out": "countsynth-out",
        "truth": None, "year_range": None, "followup_range": None,
        "format_counts": None, "format_mix": None, "true_placebo_prob": None,
    })
    resolved["seed"] = _resolve_seed(args.seed, config)

    kwargs = {"n_studies": int(resolved["studies"]),
              "seed": int(resolved["seed"])}
    if resolved["truth"]:
        t = resolved["truth"]
        kwargs["truth"] = HyperParams(
            beta=tuple(t["beta"]), sigma_lambda=t["sigma_lambda"],
            mu_phi=t["mu_phi"], sigma_phi=t["sigma_phi"])
    for key in ("year_range", "followup_range", "format_counts",
                "format_mix"):
        if resolved[key] is not None:
            kwargs[key] = tuple(resolved[key])
    if resolved["true_placebo_prob"] is not None:
        kwargs["true_placebo_prob"] = float(resolved["true_placebo_prob"])
    cfg = SimConfig(**kwargs)

    ds, _truth = simulate_portfolio(cfg)
    out = _out_dir(resolved)
    manifest = build_manifest("simulate", resolved, backend=BACKEND)
    h = manifest["config_hash"]
    write_manifest(manifest, out / "manifest.json")
    (out / "simulated.csv").write_text(
        to_csv_text(ds, comment=f"run {h}"), encoding="utf-8")
    print(f"simulated {len(ds.records)} studies -> {out / 'simulated.csv'} "
          f"(run {h[:12]})")
    return 0


def cmd_screen(args) -> int:
    config = _load_config_file(args.config) if args.config else {}
    flags = {"input": args.input, "covariable": args.covariable,
             "out": args.out}
    resolved = _merge(flags, config, {
        "input": None, "covariable": None, "out": "countsynth-out",
    })
    if resolved["input"] is None:
        print("error: --input is required for screen", file=sys.stderr)
        return 1
    ds = ingest_csv(resolved["input"])

    if resolved["covariable"]:
        results = [correlation_screen(ds, resolved["covariable"])]
    else:
        results = []
        for cov in COVARIABLES:
            if cov == "year":
                continue
            try:
                results.append(correlation_screen(ds, cov))
            except TooFewStudies:
                continue
    out = _out_dir(resolved)
    manifest = build_manifest("screen", resolved, backend=BACKEND)
    h = manifest["config_hash"]
    write_manifest(manifest, out / "manifest.json")
    write_screen_csv(results, out / "screen.csv", h)
    print(render_screen_text(results))
    return 0


def cmd_summarize(args) -> int:
    config = _load_config_file(args.config) if args.config else {}
    flags = {"input": args.input, "out": args.out}
    resolved = _merge(flags, config, {"input": None, "out": "countsynth-out"})
    if resolved["input"] is None:
        print("error: --input is required for summarize", file=sys.stderr)
        return 1
    ds = ingest_csv(resolved["input"])
    out = _out_dir(resolved)
    manifest = build_manifest("summarize", resolved, backend=BACKEND)
    h = manifest["config_hash"]
    write_manifest(manifest, out / "manifest.json")
    write_summary_csv(ds, out / "summary.csv", h)
    print(render_summary_text(ds))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="count-synth",
        description="Bayesian negative-binomial meta-regression of "
                    "heterogeneously reported event-count outcomes")
    parser.add_argument("--version", action="version",
                        version=f"count-synth {__version__} ({BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (or a saved run "
                        "manifest); its values override flags")
    common.add_argument("--seed", type=int, default=None,
                        help="RNG seed (fallback: COUNT_SYNTH_SEED)")
    common.add_argument("--out", default=None, help="output directory")

    p_fit = sub.add_parser("fit", parents=[common],
                           help="fit the meta-regression model")
    p_fit.add_argument("--input", help="study table CSV")
    p_fit.add_argument("--subset", choices=["all", "true-placebo", "ics"],
                       default=None)
    p_fit.add_argument("--covariables", default=None,
                       help="comma list, e.g. year or year,sgrq")
    p_fit.add_argument("--chains", type=int, default=None)
    p_fit.add_argument("--samples", type=int, default=None)
    p_fit.add_argument("--adapt", type=int, default=None)
    p_fit.add_argument("--thin", type=int, default=None)
    p_fit.add_argument("--svg", action="store_true",
                       help="also draw the trend figure")
    p_fit.add_argument("--force", action="store_true",
                       help="report despite convergence warnings")
    p_fit.add_argument("--exposure-basis", dest="exposure_basis",
                       choices=["followup", "duration"], default=None)
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="generate a synthetic study table")
    p_sim.add_argument("--studies", type=int, default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_scr = sub.add_parser("screen", parents=[common],
                           help="correlate covariables with publication year")
    p_scr.add_argument("--input", help="study table CSV")
    p_scr.add_argument("--covariable", default=None,
                       help="single covariable (default: all reportable)")
    p_scr.set_defaults(func=cmd_screen)

    p_sum = sub.add_parser("summarize", parents=[common],
                           help="descriptive dataset summary")
    p_sum.add_argument("--input", help="study table CSV")
    p_sum.set_defaults(func=cmd_summarize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConvergenceFailure as exc:
        print(f"error: {exc} (rerun with --force to report anyway)",
              file=sys.stderr)
        return 2
    except (IngestError, NoStudiesLeft, CovariableMismatch, TooFewStudies,
            FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CountSynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
