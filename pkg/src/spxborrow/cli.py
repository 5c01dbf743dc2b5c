"""Command-line front end.

Subcommands: ``fit`` (posterior for the new trial's control rate), ``ess``
(same fit reported as a borrowing credit in effective patients), ``design``
(interim Stage-2 sizing), ``simulate`` (replicated operating
characteristics), and ``sweep`` (model reaction across hypothetical interim
outcomes). All randomness derives from ``--seed``; identical invocations
produce byte-identical outputs.

Exit codes: 0 success, 2 usage, 3 configuration, 4 data validation,
5 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .design import (
    DesignConfig,
    ess_moment_match,
    run_adaptive_trial,
)
from .inference import (
    McmcConfig,
    fit_independent,
    fit_rmap,
    fit_spx,
    summarize,
)
from .io import (
    ConfigError,
    DataValidationError,
    ReportBundle,
    RunConfig,
    emit_report,
    fixture_path,
    load_historical_csv,
    load_run_config,
)
from .model import Dataset
from .simulate import ScenarioConfig, aggregate, run_replicates, sweep_observed_rate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_RUNTIME = 5

_DEFAULT_SWEEP_RATES = tuple(round(0.10 + 0.02 * k, 2) for k in range(21))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spxborrow",
        description="Historical-control borrowing: fits, adaptive sizing, "
        "and operating-characteristics simulation.",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for name, help_text in (
        ("fit", "posterior for the new trial's control rate"),
        ("ess", "moment-matched effective sample size of the fit"),
        ("design", "interim Stage-2 sample-size re-estimation"),
        ("simulate", "replicated-trial operating characteristics"),
        ("sweep", "model reaction across hypothetical interim outcomes"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--model", choices=("spx", "rmap", "independent"))
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument(
            "--format", choices=("table", "delimited", "structured"), dest="fmt"
        )
        p.add_argument("--profile", choices=("fast", "analysis"))
        if name in ("fit", "ess", "design", "sweep"):
            p.add_argument("--data", help="trial table CSV (default: bundled fixture)")
            p.add_argument("--new-y", type=int, dest="new_y")
            p.add_argument("--new-n", type=int, dest="new_n")
        if name in ("design", "simulate", "sweep"):
            p.add_argument("--n-max", type=int, dest="n_max")
        if name == "simulate":
            p.add_argument("--scenario", type=int, choices=(1, 2, 3, 4))
            p.add_argument("--design", choices=("fixed", "adaptive"), dest="trial_design")
            p.add_argument("--replicates", type=int)
        if name == "sweep":
            p.add_argument("--n", type=int, dest="sweep_n")
            p.add_argument("--rate-min", type=float, dest="rate_min")
            p.add_argument("--rate-max", type=float, dest="rate_max")
            p.add_argument("--rate-step", type=float, dest="rate_step")
    return parser


def _effective_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        cfg = load_run_config(args.config)
        if cfg.mode != args.mode:
            raise ConfigError(
                f"config mode {cfg.mode!r} does not match subcommand {args.mode!r}"
            )
    else:
        cfg = RunConfig(mode=args.mode)
    updates: dict[str, object] = {}
    if args.model is not None:
        updates["model"] = args.model
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out"] = args.out
    if args.fmt is not None:
        updates["report_format"] = args.fmt
    if getattr(args, "data", None) is not None:
        updates["data"] = args.data
    if getattr(args, "replicates", None) is not None:
        updates["replicates"] = args.replicates
    if getattr(args, "trial_design", None) is not None:
        updates["trial_design"] = args.trial_design
    if getattr(args, "scenario", None) is not None:
        updates["scenario"] = ScenarioConfig.from_scenario(args.scenario)
    if getattr(args, "n_max", None) is not None:
        base = cfg.design
        updates["design"] = (
            replace(base, n_max=args.n_max, n_stage1=None)
            if base is not None
            else DesignConfig(n_max=args.n_max)
        )
    if getattr(args, "sweep_n", None) is not None:
        updates["sweep_n"] = args.sweep_n
    if getattr(args, "rate_min", None) is not None:
        lo = args.rate_min
        hi = args.rate_max if args.rate_max is not None else 0.50
        step = args.rate_step if args.rate_step is not None else 0.02
        count = int(round((hi - lo) / step)) + 1
        updates["sweep_rates"] = tuple(round(lo + k * step, 10) for k in range(count))
    new_trial = dict(cfg.new_trial or {})
    if getattr(args, "new_y", None) is not None:
        new_trial["y"] = args.new_y
    if getattr(args, "new_n", None) is not None:
        new_trial["n"] = args.new_n
    if new_trial:
        updates["new_trial"] = new_trial
    cfg = replace(cfg, **updates)
    return cfg


def _mcmc_for(cfg: RunConfig, args: argparse.Namespace, default_fast: bool) -> McmcConfig:
    if args.profile is not None:
        mc = McmcConfig.fast() if args.profile == "fast" else McmcConfig()
    elif cfg.mcmc is not None:
        mc = cfg.mcmc
    else:
        mc = McmcConfig.fast() if default_fast else McmcConfig()
    return mc.with_seed(cfg.seed)


def _load_dataset(cfg: RunConfig) -> Dataset:
    path = Path(cfg.data) if cfg.data not in (None, "fixture") else fixture_path()
    return load_historical_csv(path, cfg.new_trial)


def _fit_draws(cfg: RunConfig, dataset: Dataset, mc: McmcConfig):
    if cfg.model == "spx":
        return fit_spx(dataset, cfg.spx, mc)
    if cfg.model == "rmap":
        return fit_rmap(dataset, cfg.rmap, mc)
    return fit_independent(dataset.new_trial, mc)


def _out_dir(cfg: RunConfig) -> Path:
    return Path(cfg.out) if cfg.out is not None else Path("spxborrow_out")


def _fit_payload(cfg: RunConfig, dataset: Dataset, draws, summary) -> dict:
    return {
        "model": cfg.model,
        "seed": cfg.seed,
        "new_trial": {"y": dataset.new_trial.y, "n": dataset.new_trial.n},
        "posterior": {
            "mean": summary.mean,
            "variance": summary.variance,
            "level": summary.level,
            "lower": summary.lower,
            "upper": summary.upper,
            "width": summary.width,
        },
        "submodel_probabilities": {
            "hist": draws.rb_weights[0],
            "reg": draws.rb_weights[1],
            "ind": draws.rb_weights[2],
        },
        "acceptance_rates": dict(sorted(draws.diagnostics.items())),
    }


def _run_fit(cfg: RunConfig, args: argparse.Namespace) -> int:
    dataset = _load_dataset(cfg)
    if not dataset.new_trial.observed:
        raise DataValidationError("fit requires the new trial's y and n")
    mc = _mcmc_for(cfg, args, default_fast=False)
    draws = _fit_draws(cfg, dataset, mc)
    summary = summarize(draws)
    payload = _fit_payload(cfg, dataset, draws, summary)
    files = emit_report(ReportBundle(fit=payload), cfg.report_format, _out_dir(cfg))
    print(
        f"{cfg.model}: psi mean {summary.mean:.3f} "
        f"[{summary.lower:.3f}, {summary.upper:.3f}] "
        f"p*(hist,reg,ind) = ({draws.rb_weights[0]:.3f}, "
        f"{draws.rb_weights[1]:.3f}, {draws.rb_weights[2]:.3f})"
    )
    for f in files:
        print(f"wrote {f}")
    return EXIT_OK


def _run_ess(cfg: RunConfig, args: argparse.Namespace) -> int:
    dataset = _load_dataset(cfg)
    if not dataset.new_trial.observed:
        raise DataValidationError("ess requires the new trial's y and n")
    mc = _mcmc_for(cfg, args, default_fast=False)
    draws = _fit_draws(cfg, dataset, mc)
    summary = summarize(draws)
    n_eff = ess_moment_match(draws, dataset.new_trial.n)
    payload = _fit_payload(cfg, dataset, draws, summary)
    payload["n_eff"] = n_eff
    files = emit_report(ReportBundle(fit=payload), cfg.report_format, _out_dir(cfg))
    print(f"{cfg.model}: n_eff {n_eff:.2f} (current n = {dataset.new_trial.n})")
    for f in files:
        print(f"wrote {f}")
    return EXIT_OK


def _run_design(cfg: RunConfig, args: argparse.Namespace) -> int:
    dataset = _load_dataset(cfg)
    if not dataset.new_trial.observed:
        raise DataValidationError("design requires the Stage-1 y and n")
    n1 = dataset.new_trial.n
    if cfg.design is not None:
        dc = replace(cfg.design, n_stage1=n1)
    else:
        dc = DesignConfig(n_max=2 * n1, n_stage1=n1)
    mc = _mcmc_for(cfg, args, default_fast=False)
    plan = run_adaptive_trial(
        dataset, dc, mc, method=cfg.model, hp=cfg.spx, rp=cfg.rmap
    )
    payload = {
        "model": cfg.model,
        "seed": cfg.seed,
        "stage1_n": dc.n_stage1,
        "n_max": dc.n_max,
        "ess": plan.ess,
        "stage2_n": plan.stage2_n,
        "total_n": plan.total_n,
    }
    files = emit_report(ReportBundle(fit=payload), cfg.report_format, _out_dir(cfg))
    print(
        f"{cfg.model}: n_eff {plan.ess:.1f} -> stage-2 size {plan.stage2_n} "
        f"(total {plan.total_n} of target {dc.n_max})"
    )
    for f in files:
        print(f"wrote {f}")
    return EXIT_OK


def _run_simulate(cfg: RunConfig, args: argparse.Namespace) -> int:
    if cfg.scenario is None:
        raise ConfigError("simulate requires --scenario or a scenario section")
    dc = cfg.design if cfg.design is not None else DesignConfig(n_max=100)
    mc = _mcmc_for(cfg, args, default_fast=True)
    records = run_replicates(
        cfg.scenario,
        cfg.model,
        cfg.trial_design,
        dc,
        mc,
        cfg.replicates,
        master_seed=cfg.seed,
        hp=cfg.spx,
        rp=cfg.rmap,
    )
    oc = aggregate(records)
    label = f"{cfg.model}_{cfg.trial_design}"
    files = emit_report(
        ReportBundle(oc={label: oc}, replicates={label: records}),
        cfg.report_format,
        _out_dir(cfg),
    )
    print(
        f"scenario {cfg.scenario.scenario_id} {label}: size {oc.mean_size:.1f} "
        f"rmse {oc.rmse:.3f} coverage {oc.coverage:.1f} width {oc.width:.3f} "
        f"type1 {oc.type1:.1f} power {oc.power:.1f} ({oc.n_replicates} replicates)"
    )
    for f in files:
        print(f"wrote {f}")
    return EXIT_OK


def _run_sweep(cfg: RunConfig, args: argparse.Namespace) -> int:
    dataset = _load_dataset(cfg)
    n = cfg.sweep_n
    if n is None:
        n = dataset.new_trial.n if dataset.new_trial.n is not None else 75
    rates = cfg.sweep_rates if cfg.sweep_rates is not None else _DEFAULT_SWEEP_RATES
    if cfg.design is not None:
        dc = replace(cfg.design, n_stage1=n)
    else:
        dc = DesignConfig(n_max=2 * n, n_stage1=n)
    mc = _mcmc_for(cfg, args, default_fast=True)
    points = sweep_observed_rate(
        dataset, cfg.model, list(rates), n, dc, mc, seed=cfg.seed,
        hp=cfg.spx, rp=cfg.rmap,
    )
    files = emit_report(ReportBundle(sweep=points), cfg.report_format, _out_dir(cfg))
    smallest = min(points, key=lambda p: p.total_n)
    print(
        f"{cfg.model}: swept {len(points)} rates at n={n}; "
        f"smallest total {smallest.total_n} at observed rate "
        f"{smallest.observed_rate:.2f}"
    )
    for f in files:
        print(f"wrote {f}")
    return EXIT_OK


_RUNNERS = {
    "fit": _run_fit,
    "ess": _run_ess,
    "design": _run_design,
    "simulate": _run_simulate,
    "sweep": _run_sweep,
}


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = _effective_config(args)
        return _RUNNERS[args.mode](cfg, args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataValidationError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - single CLI failure boundary
        print(f"error: runtime: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
