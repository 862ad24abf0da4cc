"""Command-line entry point wiring every subsystem.

Subcommands: simulate, fit, sbc, prior, metrics, serve.  All configuration
comes from JSON files validated against the shipped schemas; every run
writes a manifest that suffices to re-run the command identically.  All
randomness is seeded explicitly.

Exit codes: 0 success, 2 configuration/input error, 3 degenerate data after
the retry budget, 4 SBC chain-failure rate above threshold.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, prior_analysis
from .datasim import DegenerateDataError, SimConfig, gen_dataset_with_retries, save_dataset
from .distributions import ParameterError, RngStream
from .gibbs import GibbsConfig, run_chains
from .metrics import DEFAULT_ALPHA_GRID, aggregate_reports, evaluate
from .model import (
    DesignError,
    DrawsTable,
    Hyperparameters,
    config_hash,
    load_design_csv,
    standardize,
)
from .prior_analysis import MarginalParams, ShrinkageParams, SsProfile
from .sbc import SbcFailureRateError, SbcTemplate, envelope_report, sbc_run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_SBC_FAILURES = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON: {exc}") from None


def _validate_schema(payload: dict, schema_name: str) -> None:
    import jsonschema

    schema = json.loads(
        resources.files("r2d2m2.schemas").joinpath(schema_name).read_text())
    try:
        jsonschema.validate(payload, schema)
    except jsonschema.ValidationError as exc:
        field = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CliError(f"config field {field!r}: {exc.message}") from None


def _write_manifest(out_dir: Path, command: str, config: dict, seed,
                    outputs: dict, started: float) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "build": {"package": "r2d2m2", "version": __version__},
        "config_hash": config_hash(config),
        "wall_seconds": round(time.perf_counter() - started, 3),
        "outputs": outputs,
    }
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    raw = _load_json(args.config)
    _validate_schema(raw, "sim_config.schema.json")
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        config = SimConfig.from_dict(raw)
    except (ParameterError, TypeError) as exc:
        raise CliError(f"invalid simulation config: {exc}") from None
    try:
        ds, attempts = gen_dataset_with_retries(config, max_attempts=10)
    except DegenerateDataError as exc:
        raise CliError(str(exc), code=EXIT_DEGENERATE) from None
    out = _out_dir(args)
    paths = save_dataset(ds, out)
    paths["attempts"] = attempts
    manifest = _write_manifest(out, "simulate", config.to_dict(), config.seed,
                               paths, started)
    print(f"wrote {paths['train']}, {paths['test']}, {paths['truth']} "
          f"(attempts={attempts}, manifest={manifest})")
    return EXIT_OK


def _hyper_from_config(cfg: dict) -> Hyperparameters:
    h = cfg["hyperparameters"]
    alpha = h.get("alpha", h.get("a_pi", 1.0))
    if isinstance(alpha, list):
        alpha = np.asarray(alpha, dtype=float)
    return Hyperparameters(mu_r2=h["mu_r2"], phi_r2=h["phi_r2"], alpha=alpha,
                           intercept_sd=h.get("intercept_sd", 10.0))


def cmd_fit(args) -> int:
    started = time.perf_counter()
    model_cfg = _load_json(args.model_config)
    _validate_schema(model_cfg, "model_config.schema.json")
    gibbs_cfg = _load_json(args.gibbs_config) if args.gibbs_config else {}
    _validate_schema(gibbs_cfg, "gibbs_config.schema.json")
    if args.seed is not None:
        gibbs_cfg["seed"] = args.seed
    try:
        config = GibbsConfig(**gibbs_cfg)
        hyper = _hyper_from_config(model_cfg)
        design = load_design_csv(args.data, model_cfg)
    except (DesignError, ParameterError, TypeError) as exc:
        raise CliError(str(exc)) from None
    tables = run_chains(design, hyper, config, n_workers=args.threads)
    out = _out_dir(args)
    outputs = {}
    for table in tables:
        path = out / f"draws_chain{table.chain_id}.csv"
        table.save(path)
        outputs[f"chain{table.chain_id}"] = str(path)
    merged = DrawsTable.concat(tables)
    merged_path = out / "draws.csv"
    merged.save(merged_path)
    outputs["merged"] = str(merged_path)
    manifest = _write_manifest(
        out, "fit", {"model": model_cfg, "gibbs": config.to_dict()},
        config.seed, outputs, started)
    print(f"wrote {merged_path} ({merged.n_draws} draws, manifest={manifest})")
    return EXIT_OK


def cmd_sbc(args) -> int:
    started = time.perf_counter()
    raw = _load_json(args.config) if args.config else {}
    if args.seed is not None:
        raw["seed"] = args.seed
    seed = raw.pop("seed", 0)
    n_trials = raw.pop("n_trials", args.trials)
    s_draws = raw.pop("s_draws", args.draws)
    thin = raw.pop("thin", args.thin)
    gamma = raw.pop("gamma", 0.95)
    try:
        template = SbcTemplate(**raw)
    except TypeError as exc:
        raise CliError(f"invalid SBC template: {exc}") from None
    try:
        table = sbc_run(template, n_trials=n_trials, s_draws=s_draws, thin=thin,
                        seed=seed, n_workers=args.threads)
    except SbcFailureRateError as exc:
        raise CliError(str(exc), code=EXIT_SBC_FAILURES) from None
    out = _out_dir(args)
    ranks_path = out / "ranks.csv"
    table.save(ranks_path)
    report = envelope_report(table, gamma=gamma)
    report_path = out / "envelope.json"
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    outputs = {"ranks": str(ranks_path), "envelope": str(report_path)}
    manifest = _write_manifest(
        out, "sbc", {"template": template.to_dict(), "n_trials": n_trials,
                     "s_draws": s_draws, "thin": thin, "gamma": gamma},
        seed, outputs, started)
    print(f"SBC pass rate {report['n_pass']}/{report['n_quantities']} "
          f"({report['pass_rate']:.3f}) at gamma={gamma} (manifest={manifest})")
    return EXIT_OK


def cmd_prior(args) -> int:
    started = time.perf_counter()
    cfg = _load_json(args.config)
    try:
        mu, phi = float(cfg["mu_r2"]), float(cfg["phi_r2"])
        a_pi = float(cfg.get("a_pi", 1.0))
        sigma = float(cfg.get("sigma", 1.0))
        sigma_x = float(cfg.get("sigma_x", 1.0))
        p = int(cfg.get("p", 10))
        k = int(cfg.get("K", 1))
        levels = int(cfg.get("L", 20))
        n_obs = int(cfg.get("N", 200))
        hyper = Hyperparameters(mu_r2=mu, phi_r2=phi, alpha=a_pi)
        marginal = MarginalParams(q2=sigma ** 2 / sigma_x ** 2, a_pi=a_pi, a2=hyper.a2)
        r = float(cfg.get("r", n_obs))
        phicomp = float(cfg.get("phi_comp", 1.0 / max(1, p + k + p * k)))
        kappa = ShrinkageParams(phi_comp=phicomp, r=r, a1=hyper.a1, a2=hyper.a2)
        profile = SsProfile.balanced(p=p, n_factors=k, n_levels=levels, n_obs=n_obs)
        rng = RngStream(int(cfg.get("seed", 0)))
        meff = prior_analysis.meff_prior_sample(hyper, profile,
                                                int(cfg.get("n_draws", 20_000)), rng)
    except (KeyError, ValueError, ParameterError, DesignError) as exc:
        raise CliError(f"invalid prior config: {exc}") from None
    counts, edges = np.histogram(meff["samples"], bins=60)
    grids = {
        "r2": prior_analysis.r2_density_grid(mu, phi),
        "tau2": prior_analysis.tau2_density_grid(mu, phi),
        "marginal": prior_analysis.marginal_density_grid(marginal),
        "kappa": prior_analysis.kappa_density_grid(kappa),
        "meff": {
            "quantiles": {k2: float(v) for k2, v in meff["quantiles"].items()},
            "mean": meff["mean"],
            "total_coefficients": meff["total_coefficients"],
            "histogram": {"counts": counts.astype(int).tolist(),
                          "edges": edges.tolist()},
        },
    }
    out = _out_dir(args)
    grid_path = out / "prior_grids.json"
    with open(grid_path, "w") as fh:
        json.dump(grids, fh, indent=2, sort_keys=True)
    manifest = _write_manifest(out, "prior", cfg, cfg.get("seed", 0),
                               {"grids": str(grid_path)}, started)
    print(f"wrote {grid_path} (manifest={manifest})")
    return EXIT_OK


def cmd_metrics(args) -> int:
    started = time.perf_counter()
    model_cfg = _load_json(args.model_config)
    _validate_schema(model_cfg, "model_config.schema.json")
    draws_paths = sorted(Path(p) for p in args.draws)
    if not draws_paths:
        raise CliError("no draws files given")
    try:
        truth = _load_json(args.truth)
        test = load_design_csv(args.test_data, model_cfg) if args.test_data else None
    except (DesignError, CliError) as exc:
        raise CliError(str(exc)) from None
    alphas = tuple(args.alphas) if args.alphas else DEFAULT_ALPHA_GRID
    reports = []
    for i, path in enumerate(draws_paths):
        table = DrawsTable.load(path)
        profile = None
        if test is not None:
            from .gibbs import PrecomputedDesign

            profile = PrecomputedDesign.from_design(standardize(test)).ss_profile()
        reports.append(evaluate(table, truth, test, ss_profile=profile,
                                alphas=alphas, replication=i,
                                scenario={"draws": str(path)}))
    out = _out_dir(args)
    outputs = {}
    per_path = out / "eval_reports.json"
    with open(per_path, "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2, sort_keys=True)
    outputs["reports"] = str(per_path)
    agg_path = out / "eval_summary.json"
    with open(agg_path, "w") as fh:
        json.dump(aggregate_reports(reports), fh, indent=2, sort_keys=True)
    outputs["summary"] = str(agg_path)
    manifest = _write_manifest(
        out, "metrics",
        {"model": model_cfg, "truth": str(args.truth), "alphas": list(alphas)},
        None, outputs, started)
    print(f"wrote {per_path} and {agg_path} (manifest={manifest})")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app

    uvicorn.run(build_app(), host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="r2d2m2",
        description="Joint shrinkage priors for Bayesian linear multilevel models")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--out-dir", default=".", help="output directory")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="override the config seed")

    p = sub.add_parser("simulate", help="generate a sparse multilevel dataset")
    p.add_argument("--config", required=True, help="SimConfig JSON path")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the blocked Gibbs sampler")
    p.add_argument("--data", required=True, help="training data CSV")
    p.add_argument("--model-config", required=True, help="model config JSON")
    p.add_argument("--gibbs-config", default=None, help="sampler config JSON")
    p.add_argument("--threads", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sbc", help="simulation-based calibration study")
    p.add_argument("--config", default=None, help="SBC template JSON")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--draws", type=int, default=3000)
    p.add_argument("--thin", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_sbc)

    p = sub.add_parser("prior", help="evaluate prior densities and m_eff grids")
    p.add_argument("--config", required=True, help="hyperparameter JSON")
    common(p, seed=False)
    p.set_defaults(func=cmd_prior)

    p = sub.add_parser("metrics", help="evaluate fitted draws against the truth")
    p.add_argument("--draws", nargs="+", required=True, help="draws CSV path(s)")
    p.add_argument("--truth", required=True, help="truth JSON from simulate")
    p.add_argument("--model-config", required=True)
    p.add_argument("--test-data", default=None, help="held-out data CSV")
    p.add_argument("--alphas", nargs="*", type=float, default=None)
    common(p, seed=False)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("serve", help="run the local elicitation JSON service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8645)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
