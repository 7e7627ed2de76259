"""Command-line front end: simulate, fit, ppc, and summarize workflows.

Each subcommand takes a JSON run configuration; the effective configuration
is echoed into the output directory so every result is self-describing.
Exit codes: 0 success, 2 configuration error, 3 parse error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import mcmc, model, ppc
from .dataio import ConfigError, ParseError, export_dataset, import_dataset
from .numerics import NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_NUMERICAL = 4


def _load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON: {err}") from err


def _output_dir(config: dict, args) -> Path:
    out = args.output or config.get("output")
    if not out:
        raise ConfigError("no output directory given (config 'output' or --output)")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(config: dict, args) -> int:
    if args.seed is not None:
        return args.seed
    return int(config.get("seed", 0))


def _echo_config(config: dict, out: Path, seed: int, threads: int) -> None:
    effective = dict(config)
    effective["seed"] = seed
    effective["output"] = str(out)
    effective["threads"] = threads
    (out / "config.json").write_text(json.dumps(effective, indent=2))


def _require(config: dict, key: str):
    if key not in config:
        raise ConfigError(f"config key '{key}' is required")
    return config[key]


def _input_path(config: dict, key: str) -> Path:
    path = Path(_require(config, key))
    if not path.exists():
        raise ConfigError(f"{key} path does not exist: {path}")
    return path


def cmd_simulate(config: dict, args) -> int:
    out = _output_dir(config, args)
    seed = _seed(config, args)
    _echo_config(config, out, seed, args.threads)
    try:
        design = model.SimulationDesign.from_dict(_require(config, "design"))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid simulation design: {err}") from err
    rng = np.random.default_rng(seed)
    dataset, truth = model.simulate_dataset(design, rng)
    export_dataset(dataset, out / "dataset.npz")
    np.savez(
        out / "truth.npz",
        beta=truth.beta, b=truth.b, U=truth.U, V=truth.V, W=truth.W,
        z=truth.z, c=truth.c,
        sigma_b2=truth.sigma_b2, sigma_c2=truth.sigma_c2,
        design=json.dumps(design.to_dict()),
    )
    sizes = [len(m.receivers) for m in dataset.messages]
    mean_size = float(np.mean(sizes)) if sizes else float("nan")
    print(f"simulated {dataset.n_messages} messages over "
          f"{dataset.n_actors} actors; mean receiver-set size {mean_size:.3f}")
    print(f"wrote {out / 'dataset.npz'} and {out / 'truth.npz'}")
    return EXIT_OK


def _model_config(section: dict) -> model.ModelConfig:
    prior_spec = section.get("beta_prior", {"type": "default"})
    kind = prior_spec.get("type", "default")
    if kind == "g":
        beta_prior = model.BetaPrior(unit_information=True)
    elif kind == "normal":
        beta_prior = model.BetaPrior(
            mean=np.asarray(prior_spec["mean"], float),
            cov=np.asarray(prior_spec["cov"], float),
        )
    elif kind == "default":
        beta_prior = model.BetaPrior()
    else:
        raise ConfigError(f"unknown beta prior type {kind!r}")
    try:
        return model.ModelConfig(
            Q=int(_require(section, "Q")),
            mu_c=float(section.get("mu_c", 0.0)),
            beta_prior=beta_prior,
            sigma_b2_prior=tuple(section.get("sigma_b2_prior", (2.0, 1.0))),
            sigma_c2_prior=tuple(section.get("sigma_c2_prior", (20.0, 3.0))),
        )
    except ValueError as err:
        raise ConfigError(f"invalid model config: {err}") from err


def cmd_fit(config: dict, args) -> int:
    out = _output_dir(config, args)
    seed = _seed(config, args)
    _echo_config(config, out, seed, args.threads)
    dataset = import_dataset(_input_path(config, "dataset"))
    model_section = _require(config, "model")
    if model_section.get("add_intercept", False):
        dataset = model.with_intercept(dataset)
    model_config = _model_config(model_section)
    mcmc_section = dict(config.get("mcmc", {}))
    mcmc_section["seed"] = seed
    try:
        settings = mcmc.McmcSettings(**mcmc_section)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid mcmc settings: {err}") from err

    try:
        draws = mcmc.run_chain(dataset, model_config, settings)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    draws.save(out / "draws")

    convergence = {
        "sigma_b2_split_rhat": mcmc.split_rhat(draws.sigma_b2),
        "sigma_c2_split_rhat": mcmc.split_rhat(draws.sigma_c2),
    }
    if draws.beta.shape[1]:
        convergence["beta_split_rhat"] = [
            mcmc.split_rhat(draws.beta[:, k]) for k in range(draws.beta.shape[1])
        ]
    summary = {
        "n_draws": draws.n_draws,
        "acceptance": {"z": draws.accept_z, "sigma_c2": draws.accept_sigma_c2},
        "final_rw_step": draws.final_rw_step,
        "wall_clock_seconds": draws.wall_clock_seconds,
        "convergence": convergence,
    }
    (out / "fit_summary.json").write_text(json.dumps(summary, indent=2))
    print(f"stored {draws.n_draws} draws in {out / 'draws'} "
          f"({draws.wall_clock_seconds:.1f}s; "
          f"z acceptance {draws.accept_z:.3f}, "
          f"sigma_c2 acceptance {draws.accept_sigma_c2:.3f})")
    return EXIT_OK


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_ppc(config: dict, args) -> int:
    out = _output_dir(config, args)
    seed = _seed(config, args)
    _echo_config(config, out, seed, args.threads)
    dataset = import_dataset(_input_path(config, "dataset"))
    draws = mcmc.PosteriorDraws.load(_input_path(config, "draws"))
    if dataset.n_covariates != draws.beta.shape[1]:
        if bool(config.get("add_intercept", False)):
            dataset = model.with_intercept(dataset)
        if dataset.n_covariates != draws.beta.shape[1]:
            raise ConfigError(
                f"dataset has {dataset.n_covariates} covariates but draws "
                f"carry {draws.beta.shape[1]} coefficients"
            )
    statistics = tuple(config.get("statistics", ("t1", "t2", "t3", "t4")))
    senders = config.get("senders")
    rng = np.random.default_rng(seed)
    try:
        report = ppc.run_ppc(
            dataset, draws, statistics=statistics, senders=senders,
            n_replicates=config.get("n_replicates"), rng=rng,
            reuse_w=bool(config.get("reuse_message_factors", False)),
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err
    report.save_json(out / "ppc_report.json")

    levels = [str(q) for q in ppc.QUANTILE_LEVELS]
    if report.t1_bins is not None:
        _write_csv(
            out / "t1.csv",
            ["n_receivers", "observed", *[f"q{q}" for q in levels]],
            [
                [m, report.t1_observed[i],
                 *[report.t1_quantiles[q][i] for q in levels]]
                for i, m in enumerate(report.t1_bins)
            ],
        )
    for s, entry in report.t2.items():
        _write_csv(
            out / f"t2_sender{s}.csv",
            ["slot", "observed", *[f"q{q}" for q in levels], "popularity_rank"],
            [
                [i, entry["observed"][i],
                 *[entry["quantiles"][q][i] for q in levels],
                 int(np.argwhere(np.array(entry["popularity_order"]) == i)[0][0])]
                for i in range(len(entry["observed"]))
            ],
        )
    for name in ("t3", "t4"):
        entry = getattr(report, name)
        if entry is not None:
            _write_csv(out / f"{name}_replicates.csv", [name],
                       [[v] for v in entry["replicates"]])
    print(f"wrote PPC report to {out / 'ppc_report.json'}")
    for name in ("t3", "t4"):
        entry = getattr(report, name)
        if entry is not None:
            print(f"{name}: observed {entry['observed']:.4g}, "
                  f"p-value {entry['p_value']:.3f}")
    return EXIT_OK


def cmd_summarize(config: dict, args) -> int:
    out = _output_dir(config, args)
    seed = _seed(config, args)
    _echo_config(config, out, seed, args.threads)
    draws = mcmc.PosteriorDraws.load(_input_path(config, "draws"))
    summary = mcmc.summarize_draws(draws)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))

    rows = []
    for block, values in summary.items():
        means = np.atleast_1d(values["mean"])
        for i in range(means.shape[0]):
            rows.append([
                f"{block}[{i}]" if means.shape[0] > 1 else block,
                np.atleast_1d(values["mean"])[i],
                np.atleast_1d(values["sd"])[i],
                np.atleast_1d(values["q2.5"])[i],
                np.atleast_1d(values["q50"])[i],
                np.atleast_1d(values["q97.5"])[i],
            ])
    _write_csv(out / "summary.csv",
               ["parameter", "mean", "sd", "q2.5", "q50", "q97.5"], rows)

    if draws.U is not None and draws.U.shape[2] > 0:
        latent = mcmc.latent_summaries(draws)
        np.savez(out / "latent_summaries.npz", **latent)
        if bool(config.get("raw_factors", False)):
            # raw draws are rotation/sign ambiguous; see README
            np.savez(out / "raw_factors.npz", U=draws.U, V=draws.V)
            print("warning: raw factor draws are identified only up to "
                  "rotation and sign", file=sys.stderr)
    print(f"wrote {out / 'summary.json'} and {out / 'summary.csv'}")
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "ppc": cmd_ppc,
    "summarize": cmd_summarize,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multirem",
        description="Latent factor model for relational events with multiple receivers",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "generate a synthetic dataset plus ground truth"),
        ("fit", "run the MCMC sampler on a dataset"),
        ("ppc", "posterior predictive checks against stored draws"),
        ("summarize", "posterior summaries from stored draws"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="JSON run configuration")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config seed")
        cmd.add_argument("--output", default=None,
                         help="override the config output directory")
        cmd.add_argument("--threads", type=int, default=1,
                         help="worker count (recorded; sampling is serial)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        return _COMMANDS[args.command](config, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as err:
        print(f"parse error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
