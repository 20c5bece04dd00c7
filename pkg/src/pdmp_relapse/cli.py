"""Command-line entry point: ``pdmp-relapse <command> [options]``.

Every option can also be set through an environment variable named
``PDMP_RELAPSE_<OPTION>`` (e.g. ``PDMP_RELAPSE_SEED=7``); explicit flags win.
Each run writes ``manifest.json`` into its output directory, which
``pdmp-relapse replay`` turns back into the same run.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .estimate import estimate_cohort
from .ingest import (
    CohortFormatError,
    attach_truth,
    preprocess,
    read_cohort,
    read_truth,
    write_cohort,
    write_truth,
)
from .metrics import confusion, error_summary, truths_of
from .pipeline import (
    ESTIMATE_HEADER,
    METHODS,
    SCENARIOS,
    compare_methods,
    durations_from_estimates,
    estimate_rows,
    fit_from_samples,
    read_durations,
    run_setting,
    scenario_configs,
    summarize_setting,
    write_rows,
)
from .simulate import ScenarioConfig, simulate_batch
from .survival import kaplan_meier, as_arrays

ENV_PREFIX = "PDMP_RELAPSE_"
EXIT_BAD_FILE = 3
EXIT_FIT_FAILURE = 4

logger = logging.getLogger("pdmp_relapse")


class FitFailure(RuntimeError):
    pass


def _env(name: str, default=None, cast=str):
    raw = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    return default if raw is None else cast(raw)


def _add_common(p: argparse.ArgumentParser, *, needs_in: bool = False) -> None:
    p.add_argument("--out", default=_env("out"), help="output directory")
    p.add_argument("--config", default=_env("config"), help="scenario config JSON")
    p.add_argument("--seed", type=int, default=_env("seed", None, int), help="master seed (u64)")
    p.add_argument("--workers", type=int, default=_env("workers", 1, int))
    p.add_argument("--batches", type=int, default=_env("batches", None, int))
    p.add_argument("--zeta-r", type=float, default=_env("zeta_r", None, float))
    if needs_in:
        p.add_argument("--in", dest="inp", default=_env("in"), help="input CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdmp-relapse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a cohort (all batches) to CSV")
    _add_common(p)

    p = sub.add_parser("preprocess", help="apply the cleaning rules to a cohort CSV")
    _add_common(p, needs_in=True)
    p.add_argument("--low", type=float, default=1.0)
    p.add_argument("--high", type=float, default=5.0)
    p.add_argument("--min-obs", type=int, default=10)
    p.add_argument("--min-below", type=int, default=2)

    p = sub.add_parser("estimate", help="estimate jump times of a cohort CSV")
    _add_common(p, needs_in=True)

    p = sub.add_parser("fit-survival", help="fit the Weibull law to a durations CSV")
    _add_common(p, needs_in=True)

    p = sub.add_parser("pipeline", help="estimate + survival fit on a cohort or a simulated config")
    _add_common(p, needs_in=True)
    p.add_argument("--truth", default=_env("truth"), help="truth CSV for scoring")

    p = sub.add_parser("compare", help="RI/ARI of the estimator, CPD and HMM on relapsing trajectories")
    _add_common(p, needs_in=True)
    p.add_argument("--truth", default=_env("truth"), help="truth CSV (required with --in)")

    p = sub.add_parser("scenario", help="sweep one of the preset scenarios")
    p.add_argument("name", choices=sorted(SCENARIOS))
    _add_common(p)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="override the recorded output directory")
    return parser


def _resolve_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.batches is not None:
        cfg = replace(cfg, n_batches=args.batches)
    if args.zeta_r is not None:
        cfg = replace(cfg, params=replace(cfg.params, zeta_r=args.zeta_r))
    return cfg


def _zeta_r(args) -> float:
    return args.zeta_r if args.zeta_r is not None else 1.0


def _require(args, attr: str, flag: str) -> str:
    value = getattr(args, attr, None)
    if not value:
        raise argparse.ArgumentTypeError(f"{flag} is required")
    return value


def _simulate_all(cfg: ScenarioConfig, workers: int):
    cohort = []
    for b in range(cfg.n_batches):
        cohort.extend(simulate_batch(cfg, b, workers))
    return cohort


def cmd_simulate(args, out: Path) -> dict:
    cfg = _resolve_config(args)
    cohort = _simulate_all(cfg, args.workers)
    write_cohort(cohort, out / "cohort.csv")
    write_truth(cohort, out / "truth.csv")
    return {"config": cfg.to_json(), "outputs": ["cohort.csv", "truth.csv"]}


def cmd_preprocess(args, out: Path) -> dict:
    cohort = read_cohort(_require(args, "inp", "--in"))
    kept, report = preprocess(cohort, args.low, args.high, args.min_obs, args.min_below)
    write_cohort(kept, out / "cohort.csv")
    report.write(out / "report.json")
    return {"outputs": ["cohort.csv", "report.json"]}


def _write_estimates(cohort, estimates, out: Path) -> list[str]:
    ok, failed = estimate_rows(estimates)
    write_rows(out / "estimates.csv", ESTIMATE_HEADER, ok)
    write_rows(out / "failures.csv", ("id", "reason"), failed)
    durations = durations_from_estimates(cohort, estimates)
    write_rows(
        out / "durations.csv",
        ("id", "duration", "event"),
        ({"id": tid, "duration": s.duration, "event": s.event} for tid, s in durations),
    )
    return ["estimates.csv", "failures.csv", "durations.csv"]


def cmd_estimate(args, out: Path) -> dict:
    cohort = read_cohort(_require(args, "inp", "--in"))
    estimates = estimate_cohort(cohort, _zeta_r(args), args.workers)
    return {"outputs": _write_estimates(cohort, estimates, out)}


def _write_fit(samples, out: Path) -> list[str]:
    fit = fit_from_samples(samples)
    if fit is None:
        raise FitFailure("no relapse event among the durations: Weibull fit impossible")
    with open(out / "fit.json", "w") as fh:
        json.dump(fit.to_json(), fh, indent=2)
    t, e = as_arrays(samples)
    km = kaplan_meier(t, e)
    write_rows(out / "km.csv", ("time", "survival", "ci_low", "ci_high", "at_risk", "events"), km.rows())
    return ["fit.json", "km.csv"]


def cmd_fit_survival(args, out: Path) -> dict:
    samples = read_durations(_require(args, "inp", "--in"))
    return {"outputs": _write_fit(samples, out)}


def _load_cohort_with_truth(args):
    if args.inp:
        cohort = read_cohort(args.inp)
        if getattr(args, "truth", None):
            cohort = attach_truth(cohort, read_truth(args.truth))
        return cohort, None
    cfg = _resolve_config(args)
    return _simulate_all(cfg, args.workers), cfg


def cmd_pipeline(args, out: Path) -> dict:
    if not args.inp and args.batches is None:
        args.batches = 1
    cohort, cfg = _load_cohort_with_truth(args)
    zeta_r = cfg.params.zeta_r if cfg else _zeta_r(args)
    estimates = estimate_cohort(cohort, zeta_r, args.workers)
    outputs = _write_estimates(cohort, estimates, out)
    samples = [s for _, s in durations_from_estimates(cohort, estimates)]
    outputs += _write_fit(samples, out)
    if all(t.truth is not None for t in cohort):
        truths = truths_of(cohort)
        table = confusion(truths, estimates).normalized()
        write_rows(
            out / "confusion.csv",
            ("scenario", "param_value", "cell_tt", "cell_tf", "cell_ft", "cell_ff"),
            [{"scenario": "pipeline", "param_value": "", **table.as_row()}],
        )
        summary = error_summary(truths, estimates)
        write_rows(
            out / "errors.csv",
            ("scenario", "param_value", "stat", "mean", "std"),
            (
                {"scenario": "pipeline", "param_value": "", "stat": s, "mean": m, "std": sd}
                for s, m, sd in summary.rows()
            ),
        )
        outputs += ["confusion.csv", "errors.csv"]
    result = {"outputs": outputs}
    if cfg is not None:
        result["config"] = cfg.to_json()
    return result


def cmd_compare(args, out: Path) -> dict:
    if args.inp and not args.truth:
        raise argparse.ArgumentTypeError("--truth is required with --in")
    if not args.inp and args.batches is None:
        args.batches = 1
    cohort, cfg = _load_cohort_with_truth(args)
    zeta_r = cfg.params.zeta_r if cfg else _zeta_r(args)
    comparisons = compare_methods(cohort, zeta_r)
    write_rows(
        out / "comparison.csv",
        ("id", "method", "ri", "ari"),
        (
            {"id": c.id, "method": m, "ri": c.ri[m], "ari": c.ari[m]}
            for c in comparisons
            for m in METHODS
        ),
    )
    write_rows(
        out / "partitions.csv",
        ("id", "method", "obs_index", "mode_label"),
        (
            {"id": c.id, "method": m, "obs_index": i, "mode_label": int(lab)}
            for c in comparisons
            for m in METHODS
            for i, lab in enumerate(c.partitions[m])
        ),
    )
    result = {"outputs": ["comparison.csv", "partitions.csv"]}
    if cfg is not None:
        result["config"] = cfg.to_json()
    return result


def cmd_scenario(args, out: Path) -> dict:
    base = ScenarioConfig.load(args.config).params if args.config else None
    seed = args.seed if args.seed is not None else 0
    batches = args.batches if args.batches is not None else 100
    conf_rows, err_rows, fit_rows, configs = [], [], [], []
    for value, cfg in scenario_configs(args.name, seed, batches, base):
        logger.info("scenario %s: setting %s", args.name, value)
        results = run_setting(cfg, args.workers)
        c, e, f = summarize_setting(args.name, value, cfg, results)
        conf_rows.append(c)
        err_rows.extend(e)
        fit_rows.extend(f)
        configs.append(cfg.to_json())
    write_rows(
        out / "confusion.csv",
        ("scenario", "param_value", "cell_tt", "cell_tf", "cell_ft", "cell_ff"),
        conf_rows,
    )
    write_rows(out / "errors.csv", ("scenario", "param_value", "stat", "mean", "std"), err_rows)
    write_rows(
        out / "weibull_fits.csv",
        (
            "scenario", "param_value", "batch", "alpha_hat", "beta_hat",
            "log_likelihood", "n_events", "n_censored", "converged", "n_failures",
        ),
        fit_rows,
    )
    return {"config": configs, "outputs": ["confusion.csv", "errors.csv", "weibull_fits.csv"]}


COMMANDS = {
    "simulate": cmd_simulate,
    "preprocess": cmd_preprocess,
    "estimate": cmd_estimate,
    "fit-survival": cmd_fit_survival,
    "pipeline": cmd_pipeline,
    "compare": cmd_compare,
    "scenario": cmd_scenario,
}


def _replay_argv(manifest_path: str, out_override: str | None) -> list[str]:
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    argv = list(manifest["argv"])
    if out_override:
        i = argv.index("--out")
        argv[i + 1] = out_override
    return argv


def _canonical_argv(args) -> list[str]:
    """Fully resolved argument list, independent of environment variables."""
    argv = [args.command]
    if args.command == "scenario":
        argv.append(args.name)
    for key, value in sorted(vars(args).items()):
        if key in ("command", "name") or value is None:
            continue
        flag = "--in" if key == "inp" else "--" + key.replace("_", "-")
        argv += [flag, str(value)]
    return argv


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        try:
            replay = _replay_argv(args.manifest, args.out)
        except (OSError, KeyError, ValueError) as exc:
            print(f"error: bad manifest: {exc}", file=sys.stderr)
            return EXIT_BAD_FILE
        return main(replay)

    if not args.out:
        parser.error("--out is required")
    out = Path(args.out)
    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        info = COMMANDS[args.command](args, out)
    except argparse.ArgumentTypeError as exc:
        print(f"error: bad flag: {exc}", file=sys.stderr)
        return 2
    except (OSError, CohortFormatError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: bad file: {exc}", file=sys.stderr)
        return EXIT_BAD_FILE
    except FitFailure as exc:
        print(f"error: fit failure: {exc}", file=sys.stderr)
        return EXIT_FIT_FAILURE

    manifest = {
        "subcommand": args.command,
        "argv": _canonical_argv(args),
        "config": info.get("config"),
        "master_seed": args.seed,
        "inputs": [p for p in (args.config, getattr(args, "inp", None), getattr(args, "truth", None)) if p],
        "outputs": [str(out / o) for o in info["outputs"]],
        "version": __version__,
        "wall_clock_s": time.perf_counter() - start,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
