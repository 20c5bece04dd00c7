"""Batch orchestration: estimate, fit, score, and scenario sweeps."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .baselines import cpd_partition, hmm_partition
from .estimate import EstimationFailure, JumpEstimate, estimate_cohort
from .metrics import (
    ConfusionTable,
    adjusted_rand_index,
    average_tables,
    confusion,
    jump_errors,
    rand_index,
    truth_modes,
    truths_of,
)
from .model import ModelParams
from .simulate import ScenarioConfig, Trajectory, simulate_batch
from .survival import (
    SurvivalFit,
    SurvivalSample,
    UnfittableError,
    fit_weibull_censored,
    as_arrays,
)

DEFAULT_PARAMS = ModelParams(
    zeta_r=1.0,
    v_minus=-0.046,
    v_plus=0.012,
    alpha=4.69,
    beta=1650.0,
    sigma=1.0,
    delta=30.0,
    zeta0_range=(15.0, 55.0),
    horizon_range=(900.0, 1900.0),
)
LOW_SHAPE_PARAMS = replace(DEFAULT_PARAMS, alpha=1.50, beta=2500.0)

# name -> (base params, swept field, grid)
SCENARIOS: dict[str, tuple[ModelParams, str, tuple[float, ...]]] = {
    "I": (DEFAULT_PARAMS, "delta", (10, 20, 30, 40, 50, 60)),
    "II": (DEFAULT_PARAMS, "sigma", (0.25, 1.0, 2.5, 5.0)),
    "III": (DEFAULT_PARAMS, "n", (250, 500, 1000, 5000, 10000)),
    "Ia": (LOW_SHAPE_PARAMS, "delta", (10, 20, 30, 40, 50, 60)),
    "IIa": (LOW_SHAPE_PARAMS, "sigma", (0.25, 1.0, 2.5, 5.0)),
    "IIIa": (LOW_SHAPE_PARAMS, "n", (250, 500, 1000, 5000, 10000)),
}


def scenario_configs(
    name: str, master_seed: int = 0, n_batches: int = 100, base: ModelParams | None = None
) -> list[tuple[float, ScenarioConfig]]:
    """One config per value of the scenario's swept parameter."""
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    params, swept, grid = SCENARIOS[name]
    params = base or params
    out = []
    for value in grid:
        if swept == "n":
            cfg = ScenarioConfig(params, int(value), n_batches, master_seed)
        else:
            cfg = ScenarioConfig(replace(params, **{swept: float(value)}), 500, n_batches, master_seed)
        out.append((value, cfg))
    return out


def durations_from_estimates(
    cohort: Sequence[Trajectory], estimates: Sequence[JumpEstimate | EstimationFailure]
) -> list[tuple[str, SurvivalSample]]:
    """Remission durations; censored ones run to the last visit."""
    out = []
    for traj, est in zip(cohort, estimates):
        if isinstance(est, EstimationFailure):
            continue
        if est.T2_hat is None:
            out.append((est.id, SurvivalSample(float(traj.dates[-1] - est.T1_hat), False)))
        else:
            out.append((est.id, SurvivalSample(est.T2_hat - est.T1_hat, True)))
    return out


def fit_from_samples(samples: Iterable[SurvivalSample]) -> SurvivalFit | None:
    t, e = as_arrays(samples)
    try:
        return fit_weibull_censored(t, e)
    except UnfittableError:
        return None


@dataclass
class BatchResult:
    batch: int
    table: ConfusionTable
    fit: SurvivalFit | None
    errors: dict[str, np.ndarray]
    n_failures: int
    true_censored_fraction: float
    true_durations: np.ndarray


def run_batch(config: ScenarioConfig, batch: int) -> BatchResult:
    cohort = simulate_batch(config, batch)
    estimates = estimate_cohort(cohort, config.params.zeta_r)
    truths = truths_of(cohort)
    samples = [s for _, s in durations_from_estimates(cohort, estimates)]
    return BatchResult(
        batch=batch,
        table=confusion(truths, estimates),
        fit=fit_from_samples(samples),
        errors=jump_errors(truths, estimates),
        n_failures=sum(isinstance(e, EstimationFailure) for e in estimates),
        true_censored_fraction=float(np.mean([t.censored for t in truths.values()])),
        true_durations=np.array([t.T2 - t.T1 for t in truths.values() if not t.censored]),
    )


def _run_batch_args(args) -> BatchResult:
    return run_batch(*args)


def run_setting(config: ScenarioConfig, workers: int = 1) -> list[BatchResult]:
    jobs = [(config, b) for b in range(config.n_batches)]
    if workers <= 1:
        return [run_batch(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_batch_args, jobs))


def _mean_std(x: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(x, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return math.nan, math.nan
    return float(arr.mean()), float(arr.std())


def summarize_setting(
    scenario: str, value: float, config: ScenarioConfig, results: Sequence[BatchResult]
) -> tuple[dict, list[dict], list[dict]]:
    """Rows for the confusion, error and Weibull-fit CSVs."""
    table = average_tables([r.table for r in results])
    conf_row = {"scenario": scenario, "param_value": value, **table.as_row()}
    p = config.params
    err_rows = []
    for stat, key in (("T1_abs_err", "T1"), ("T2_abs_err", "T2"), ("duration_abs_err", "duration")):
        pooled = np.concatenate([r.errors[key] for r in results])
        mean, std = _mean_std(pooled)
        err_rows.append({"scenario": scenario, "param_value": value, "stat": stat, "mean": mean, "std": std})
    fits = [r.fit for r in results if r.fit is not None]
    for stat, get, truth in (
        ("alpha_rel_err", lambda f: f.alpha_hat, p.alpha),
        ("beta_rel_err", lambda f: f.beta_hat, p.beta),
    ):
        mean, std = _mean_std([abs(get(f) - truth) / truth for f in fits])
        err_rows.append({"scenario": scenario, "param_value": value, "stat": stat, "mean": mean, "std": std})
    fit_rows = []
    for r in results:
        row = {"scenario": scenario, "param_value": value, "batch": r.batch}
        if r.fit is None:
            row.update(alpha_hat="", beta_hat="", log_likelihood="", n_events=0, n_censored="", converged=0)
        else:
            row.update(r.fit.to_json())
        row["n_failures"] = r.n_failures
        fit_rows.append(row)
    return conf_row, err_rows, fit_rows


@dataclass
class Comparison:
    id: str
    partitions: dict[str, np.ndarray]
    ri: dict[str, float]
    ari: dict[str, float]


METHODS = ("iterative_regression", "cpd", "hmm")


def compare_methods(cohort: Sequence[Trajectory], zeta_r: float = 1.0) -> list[Comparison]:
    """Score the three partitions against the truth on trajectories that relapse."""
    out = []
    relapsing = [t for t in cohort if t.truth is not None and not t.truth.censored]
    estimates = estimate_cohort(relapsing, zeta_r)
    for traj, est in zip(relapsing, estimates):
        truth = truth_modes(traj.dates, traj.truth)
        if isinstance(est, EstimationFailure):
            ours = np.full(len(traj), -1)
        else:
            ours = est.modes(traj.dates)
        parts = {
            "iterative_regression": ours,
            "cpd": cpd_partition(traj, zeta_r),
            "hmm": hmm_partition(traj, zeta_r),
        }
        out.append(
            Comparison(
                traj.id,
                parts,
                {m: rand_index(truth, parts[m]) for m in METHODS},
                {m: adjusted_rand_index(truth, parts[m]) for m in METHODS},
            )
        )
    return out


# --- CSV writers ------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row.get(h)) for h in header])


ESTIMATE_HEADER = ("id", "T1_hat", "T2_hat", "censored_pred", "v_minus_hat", "v_plus_hat", "fit_error")


def estimate_rows(estimates: Sequence[JumpEstimate | EstimationFailure]) -> tuple[list[dict], list[dict]]:
    ok, failed = [], []
    for est in estimates:
        if isinstance(est, EstimationFailure):
            failed.append({"id": est.id, "reason": est.reason})
            continue
        ok.append(
            {
                "id": est.id,
                "T1_hat": est.T1_hat,
                "T2_hat": est.T2_hat,
                "censored_pred": est.censored_pred,
                "v_minus_hat": est.v_minus_hat,
                "v_plus_hat": est.v_plus_hat,
                "fit_error": est.fit_error,
            }
        )
    return ok, failed


def read_durations(path: str | Path) -> list[SurvivalSample]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"duration", "event"} <= set(reader.fieldnames or ()):
            raise ValueError(f"{path}: expected columns duration,event")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(SurvivalSample(float(row["duration"]), bool(int(row["event"]))))
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{lineno}: malformed duration row") from None
    return out
