"""Scores for partitions, censoring predictions and estimated parameters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import numpy.typing as npt

from .estimate import EstimationFailure, JumpEstimate
from .simulate import GroundTruth, Trajectory
from .survival import SurvivalFit


def _contingency(p: npt.ArrayLike, q: npt.ArrayLike) -> np.ndarray:
    p = np.asarray(p)
    q = np.asarray(q)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"partitions must have equal length, got {p.shape} and {q.shape}")
    if p.size < 2:
        raise ValueError("partitions need at least two elements")
    _, pi = np.unique(p, return_inverse=True)
    _, qi = np.unique(q, return_inverse=True)
    table = np.zeros((pi.max() + 1, qi.max() + 1), dtype=np.int64)
    np.add.at(table, (pi, qi), 1)
    return table


def _pairs(k: np.ndarray) -> np.ndarray | int:
    return k * (k - 1) // 2


def rand_index(p: npt.ArrayLike, q: npt.ArrayLike) -> float:
    """Fraction of element pairs on which the two partitions agree."""
    table = _contingency(p, q)
    n = int(table.sum())
    both = int(_pairs(table).sum())
    same_p = int(_pairs(table.sum(axis=1)).sum())
    same_q = int(_pairs(table.sum(axis=0)).sum())
    total = n * (n - 1) // 2
    disagree = same_p + same_q - 2 * both
    return (total - disagree) / total


def adjusted_rand_index(p: npt.ArrayLike, q: npt.ArrayLike) -> float:
    """Hubert-Arabie chance-corrected Rand index.

    When the correction is undefined (both partitions trivial in the same
    way) the score is 1 for partitions equal up to relabeling, else 0.
    """
    table = _contingency(p, q)
    n = int(table.sum())
    index = float(_pairs(table).sum())
    a = float(_pairs(table.sum(axis=1)).sum())
    b = float(_pairs(table.sum(axis=0)).sum())
    expected = a * b / (n * (n - 1) / 2)
    max_index = 0.5 * (a + b)
    if max_index == expected:
        same = (table > 0).sum(axis=1).max() == 1 and (table > 0).sum(axis=0).max() == 1
        return 1.0 if same else 0.0
    return (index - expected) / (max_index - expected)


def truth_modes(dates: npt.ArrayLike, truth: GroundTruth) -> np.ndarray:
    d = np.asarray(dates, dtype=float)
    return np.where(d < truth.T1, -1, np.where(d > truth.T2, 1, 0))


@dataclass(frozen=True)
class ConfusionTable:
    """Censoring outcomes; ``cc`` = true censored & predicted censored, etc.

    ``cr`` is a false relapse and ``rc`` a false censoring. Counts may be
    normalized proportions or batch averages.
    """

    cc: float
    cr: float
    rc: float
    rr: float

    @property
    def total(self) -> float:
        return self.cc + self.cr + self.rc + self.rr

    def normalized(self) -> ConfusionTable:
        t = self.total
        return ConfusionTable(self.cc / t, self.cr / t, self.rc / t, self.rr / t)

    def as_row(self) -> dict:
        # CSV naming: cell_<true censored?><predicted censored?>
        return {"cell_tt": self.cc, "cell_tf": self.cr, "cell_ft": self.rc, "cell_ff": self.rr}


def _aligned(
    truths: Mapping[str, GroundTruth], estimates: Sequence[JumpEstimate | EstimationFailure]
) -> list[tuple[GroundTruth, JumpEstimate | EstimationFailure]]:
    ids = [e.id for e in estimates]
    if set(ids) != set(truths) or len(ids) != len(truths):
        missing = set(truths) ^ set(ids)
        raise ValueError(f"truth and estimate ids differ: {sorted(missing)[:5]}")
    return [(truths[e.id], e) for e in estimates]


def confusion(
    truths: Mapping[str, GroundTruth],
    estimates: Sequence[JumpEstimate | EstimationFailure],
) -> ConfusionTable:
    """Count censoring outcomes; failed estimations count as predicted censored."""
    cells = {"cc": 0, "cr": 0, "rc": 0, "rr": 0}
    for truth, est in _aligned(truths, estimates):
        pred_cens = isinstance(est, EstimationFailure) or est.censored_pred
        key = ("c" if truth.censored else "r") + ("c" if pred_cens else "r")
        cells[key] += 1
    return ConfusionTable(**cells)


def average_tables(tables: Sequence[ConfusionTable]) -> ConfusionTable:
    """Mean of the normalized tables of several batches."""
    arr = np.array([[t.cc, t.cr, t.rc, t.rr] for t in (x.normalized() for x in tables)])
    return ConfusionTable(*arr.mean(axis=0))


@dataclass(frozen=True)
class ErrorSummary:
    T1_abs: tuple[float, float]
    T2_abs: tuple[float, float]
    duration_abs: tuple[float, float]
    alpha_rel: float | None
    beta_rel: float | None
    n_used: int

    def rows(self) -> list[tuple[str, float, float]]:
        out = [
            ("T1_abs_err", *self.T1_abs),
            ("T2_abs_err", *self.T2_abs),
            ("duration_abs_err", *self.duration_abs),
        ]
        if self.alpha_rel is not None:
            out.append(("alpha_rel_err", self.alpha_rel, 0.0))
            out.append(("beta_rel_err", self.beta_rel, 0.0))
        return out


def jump_errors(
    truths: Mapping[str, GroundTruth],
    estimates: Sequence[JumpEstimate | EstimationFailure],
) -> dict[str, np.ndarray]:
    """Absolute errors on trajectories whose relapse occurred and was predicted."""
    t1, t2, dur = [], [], []
    for truth, est in _aligned(truths, estimates):
        if truth.censored or isinstance(est, EstimationFailure) or est.censored_pred:
            continue
        t1.append(abs(est.T1_hat - truth.T1))
        t2.append(abs(est.T2_hat - truth.T2))
        dur.append(abs((truth.T2 - truth.T1) - (est.T2_hat - est.T1_hat)))
    return {"T1": np.array(t1), "T2": np.array(t2), "duration": np.array(dur)}


def _mean_std(x: np.ndarray) -> tuple[float, float]:
    if x.size == 0:
        return float("nan"), float("nan")
    return float(x.mean()), float(x.std())


def error_summary(
    truths: Mapping[str, GroundTruth],
    estimates: Sequence[JumpEstimate | EstimationFailure],
    fit: SurvivalFit | None = None,
    true_alpha: float | None = None,
    true_beta: float | None = None,
) -> ErrorSummary:
    errs = jump_errors(truths, estimates)
    alpha_rel = beta_rel = None
    if fit is not None and true_alpha is not None and true_beta is not None:
        alpha_rel = abs(fit.alpha_hat - true_alpha) / true_alpha
        beta_rel = abs(fit.beta_hat - true_beta) / true_beta
    return ErrorSummary(
        _mean_std(errs["T1"]),
        _mean_std(errs["T2"]),
        _mean_std(errs["duration"]),
        alpha_rel,
        beta_rel,
        int(errs["T1"].size),
    )


def truths_of(cohort: Sequence[Trajectory]) -> dict[str, GroundTruth]:
    out = {}
    for traj in cohort:
        if traj.truth is None:
            raise ValueError(f"trajectory {traj.id} has no ground truth")
        out[traj.id] = traj.truth
    return out
