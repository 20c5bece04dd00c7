"""Longitudinal cohort CSV I/O and cleaning rules.

Cleaning, in order:

1. ``leading-low``: drop the first observation while it is lower than the
   second (the trajectory must start under treatment).
2. ``isolated-dip``: drop observations below ``low`` whose two neighbours
   are both above ``high`` (measurement errors).
3. ``low-start``: drop trajectories whose first value is below ``high``.
4. ``never-remitted``: drop trajectories with fewer than ``min_below``
   values below ``high``.
5. ``too-short``: drop trajectories with fewer than ``min_obs`` values.

Rules 1 and 2 are repeated until neither removes anything, because a
removed dip can expose a new increasing start; this makes the whole
procedure idempotent.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .simulate import GroundTruth, Trajectory

RULES = ("leading-low", "isolated-dip", "low-start", "never-remitted", "too-short")


class CohortFormatError(ValueError):
    pass


@dataclass
class PreprocessReport:
    removed: dict[str, list[tuple[int, str]]] = field(default_factory=dict)
    dropped: list[tuple[str, str]] = field(default_factory=list)
    n_trajectories_before: int = 0
    n_trajectories_after: int = 0
    n_observations_before: int = 0
    n_observations_after: int = 0

    def to_json(self) -> dict:
        return {
            "removed": {
                tid: [{"index": i, "rule": rule} for i, rule in items]
                for tid, items in self.removed.items()
            },
            "dropped": [{"id": tid, "rule": rule} for tid, rule in self.dropped],
            "n_trajectories_before": self.n_trajectories_before,
            "n_trajectories_after": self.n_trajectories_after,
            "n_observations_before": self.n_observations_before,
            "n_observations_after": self.n_observations_after,
        }

    def write(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


def _clean_observations(values: np.ndarray, low: float, high: float) -> list[tuple[int, str]]:
    """Indices (into ``values``) removed by rules 1 and 2, with their rule."""
    keep = list(range(values.size))
    removed: list[tuple[int, str]] = []
    changed = True
    while changed:
        changed = False
        while len(keep) >= 2 and values[keep[0]] < values[keep[1]]:
            removed.append((keep.pop(0), "leading-low"))
            changed = True
        dips = [
            pos
            for pos in range(1, len(keep) - 1)
            if values[keep[pos]] < low
            and values[keep[pos - 1]] > high
            and values[keep[pos + 1]] > high
        ]
        for pos in reversed(dips):
            removed.append((keep.pop(pos), "isolated-dip"))
            changed = True
    return sorted(removed)


def preprocess(
    cohort: Sequence[Trajectory],
    low: float = 1.0,
    high: float = 5.0,
    min_obs: int = 10,
    min_below: int = 2,
) -> tuple[list[Trajectory], PreprocessReport]:
    report = PreprocessReport(
        n_trajectories_before=len(cohort),
        n_observations_before=sum(len(t) for t in cohort),
    )
    out = []
    for traj in cohort:
        removed = _clean_observations(traj.values, low, high)
        if removed:
            report.removed[traj.id] = removed
        mask = np.ones(len(traj), dtype=bool)
        mask[[i for i, _ in removed]] = False
        values = traj.values[mask]

        if values[0] < high:
            reason = "low-start"
        elif np.count_nonzero(values < high) < min_below:
            reason = "never-remitted"
        elif values.size < min_obs:
            reason = "too-short"
        else:
            reason = None
        if reason is not None:
            report.dropped.append((traj.id, reason))
            continue
        if removed:
            traj = Trajectory(traj.id, traj.dates[mask], values, traj.truth)
        out.append(traj)
    report.n_trajectories_after = len(out)
    report.n_observations_after = sum(len(t) for t in out)
    return out, report


def read_cohort(path: str | Path) -> list[Trajectory]:
    """Read an ``id,day,value`` long-format CSV, sorted by id then day."""
    rows: dict[str, list[tuple[float, float, int]]] = defaultdict(list)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "day", "value"} - set(reader.fieldnames or ())
        if missing:
            raise CohortFormatError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                day = float(row["day"])
                value = float(row["value"])
            except (TypeError, ValueError):
                raise CohortFormatError(f"{path}:{lineno}: non-numeric day or value") from None
            if not (np.isfinite(day) and np.isfinite(value)):
                raise CohortFormatError(f"{path}:{lineno}: non-finite day or value")
            if day < 0:
                raise CohortFormatError(f"{path}:{lineno}: negative day")
            tid = row["id"]
            if tid is None or tid == "":
                raise CohortFormatError(f"{path}:{lineno}: empty id")
            rows[tid].append((day, value, lineno))

    cohort = []
    for tid in sorted(rows):
        obs = sorted(rows[tid])
        for (d1, _, l1), (d2, _, l2) in zip(obs, obs[1:]):
            if d1 == d2:
                a, b = sorted((l1, l2))
                raise CohortFormatError(f"{path}: duplicate ({tid}, {d1}) on rows {a} and {b}")
        cohort.append(
            Trajectory(tid, np.array([o[0] for o in obs]), np.array([o[1] for o in obs]))
        )
    return cohort


def write_cohort(cohort: Sequence[Trajectory], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "day", "value"])
        for traj in cohort:
            for d, y in zip(traj.dates, traj.values):
                writer.writerow([traj.id, repr(float(d)), repr(float(y))])


def write_truth(cohort: Sequence[Trajectory], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "T1", "T2", "horizon", "censored"])
        for traj in cohort:
            if traj.truth is None:
                continue
            t = traj.truth
            writer.writerow([traj.id, repr(t.T1), repr(t.T2), repr(t.horizon), int(t.censored)])


def read_truth(path: str | Path) -> dict[str, GroundTruth]:
    out = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                out[row["id"]] = GroundTruth(
                    float(row["T1"]),
                    float(row["T2"]),
                    float(row["horizon"]),
                    bool(int(row["censored"])),
                )
            except (KeyError, TypeError, ValueError):
                raise CohortFormatError(f"{path}:{lineno}: malformed truth row") from None
    return out


def attach_truth(
    cohort: Sequence[Trajectory], truths: dict[str, GroundTruth]
) -> list[Trajectory]:
    return [Trajectory(t.id, t.dates, t.values, truths.get(t.id, t.truth)) for t in cohort]
