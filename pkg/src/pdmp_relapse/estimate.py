"""Jump-time estimation by two-sided iterative regression.

The remission date is found by fitting ``log y = c0 + c1 * d`` to growing
prefixes of the trajectory and keeping the prefix whose fit, continued by a
flat segment at the threshold, best explains the whole trajectory. The
relapse date comes from the same search run backwards over the part of the
trajectory after the estimated remission date.

All dates are handled relative to the first visit, so estimates are
equivariant under a shift of the time origin.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .simulate import Trajectory

MIN_POINTS = 3
# Alg. break rule: stop after this many visits once the error goes up.
BREAK_AFTER = 15
FLAT_MIN_EXCEEDANCES = 3
FLAT_TRAILING = 2
FLAT_SD_FACTOR = 2.0
# MAD to standard deviation for Gaussian noise
_MAD_SCALE = 1.482602218505602


class EstimationError(ValueError):
    """No admissible remission date could be fitted."""


@dataclass(frozen=True)
class JumpEstimate:
    id: str
    T1_hat: float
    v_minus_hat: float
    zeta0_hat: float
    fit_error: float
    T2_hat: float | None = None
    v_plus_hat: float | None = None
    fit_error_t2: float | None = None

    @property
    def censored_pred(self) -> bool:
        return self.T2_hat is None

    def modes(self, dates: np.ndarray) -> np.ndarray:
        """Mode label of each visit date under the estimated jump times."""
        d = np.asarray(dates, dtype=float)
        labels = np.where(d < self.T1_hat, -1, 0)
        if self.T2_hat is not None:
            labels = np.where(d > self.T2_hat, 1, labels)
        return labels


@dataclass(frozen=True)
class EstimationFailure:
    id: str
    reason: str


def floor_level(zeta_r: float) -> float:
    """Smallest value kept before taking logs."""
    return max(0.01 * zeta_r, 1e-6)


def log_floored(values: np.ndarray, zeta_r: float) -> np.ndarray:
    return np.log(np.maximum(values, floor_level(zeta_r)))


def _prefix_ols(x: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Intercepts and slopes of the OLS lines through the first j points, j = 1..n."""
    n = np.arange(1, x.size + 1, dtype=float)
    sx = np.cumsum(x)
    sz = np.cumsum(z)
    sxx = np.cumsum(x * x)
    sxz = np.cumsum(x * z)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = (n * sxz - sx * sz) / (n * sxx - sx * sx)
        intercept = (sz - slope * sx) / n
    return intercept, slope


def _scan(valid: np.ndarray, errors: np.ndarray) -> int | None:
    """Running-minimum search with the early break; returns the chosen row."""
    best = math.inf
    chosen = None
    for row in range(valid.size):
        if not valid[row]:
            continue
        j = row + MIN_POINTS
        if errors[row] <= best:
            best = errors[row]
            chosen = row
        elif j > BREAK_AFTER:
            break
    return chosen


def estimate_T1(traj: Trajectory, zeta_r: float) -> tuple[float, float, float, float]:
    """Estimate the remission date of one trajectory.

    Returns
    -------
    T1_hat, v_minus_hat, zeta0_hat, fit_error
        ``zeta0_hat`` is the fitted level at the first visit and
        ``fit_error`` the combined squared error of the selected prefix.

    Raises
    ------
    EstimationError
        If no prefix yields a decaying fit that crosses ``zeta_r`` after
        the first visit.
    """
    if zeta_r <= 0:
        raise ValueError("zeta_r must be positive")
    n = len(traj)
    if n < MIN_POINTS:
        raise EstimationError(f"need at least {MIN_POINTS} observations, got {n}")
    d0 = traj.dates[0]
    x = traj.dates - d0
    y = traj.values
    c0, c1 = _prefix_ols(x, log_floored(y, zeta_r))
    c0, c1 = c0[MIN_POINTS - 1 :], c1[MIN_POINTS - 1 :]

    log_r = math.log(zeta_r)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_cand = (log_r - c0) / c1
    valid = (c1 < 0) & (t_cand > 0) & np.isfinite(t_cand)
    if not valid.any():
        raise EstimationError("no prefix gives a decaying fit crossing the threshold")

    plateau_sq = (y - zeta_r) ** 2
    suffix_plateau = np.concatenate([np.cumsum(plateau_sq[::-1])[::-1], [0.0]])
    errors = np.full(c0.size, np.inf)
    rows = np.flatnonzero(valid)
    k = np.searchsorted(x, t_cand[rows], side="right")
    with np.errstate(over="ignore"):
        fitted = np.exp(c0[rows, None] + c1[rows, None] * x[None, :])
        resid = np.where(np.arange(n)[None, :] < k[:, None], (y[None, :] - fitted) ** 2, 0.0)
    errors[rows] = resid.sum(axis=1) + suffix_plateau[k]

    row = _scan(valid, errors)
    assert row is not None
    return (
        float(t_cand[row] + d0),
        float(c1[row]),
        float(math.exp(c0[row])),
        float(errors[row]),
    )


def is_flat(tail: np.ndarray, zeta_r: float) -> bool:
    """Whether a post-remission tail shows no credible rise above ``zeta_r``.

    The noise scale is the MAD of the tail about ``zeta_r``, which the
    growth segment of a relapse barely moves as long as most of the tail is
    plateau. A rise is credible when at least three observations exceed
    ``zeta_r`` by two noise scales and the last two of them are the final
    visits (relapse is absorbing, so it must still show at the end).
    """
    excess = tail - zeta_r
    scale = _MAD_SCALE * float(np.median(np.abs(excess)))
    above = excess > FLAT_SD_FACTOR * scale
    if int(np.count_nonzero(above)) < FLAT_MIN_EXCEEDANCES:
        return True
    return not bool(np.all(above[-FLAT_TRAILING:]))


def estimate_T2(
    traj: Trajectory, T1_hat: float, zeta_r: float, *, screen: bool = True
) -> tuple[float, float, float] | None:
    """Estimate the relapse date after ``T1_hat``; ``None`` means censored.

    With ``screen=False`` the flatness test is skipped and only the
    regression search decides.

    Returns
    -------
    (T2_hat, v_plus_hat, fit_error) or None
    """
    mask = traj.dates > T1_hat
    m = int(mask.sum())
    if m < MIN_POINTS:
        return None
    d0 = traj.dates[0]
    x = traj.dates[mask] - d0
    y = traj.values[mask]
    if screen and is_flat(y, zeta_r):
        return None
    lo, hi = T1_hat - d0, x[-1]

    # reversed tail: prefix j of the reversed arrays is the last j points
    c0, c1 = _prefix_ols(x[::-1], log_floored(y, zeta_r)[::-1])
    c0, c1 = c0[MIN_POINTS - 1 :], c1[MIN_POINTS - 1 :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_cand = (math.log(zeta_r) - c0) / c1
    valid = (c1 > 0) & (t_cand > lo) & (t_cand <= hi) & np.isfinite(t_cand)
    if not valid.any():
        return None

    plateau_sq = (y - zeta_r) ** 2
    prefix_plateau = np.concatenate([[0.0], np.cumsum(plateau_sq)])
    errors = np.full(c0.size, np.inf)
    rows = np.flatnonzero(valid)
    # points at or before the candidate stay on the plateau
    split = np.searchsorted(x, t_cand[rows], side="right")
    with np.errstate(over="ignore"):
        fitted = np.exp(c0[rows, None] + c1[rows, None] * x[None, :])
        resid = np.where(np.arange(m)[None, :] >= split[:, None], (y[None, :] - fitted) ** 2, 0.0)
    errors[rows] = resid.sum(axis=1) + prefix_plateau[split]

    row = _scan(valid, errors)
    assert row is not None
    return float(t_cand[row] + d0), float(c1[row]), float(errors[row])


def estimate_jumps(traj: Trajectory, zeta_r: float) -> JumpEstimate:
    T1_hat, v_minus_hat, zeta0_hat, err = estimate_T1(traj, zeta_r)
    second = estimate_T2(traj, T1_hat, zeta_r)
    if second is None:
        return JumpEstimate(traj.id, T1_hat, v_minus_hat, zeta0_hat, err)
    T2_hat, v_plus_hat, err2 = second
    return JumpEstimate(traj.id, T1_hat, v_minus_hat, zeta0_hat, err, T2_hat, v_plus_hat, err2)


def _estimate_or_fail(traj: Trajectory, zeta_r: float) -> JumpEstimate | EstimationFailure:
    try:
        return estimate_jumps(traj, zeta_r)
    except EstimationError as exc:
        return EstimationFailure(traj.id, str(exc))


def _estimate_chunk(args) -> list[JumpEstimate | EstimationFailure]:
    trajs, zeta_r = args
    return [_estimate_or_fail(t, zeta_r) for t in trajs]


def estimate_cohort(
    trajs: Sequence[Trajectory], zeta_r: float, workers: int = 1
) -> list[JumpEstimate | EstimationFailure]:
    """Estimate every trajectory; failures are returned in place, not raised."""
    if workers <= 1 or len(trajs) < 2 * workers:
        return _estimate_chunk((trajs, zeta_r))
    size = math.ceil(len(trajs) / workers)
    chunks = [list(trajs[i : i + size]) for i in range(0, len(trajs), size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(_estimate_chunk, [(c, zeta_r) for c in chunks])
        return [est for part in parts for est in part]
