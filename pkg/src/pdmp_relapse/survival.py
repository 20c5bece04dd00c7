"""Right-censored Weibull fit and Kaplan-Meier curve of remission durations."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import numpy.typing as npt

logger = logging.getLogger(__name__)

MAX_ITER = 200
REL_TOL = 1e-8
Z_95 = 1.959963984540054


class UnfittableError(ValueError):
    """The sample carries no relapse event, so the Weibull fit is undefined."""


@dataclass(frozen=True)
class SurvivalSample:
    duration: float
    event: bool


@dataclass(frozen=True)
class SurvivalFit:
    alpha_hat: float
    beta_hat: float
    log_likelihood: float
    n_events: int
    n_censored: int
    converged: bool
    iterations: int = 0

    def to_json(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat,
            "beta_hat": self.beta_hat,
            "log_likelihood": self.log_likelihood,
            "n_events": self.n_events,
            "n_censored": self.n_censored,
            "converged": int(self.converged),
        }


def as_arrays(samples: Iterable[SurvivalSample]) -> tuple[np.ndarray, np.ndarray]:
    samples = list(samples)
    t = np.array([s.duration for s in samples], dtype=float)
    e = np.array([bool(s.event) for s in samples], dtype=bool)
    return t, e


def _clean(durations: npt.ArrayLike, events: npt.ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(durations, dtype=float)
    e = np.asarray(events, dtype=bool)
    if t.shape != e.shape or t.ndim != 1:
        raise ValueError("durations and events must be 1-d arrays of equal length")
    keep = t > 0
    dropped = int(t.size - keep.sum())
    if dropped:
        logger.warning("dropped %d non-positive durations", dropped)
    return t[keep], e[keep]


def weibull_loglik(
    alpha: float, beta: float, durations: npt.ArrayLike, events: npt.ArrayLike
) -> float:
    """Censored Weibull log-likelihood (events contribute the density, others survival)."""
    t = np.asarray(durations, dtype=float)
    e = np.asarray(events, dtype=bool)
    z = (t / beta) ** alpha
    te = t[e]
    return float(
        te.size * (math.log(alpha) - alpha * math.log(beta))
        + (alpha - 1.0) * np.log(te).sum()
        - z.sum()
    )


def profile_scale(alpha: float, durations: npt.ArrayLike, events: npt.ArrayLike) -> float:
    """Scale maximizing the likelihood at fixed shape ``alpha``."""
    t, e = _clean(durations, events)
    r = int(e.sum())
    if r == 0:
        raise UnfittableError("no events")
    t_max = t.max()
    return float(t_max * (np.sum((t / t_max) ** alpha) / r) ** (1.0 / alpha))


def _profile_score(alpha: float, log_s: np.ndarray, sum_log_s_events: float, r: int) -> float:
    # derivative of the profile log-likelihood in alpha, on durations scaled by their max
    a = alpha * log_s
    w = np.exp(a - a.max())
    return r / alpha + sum_log_s_events - r * float(np.dot(w, log_s) / w.sum())


def fit_weibull_censored(
    durations: npt.ArrayLike, events: npt.ArrayLike, *, alpha: float | None = None
) -> SurvivalFit:
    """Maximum-likelihood Weibull shape and scale from right-censored durations.

    For fixed shape the optimal scale is explicit, so the fit reduces to a
    root search of the profile score in ``log(alpha)``: bracketing from
    ``alpha = 1`` by doubling or halving, then bisection until the relative
    width of the bracket falls below ``1e-8``.

    Parameters
    ----------
    durations : array_like
        Time in remission; non-positive entries are dropped with a warning.
    events : array_like of bool
        True where the relapse was observed, False where censored.
    alpha : float, optional
        Fix the shape and only profile the scale.

    Raises
    ------
    UnfittableError
        If there is no event.
    """
    t, e = _clean(durations, events)
    r = int(e.sum())
    n_cens = int(t.size - r)
    if r == 0:
        raise UnfittableError("no relapse event: Weibull parameters are not identifiable")

    if alpha is not None:
        beta = profile_scale(alpha, t, e)
        return SurvivalFit(alpha, beta, weibull_loglik(alpha, beta, t, e), r, n_cens, True)

    log_s = np.log(t / t.max())
    sum_ev = float(log_s[e].sum())

    def score(log_alpha: float) -> float:
        return _profile_score(math.exp(log_alpha), log_s, sum_ev, r)

    lo = hi = 0.0
    it = 0
    if score(0.0) > 0:
        while score(hi) > 0:
            lo, hi = hi, hi + math.log(2.0)
            it += 1
            if it >= MAX_ITER:
                break
    else:
        while score(lo) <= 0:
            lo, hi = lo - math.log(2.0), lo
            it += 1
            if it >= MAX_ITER:
                break
    converged = False
    while it < MAX_ITER:
        if hi - lo < REL_TOL:
            converged = True
            break
        mid = 0.5 * (lo + hi)
        if score(mid) > 0:
            lo = mid
        else:
            hi = mid
        it += 1
    if not converged:
        logger.warning("Weibull fit did not converge after %d iterations", it)

    alpha_hat = math.exp(0.5 * (lo + hi))
    beta_hat = profile_scale(alpha_hat, t, e)
    return SurvivalFit(
        alpha_hat,
        beta_hat,
        weibull_loglik(alpha_hat, beta_hat, t, e),
        r,
        n_cens,
        converged,
        it,
    )


@dataclass(frozen=True, eq=False)
class KaplanMeierCurve:
    """Product-limit survival estimate at each distinct observed time."""

    time: np.ndarray
    survival: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray

    def __call__(self, t: npt.ArrayLike) -> np.ndarray | float:
        """Right-continuous step function; 1 before the first time."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.time, t_arr, side="right") - 1
        out = np.where(idx >= 0, self.survival[np.maximum(idx, 0)], 1.0)
        return float(out) if out.ndim == 0 else out

    def rows(self) -> list[dict]:
        return [
            {
                "time": float(self.time[i]),
                "survival": float(self.survival[i]),
                "ci_low": float(self.ci_low[i]),
                "ci_high": float(self.ci_high[i]),
                "at_risk": int(self.at_risk[i]),
                "events": int(self.events[i]),
            }
            for i in range(self.time.size)
        ]


def kaplan_meier(durations: npt.ArrayLike, events: npt.ArrayLike) -> KaplanMeierCurve:
    """Kaplan-Meier estimate with a Greenwood-based 95% band.

    The band is computed on the log(-log S) scale so it stays inside
    [0, 1]; it collapses onto the estimate where S is 0 or 1.
    """
    t = np.asarray(durations, dtype=float)
    e = np.asarray(events, dtype=bool)
    if t.size == 0:
        raise ValueError("Kaplan-Meier needs at least one subject")
    if t.shape != e.shape:
        raise ValueError("durations and events must have equal length")
    times, inverse = np.unique(t, return_inverse=True)
    d = np.bincount(inverse, weights=e, minlength=times.size).astype(int)
    removed = np.bincount(inverse, minlength=times.size)
    n = t.size - np.concatenate([[0], np.cumsum(removed)[:-1]])

    surv = np.cumprod(1.0 - d / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        green = np.cumsum(np.where(d > 0, d / (n * (n - d)), 0.0))
        log_s = np.log(surv)
        se = np.sqrt(green) / np.abs(log_s)
        low = surv ** np.exp(Z_95 * se)
        high = surv ** np.exp(-Z_95 * se)
    degenerate = (surv <= 0) | (surv >= 1) | ~np.isfinite(se)
    low = np.where(degenerate, surv, low)
    high = np.where(degenerate, surv, high)
    return KaplanMeierCurve(times, surv, low, high, n, d)


def survival_samples(
    T1_hat: Sequence[float],
    T2_hat: Sequence[float | None],
    follow_up_end: Sequence[float],
) -> list[SurvivalSample]:
    """Remission durations: to relapse when one is predicted, else to end of follow-up."""
    out = []
    for t1, t2, end in zip(T1_hat, T2_hat, follow_up_end):
        if t2 is None:
            out.append(SurvivalSample(end - t1, False))
        else:
            out.append(SurvivalSample(t2 - t1, True))
    return out
