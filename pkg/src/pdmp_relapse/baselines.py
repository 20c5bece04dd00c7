"""Comparison methods working on log-differences of the observations.

Both methods label the ``N - 1`` consecutive log-differences of a
trajectory with the three modes in temporal order; labels are carried back
to the ``N`` observations by giving observation ``i`` the label of
difference ``min(i, N - 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from .estimate import log_floored
from .simulate import Trajectory

LEFT_RIGHT_TRANSITION = np.array(
    [
        [0.3, 0.7, 0.0],
        [0.0, 0.4, 0.6],
        [0.0, 0.0, 1.0],
    ]
)
MODE_OF_STATE = np.array([-1, 0, 1])
VAR_FLOOR = 1e-6


def diff_signal(traj: Trajectory, zeta_r: float = 1.0) -> np.ndarray:
    """``log(y_i) - log(y_{i+1})`` on values floored as in the jump estimator."""
    if len(traj) < 2:
        raise ValueError("need at least two observations for a difference signal")
    logs = log_floored(traj.values, zeta_r)
    return logs[:-1] - logs[1:]


def lift_labels(signal_labels: npt.ArrayLike) -> np.ndarray:
    """Labels of the N observations from labels of the N - 1 differences."""
    lab = np.asarray(signal_labels)
    return np.append(lab, lab[-1])


# --- change-point detection -------------------------------------------------


@dataclass(frozen=True, eq=False)
class Segmentation:
    ends: tuple[int, ...]
    cost: float
    means: np.ndarray

    def labels(self) -> np.ndarray:
        """Segment index of each signal point."""
        out = np.empty(self.ends[-1], dtype=int)
        start = 0
        for k, end in enumerate(self.ends):
            out[start:end] = k
            start = end
        return out


def segment_cost(signal: npt.ArrayLike, ends: tuple[int, ...]) -> float:
    x = np.asarray(signal, dtype=float)
    total, start = 0.0, 0
    for end in ends:
        seg = x[start:end]
        total += float(np.sum((seg - seg.mean()) ** 2))
        start = end
    return total


def cpd_segment(signal: npt.ArrayLike, K: int = 2) -> Segmentation:
    """Optimal least-squares segmentation into ``K + 1`` contiguous pieces.

    Exact dynamic programming over segment end points, O(K N^2) with prefix
    sums. Among equal costs the earliest breakpoints win. ``ends`` follows the
    usual convention of listing the exclusive end of every segment, the last
    one being ``len(signal)``.
    """
    x = np.asarray(signal, dtype=float)
    n = x.size
    if K < 0:
        raise ValueError("K must be non-negative")
    if n < K + 1:
        raise ValueError(f"signal of length {n} cannot hold {K + 1} segments")
    s1 = np.concatenate([[0.0], np.cumsum(x)])
    s2 = np.concatenate([[0.0], np.cumsum(x * x)])
    i = np.arange(n + 1)[:, None]
    j = np.arange(n + 1)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        cost = (s2[j] - s2[i]) - (s1[j] - s1[i]) ** 2 / (j - i)
    cost = np.where(j > i, np.maximum(cost, 0.0), np.inf)

    # best[k, e]: cost of splitting x[:e] into k + 1 segments
    best = np.full((K + 1, n + 1), np.inf)
    arg = np.zeros((K + 1, n + 1), dtype=int)
    best[0] = cost[0]
    for k in range(1, K + 1):
        total = best[k - 1][:, None] + cost
        arg[k] = np.argmin(total, axis=0)
        best[k] = total[arg[k], np.arange(n + 1)]

    ends = [n]
    for k in range(K, 0, -1):
        ends.append(int(arg[k, ends[-1]]))
    ends = tuple(reversed(ends))
    starts = (0,) + ends[:-1]
    means = np.array([x[a:b].mean() for a, b in zip(starts, ends)])
    return Segmentation(ends, float(best[K, n]), means)


def cpd_partition(traj: Trajectory, zeta_r: float = 1.0) -> np.ndarray:
    """Per-observation modes from the two-breakpoint segmentation."""
    seg = cpd_segment(diff_signal(traj, zeta_r), K=2)
    return lift_labels(MODE_OF_STATE[seg.labels()])


# --- constrained Gaussian HMM -----------------------------------------------


@dataclass(frozen=True, eq=False)
class HmmSpec:
    """Starting point of the EM fit.

    ``means``/``variances`` left as None are initialized from the three
    consecutive thirds of the signal.
    """

    initial_dist: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    transition: np.ndarray = field(default_factory=lambda: LEFT_RIGHT_TRANSITION.copy())
    means: np.ndarray | None = None
    variances: np.ndarray | None = None
    tol: float = 1e-4
    max_iter: int = 100


@dataclass(frozen=True, eq=False)
class HmmFit:
    states: np.ndarray
    transition: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    loglik_history: list[float]
    transition_history: list[np.ndarray]
    converged: bool
    degenerate: bool = False

    @property
    def modes(self) -> np.ndarray:
        return MODE_OF_STATE[self.states]


def _log_emission(x: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    return -0.5 * (
        np.log(2.0 * math.pi * variances)[None, :]
        + (x[:, None] - means[None, :]) ** 2 / variances[None, :]
    )


def _forward_backward(x, pi, A, means, variances):
    log_b = _log_emission(x, means, variances)
    shift = log_b.max(axis=1)
    b = np.exp(log_b - shift[:, None])
    T, S = b.shape
    alpha = np.empty((T, S))
    scale = np.empty(T)
    a = pi * b[0]
    scale[0] = a.sum()
    alpha[0] = a / scale[0]
    for t in range(1, T):
        a = (alpha[t - 1] @ A) * b[t]
        scale[t] = a.sum()
        alpha[t] = a / scale[t]
    beta = np.empty((T, S))
    beta[-1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = (A @ (b[t + 1] * beta[t + 1])) / scale[t + 1]
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    xi_sum = np.zeros((S, S))
    for t in range(T - 1):
        xi = alpha[t][:, None] * A * (b[t + 1] * beta[t + 1])[None, :]
        xi_sum += xi / xi.sum()
    loglik = float(np.log(scale).sum() + shift.sum())
    return gamma, xi_sum, loglik


def _viterbi(x, pi, A, means, variances) -> np.ndarray:
    log_b = _log_emission(x, means, variances)
    with np.errstate(divide="ignore"):
        log_a = np.log(A)
        delta = np.log(pi) + log_b[0]
    T, S = log_b.shape
    back = np.zeros((T, S), dtype=int)
    for t in range(1, T):
        cand = delta[:, None] + log_a
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(S)] + log_b[t]
    path = np.empty(T, dtype=int)
    path[-1] = int(np.argmax(delta))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def hmm_fit_decode(signal: npt.ArrayLike, spec: HmmSpec | None = None) -> HmmFit:
    """Baum-Welch fit of the three-state left-to-right HMM, then Viterbi path.

    Transition entries that start at zero stay exactly zero because the
    re-estimate is proportional to the current entry; the initial
    distribution is held fixed.
    """
    spec = spec or HmmSpec()
    x = np.asarray(signal, dtype=float)
    if x.size < 3:
        raise ValueError("HMM needs a signal of length >= 3")
    pi = np.asarray(spec.initial_dist, dtype=float)
    A = np.asarray(spec.transition, dtype=float).copy()

    if np.ptp(x) == 0:
        return HmmFit(
            np.zeros(x.size, dtype=int),
            A,
            np.full(3, x[0]),
            np.full(3, VAR_FLOOR),
            [],
            [A.copy()],
            converged=False,
            degenerate=True,
        )

    thirds = np.array_split(x, 3)
    means = (
        np.array([p.mean() for p in thirds])
        if spec.means is None
        else np.asarray(spec.means, dtype=float).copy()
    )
    variances = (
        np.maximum([p.var() for p in thirds], VAR_FLOOR)
        if spec.variances is None
        else np.maximum(np.asarray(spec.variances, dtype=float), VAR_FLOOR)
    )

    history: list[float] = []
    transitions = [A.copy()]
    converged = False
    for _ in range(spec.max_iter):
        gamma, xi_sum, loglik = _forward_backward(x, pi, A, means, variances)
        if history and abs(loglik - history[-1]) < spec.tol:
            history.append(loglik)
            converged = True
            break
        history.append(loglik)

        row_tot = xi_sum.sum(axis=1, keepdims=True)
        A = np.where(row_tot > 0, xi_sum / np.where(row_tot > 0, row_tot, 1.0), A)
        occ = gamma.sum(axis=0)
        seen = occ > 0
        new_means = (gamma * x[:, None]).sum(axis=0) / np.where(seen, occ, 1.0)
        means = np.where(seen, new_means, means)
        new_var = (gamma * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / np.where(
            seen, occ, 1.0
        )
        variances = np.where(seen, np.maximum(new_var, VAR_FLOOR), variances)
        transitions.append(A.copy())

    states = _viterbi(x, pi, A, means, variances)
    return HmmFit(states, A, means, variances, history, transitions, converged)


def hmm_partition(traj: Trajectory, zeta_r: float = 1.0, spec: HmmSpec | None = None) -> np.ndarray:
    fit = hmm_fit_decode(diff_signal(traj, zeta_r), spec)
    return lift_labels(fit.modes)
