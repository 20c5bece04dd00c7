"""Three-mode PDMP for biomarker trajectories under treatment.

Modes are -1 (sick under treatment, exponential decay), 0 (remission,
level pinned at the threshold while a clock ``u`` runs) and 1 (relapse,
exponential growth, absorbing). The first jump is deterministic, when the
decaying level hits the remission threshold; the second is random with a
Weibull hazard in the remission clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import numpy.typing as npt

MODES = (-1, 0, 1)


@dataclass(frozen=True)
class ModelParams:
    """Generative constants of the PDMP and of the observation scheme.

    Parameters
    ----------
    zeta_r : float
        Remission threshold (biomarker units).
    v_minus : float
        Decay slope in mode -1, per day (negative).
    v_plus : float
        Growth slope in mode 1, per day (positive).
    alpha, beta : float
        Weibull shape and scale (days) of the time spent in remission.
    sigma : float
        Observation noise standard deviation.
    delta : float
        Days between two visits.
    zeta0_range, horizon_range : tuple of float
        Closed intervals for the uniform draws of the initial level and of
        the follow-up horizon.
    """

    zeta_r: float = 1.0
    v_minus: float = -0.046
    v_plus: float = 0.012
    alpha: float = 4.69
    beta: float = 1650.0
    sigma: float = 1.0
    delta: float = 30.0
    zeta0_range: tuple[float, float] = (15.0, 55.0)
    horizon_range: tuple[float, float] = (900.0, 1900.0)

    def __post_init__(self) -> None:
        checks = {
            "v_minus < 0": self.v_minus < 0,
            "v_plus > 0": self.v_plus > 0,
            "alpha > 0": self.alpha > 0,
            "beta > 0": self.beta > 0,
            "zeta_r > 0": self.zeta_r > 0,
            "sigma >= 0": self.sigma >= 0,
            "delta > 0": self.delta > 0,
            "zeta0_range ordered": self.zeta0_range[0] <= self.zeta0_range[1],
            "horizon_range ordered": self.horizon_range[0] <= self.horizon_range[1],
            "horizon_range positive": self.horizon_range[0] > 0,
            "zeta0_range above zeta_r": self.zeta0_range[0] > self.zeta_r,
        }
        failed = [name for name, ok in checks.items() if not ok]
        if failed:
            raise ValueError(f"invalid ModelParams: {', '.join(failed)}")

    def with_(self, **changes) -> ModelParams:
        return replace(self, **changes)


@dataclass(frozen=True)
class PdmpState:
    """Hybrid state: discrete mode, biomarker level and remission clock."""

    mode: int
    zeta: float
    u: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


def flow(state: PdmpState, t: float, params: ModelParams) -> PdmpState:
    """Deterministic motion of ``state`` during ``t`` days without a jump."""
    if t < 0:
        raise ValueError(f"flow duration must be non-negative, got {t}")
    if state.mode == -1:
        return PdmpState(-1, state.zeta * math.exp(params.v_minus * t), state.u)
    if state.mode == 0:
        return PdmpState(0, params.zeta_r, state.u + t)
    return PdmpState(1, state.zeta * math.exp(params.v_plus * t), state.u)


def boundary_time(zeta0: float, params: ModelParams) -> float:
    """Time for the mode -1 flow started at ``zeta0`` to reach ``zeta_r``."""
    if not zeta0 > params.zeta_r:
        raise ValueError(
            f"initial level {zeta0} must exceed the remission threshold {params.zeta_r}"
        )
    return math.log(params.zeta_r / zeta0) / params.v_minus


def _check_shape_scale(alpha: float, beta: float) -> None:
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"Weibull shape and scale must be positive, got {alpha}, {beta}")


def weibull_hazard(u: npt.ArrayLike, alpha: float, beta: float) -> np.ndarray | float:
    """Jump intensity out of remission after ``u`` days in remission."""
    _check_shape_scale(alpha, beta)
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 0):
        raise ValueError("hazard is only defined for u > 0")
    out = (alpha / beta) * (u_arr / beta) ** (alpha - 1.0)
    return float(out) if out.ndim == 0 else out


def weibull_survival(t: npt.ArrayLike, alpha: float, beta: float) -> np.ndarray | float:
    _check_shape_scale(alpha, beta)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("survival is only defined for t >= 0")
    out = np.exp(-((t_arr / beta) ** alpha))
    return float(out) if out.ndim == 0 else out


def weibull_pdf(t: npt.ArrayLike, alpha: float, beta: float) -> np.ndarray | float:
    _check_shape_scale(alpha, beta)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("density is only defined for t >= 0")
    z = t_arr / beta
    with np.errstate(divide="ignore"):
        # z**(alpha-1) is inf at 0 when alpha < 1, matching the density's limit
        out = (alpha / beta) * z ** (alpha - 1.0) * np.exp(-(z**alpha))
    return float(out) if out.ndim == 0 else out


def weibull_mean(alpha: float, beta: float) -> float:
    _check_shape_scale(alpha, beta)
    return beta * math.gamma(1.0 + 1.0 / alpha)


def kernel_transition(state: PdmpState, params: ModelParams | None = None) -> PdmpState:
    """Post-jump location: only the mode changes.

    If ``params`` is given, a mode -1 state must sit on the threshold.
    """
    if state.mode == 1:
        raise ValueError("mode 1 is absorbing: no jump can leave it")
    if state.mode == -1:
        if params is not None and not math.isclose(state.zeta, params.zeta_r, rel_tol=1e-9):
            raise ValueError(
                f"mode -1 jumps only on the threshold {params.zeta_r}, got level {state.zeta}"
            )
        return PdmpState(0, state.zeta, 0.0)
    return PdmpState(1, state.zeta, state.u)
