"""Noisy trajectory generation from the three-mode PDMP.

Each trajectory draws its randomness from its own stream, derived from
``(master_seed, batch, index)`` through :class:`numpy.random.SeedSequence`,
so a cohort is identical whatever order or process it is generated in.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Literal, Sequence

import numpy as np
import numpy.typing as npt

from .model import ModelParams, boundary_time

NoiseKind = Literal["additive", "multiplicative"]


@dataclass(frozen=True)
class GroundTruth:
    T1: float
    T2: float
    horizon: float
    censored: bool


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Visit days and observed biomarker values for one subject."""

    id: str
    dates: np.ndarray
    values: np.ndarray
    truth: GroundTruth | None = None

    def __post_init__(self) -> None:
        dates = np.asarray(self.dates, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if dates.ndim != 1 or dates.shape != values.shape:
            raise ValueError(f"trajectory {self.id}: dates and values must be 1-d of equal length")
        if dates.size == 0:
            raise ValueError(f"trajectory {self.id}: no observations")
        if np.any(np.diff(dates) <= 0):
            raise ValueError(f"trajectory {self.id}: dates must be strictly increasing")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.dates.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.dates, other.dates)
            and np.array_equal(self.values, other.values)
            and self.truth == other.truth
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class ScenarioConfig:
    params: ModelParams = field(default_factory=ModelParams)
    n_trajectories: int = 500
    n_batches: int = 100
    master_seed: int = 0
    noise: NoiseKind = "additive"

    def __post_init__(self) -> None:
        if self.n_trajectories < 1 or self.n_batches < 1:
            raise ValueError("n_trajectories and n_batches must be >= 1")
        if self.noise not in ("additive", "multiplicative"):
            raise ValueError(f"unknown noise model {self.noise!r}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")

    def to_json(self) -> dict:
        p = self.params
        return {
            "n_trajectories": self.n_trajectories,
            "n_batches": self.n_batches,
            "master_seed": self.master_seed,
            "noise": self.noise,
            "params": {
                "zeta_r": p.zeta_r,
                "v_minus": p.v_minus,
                "v_plus": p.v_plus,
                "alpha": p.alpha,
                "beta": p.beta,
                "sigma": p.sigma,
                "delta": p.delta,
                "zeta0_min": p.zeta0_range[0],
                "zeta0_max": p.zeta0_range[1],
                "horizon_min": p.horizon_range[0],
                "horizon_max": p.horizon_range[1],
            },
        }

    @classmethod
    def from_json(cls, doc: dict) -> ScenarioConfig:
        raw = dict(doc.get("params", {}))
        kwargs = {k: float(raw.pop(k)) for k in list(raw) if k in _SCALAR_PARAMS}
        if "zeta0_min" in raw or "zeta0_max" in raw:
            default = ModelParams().zeta0_range
            kwargs["zeta0_range"] = (
                float(raw.pop("zeta0_min", default[0])),
                float(raw.pop("zeta0_max", default[1])),
            )
        if "horizon_min" in raw or "horizon_max" in raw:
            default = ModelParams().horizon_range
            kwargs["horizon_range"] = (
                float(raw.pop("horizon_min", default[0])),
                float(raw.pop("horizon_max", default[1])),
            )
        if raw:
            raise ValueError(f"unknown params keys: {sorted(raw)}")
        unknown = set(doc) - {"n_trajectories", "n_batches", "master_seed", "noise", "params"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(
            params=ModelParams(**kwargs),
            n_trajectories=int(doc.get("n_trajectories", 500)),
            n_batches=int(doc.get("n_batches", 100)),
            master_seed=int(doc.get("master_seed", 0)),
            noise=doc.get("noise", "additive"),
        )

    @classmethod
    def load(cls, path: str | Path) -> ScenarioConfig:
        with open(path) as fh:
            return cls.from_json(json.load(fh))


_SCALAR_PARAMS = {"zeta_r", "v_minus", "v_plus", "alpha", "beta", "sigma", "delta"}


def trajectory_rng(master_seed: int, batch: int, index: int) -> np.random.Generator:
    """Independent random stream for trajectory ``index`` of ``batch``."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(batch, index)))


def trajectory_id(batch: int, index: int) -> str:
    return f"b{batch:03d}-{index:05d}"


def sample_weibull(rng: np.random.Generator, alpha: float, beta: float, size=None):
    u = rng.random(size)
    return beta * (-np.log1p(-u)) ** (1.0 / alpha)


def noiseless_levels(
    dates: npt.ArrayLike, zeta0: float, T1: float, T2: float, params: ModelParams
) -> np.ndarray:
    d = np.asarray(dates, dtype=float)
    decay = zeta0 * np.exp(params.v_minus * d)
    growth = params.zeta_r * np.exp(params.v_plus * np.maximum(d - T2, 0.0))
    return np.where(d < T1, decay, np.where(d > T2, growth, params.zeta_r))


def simulate_trajectory(
    params: ModelParams,
    zeta0: float,
    horizon: float,
    seed: int | np.random.Generator | np.random.SeedSequence | None = None,
    *,
    noise: NoiseKind = "additive",
    dates: npt.ArrayLike | None = None,
    traj_id: str = "0",
) -> Trajectory:
    """Simulate one observed trajectory.

    Visits fall every ``params.delta`` days from day 0 up to ``horizon``
    unless ``dates`` overrides the grid. Additive noise (the default) can
    produce non-positive observations; they are returned unchanged.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    rng = np.random.default_rng(seed)
    T1 = boundary_time(zeta0, params)
    w = float(sample_weibull(rng, params.alpha, params.beta))
    T2 = T1 + w
    if dates is None:
        d = np.arange(math.floor(horizon / params.delta) + 1) * params.delta
    else:
        d = np.asarray(dates, dtype=float)
    zeta = noiseless_levels(d, zeta0, T1, T2, params)
    eps = rng.normal(0.0, params.sigma, size=d.size) if params.sigma > 0 else np.zeros(d.size)
    y = zeta * np.exp(eps) if noise == "multiplicative" else zeta + eps
    truth = GroundTruth(T1=T1, T2=T2, horizon=float(horizon), censored=bool(horizon <= T2))
    return Trajectory(traj_id, d, y, truth)


def _simulate_one(config: ScenarioConfig, batch: int, index: int) -> Trajectory:
    rng = trajectory_rng(config.master_seed, batch, index)
    p = config.params
    zeta0 = rng.uniform(*p.zeta0_range)
    horizon = rng.uniform(*p.horizon_range)
    return simulate_trajectory(
        p, zeta0, horizon, rng, noise=config.noise, traj_id=trajectory_id(batch, index)
    )


def _simulate_chunk(args: tuple[ScenarioConfig, int, Sequence[int]]) -> list[Trajectory]:
    config, batch, indices = args
    return [_simulate_one(config, batch, i) for i in indices]


def simulate_batch(config: ScenarioConfig, batch: int = 0, workers: int = 1) -> list[Trajectory]:
    """The ``batch``-th cohort of ``config.n_trajectories`` trajectories."""
    indices = range(config.n_trajectories)
    if workers <= 1:
        return _simulate_chunk((config, batch, indices))
    chunks = [indices[w::workers] for w in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_simulate_chunk, [(config, batch, c) for c in chunks]))
    out: list[Trajectory | None] = [None] * config.n_trajectories
    for chunk, part in zip(chunks, parts):
        for i, traj in zip(chunk, part):
            out[i] = traj
    return out  # type: ignore[return-value]


def iter_batches(config: ScenarioConfig) -> Iterator[list[Trajectory]]:
    for b in range(config.n_batches):
        yield simulate_batch(config, b)


def truth_table(cohort: Sequence[Trajectory]) -> list[dict]:
    rows = []
    for traj in cohort:
        if traj.truth is None:
            continue
        row = {"id": traj.id, **asdict(traj.truth)}
        row["censored"] = int(row["censored"])
        rows.append(row)
    return rows
