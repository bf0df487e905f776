"""Batch estimation of exit probabilities and empirical checks of the bounds."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import norm

from .bounds import CSV_COLUMNS, BoundReport, PerturbedLyapunov
from .core import ConfigurationError
from .simulate import IntegratorConfig, TrajectoryBatch, run_batch

DEFAULT_LEVEL = 0.99
COMPARE_COLUMNS = CSV_COLUMNS + ("p_hat", "ci_low", "ci_high", "n", "dominated")


def wilson_interval(k: int, n: int, level: float = DEFAULT_LEVEL) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("n must be positive")
    z = norm.ppf(0.5 + 0.5 * level)
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half))


@dataclass(frozen=True)
class McEstimate:
    n_trajectories: int
    n_exited: int
    p_hat: float
    ci_low: float
    ci_high: float
    aborted: int = 0
    level: float = DEFAULT_LEVEL
    mu: Optional[float] = None
    epsilon: Optional[float] = None
    T: Optional[float] = None
    y0_norm: Optional[float] = None
    horizon_reached: bool = True

    @classmethod
    def from_counts(cls, n, exited, aborted=0, level=DEFAULT_LEVEL, **meta) -> "McEstimate":
        lo, hi = wilson_interval(exited, n, level)
        return cls(n, exited, exited / n, lo, hi, aborted, level, **meta)

    @classmethod
    def from_batch(cls, batch: TrajectoryBatch, level=DEFAULT_LEVEL) -> "McEstimate":
        return cls.from_counts(
            len(batch),
            int(np.sum(batch.exited)),
            batch.n_aborted,
            level,
            mu=batch.mu,
            epsilon=batch.epsilon,
            T=batch.T,
            y0_norm=float(np.linalg.norm(batch.y0)),
            horizon_reached=batch.horizon_reached,
        )

    @property
    def unreliable(self) -> bool:
        return self.aborted > 0.01 * self.n_trajectories

    @property
    def std_error(self) -> float:
        return math.sqrt(self.p_hat * (1 - self.p_hat) / self.n_trajectories)

    def merge(self, other: "McEstimate") -> "McEstimate":
        meta = ("mu", "epsilon", "T", "y0_norm", "level")
        if any(getattr(self, k) != getattr(other, k) for k in meta):
            raise ConfigurationError("cannot merge estimates of different experiments")
        merged = McEstimate.from_counts(
            self.n_trajectories + other.n_trajectories,
            self.n_exited + other.n_exited,
            self.aborted + other.aborted,
            self.level,
            mu=self.mu,
            epsilon=self.epsilon,
            T=self.T,
            y0_norm=self.y0_norm,
        )
        return replace(merged, horizon_reached=self.horizon_reached and other.horizon_reached)


def estimate_exit_probability(
    system,
    noise,
    mu: float,
    y0,
    epsilon: float,
    T: float,
    n_trajectories: int,
    config: IntegratorConfig,
    level: float = DEFAULT_LEVEL,
    workers: Optional[int] = None,
    chunk_size: int = 100_000,
) -> McEstimate:
    """Fraction of stopped trajectories that leave the epsilon-ball before T.

    Trajectory indices ``config.trajectory_index + 0 .. n - 1`` are
    simulated in chunks and reduced with ``McEstimate.merge``.
    """
    if n_trajectories < 100:
        raise ConfigurationError("at least 100 trajectories are required")
    est = None
    start = config.trajectory_index
    for lo in range(0, n_trajectories, chunk_size):
        count = min(chunk_size, n_trajectories - lo)
        batch = run_batch(system, noise, mu, y0, epsilon, T, config, count, start + lo, workers=workers)
        part = McEstimate.from_batch(batch, level)
        est = part if est is None else est.merge(part)
    if est.unreliable:
        warnings.warn(f"{est.aborted} of {est.n_trajectories} trajectories aborted", RuntimeWarning)
    return est


@dataclass(frozen=True)
class SupermartingaleResult:
    verdict: bool
    means: np.ndarray
    std_errors: np.ndarray
    ci: list
    checkpoints: np.ndarray


def stopped_values(pl: PerturbedLyapunov, batch: TrajectoryBatch) -> np.ndarray:
    """V_N(y(s_t), s_t; T) at every checkpoint, shape (trajectories, checkpoints)."""
    states = batch.checkpoint_states
    times = np.minimum(batch.checkpoint_stop_times, pl.T)
    cert = pl.cert
    out = np.empty(times.shape)
    for j in range(times.shape[1]):
        if cert.time_dependent:
            v = np.array([cert.value(states[i, j], float(times[i, j])) for i in range(times.shape[0])])
        else:
            v = cert.value(states[:, j], 0.0)
        out[:, j] = pl.value_from_v(v, times[:, j])
    return out


def supermartingale_test(pl: PerturbedLyapunov, trajectories: TrajectoryBatch, checkpoints=None, slack=3.0):
    """Sample means of V_N along the stopped paths must not increase between
    consecutive checkpoints by more than ``slack`` times the summed standard errors."""
    if checkpoints is not None and not np.allclose(checkpoints, trajectories.checkpoint_times):
        raise ConfigurationError("batch was simulated with different checkpoints")
    if len(trajectories) < 1000:
        warnings.warn("fewer than 1000 trajectories: supermartingale test is underpowered", RuntimeWarning)
    vals = stopped_values(pl, trajectories)
    means = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(vals.shape[0])
    ok = all(means[i + 1] <= means[i] + slack * (se[i] + se[i + 1]) for i in range(len(means) - 1))
    ci = [(m - slack * s, m + slack * s) for m, s in zip(means, se)]
    return SupermartingaleResult(bool(ok), means, se, ci, trajectories.checkpoint_times)


class Comparison(NamedTuple):
    dominated: bool
    margin: float


def compare_bound(empirical: McEstimate, report: BoundReport, rtol: float = 1e-9) -> Comparison:
    """The bound dominates when the empirical CI lower end does not exceed it."""

    def same(a, b):
        return a is None or b is None or math.isclose(a, b, rel_tol=rtol, abs_tol=1e-15)

    if not (same(empirical.mu, report.mu) and same(empirical.epsilon, report.epsilon)):
        raise ConfigurationError("estimate and bound refer to different mu or epsilon")
    if not same(empirical.y0_norm, report.y0_norm):
        raise ConfigurationError("estimate and bound refer to different initial states")
    if math.isfinite(report.T) and empirical.T is not None and empirical.T > report.T * (1 + rtol):
        raise ConfigurationError("estimate was simulated beyond the horizon the bound covers")
    return Comparison(empirical.ci_low <= report.bound, report.bound - empirical.p_hat)


def compare_row(report: BoundReport, est: McEstimate, dominated: bool) -> dict:
    row = report.to_row()
    row.update(
        p_hat=repr(float(est.p_hat)),
        ci_low=repr(float(est.ci_low)),
        ci_high=repr(float(est.ci_high)),
        n=str(est.n_trajectories),
        dominated=str(bool(dominated)).lower(),
    )
    return row
