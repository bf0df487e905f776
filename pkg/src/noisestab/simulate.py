"""Euler-Maruyama integration of dy = f dt + mu G dw, stopped at the first
exit from the ball |y| < epsilon or at the horizon T.

The batch engine is compiled with numba once per (drift kernel, noise
kernel) pair. Trajectory ``i`` of a batch reads its Wiener increments from
the counter-based stream keyed by ``(seed, start + i)``, so results do not
depend on the batch split or on the number of threads.

Bridge correction: between two in-ball states the probability that the
Brownian bridge touched the sphere is sampled. In one dimension this is the
exact two-sided formula for frozen G over the step. In higher dimensions it
is a heuristic: the one-sided bridge formula applied to |y| with the noise
projected on the radial direction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np
from numba import njit, prange

from . import rng
from .core import (
    ConfigurationError,
    DynamicalSystem,
    LyapunovCertificate,
    NoiseModel,
    apply_generator,
)

STATUS_HORIZON = 0
STATUS_EXITED = 1
STATUS_ABORTED = 2
STATUS_TRUNCATED = 3

EXIT_NONE = 0
EXIT_DISCRETE = 1
EXIT_BRIDGE = 2


def default_dt(epsilon: float, mu: float) -> float:
    """min(1e-2, epsilon^2 / (100 mu^2)): a step's noise stays well inside the ball."""
    if mu <= 0 or not math.isfinite(epsilon):
        return 1e-2
    return min(1e-2, epsilon**2 / (100.0 * mu**2))


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-2
    bridge_correction: bool = True
    max_steps: int = 10_000_000
    seed: int = 0
    trajectory_index: int = 0
    truncate: bool = False
    path_stride: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be positive")
        if not 0 <= self.seed < 2**64 or not 0 <= self.trajectory_index < 2**64:
            raise ConfigurationError("seed and trajectory_index must be unsigned 64-bit")
        if self.path_stride < 0:
            raise ConfigurationError("path_stride must be nonnegative")

    def steps_for(self, T: float) -> tuple[int, bool]:
        """Number of steps to run and whether the horizon is reached."""
        needed = max(1, int(math.ceil(T / self.dt - 1e-9)))
        if needed <= self.max_steps:
            return needed, True
        if not self.truncate:
            raise ConfigurationError(
                f"dt*max_steps = {self.dt * self.max_steps:g} does not reach T = {T:g}"
            )
        return self.max_steps, False


@dataclass
class StoppedTrajectory:
    exited: bool
    stop_time: float
    final_state: np.ndarray
    sup_norm_observed: float
    status: int = STATUS_HORIZON
    exit_kind: int = EXIT_NONE
    path_samples: Optional[np.ndarray] = None

    @property
    def bridge_exit(self) -> bool:
        return self.exit_kind == EXIT_BRIDGE

    @property
    def horizon_reached(self) -> bool:
        return self.status != STATUS_TRUNCATED


@dataclass
class TrajectoryBatch:
    """Struct-of-arrays result of ``run_batch``."""

    start_index: int
    exited: np.ndarray
    stop_time: np.ndarray
    final_state: np.ndarray
    sup_norm: np.ndarray
    status: np.ndarray
    exit_kind: np.ndarray
    checkpoint_times: np.ndarray
    checkpoint_states: np.ndarray
    checkpoint_stop_times: np.ndarray
    T: float
    mu: float
    epsilon: float
    y0: np.ndarray
    paths: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.exited.shape[0]

    @property
    def n_aborted(self) -> int:
        return int(np.sum(self.status == STATUS_ABORTED))

    @property
    def horizon_reached(self) -> bool:
        return not bool(np.any(self.status == STATUS_TRUNCATED))

    def trajectory(self, i: int) -> StoppedTrajectory:
        path = None
        if self.paths is not None:
            p = self.paths[i]
            path = p[~np.isnan(p[:, 0])]
        return StoppedTrajectory(
            exited=bool(self.exited[i]),
            stop_time=float(self.stop_time[i]),
            final_state=self.final_state[i].copy(),
            sup_norm_observed=float(self.sup_norm[i]),
            status=int(self.status[i]),
            exit_kind=int(self.exit_kind[i]),
            path_samples=path,
        )


# ---------------------------------------------------------------------------
# kernels


def _auto_kernel(func, rows: int, cols: Optional[int] = None):
    """Wrap an array-returning point function into an in-place numba kernel."""
    try:
        jitted = njit(func)
    except Exception as exc:  # pragma: no cover - numba raises many types
        raise ConfigurationError(f"cannot compile {func!r} for simulation: {exc}") from exc

    if cols is None:

        @njit
        def kernel(y, t, out):
            out[:] = jitted(y, t)

    else:

        @njit
        def kernel(y, t, out):
            out[:, :] = jitted(y, t)

    return kernel


def drift_kernel(system: DynamicalSystem):
    return system.kernel if system.kernel is not None else _auto_kernel(system.drift, system.dimension)


def noise_kernel(noise: NoiseModel):
    return noise.kernel if noise.kernel is not None else _auto_kernel(noise.g, noise.rows, noise.cols)


_ENGINES: dict = {}


def _engine(drift_k, g_k, n: int, m: int):
    key = (id(drift_k), id(g_k), n, m)
    hit = _ENGINES.get(key)
    if hit is not None:
        return hit[0]
    # bridge-test exponent beyond which the crossing probability is < 1e-17
    far = 40.0

    @njit(parallel=True)
    def engine(y0, mu, eps, T, dt, nsteps, full, seed, start, count, bridge, ck_steps, stride, nrec):
        nck = ck_steps.shape[0]
        exited = np.zeros(count, np.bool_)
        status = np.zeros(count, np.int8)
        kind = np.zeros(count, np.int8)
        stop = np.empty(count)
        final = np.empty((count, n))
        supn = np.empty(count)
        ck_y = np.empty((count, nck, n))
        ck_t = np.empty((count, nck))
        npath = count if stride > 0 else 1
        paths = np.full((npath, nrec, n + 1), np.nan)
        for i in prange(count):
            key = rng.stream_key(seed, start + np.uint64(i))
            bkey = rng.side_key(key)
            spare = 0.0
            y = y0.copy()
            ynew = np.empty(n)
            f = np.empty(n)
            G = np.empty((n, m))
            z = np.empty(m)
            r = np.sqrt(np.sum(y * y))
            sup = r
            ci = 0
            while ci < nck and ck_steps[ci] == 0:
                ck_y[i, ci, :] = y
                ck_t[i, ci] = 0.0
                ci += 1
            rec = 0
            if stride > 0:
                paths[i, 0, 0] = 0.0
                paths[i, 0, 1:] = y
                rec = 1
            t = 0.0
            st = STATUS_HORIZON if full else STATUS_TRUNCATED
            ek = EXIT_NONE
            for s in range(nsteps):
                t = s * dt
                if full and s == nsteps - 1:
                    tn = T
                else:
                    tn = (s + 1) * dt
                h = tn - t
                drift_k(y, t, f)
                g_k(y, t, G)
                sq = np.sqrt(h)
                k0 = s * m
                for j in range(m):
                    k = k0 + j
                    if k % 2 == 0:
                        za, spare = rng.normal_pair(key, k // 2)
                        z[j] = za * sq
                    else:
                        z[j] = spare * sq
                rn2 = 0.0
                for a in range(n):
                    acc = y[a] + f[a] * h
                    for j in range(m):
                        acc += mu * G[a, j] * z[j]
                    ynew[a] = acc
                    rn2 += acc * acc
                rn = np.sqrt(rn2)
                if not np.isfinite(rn):
                    st = STATUS_ABORTED
                    y[:] = ynew
                    t = tn
                    break
                if rn >= eps:
                    st = STATUS_EXITED
                    ek = EXIT_DISCRETE
                    y[:] = ynew
                    sup = max(sup, rn)
                    t = tn
                    break
                if bridge and mu > 0.0:
                    p = 0.0
                    side = 1.0
                    if n == 1:
                        s2 = 0.0
                        for j in range(m):
                            s2 += G[0, j] * G[0, j]
                        s2 *= mu * mu * h
                        if s2 > 0.0:
                            au = 2.0 * (eps - y[0]) * (eps - ynew[0]) / s2
                            al = 2.0 * (eps + y[0]) * (eps + ynew[0]) / s2
                            pu = np.exp(-au) if au < far else 0.0
                            pl = np.exp(-al) if al < far else 0.0
                            p = pu + pl
                            if pl > pu:
                                side = -1.0
                    else:
                        r0 = np.sqrt(np.sum(y * y))
                        ref = y if r0 > 0.0 else ynew
                        rr = r0 if r0 > 0.0 else rn
                        if rr > 0.0:
                            s2 = 0.0
                            for j in range(m):
                                proj = 0.0
                                for a in range(n):
                                    proj += ref[a] * G[a, j]
                                proj /= rr
                                s2 += proj * proj
                            s2 *= mu * mu * h
                            if s2 > 0.0:
                                ar = 2.0 * (eps - r0) * (eps - rn) / s2
                                p = np.exp(-ar) if ar < far else 0.0
                    if p > 0.0 and rng.uniform_at(bkey, s) < p:
                        st = STATUS_EXITED
                        ek = EXIT_BRIDGE
                        if n == 1:
                            y[0] = side * eps
                        elif rn > 0.0:
                            for a in range(n):
                                y[a] = ynew[a] * eps / rn
                        sup = max(sup, eps)
                        t = tn
                        break
                y[:] = ynew
                t = tn
                if rn > sup:
                    sup = rn
                while ci < nck and ck_steps[ci] == s + 1:
                    ck_y[i, ci, :] = y
                    ck_t[i, ci] = t
                    ci += 1
                if stride > 0 and (s + 1) % stride == 0 and rec < nrec:
                    paths[i, rec, 0] = t
                    paths[i, rec, 1:] = y
                    rec += 1
            while ci < nck:
                ck_y[i, ci, :] = y
                ck_t[i, ci] = t
                ci += 1
            if stride > 0 and rec < nrec and paths[i, rec - 1, 0] != t:
                paths[i, rec, 0] = t
                paths[i, rec, 1:] = y
            exited[i] = st == STATUS_EXITED
            status[i] = st
            kind[i] = ek
            stop[i] = t
            final[i, :] = y
            supn[i] = sup
        return exited, status, kind, stop, final, supn, ck_y, ck_t, paths

    _ENGINES[key] = (engine, drift_k, g_k)
    return engine


# ---------------------------------------------------------------------------
# public API


def euler_maruyama_step(y, t, system: DynamicalSystem, noise: NoiseModel, mu, dt, dW) -> np.ndarray:
    """One step y + f(y, t) dt + mu G(y, t) dW."""
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    out = y + system.f(y, t) * dt + mu * noise.G(y, t) @ dW
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"non-finite state after step from {y} at t={t}")
    return out


def _check_inputs(system, noise, y0, epsilon):
    if system.dimension != noise.rows:
        raise ConfigurationError("system and noise dimensions differ")
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if y0.shape != (system.dimension,):
        raise ConfigurationError(f"y0 has shape {y0.shape}, expected ({system.dimension},)")
    if not np.linalg.norm(y0) < epsilon:
        raise ConfigurationError(f"|y0| = {np.linalg.norm(y0):g} is not inside the ball of radius {epsilon:g}")
    return y0


def run_batch(
    system: DynamicalSystem,
    noise: NoiseModel,
    mu: float,
    y0,
    epsilon: float,
    T: float,
    config: IntegratorConfig,
    count: int,
    start_index: Optional[int] = None,
    checkpoints=None,
    workers: Optional[int] = None,
) -> TrajectoryBatch:
    """Simulate ``count`` stopped trajectories with indices ``start_index ...``.

    ``checkpoints`` are times in [0, T]; each is rounded to the step grid
    and the stopped state y(s_t) and stopped time s_t are recorded there.
    """
    y0 = _check_inputs(system, noise, y0, epsilon)
    if not T > 0:
        raise ConfigurationError("horizon T must be positive")
    if count < 1:
        raise ConfigurationError("count must be positive")
    nsteps, full = config.steps_for(T)
    start = config.trajectory_index if start_index is None else start_index
    ck = np.asarray([] if checkpoints is None else checkpoints, dtype=float)
    if ck.size and (np.any(ck < 0) or np.any(ck > T * (1 + 1e-12)) or np.any(np.diff(ck) < 0)):
        raise ConfigurationError("checkpoints must be ascending within [0, T]")
    ck_steps = np.minimum(np.rint(ck / config.dt), nsteps).astype(np.int64)
    ck_steps[np.isclose(ck, T)] = nsteps
    stride = config.path_stride
    nrec = nsteps // stride + 2 if stride > 0 else 1
    engine = _engine(drift_kernel(system), noise_kernel(noise), system.dimension, noise.cols)
    if workers is not None:
        numba.set_num_threads(max(1, min(int(workers), numba.config.NUMBA_NUM_THREADS)))
    out = engine(
        y0,
        float(mu),
        float(epsilon),
        float(T),
        float(config.dt),
        nsteps,
        full,
        np.uint64(config.seed),
        np.uint64(start),
        int(count),
        bool(config.bridge_correction),
        ck_steps,
        int(stride),
        int(nrec),
    )
    exited, status, kind, stop, final, supn, ck_y, ck_t, paths = out
    return TrajectoryBatch(
        start_index=start,
        exited=exited,
        stop_time=stop,
        final_state=final,
        sup_norm=supn,
        status=status,
        exit_kind=kind,
        checkpoint_times=ck,
        checkpoint_states=ck_y,
        checkpoint_stop_times=ck_t,
        T=float(T),
        mu=float(mu),
        epsilon=float(epsilon),
        y0=y0,
        paths=paths if stride > 0 else None,
    )


def run_stopped_trajectory(system, noise, mu, y0, epsilon, T, config: IntegratorConfig) -> StoppedTrajectory:
    """Single trajectory keyed by ``(config.seed, config.trajectory_index)``."""
    batch = run_batch(system, noise, mu, y0, epsilon, T, config, 1)
    traj = batch.trajectory(0)
    if traj.status == STATUS_ABORTED:
        warnings.warn(f"trajectory {config.trajectory_index} aborted: non-finite state", RuntimeWarning)
    return traj


def write_path_csv(path, trajectory: StoppedTrajectory, cert: LyapunovCertificate, pl=None) -> None:
    """Dump a recorded path: columns t, y_1..y_n, V, V_N."""
    import csv

    if trajectory.path_samples is None:
        raise ConfigurationError("trajectory was simulated without path recording")
    samples = trajectory.path_samples
    n = samples.shape[1] - 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"y_{k + 1}" for k in range(n)] + ["V", "V_N"])
        for row in samples:
            t, y = float(row[0]), row[1:]
            v = float(cert.value(y, t))
            vn = float(pl.value(y, min(t, pl.T))) if pl is not None else ""
            w.writerow([repr(t)] + [repr(float(c)) for c in y] + [repr(v), repr(vn) if vn != "" else ""])


@dataclass(frozen=True)
class GeneratorCheck:
    mc_estimate: float
    analytic: float
    discrepancy: float
    std_error: float


def generator_check(
    cert: LyapunovCertificate,
    system: DynamicalSystem,
    noise: NoiseModel,
    mu: float,
    y,
    t: float,
    dt: float = 1e-4,
    n_samples: int = 100_000,
    seed: int = 0,
) -> GeneratorCheck:
    """One-step Monte Carlo estimate of E[V(y(t+dt)) - V(y)] / dt against the generator."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    dW = rng.normal_matrix(np.uint64(seed), np.uint64(0), int(n_samples), noise.cols) * math.sqrt(dt)
    f = system.f(y, t)
    G = noise.G(y, t)
    ynext = y + f * dt + mu * dW @ G.T
    diffs = (cert.value(ynext, t + dt) - cert.value(y, t)) / dt
    est = float(np.mean(diffs))
    se = float(np.std(diffs, ddof=1) / math.sqrt(n_samples))
    analytic = float(apply_generator(cert, system, noise, mu, y, t))
    return GeneratorCheck(est, analytic, est - analytic, se)


@dataclass(frozen=True)
class StrongOrderResult:
    dts: np.ndarray
    errors: np.ndarray
    slope: float


def strong_error_study(
    system: DynamicalSystem,
    noise: NoiseModel,
    mu: float,
    y0,
    T: float,
    dts,
    n_paths: int = 2000,
    seed: int = 0,
    ref_refinement: int = 16,
) -> StrongOrderResult:
    """Strong error E|y_dt(T) - y_ref(T)| against a fine Euler-Maruyama reference.

    All step sizes must divide T into powers of two; coarse increments are
    sums of the reference increments, so every level sees the same Brownian
    path. ``slope`` is the least-squares slope of log2(error) on log2(dt).
    """
    dts = np.asarray(sorted(dts, reverse=True), dtype=float)
    ref_dt = dts[-1] / ref_refinement
    n_ref = int(round(T / ref_dt))
    if not np.isclose(n_ref * ref_dt, T):
        raise ConfigurationError("step sizes must divide T")
    m = noise.cols
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    z = rng.normal_matrix(np.uint64(seed), np.uint64(0), int(n_paths), n_ref * m)
    inc = z.reshape(n_paths, n_ref, m) * math.sqrt(ref_dt)

    def integrate(dt):
        k = int(round(dt / ref_dt))
        coarse = inc.reshape(n_paths, n_ref // k, k, m).sum(axis=2)
        y = np.tile(y0, (n_paths, 1))
        for s in range(coarse.shape[1]):
            t = s * dt
            y = y + system.f(y, t) * dt + mu * np.einsum("pij,pj->pi", noise.G(y, t), coarse[:, s])
        return y

    ref = integrate(ref_dt)
    errors = np.array([np.mean(np.linalg.norm(integrate(dt) - ref, axis=-1)) for dt in dts])
    slope = float(np.polyfit(np.log2(dts), np.log2(errors), 1)[0])
    return StrongOrderResult(dts, errors, slope)
