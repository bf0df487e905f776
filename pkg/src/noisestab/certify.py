"""Sampled verification of Lyapunov certificates and noise-class constants.

These are checks on a finite sample of the ball |x| <= r0 (and of a time
grid), not proofs: a passing report means no sampled point violates an
inequality by more than the tolerance.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate
from scipy.stats import norm, qmc

from .core import (
    ConfigurationError,
    DynamicalSystem,
    LyapunovCertificate,
    NoiseModel,
    eval_sigma,
    max_entry_norm,
)

TOLERANCE = 1e-9
INEQUALITIES = ("sandwich", "gradient", "hessian", "decay")


@dataclass(frozen=True)
class SamplingPlan:
    """Radial shells r0*k/K (k = 0..K) times quasi-uniform directions, and
    a time grid 0, t_step, ..., t_check used for time-dependent inputs."""

    shells: int = 32
    directions_per_dim: int = 64
    t_check: float = 50.0
    t_step: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.shells < 1 or self.directions_per_dim < 1:
            raise ConfigurationError("sampling plan is empty")
        if self.t_step <= 0 or self.t_check < 0:
            raise ConfigurationError("time grid must have positive step")

    def directions(self, n: int) -> np.ndarray:
        if n == 1:
            return np.array([[-1.0], [1.0]])
        count = self.directions_per_dim * n
        u = qmc.Halton(d=n, scramble=True, seed=self.seed).random(count)
        g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def points(self, n: int, r0: float) -> np.ndarray:
        dirs = self.directions(n)
        radii = r0 * np.arange(1, self.shells + 1) / self.shells
        pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, n)
        return np.vstack([np.zeros((1, n)), pts])

    def times(self, time_dependent: bool) -> np.ndarray:
        if not time_dependent:
            return np.array([0.0])
        return np.arange(0.0, self.t_check + 0.5 * self.t_step, self.t_step)


@dataclass
class CertReport:
    passed: bool
    worst_margins: dict
    violation_points: list = field(default_factory=list)
    sampled_points: int = 0
    tolerance: float = TOLERANCE

    def to_text(self) -> str:
        lines = [
            f"passed: {str(self.passed).lower()}",
            f"sampled_points: {self.sampled_points}",
            f"tolerance: {self.tolerance!r}",
        ]
        lines += [f"margin.{k}: {v!r}" for k, v in self.worst_margins.items()]
        lines.append(f"violations: {len(self.violation_points)}")
        lines.append("note: sampled check on a finite grid, not a proof")
        return "\n".join(lines) + "\n"

    def write_violations_csv(self, path) -> None:
        n = len(self.violation_points[0][0]) if self.violation_points else 1
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x_{k + 1}" for k in range(n)] + ["t", "inequality", "margin"])
            for x, t, ineq, margin in self.violation_points:
                w.writerow([repr(float(c)) for c in x] + [repr(float(t)), ineq, repr(float(margin))])


def verify_certificate(
    cert: LyapunovCertificate,
    system: DynamicalSystem,
    grid: SamplingPlan = SamplingPlan(),
    tolerance: float = TOLERANCE,
) -> CertReport:
    """Evaluate the sandwich, gradient, Hessian and decay inequalities."""
    if cert.gamma < 0:
        raise ConfigurationError("certificate gamma must be nonnegative")
    if cert.dimension != system.dimension:
        raise ConfigurationError("certificate and system dimensions differ")
    x = grid.points(cert.dimension, cert.r0)
    times = grid.times(cert.time_dependent or not system.autonomous)
    if x.size == 0 or times.size == 0:
        raise ConfigurationError("empty sampling grid")
    r2 = np.sum(x * x, axis=-1)
    worst = {k: math.inf for k in INEQUALITIES}
    violations = []
    for t in times:
        t = float(t)
        v = cert.value(x, t)
        grad = cert.gradient(x, t)
        hess = cert.hessian(x, t)
        dvdt = cert.time_derivative(x, t) + np.sum(grad * system.f(x, t), axis=-1)
        margins = {
            "sandwich": np.minimum(v - r2, cert.A * r2 - v),
            "gradient": cert.B * r2 - np.sum(grad * grad, axis=-1),
            "hessian": cert.C - np.max(np.abs(hess), axis=(-2, -1)),
            "decay": -cert.gamma * v - dvdt,
        }
        for name, m in margins.items():
            worst[name] = min(worst[name], float(np.min(m)))
            for idx in np.flatnonzero(m < -tolerance):
                violations.append((x[idx].copy(), t, name, float(m[idx])))
    passed = all(m >= -tolerance for m in worst.values())
    return CertReport(passed, worst, violations, x.shape[0] * times.size, tolerance)


def estimate_h(noise: NoiseModel, r0: float, grid: SamplingPlan = SamplingPlan()) -> float:
    """Largest sampled max-entry norm of sigma over |y| <= r0 (a lower
    estimate of the true supremum)."""
    y = grid.points(noise.rows, r0)
    best = 0.0
    for t in grid.times(not noise.autonomous):
        best = max(best, float(np.max(max_entry_norm(eval_sigma(noise, y, float(t))))))
    return best


class DampedClassResult(NamedTuple):
    passed: bool
    integral: float
    diagnostic: str = ""


def _integrate_envelope(zeta, horizon: float) -> float:
    # geometric panels keep early mass resolved however long the horizon
    edges = [0.0, 1.0]
    while edges[-1] < horizon:
        edges.append(min(2.0 * edges[-1], horizon))
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            if b > a:
                total += integrate.quad(zeta, a, b, limit=200)[0]
    return total


def verify_damped_class(
    noise: NoiseModel,
    r0: float,
    grid: SamplingPlan = SamplingPlan(),
    quad_horizon: float = 1000.0,
    tolerance: float = TOLERANCE,
) -> DampedClassResult:
    """Check sigma <= zeta on the sampled ball and that zeta integrates to at most h.

    Without a declared analytic tail, integrability is accepted only if the
    mass on [H, 2H] is negligible (below 1e-6 relative).
    """
    tag = noise.class_tag
    if tag.kind != "J_h":
        raise ConfigurationError("noise model is not tagged with class J_h")
    zeta = tag.zeta
    y = grid.points(noise.rows, r0)
    for t in np.arange(0.0, min(grid.t_check, quad_horizon) + 0.5 * grid.t_step, grid.t_step):
        s = float(np.max(max_entry_norm(eval_sigma(noise, y, float(t)))))
        if s > zeta(float(t)) + tolerance:
            return DampedClassResult(False, math.nan, f"sigma={s:g} exceeds zeta={zeta(float(t)):g} at t={t:g}")
    try:
        total = _integrate_envelope(zeta, quad_horizon)
        if tag.zeta_tail is not None:
            total += float(tag.zeta_tail(quad_horizon))
        else:
            extra = _integrate_envelope(lambda s: zeta(s + quad_horizon), quad_horizon)
            if extra > 1e-6 * max(1.0, total):
                return DampedClassResult(
                    False, total + extra, f"envelope mass {extra:g} on [H, 2H]; not integrable to H={quad_horizon:g}"
                )
    except integrate.IntegrationWarning as exc:
        return DampedClassResult(False, math.nan, f"quadrature did not converge: {exc}")
    if total > tag.h * (1.0 + 1e-9) + tolerance:
        return DampedClassResult(False, total, f"integral {total:g} exceeds h={tag.h:g}")
    return DampedClassResult(True, total, "")
