"""Shared domain types: deterministic systems, noise models, Lyapunov
certificates and experiment parameters.

Array convention: every user callable is vectorized over leading axes. A
state argument ``x`` has shape ``(..., n)`` and ``t`` is a scalar time.
Drifts return ``(..., n)``, noise matrices ``(..., n, m)``, Lyapunov values
``(...)``, gradients ``(..., n)`` and Hessians ``(..., n, n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

MAX_DIMENSION = 16
EQUILIBRIUM_TOL = 1e-12
SYMMETRY_TOL = 1e-12


class ConfigurationError(ValueError):
    """Inconsistent or invalid experiment configuration."""


class RegimeError(ConfigurationError):
    """A bound was requested outside the regime where it is defined."""


class DomainError(ValueError):
    """Function evaluated outside its domain."""


def _as_states(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != n:
        raise ConfigurationError(f"state has trailing dimension {x.shape[-1]}, expected {n}")
    return x


# ---------------------------------------------------------------------------
# finite-difference helpers


def fd_step(x: np.ndarray) -> np.ndarray:
    """Relative step 1e-5 * max(1, |x|), one value per state."""
    return 1e-5 * np.maximum(1.0, np.linalg.norm(x, axis=-1))


def fd_gradient(v: Callable, x: np.ndarray, t: float, scale: float = 1.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = (scale * fd_step(x))[..., None]
    grad = np.empty_like(x)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        grad[..., i] = (v(x + h * e, t) - v(x - h * e, t)) / (2.0 * h[..., 0])
    return grad


def fd_hessian_from_grad(grad: Callable, x: np.ndarray, t: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = fd_step(x)[..., None]
    hess = np.empty(x.shape + (n,))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        hess[..., :, j] = (grad(x + h * e, t) - grad(x - h * e, t)) / (2.0 * h)
    return 0.5 * (hess + np.swapaxes(hess, -1, -2))


def fd_hessian(v: Callable, x: np.ndarray, t: float) -> np.ndarray:
    # second differences of values lose ~eps/h^2, so a larger step is used
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = 10.0 * fd_step(x)
    hess = np.empty(x.shape + (n,))
    f0 = v(x, t)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = 1.0
        hi = h[..., None] * ei
        hess[..., i, i] = (v(x + hi, t) - 2.0 * f0 + v(x - hi, t)) / h**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = 1.0
            hj = h[..., None] * ej
            val = (
                v(x + hi + hj, t) - v(x + hi - hj, t) - v(x - hi + hj, t) + v(x - hi - hj, t)
            ) / (4.0 * h**2)
            hess[..., i, j] = val
            hess[..., j, i] = val
    return hess


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class DynamicalSystem:
    """Deterministic system dx/dt = f(x, t) with an equilibrium at the origin.

    ``kernel`` is an optional numba-compiled in-place point evaluator
    ``kernel(y, t, out)`` used by the simulator; without one the simulator
    tries to compile ``drift`` itself.
    """

    dimension: int
    drift: Callable
    lipschitz_L: float = 0.0
    growth_M: float = 0.0
    name: str = "system"
    autonomous: bool = True
    kernel: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (1 <= self.dimension <= MAX_DIMENSION):
            raise ConfigurationError(f"dimension must be in [1, {MAX_DIMENSION}]")
        if self.lipschitz_L < 0 or self.growth_M < 0:
            raise ConfigurationError("Lipschitz and growth constants must be nonnegative")
        zero = np.zeros(self.dimension)
        for t in np.linspace(0.0, 50.0, 11):
            f0 = np.asarray(self.drift(zero, float(t)), dtype=float)
            if f0.shape != (self.dimension,):
                raise ConfigurationError(f"drift returned shape {f0.shape} at the origin")
            if np.max(np.abs(f0)) > EQUILIBRIUM_TOL:
                raise ConfigurationError(f"drift(0, {t}) = {f0} is not an equilibrium")

    def f(self, x, t: float) -> np.ndarray:
        return np.asarray(self.drift(_as_states(x, self.dimension), t), dtype=float)


@dataclass(frozen=True)
class NoiseClass:
    """Membership tag: ``A_h`` (bounded diffusion) or ``J_h`` (integrable envelope)."""

    kind: str
    h: float
    zeta: Optional[Callable[[float], float]] = field(default=None, compare=False)
    zeta_tail: Optional[Callable[[float], float]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("A_h", "J_h"):
            raise ConfigurationError(f"unknown noise class {self.kind!r}")
        if not self.h >= 0:
            raise ConfigurationError("class bound h must be nonnegative")
        if self.kind == "J_h" and self.zeta is None:
            raise ConfigurationError("class J_h requires an envelope zeta(t)")

    @classmethod
    def bounded(cls, h: float) -> "NoiseClass":
        return cls("A_h", h)

    @classmethod
    def damped(cls, zeta, h: float, zeta_tail=None) -> "NoiseClass":
        return cls("J_h", h, zeta, zeta_tail)


@dataclass(frozen=True)
class NoiseModel:
    """Noise matrix G(y, t) of shape n x m with its class tag."""

    rows: int
    cols: int
    g: Callable
    class_tag: NoiseClass
    name: str = "noise"
    autonomous: bool = True
    diagonal: bool = False
    kernel: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigurationError("noise dimensions must be positive")

    def G(self, y, t: float) -> np.ndarray:
        y = _as_states(y, self.rows)
        out = np.asarray(self.g(y, t), dtype=float)
        if out.shape[-2:] != (self.rows, self.cols):
            raise ConfigurationError(
                f"noise matrix has shape {out.shape[-2:]}, expected {(self.rows, self.cols)}"
            )
        return out


@dataclass(frozen=True)
class LyapunovCertificate:
    """Local Lyapunov function with the constants of its certificate.

    Missing derivatives are synthesized by central finite differences;
    ``dv_dt`` defaults to zero unless ``time_dependent`` is set.
    """

    dimension: int
    v: Callable
    A: float
    B: float
    C: float
    gamma: float
    r0: float
    grad_v: Optional[Callable] = field(default=None, compare=False)
    hess_v: Optional[Callable] = field(default=None, compare=False)
    dv_dt: Optional[Callable] = field(default=None, compare=False)
    time_dependent: bool = False
    name: str = "V"

    def __post_init__(self):
        for key in ("A", "B", "C", "r0"):
            if not getattr(self, key) > 0:
                raise ConfigurationError(f"certificate constant {key} must be positive")
        if not self.gamma >= 0:
            raise ConfigurationError("certificate gamma must be nonnegative")

    def value(self, x, t: float) -> np.ndarray:
        return np.asarray(self.v(_as_states(x, self.dimension), t), dtype=float)

    def gradient(self, x, t: float) -> np.ndarray:
        x = _as_states(x, self.dimension)
        if self.grad_v is not None:
            return np.asarray(self.grad_v(x, t), dtype=float)
        return fd_gradient(self.v, x, t)

    def hessian(self, x, t: float) -> np.ndarray:
        x = _as_states(x, self.dimension)
        if self.hess_v is not None:
            return np.asarray(self.hess_v(x, t), dtype=float)
        if self.grad_v is not None:
            return fd_hessian_from_grad(self.grad_v, x, t)
        return fd_hessian(self.v, x, t)

    def time_derivative(self, x, t: float) -> np.ndarray:
        x = _as_states(x, self.dimension)
        if self.dv_dt is not None:
            return np.asarray(self.dv_dt(x, t), dtype=float)
        if not self.time_dependent:
            return np.zeros(x.shape[:-1])
        h = 1e-5 * max(1.0, abs(t))
        return (self.v(x, t + h) - self.v(x, t - h)) / (2.0 * h)

    def with_constants(self, **changes) -> "LyapunovCertificate":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class ExperimentParams:
    """Parameters of one stability experiment.

    ``horizon_mode`` selects T: ``theorem1`` gives mu**(-2N + kappa),
    ``remark1`` gives mu**(-2N) * lambda(|y0|), ``explicit`` uses ``T``.
    """

    mu: float
    N: int
    kappa: float
    epsilon: float
    nu: float
    y0: tuple
    horizon_mode: str = "theorem1"
    T: Optional[float] = None
    lambda_fn: Optional[Callable[[float], float]] = field(default=None, compare=False)
    r0: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "y0", tuple(float(v) for v in np.atleast_1d(self.y0)))
        if not 0.0 <= self.mu < 1.0:
            raise ConfigurationError(f"mu must lie in [0, 1), got {self.mu}")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigurationError(f"N must be a positive integer, got {self.N}")
        if not 0.0 < self.kappa < 1.0:
            raise ConfigurationError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if not 0.0 < self.nu < 1.0:
            raise ConfigurationError(f"nu must lie in (0, 1), got {self.nu}")
        if self.r0 is not None and self.epsilon > self.r0:
            raise ConfigurationError(f"epsilon={self.epsilon} exceeds certified radius r0={self.r0}")
        if self.horizon_mode not in ("theorem1", "remark1", "explicit"):
            raise ConfigurationError(f"unknown horizon mode {self.horizon_mode!r}")
        if self.horizon_mode == "explicit" and not (self.T is not None and self.T > 0):
            raise ConfigurationError("explicit horizon mode needs a positive T")
        if self.horizon_mode == "remark1" and self.lambda_fn is None:
            raise ConfigurationError("remark1 horizon mode needs lambda_fn")

    @property
    def y0_array(self) -> np.ndarray:
        return np.array(self.y0)

    @property
    def y0_norm(self) -> float:
        return float(np.linalg.norm(self.y0))


def clip_probability(p: float) -> float:
    if math.isnan(p):
        return 1.0
    return min(1.0, max(0.0, float(p)))


# ---------------------------------------------------------------------------
# operators


def eval_sigma(noise: NoiseModel, y, t: float) -> np.ndarray:
    """Diffusion matrix G G^T / 2, symmetrized."""
    G = noise.G(y, t)
    s = 0.5 * G @ np.swapaxes(G, -1, -2)
    return 0.5 * (s + np.swapaxes(s, -1, -2))


def max_entry_norm(m: np.ndarray) -> np.ndarray:
    return np.max(np.abs(m), axis=(-2, -1))


def apply_generator(
    cert: LyapunovCertificate,
    system: DynamicalSystem,
    noise: NoiseModel,
    mu: float,
    y,
    t: float,
) -> np.ndarray:
    """Generator of the perturbed equation applied to V at (y, t)."""
    if not (cert.dimension == system.dimension == noise.rows):
        raise ConfigurationError("certificate, system and noise dimensions differ")
    y = _as_states(y, system.dimension)
    drift_term = np.sum(cert.gradient(y, t) * system.f(y, t), axis=-1)
    diffusion = np.sum(eval_sigma(noise, y, t) * cert.hessian(y, t), axis=(-2, -1))
    out = cert.time_derivative(y, t) + drift_term + mu**2 * diffusion
    return float(out) if np.ndim(out) == 0 else out
