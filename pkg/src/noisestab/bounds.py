"""Perturbed Lyapunov functions and the exit-probability bounds they give.

For a certificate V with decay rate gamma > 0 and diffusion bound h, the
function

    V_1(y, t; T) = V(y, t) + mu^2 n^2 h C (T - t)
    V_k(y, t; T) = V(y, t)^k + mu^2 a_{k-1} V_{k-1}(y, t; T),
    a_k = (k + 1) n^2 h (B + C) / gamma,

is a nonnegative supermartingale along the stopped process, and Doob's
inequality gives P(sup_{t <= T} |y(t)| >= eps) <= V_N(y0, 0; T) / eps^(2N).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .core import (
    ConfigurationError,
    DomainError,
    ExperimentParams,
    LyapunovCertificate,
    NoiseModel,
    RegimeError,
    clip_probability,
)

REMARK2_ADVISORY = (
    "gamma = 0: the perturbed construction only controls horizons T = o(mu^-2); "
    "use theorem2_bound for damped noise (class J_h) or remark2_bound with an explicit T"
)

CSV_COLUMNS = (
    "mu",
    "N",
    "kappa",
    "epsilon",
    "nu",
    "y0_norm",
    "T",
    "v_n_initial",
    "bound",
    "delta",
    "Delta",
    "regime",
)


class InfeasibleRegion(ArithmeticError):
    """No admissible (delta, Delta) representable in floating point."""


class Region(NamedTuple):
    delta: float
    Delta: float


def coefficient_a(k: int, n: int, h: float, B: float, C: float, gamma: float) -> float:
    if gamma <= 0:
        raise RegimeError(REMARK2_ADVISORY)
    if h < 0:
        raise ConfigurationError("h must be nonnegative")
    return (k + 1) * n**2 * h * (B + C) / gamma


@dataclass(frozen=True)
class PerturbedLyapunov:
    cert: LyapunovCertificate
    N: int
    h: float
    mu: float
    T: float
    coefficients: tuple = field(init=False)

    def __post_init__(self):
        if self.N < 1:
            raise ConfigurationError("N must be a positive integer")
        c = self.cert
        coeffs = tuple(
            coefficient_a(k, c.dimension, self.h, c.B, c.C, c.gamma) for k in range(1, self.N)
        )
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def base_rate(self) -> float:
        """n^2 h C, the drift of the time-compensation term in V_1."""
        return self.cert.dimension**2 * self.h * self.cert.C

    def _check_time(self, t):
        if np.any(np.asarray(t) > self.T * (1.0 + 1e-12)):
            raise DomainError(f"t exceeds the horizon T = {self.T:g}")

    def value_from_v(self, v, t):
        """V_N given values of V (arrays broadcast against t)."""
        self._check_time(t)
        v = np.asarray(v, dtype=float)
        if self.mu == 0:
            return v**self.N
        m2 = self.mu**2
        vk = v + m2 * self.base_rate * (self.T - np.asarray(t, dtype=float))
        for k in range(2, self.N + 1):
            vk = v**k + m2 * self.coefficients[k - 2] * vk
        return vk

    def expanded_value(self, v, t):
        """V_N as the explicit polynomial in mu^2, without the recursion."""
        self._check_time(t)
        v = np.asarray(v, dtype=float)
        N, m2, a = self.N, self.mu**2, self.coefficients
        total = np.zeros(np.broadcast(v, np.asarray(t)).shape)
        for k in range(1, N + 1):
            total = total + m2 ** (N - k) * math.prod(a[k - 1 : N - 1]) * v**k
        tail = m2**N * math.prod(a) * self.base_rate * (self.T - np.asarray(t, dtype=float))
        return total + tail

    def value(self, y, t):
        return self.value_from_v(self.cert.value(y, t), t)


@dataclass(frozen=True)
class BoundReport:
    mu: float
    N: int
    kappa: Optional[float]
    epsilon: float
    nu: Optional[float]
    y0_norm: float
    T: float
    v_n_initial: float
    bound: float
    delta: Optional[float]
    Delta: Optional[float]
    regime: str
    params: Optional[ExperimentParams] = field(default=None, compare=False, repr=False)
    advisory: str = field(default="", compare=False)

    def to_row(self) -> dict:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, str):
                return x
            if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
                return str(int(x))
            return repr(float(x))

        return {k: fmt(getattr(self, k)) for k in CSV_COLUMNS}

    @classmethod
    def from_row(cls, row: dict) -> "BoundReport":
        def num(s):
            return None if s == "" else float(s)

        return cls(
            mu=float(row["mu"]),
            N=int(row["N"]),
            kappa=num(row["kappa"]),
            epsilon=float(row["epsilon"]),
            nu=num(row["nu"]),
            y0_norm=float(row["y0_norm"]),
            T=float(row["T"]),
            v_n_initial=float(row["v_n_initial"]),
            bound=float(row["bound"]),
            delta=num(row["delta"]),
            Delta=num(row["Delta"]),
            regime=row["regime"],
        )


# ---------------------------------------------------------------------------
# admissible region


def _shrink_until(check, delta, Delta):
    for _ in range(200):
        if check(delta, Delta):
            return Region(delta, Delta)
        delta *= 1.0 - 1e-12
        Delta *= 1.0 - 1e-12
    raise InfeasibleRegion("closed-form region fails its own inequality")


def _bisect_max(pred, lo, hi, iters=200, log=False):
    """Largest x in [lo, hi] with pred(x), assuming pred is monotone (true then false)."""
    if pred(hi):
        return hi
    if not pred(lo):
        return None
    for _ in range(iters):
        mid = math.sqrt(lo * hi) if log else 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _region_by_bisection(corner, budget, epsilon, N):
    """Delta first with V = 0 against half the budget, then delta with the rest."""

    def ok(d, D):
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            val = corner(d, D)
        return bool(np.isfinite(val) and val <= budget)

    # smallest noise level whose corner value is still representable
    tiny = 1e-300
    while tiny < 1.0:
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            if np.isfinite(corner(0.0, tiny)):
                break
        tiny *= 10.0

    Delta = _bisect_max(lambda D: ok(0.0, D) and corner(0.0, D) <= 0.5 * budget, tiny, 1.0, log=True)
    if Delta is None:
        raise InfeasibleRegion("no noise level satisfies the bound within floating-point range")
    delta = _bisect_max(lambda d: ok(d, Delta), 0.0, epsilon)
    if not delta:
        raise InfeasibleRegion("no positive initial radius satisfies the bound")
    if not ok(delta, Delta):
        raise InfeasibleRegion("bisection result fails its own inequality")
    return Region(delta, Delta)


def theorem1_corner(cert, h, N, kappa):
    """V_N at the worst case |y0| = delta (V = A delta^2), mu = Delta, T = Delta^(-2N + kappa)."""

    def corner(delta, Delta):
        with np.errstate(over="ignore"):
            T = float(np.float64(Delta) ** (-2 * N + kappa))
        return float(PerturbedLyapunov(cert, N, h, Delta, T).value_from_v(cert.A * delta**2, 0.0))

    return corner


def admissible_region(
    cert: LyapunovCertificate, noise_h: float, N: int, epsilon: float, nu: float, kappa: float
) -> Region:
    """(delta, Delta) such that |y0| < delta and mu < Delta give exit probability <= nu
    on [0, mu^(-2N + kappa)].

    N = 1 and N = 2 use closed forms (each term of the sufficient
    inequality takes an equal share); larger N is solved by bisection. The
    result is re-checked against the directly evaluated V_N before return.
    """
    if cert.gamma <= 0 and N > 1:
        raise RegimeError(REMARK2_ADVISORY)
    if not 0 < nu < 1:
        raise ConfigurationError("nu must lie in (0, 1)")
    if not 0 < kappa < 1:
        raise ConfigurationError("kappa must lie in (0, 1)")
    n, A, C, h = cert.dimension, cert.A, cert.C, noise_h
    budget = epsilon ** (2 * N) * nu
    corner = theorem1_corner(cert, h, N, kappa)

    def direct(d, D):
        with np.errstate(over="ignore", invalid="ignore"):
            val = corner(d, D)
        return bool(np.isfinite(val) and val <= budget)

    if N == 1:
        delta = math.sqrt(budget / (2.0 * A))
        Delta = 1.0 if h == 0 else min(1.0, (budget / (2.0 * n**2 * h * C)) ** (1.0 / kappa))
        if Delta <= 0:
            raise InfeasibleRegion("Delta underflows")
        return _shrink_until(direct, delta, Delta)
    if N == 2:
        a1 = coefficient_a(1, n, h, cert.B, C, cert.gamma)
        delta = (2.0 * budget / (9.0 * A**2)) ** 0.25
        if a1 == 0:
            Delta = 1.0
        else:
            Delta = min(
                1.0,
                (2.0 * budget / (3.0 * a1**2)) ** 0.25,
                (budget / (3.0 * a1 * n**2 * h * C)) ** (1.0 / kappa),
            )
        if Delta <= 0:
            raise InfeasibleRegion("Delta underflows")

        def three_term(d, D):
            return 1.5 * A**2 * d**4 + 0.5 * D**4 * a1**2 + D**kappa * a1 * n**2 * h * C <= budget

        return _shrink_until(lambda d, D: three_term(d, D) and direct(d, D), delta, Delta)
    return _region_by_bisection(corner, budget, epsilon, N)


def fixed_horizon_region(cert, noise_h, N, epsilon, nu, T) -> Region:
    """Admissible region for an explicitly fixed horizon T (bisection)."""

    def corner(delta, Delta):
        return float(PerturbedLyapunov(cert, N, noise_h, Delta, T).value_from_v(cert.A * delta**2, 0.0))

    return _region_by_bisection(corner, epsilon ** (2 * N) * nu, epsilon, N)


# ---------------------------------------------------------------------------
# bounds


def remark1_horizon(mu: float, N: int, lambda_fn: Callable[[float], float], y0) -> float:
    """T = mu^(-2N) * lambda(|y0|) for a positive lambda vanishing at 0."""
    z = float(np.linalg.norm(np.atleast_1d(y0)))
    lam = float(lambda_fn(z))
    if not lam > 0:
        raise ConfigurationError(f"lambda(|y0|) = {lam:g} gives a non-positive horizon")
    small, smaller = float(lambda_fn(1e-3)), float(lambda_fn(1e-6))
    if not (0 <= smaller <= small):
        warnings.warn("lambda does not appear to decrease toward 0 as z -> 0", RuntimeWarning)
    return mu ** (-2 * N) * lam


def horizon(params: ExperimentParams) -> float:
    if params.horizon_mode == "explicit":
        return float(params.T)
    if params.horizon_mode == "remark1":
        return remark1_horizon(params.mu, params.N, params.lambda_fn, params.y0)
    if params.mu == 0:
        return math.inf
    return params.mu ** (-2 * params.N + params.kappa)


def _check_radius(cert, epsilon):
    if epsilon > cert.r0:
        raise ConfigurationError(f"epsilon={epsilon:g} exceeds certified radius r0={cert.r0:g}")


def theorem1_bound(cert: LyapunovCertificate, noise_h: float, params: ExperimentParams) -> BoundReport:
    """min(1, V_N(y0, 0; T) / eps^(2N)) with T chosen by ``params.horizon_mode``."""
    if cert.gamma <= 0:
        raise RegimeError(REMARK2_ADVISORY)
    _check_radius(cert, params.epsilon)
    T = horizon(params)
    pl = PerturbedLyapunov(cert, params.N, noise_h, params.mu, T)
    v0 = float(pl.value(params.y0_array, 0.0))
    bound = clip_probability(v0 / params.epsilon ** (2 * params.N))
    region = None
    try:
        if params.horizon_mode == "theorem1":
            region = admissible_region(cert, noise_h, params.N, params.epsilon, params.nu, params.kappa)
        elif params.horizon_mode == "explicit":
            region = fixed_horizon_region(cert, noise_h, params.N, params.epsilon, params.nu, T)
    except InfeasibleRegion:
        region = None
    regime = "remark1" if params.horizon_mode == "remark1" else "theorem1"
    return BoundReport(
        mu=params.mu,
        N=params.N,
        kappa=params.kappa,
        epsilon=params.epsilon,
        nu=params.nu,
        y0_norm=params.y0_norm,
        T=T,
        v_n_initial=v0,
        bound=bound,
        delta=region.delta if region else None,
        Delta=region.Delta if region else None,
        regime=regime,
        params=params,
    )


def remark2_bound(cert, noise_h: float, mu: float, epsilon: float, y0, T: float, nu=None) -> BoundReport:
    """V_1(y0, 0; T) / eps^2 for an explicit T; valid for gamma = 0 as well,
    but informative only while mu^2 T is small."""
    _check_radius(cert, epsilon)
    pl = PerturbedLyapunov(cert, 1, noise_h, mu, T)
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    v0 = float(pl.value(y0, 0.0))
    region = None
    if nu is not None:
        denom = cert.dimension**2 * noise_h * cert.C * T
        Delta = 1.0 if denom == 0 else min(1.0, math.sqrt(epsilon**2 * nu / (2.0 * denom)))
        region = Region(math.sqrt(epsilon**2 * nu / (2.0 * cert.A)), Delta)
    return BoundReport(
        mu=mu,
        N=1,
        kappa=None,
        epsilon=epsilon,
        nu=nu,
        y0_norm=float(np.linalg.norm(y0)),
        T=float(T),
        v_n_initial=v0,
        bound=clip_probability(v0 / epsilon**2),
        delta=region.delta if region else None,
        Delta=region.Delta if region else None,
        regime="remark2",
        advisory=REMARK2_ADVISORY if cert.gamma == 0 else "",
    )


def theorem2_value(cert, noise_h, mu, y, t, zeta_integral=0.0):
    """V_mu(y, t) = V(y, t) + mu^2 n^2 C (h - int_0^t zeta)."""
    return cert.value(y, t) + mu**2 * cert.dimension**2 * cert.C * (noise_h - zeta_integral)


def theorem2_bound(cert, noise: NoiseModel, mu: float, epsilon: float, y0, nu=None) -> BoundReport:
    """min(1, (V(y0, 0) + mu^2 n^2 C h) / eps^2), uniform over all t >= 0."""
    tag = noise.class_tag
    if tag.kind != "J_h":
        raise ConfigurationError("theorem2_bound needs a noise model tagged J_h")
    _check_radius(cert, epsilon)
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    v0 = float(theorem2_value(cert, tag.h, mu, y0, 0.0))
    region = None
    if nu is not None:
        denom = cert.dimension**2 * cert.C * tag.h
        Delta = 1.0 if denom == 0 else min(1.0, math.sqrt(epsilon**2 * nu / (2.0 * denom)))
        region = Region(math.sqrt(epsilon**2 * nu / (2.0 * cert.A)), Delta)
    return BoundReport(
        mu=mu,
        N=1,
        kappa=None,
        epsilon=epsilon,
        nu=nu,
        y0_norm=float(np.linalg.norm(y0)),
        T=math.inf,
        v_n_initial=v0,
        bound=clip_probability(v0 / epsilon**2),
        delta=region.delta if region else None,
        Delta=region.Delta if region else None,
        regime="theorem2",
    )
