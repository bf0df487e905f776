"""Closed-form references for validating the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import erfc
from scipy.stats import norm

from .core import DomainError, clip_probability

MAX_TERMS = 10_000


@dataclass(frozen=True)
class SeriesResult:
    value: float
    terms_used: int
    truncation_error_estimate: float


def brownian_sup_prob(c: float, T: float, tol: float = 1e-12) -> SeriesResult:
    """P(sup_{0<=t<=T} |w(t)| >= c) for a standard Wiener process.

    Reflection series: erfc(c / sqrt(2T)) plus the alternating sum over
    k != 0 of (-1)^(k+1) times the N(0, T) mass of [(2k-1)c, (2k+1)c].
    The k and -k terms are equal, and each interval mass is taken as a
    difference of normal survival functions to avoid cancellation.
    """
    if not (c > 0 and T > 0):
        raise DomainError("c and T must be positive")
    a = c / math.sqrt(T)
    value = float(erfc(c / math.sqrt(2.0 * T)))
    for k in range(1, MAX_TERMS + 1):
        term = 2.0 * (norm.sf((2 * k - 1) * a) - norm.sf((2 * k + 1) * a))
        value += term if k % 2 == 1 else -term
        nxt = 2.0 * (norm.sf((2 * k + 1) * a) - norm.sf((2 * k + 3) * a))
        if nxt < tol:
            return SeriesResult(clip_probability(value), k, nxt)
    raise ArithmeticError(f"series did not converge within {MAX_TERMS} terms (c/sqrt(T) = {a:g})")


def example1_threshold(epsilon: float, nu: float, kappa: float) -> float:
    """Noise level below which pure noise stays in the epsilon-ball up to
    time mu**(-2 + kappa) with probability at least 1 - nu."""
    if not 0.0 < nu < math.sqrt(8.0):
        raise DomainError("nu must lie in (0, sqrt(8))")
    if not 0.0 < kappa < 1.0:
        raise DomainError("kappa must lie in (0, 1)")
    return (epsilon**2 / abs(4.0 * math.log(nu / math.sqrt(8.0)))) ** (1.0 / kappa)


def ou_moments(theta: float, mu: float, t: float, y0: float) -> tuple[float, float]:
    """Mean and variance of dy = -theta y dt + mu dw at time t."""
    if not theta > 0:
        raise DomainError("theta must be positive")
    mean = y0 * math.exp(-theta * t)
    var = mu**2 * -math.expm1(-2.0 * theta * t) / (2.0 * theta)
    return mean, var
