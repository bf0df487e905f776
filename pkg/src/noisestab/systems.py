"""Built-in systems, noise models and certificates, plus a small expression
compiler for user-defined ones.

Each factory returns objects carrying both a vectorized numpy evaluator
(for certification and bounds) and a numba point kernel (for simulation).
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .core import (
    ConfigurationError,
    DynamicalSystem,
    LyapunovCertificate,
    NoiseClass,
    NoiseModel,
)


@dataclass(frozen=True)
class Preset:
    name: str
    system: DynamicalSystem
    noise: NoiseModel
    certificate: LyapunovCertificate
    description: str = ""


# ---------------------------------------------------------------------------
# certificates


def quadratic_certificate(n: int, A=1.0, B=4.0, C=2.0, gamma=1.0, r0=1.0) -> LyapunovCertificate:
    """V(x) = |x|^2 with exact gradient 2x and Hessian 2I."""

    def v(x, t):
        return np.sum(np.square(x), axis=-1)

    def grad(x, t):
        return 2.0 * np.asarray(x, dtype=float)

    def hess(x, t):
        x = np.asarray(x)
        return np.broadcast_to(2.0 * np.eye(n), x.shape[:-1] + (n, n)).copy()

    return LyapunovCertificate(n, v, A, B, C, gamma, r0, grad_v=grad, hess_v=hess, name="|x|^2")


# ---------------------------------------------------------------------------
# systems


@njit(cache=True)
def _zero_kernel(y, t, out):
    out[:] = 0.0


@njit(cache=True)
def _cubic_kernel(y, t, out):
    y2 = y[0] * y[0]
    out[0] = -y[0] * (1.0 - y2) / (1.0 + y2)


@njit(cache=True)
def _unstable_kernel(y, t, out):
    out[:] = y


def _cubic_drift(x, t):
    x = np.asarray(x, dtype=float)
    return -x * (1.0 - x**2) / (1.0 + x**2)


@functools.lru_cache(maxsize=None)
def zero_system(n: int = 1) -> DynamicalSystem:
    return DynamicalSystem(
        n, lambda x, t: np.zeros(np.shape(x)), 0.0, 0.0, name="zero", kernel=_zero_kernel
    )


@functools.lru_cache(maxsize=None)
def cubic_bistable_system() -> DynamicalSystem:
    """dx/dt = -x (1 - x^2) / (1 + x^2): equilibria -1, 0, 1."""
    # |f'| <= 1 on the real line; |f(x)| <= |x|
    return DynamicalSystem(1, _cubic_drift, 1.0, 1.0, name="cubic-bistable", kernel=_cubic_kernel)


@functools.lru_cache(maxsize=None)
def linear_system(theta: float = 1.0, n: int = 1) -> DynamicalSystem:
    """dx/dt = -theta x."""
    theta = float(theta)

    @njit
    def kernel(y, t, out):
        for a in range(y.shape[0]):
            out[a] = -theta * y[a]

    return DynamicalSystem(
        n,
        lambda x, t: -theta * np.asarray(x, dtype=float),
        abs(theta),
        abs(theta),
        name="linear-ou",
        kernel=kernel,
    )


@functools.lru_cache(maxsize=None)
def unstable_linear_system(n: int = 1) -> DynamicalSystem:
    """dx/dt = +x; a negative control that no quadratic certificate fits."""
    return DynamicalSystem(
        n, lambda x, t: np.asarray(x, dtype=float), 1.0, 1.0, name="unstable-linear", kernel=_unstable_kernel
    )


# ---------------------------------------------------------------------------
# noise


@functools.lru_cache(maxsize=None)
def constant_noise(n: int = 1, scale: float = 1.0) -> NoiseModel:
    """G = scale * I, so sigma = scale^2 / 2 * I and h = scale^2 / 2."""
    scale = float(scale)

    @njit
    def kernel(y, t, out):
        out[:, :] = 0.0
        for a in range(out.shape[0]):
            out[a, a] = scale

    def g(y, t):
        y = np.asarray(y)
        return np.broadcast_to(scale * np.eye(n), y.shape[:-1] + (n, n)).copy()

    return NoiseModel(
        n, n, g, NoiseClass.bounded(scale**2 / 2.0), name=f"constant({scale:g})", diagonal=True, kernel=kernel
    )


@functools.lru_cache(maxsize=None)
def damped_noise(rate: float = 1.0) -> NoiseModel:
    """Scalar G(y, t) = exp(-rate t / 2), sigma = exp(-rate t) / 2.

    Tagged J_h with the envelope zeta(t) = exp(-rate t) / 2 and h = 1 / (2 rate).
    """
    rate = float(rate)

    @njit
    def kernel(y, t, out):
        out[0, 0] = math.exp(-0.5 * rate * t)

    def g(y, t):
        y = np.asarray(y)
        return np.full(y.shape[:-1] + (1, 1), math.exp(-0.5 * rate * t))

    def zeta(t):
        return 0.5 * math.exp(-rate * t)

    def tail(t):
        return 0.5 * math.exp(-rate * t) / rate

    return NoiseModel(
        1,
        1,
        g,
        NoiseClass.damped(zeta, 0.5 / rate, zeta_tail=tail),
        name=f"damped({rate:g})",
        autonomous=False,
        diagonal=True,
        kernel=kernel,
    )


# ---------------------------------------------------------------------------
# catalog


def builtin_systems() -> dict[str, Preset]:
    """The three named presets used by the runner."""
    return dict(_catalog())


@functools.lru_cache(maxsize=None)
def _catalog() -> dict[str, Preset]:
    r0 = 1.0 / math.sqrt(3.0)
    return {
        "pure-noise": Preset(
            "pure-noise",
            zero_system(1),
            constant_noise(1, 1.0),
            quadratic_certificate(1, A=1.0, B=4.0, C=2.0, gamma=0.0, r0=1.0),
            "dy = mu dw; V = x^2 decays with rate 0",
        ),
        "cubic-bistable": Preset(
            "cubic-bistable",
            cubic_bistable_system(),
            constant_noise(1, 1.0),
            quadratic_certificate(1, A=1.0, B=4.0, C=2.0, gamma=1.0, r0=r0),
            "dy = -y(1-y^2)/(1+y^2) dt + mu dw; dV/dt <= -V on |x| <= 1/sqrt(3)",
        ),
        "linear-ou": Preset(
            "linear-ou",
            linear_system(1.0),
            constant_noise(1, 1.0),
            quadratic_certificate(1, A=1.0, B=4.0, C=2.0, gamma=2.0, r0=1.0),
            "dy = -theta y dt + mu dw with theta = 1",
        ),
    }


# ---------------------------------------------------------------------------
# expression compiler

_NAMESPACE = {
    name: getattr(np, name)
    for name in ("exp", "log", "sqrt", "sin", "cos", "tan", "tanh", "sinh", "cosh", "arctan", "abs", "pi")
}


def _uses_time(text: str) -> bool:
    return re.search(r"\bt\b", text) is not None


def _state_names(n: int):
    return [f"y{k + 1}" for k in range(n)]


def _compile(source: str, name: str):
    ns = dict(_NAMESPACE)
    ns["np"] = np
    try:
        exec(compile(source, f"<{name}>", "exec"), ns)
    except SyntaxError as exc:
        raise ConfigurationError(f"invalid expression in {name}: {exc.msg}") from exc
    return ns[name]


def drift_from_expressions(exprs: list[str], L: float = 0.0, M: float = 0.0) -> DynamicalSystem:
    """Drift components as expressions in y1..yn and t, e.g. ``"-y1*(1-y1**2)/(1+y1**2)"``."""
    n = len(exprs)
    names = _state_names(n)
    unpack_np = "".join(f"    {v} = x[..., {k}]\n" for k, v in enumerate(names))
    assign_np = "".join(f"    out[..., {k}] = {e}\n" for k, e in enumerate(exprs))
    src = (
        "def drift(x, t):\n    x = np.asarray(x, dtype=float)\n"
        + unpack_np
        + "    out = np.empty(x.shape)\n"
        + assign_np
        + "    return out\n"
    )
    unpack_k = "".join(f"    {v} = y[{k}]\n" for k, v in enumerate(names))
    assign_k = "".join(f"    out[{k}] = {e}\n" for k, e in enumerate(exprs))
    ksrc = "def kernel(y, t, out):\n" + unpack_k + assign_k
    drift = _compile(src, "drift")
    kernel = njit(_compile(ksrc, "kernel"))
    return DynamicalSystem(n, drift, L, M, name="inline", autonomous=not _uses_time(" ".join(exprs)), kernel=kernel)


def noise_from_expressions(rows: list[list[str]], noise_class: NoiseClass) -> NoiseModel:
    """Noise matrix entries as expressions in y1..yn and t (rows of columns)."""
    n, m = len(rows), len(rows[0])
    if any(len(r) != m for r in rows):
        raise ConfigurationError("noise matrix rows have different lengths")
    names = _state_names(n)
    unpack_np = "".join(f"    {v} = y[..., {k}]\n" for k, v in enumerate(names))
    assign_np = "".join(
        f"    out[..., {a}, {j}] = {rows[a][j]}\n" for a in range(n) for j in range(m)
    )
    src = (
        "def g(y, t):\n    y = np.asarray(y, dtype=float)\n"
        + unpack_np
        + f"    out = np.empty(y.shape[:-1] + ({n}, {m}))\n"
        + assign_np
        + "    return out\n"
    )
    unpack_k = "".join(f"    {v} = y[{k}]\n" for k, v in enumerate(names))
    assign_k = "".join(f"    out[{a}, {j}] = {rows[a][j]}\n" for a in range(n) for j in range(m))
    ksrc = "def kernel(y, t, out):\n" + unpack_k + assign_k
    g = _compile(src, "g")
    kernel = njit(_compile(ksrc, "kernel"))
    text = " ".join(" ".join(r) for r in rows)
    diagonal = all(rows[a][j].strip() in ("0", "0.0") for a in range(n) for j in range(m) if a != j)
    return NoiseModel(n, m, g, noise_class, name="inline", autonomous=not _uses_time(text), diagonal=diagonal, kernel=kernel)


def scalar_function(expr: str, var: str = "t"):
    """Compile an expression in one variable (an envelope zeta or a lambda)."""
    return _compile(f"def fn({var}):\n    return float({expr})\n", "fn")


def certificate_from_expression(
    expr: str, n: int, A: float, B: float, C: float, gamma: float, r0: float
) -> LyapunovCertificate:
    """V given as an expression in y1..yn; derivatives by finite differences."""
    names = _state_names(n)
    unpack = "".join(f"    {v} = x[..., {k}]\n" for k, v in enumerate(names))
    v = _compile("def v(x, t):\n    x = np.asarray(x, dtype=float)\n" + unpack + f"    return {expr} + 0.0 * x[..., 0]\n", "v")
    return LyapunovCertificate(n, v, A, B, C, gamma, r0, time_dependent=_uses_time(expr), name=expr)


def get_preset(name: str) -> Preset:
    catalog = builtin_systems()
    if name not in catalog:
        raise ConfigurationError(f"unknown system {name!r}; choose from {sorted(catalog)}")
    return catalog[name]


def preset_with(name: str, noise: Optional[NoiseModel] = None, **cert_changes) -> Preset:
    p = get_preset(name)
    cert = p.certificate.with_constants(**cert_changes) if cert_changes else p.certificate
    return Preset(p.name, p.system, noise or p.noise, cert, p.description)
