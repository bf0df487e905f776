"""Experiment configuration: flat ``section.key = value`` files and flags.

Every key has a type, a default and a command-line flag; flags override
values read from ``--config``. Unknown keys are an error.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .core import ConfigurationError

WORKERS_ENV = "NOISESTAB_WORKERS"


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {s!r}")


def _vector(s: str) -> tuple:
    return tuple(float(c) for c in s.split())


def _floats(s: str) -> list:
    return [float(c) for c in s.split(",") if c.strip()]


def _ints(s: str) -> list:
    out = []
    for c in s.split(","):
        if c.strip():
            v = float(c)
            if v != int(v):
                raise ConfigurationError(f"not an integer: {c!r}")
            out.append(int(v))
    return out


def _vectors(s: str) -> list:
    return [_vector(c) for c in s.split(",") if c.strip()]


def _opt_float(s: str) -> Optional[float]:
    return None if s.strip().lower() in ("", "none", "auto") else float(s)


def _opt_int(s: str) -> Optional[int]:
    return None if s.strip().lower() in ("", "none", "auto") else int(float(s))


@dataclass(frozen=True)
class Key:
    name: str
    flag: str
    parse: Callable[[str], Any]
    default: str
    help: str


KEYS = [
    Key("system", "--system", str, "cubic-bistable", "preset (pure-noise, cubic-bistable, linear-ou) or 'inline'"),
    Key("system.drift", "--drift", str, "", "inline drift components in y1..yn and t, separated by ';'"),
    Key("system.theta", "--theta", float, "1.0", "decay rate of linear-ou"),
    Key("noise", "--noise", str, "constant", "constant, damped, or inline"),
    Key("noise.scale", "--noise-scale", float, "1.0", "constant noise G = scale * I"),
    Key("noise.rate", "--noise-rate", float, "1.0", "damped noise G = exp(-rate t / 2)"),
    Key("noise.g", "--g", str, "", "inline noise matrix: rows ';', columns ','"),
    Key("noise.class", "--class", str, "auto", "A_h or J_h (auto: J_h for damped noise)"),
    Key("noise.h", "--h", _opt_float, "auto", "class bound h (auto: sampled estimate for A_h)"),
    Key("noise.zeta", "--zeta", str, "", "inline J_h envelope zeta(t)"),
    Key("cert.v", "--v", str, "", "inline Lyapunov function in y1..yn (default |y|^2)"),
    Key("cert.A", "--A", _opt_float, "auto", "sandwich constant A"),
    Key("cert.B", "--B", _opt_float, "auto", "gradient constant B"),
    Key("cert.C", "--C", _opt_float, "auto", "Hessian constant C"),
    Key("cert.gamma", "--gamma", _opt_float, "auto", "decay rate gamma"),
    Key("cert.r0", "--r0", _opt_float, "auto", "certified radius r0"),
    Key("params.mu", "--mu", _floats, "0.1", "noise intensity mu (comma list)"),
    Key("params.N", "--N", _ints, "1", "construction order N (comma list)"),
    Key("params.kappa", "--kappa", _floats, "0.5", "horizon exponent slack kappa (comma list)"),
    Key("params.epsilon", "--epsilon", _floats, "0.3", "exit radius epsilon (comma list)"),
    Key("params.nu", "--nu", _floats, "0.1", "target probability nu (comma list)"),
    Key("params.y0", "--y0", _vectors, "0.05", "initial states; components by spaces, list by commas"),
    Key("params.horizon", "--horizon", str, "theorem1", "theorem1, remark1 or explicit"),
    Key("params.T", "--T", _opt_float, "none", "explicit horizon"),
    Key("params.lambda", "--lambda", str, "", "remark1 lambda(z), for example 'sqrt(z)'"),
    Key("params.t_cap_steps", "--t-cap-steps", _opt_float, "none", "cap the horizon at this many steps of dt"),
    Key("mc.n", "--n-traj", int, "10000", "trajectories per Monte Carlo estimate"),
    Key("mc.level", "--level", float, "0.99", "Wilson interval level"),
    Key("integrator.dt", "--dt", _opt_float, "auto", "step (auto: min(1e-2, eps^2 / (100 mu^2)))"),
    Key("integrator.bridge", "--bridge", _bool, "true", "Brownian-bridge exit test between steps"),
    Key("integrator.max_steps", "--max-steps", int, "10000000", "step cap per trajectory"),
    Key("integrator.truncate", "--truncate", _bool, "false", "stop at max_steps instead of failing"),
    Key("integrator.stride", "--stride", int, "0", "path recording stride (0: off)"),
    Key("grid.shells", "--shells", int, "32", "radial shells for certification"),
    Key("grid.directions", "--directions", int, "64", "directions per dimension per shell"),
    Key("grid.t_check", "--t-check", float, "50.0", "time grid end for time-dependent checks"),
    Key("grid.t_step", "--t-step", float, "0.5", "time grid step"),
    Key("grid.seed", "--grid-seed", int, "0", "seed of the direction sequence"),
    Key("demo.trajectories", "--demo-trajectories", int, "100", "escape-demo trajectories"),
    Key("demo.mu", "--demo-mu", float, "0.4", "escape-demo noise intensity"),
    Key("demo.T", "--demo-T", float, "100000.0", "escape-demo horizon"),
    Key("demo.epsilon", "--demo-epsilon", float, "0.9", "escape-demo exit radius"),
    Key("demo.path_out", "--path-out", str, "", "escape-demo decimated paths CSV"),
    Key("run.seed", "--seed", int, "0", "master seed (unsigned 64-bit)"),
    Key("run.workers", "--workers", _opt_int, "auto", f"worker threads (auto: ${WORKERS_ENV} or CPU count)"),
    Key("run.out", "--out", str, "", "output CSV path (default stdout)"),
]
KEY_INDEX = {k.name: k for k in KEYS}


def parse_config_text(text: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key] = value.strip('"').strip("'")
    unknown = sorted(set(raw) - set(KEY_INDEX))
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
    return raw


class ExperimentConfig:
    """Typed view over resolved key values."""

    def __init__(self, raw: Optional[dict[str, str]] = None):
        raw = dict(raw or {})
        unknown = sorted(set(raw) - set(KEY_INDEX))
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
        self.values: dict[str, Any] = {}
        for key in KEYS:
            text = raw.get(key.name, key.default)
            try:
                self.values[key.name] = key.parse(text)
            except (ValueError, TypeError) as exc:
                raise ConfigurationError(f"{key.name}: cannot parse {text!r}: {exc}") from exc
        self.explicit = set(raw)

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def workers(self) -> int:
        w = self.values["run.workers"]
        if w is None:
            w = int(os.environ.get(WORKERS_ENV, os.cpu_count() or 1))
        if w < 1:
            raise ConfigurationError("workers must be positive")
        return w

    def param_grid(self):
        """Cross product of the parameter lists, in a fixed order."""
        lists = [self[k] for k in ("params.mu", "params.N", "params.kappa", "params.epsilon", "params.nu", "params.y0")]
        for name, lst in zip(("mu", "N", "kappa", "epsilon", "nu", "y0"), lists):
            if not lst:
                raise ConfigurationError(f"params.{name} is empty")
        return list(itertools.product(*lists))

    def validate(self, r0: Optional[float] = None, check_radius: bool = True):
        for mu, N, kappa, eps, nu, y0 in self.param_grid():
            if not 0 <= mu < 1:
                raise ConfigurationError(f"mu={mu} outside [0, 1)")
            if not 0 < kappa < 1:
                raise ConfigurationError(f"kappa={kappa} outside (0, 1)")
            if not 0 < nu < 1:
                raise ConfigurationError(f"nu={nu} outside (0, 1)")
            if N < 1:
                raise ConfigurationError(f"N={N} must be positive")
            if check_radius and r0 is not None and eps > r0:
                raise ConfigurationError(f"epsilon={eps} exceeds certified radius r0={r0}")
            if math.sqrt(sum(c * c for c in y0)) >= eps:
                raise ConfigurationError(f"|y0| >= epsilon for y0={y0}")
        if not 0 < self["mc.level"] < 1:
            raise ConfigurationError("mc.level must lie in (0, 1)")


def reference_markdown() -> str:
    lines = [
        "# Configuration reference",
        "",
        "Config files hold one `key = value` per line; `#` starts a comment.",
        "Every key can also be given as a flag, and flags override the file.",
        "",
        "| key | flag | default | meaning |",
        "| --- | --- | --- | --- |",
    ]
    lines += [f"| `{k.name}` | `{k.flag}` | `{k.default}` | {k.help} |" for k in KEYS]
    lines += ["", f"The default worker count is read from `${WORKERS_ENV}` when set.", ""]
    return "\n".join(lines)
