"""Command-line experiment runner.

    noisestab certify --system cubic-bistable
    noisestab bound --mu 0.05,0.1 --N 1,2 --epsilon 0.3
    noisestab compare --config experiments/pure_noise.cfg

Exit codes: 0 success, 1 verification or comparison failure, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .bounds import (
    CSV_COLUMNS,
    BoundReport,
    horizon,
    remark2_bound,
    theorem1_bound,
    theorem2_bound,
)
from .certify import SamplingPlan, estimate_h, verify_certificate, verify_damped_class
from .config import KEYS, ExperimentConfig, parse_config_text
from .core import ConfigurationError, DomainError, ExperimentParams, NoiseClass
from .montecarlo import COMPARE_COLUMNS, McEstimate, compare_bound, compare_row, estimate_exit_probability
from .simulate import IntegratorConfig, default_dt, run_batch
from .systems import (
    Preset,
    certificate_from_expression,
    constant_noise,
    damped_noise,
    drift_from_expressions,
    get_preset,
    linear_system,
    noise_from_expressions,
    quadratic_certificate,
    scalar_function,
)

SUBCOMMANDS = ("certify", "bound", "simulate", "sweep", "compare", "escape-demo")
MC_COLUMNS = ("mu", "epsilon", "y0_norm", "T", "dt", "n", "exited", "p_hat", "ci_low", "ci_high", "aborted")
DEMO_COLUMNS = ("trajectory", "exited", "stop_time", "final_state", "sup_norm")


# ---------------------------------------------------------------------------
# building the experiment


@dataclass
class Setup:
    preset: Preset
    h: float
    grid: SamplingPlan


def _split(text: str, sep: str) -> list[str]:
    return [s.strip() for s in text.split(sep) if s.strip()]


def _noise_class(cfg: ExperimentConfig, default_kind: str, r0: float, noise_for_h=None) -> NoiseClass:
    kind = cfg["noise.class"]
    kind = default_kind if kind == "auto" else kind
    if kind == "A_h":
        h = cfg["noise.h"]
        if h is None:
            if noise_for_h is None:
                raise ConfigurationError("noise.h is required")
            h = estimate_h(noise_for_h, r0)
        return NoiseClass.bounded(h)
    if kind == "J_h":
        if not cfg["noise.zeta"] or cfg["noise.h"] is None:
            raise ConfigurationError("class J_h needs noise.zeta and noise.h")
        return NoiseClass.damped(scalar_function(cfg["noise.zeta"]), cfg["noise.h"])
    raise ConfigurationError(f"noise.class must be A_h or J_h, got {kind!r}")


def build_setup(cfg: ExperimentConfig) -> Setup:
    name = cfg["system"]
    grid = SamplingPlan(
        cfg["grid.shells"], cfg["grid.directions"], cfg["grid.t_check"], cfg["grid.t_step"], cfg["grid.seed"]
    )
    if name == "inline":
        exprs = _split(cfg["system.drift"], ";")
        if not exprs:
            raise ConfigurationError("inline system needs system.drift")
        system = drift_from_expressions(exprs)
        base = quadratic_certificate(system.dimension)
    else:
        if cfg["system.drift"]:
            raise ConfigurationError("system.drift is only used with system = inline")
        preset = get_preset(name)
        system = linear_system(cfg["system.theta"]) if name == "linear-ou" else preset.system
        base = preset.certificate
    n = system.dimension

    changes = {k: cfg[f"cert.{k}"] for k in ("A", "B", "C", "gamma", "r0") if cfg[f"cert.{k}"] is not None}
    if cfg["cert.v"]:
        c = {k: getattr(base, k) for k in ("A", "B", "C", "gamma", "r0")} | changes
        cert = certificate_from_expression(cfg["cert.v"], n, **c)
    else:
        cert = base.with_constants(**changes) if changes else base

    kind = cfg["noise"]
    if kind == "constant":
        noise = constant_noise(n, cfg["noise.scale"])
        if cfg["noise.class"] == "J_h":
            raise ConfigurationError("constant noise is not in class J_h")
        if cfg["noise.h"] is not None:
            noise = _retag(noise, NoiseClass.bounded(cfg["noise.h"]))
    elif kind == "damped":
        if n != 1:
            raise ConfigurationError("damped noise preset is one-dimensional")
        noise = damped_noise(cfg["noise.rate"])
        if cfg["noise.class"] == "A_h":
            noise = _retag(noise, NoiseClass.bounded(cfg["noise.h"] if cfg["noise.h"] is not None else 0.5))
    elif kind == "inline":
        rows = [_split(r, ",") for r in _split(cfg["noise.g"], ";")]
        if len(rows) != n:
            raise ConfigurationError(f"noise.g needs {n} rows")
        probe = noise_from_expressions(rows, NoiseClass.bounded(0.0))
        noise = _retag(probe, _noise_class(cfg, "A_h", cert.r0, probe))
    else:
        raise ConfigurationError(f"noise must be constant, damped or inline, got {kind!r}")

    tag = noise.class_tag
    if tag.kind == "A_h":
        h = cfg["noise.h"] if cfg["noise.h"] is not None else estimate_h(noise, cert.r0, grid)
    else:
        h = tag.h
    return Setup(Preset(name, system, noise, cert), float(h), grid)


def _retag(noise, tag: NoiseClass):
    return replace(noise, class_tag=tag)


def _params(cfg: ExperimentConfig, setup: Setup, mu, N, kappa, eps, nu, y0) -> ExperimentParams:
    mode = cfg["params.horizon"]
    lam = scalar_function(cfg["params.lambda"], "z") if cfg["params.lambda"] else None
    n = setup.preset.system.dimension
    if len(y0) == 1 and n > 1:
        y0 = (y0[0],) + (0.0,) * (n - 1)
    if len(y0) != n:
        raise ConfigurationError(f"y0 has {len(y0)} components, system has {n}")
    return ExperimentParams(mu, N, kappa, eps, nu, y0, mode, cfg["params.T"], lam, setup.preset.certificate.r0)


def _dt(cfg, eps, mu) -> float:
    return cfg["integrator.dt"] if cfg["integrator.dt"] is not None else default_dt(eps, mu)


def _integrator(cfg, eps, mu) -> IntegratorConfig:
    return IntegratorConfig(
        dt=_dt(cfg, eps, mu),
        bridge_correction=cfg["integrator.bridge"],
        max_steps=cfg["integrator.max_steps"],
        seed=cfg["run.seed"],
        truncate=cfg["integrator.truncate"],
        path_stride=cfg["integrator.stride"],
    )


def _capped(cfg, params: ExperimentParams) -> ExperimentParams:
    """Apply params.t_cap_steps: the bound is then evaluated at the capped horizon."""
    cap = cfg["params.t_cap_steps"]
    if cap is None:
        return params
    T = horizon(params)
    T_cap = cap * _dt(cfg, params.epsilon, params.mu)
    if T <= T_cap:
        return params
    return replace(params, horizon_mode="explicit", T=T_cap)


def bound_for(setup: Setup, params: ExperimentParams) -> BoundReport:
    """Pick the bound that applies: uniform-in-time for damped noise, the
    fixed-horizon first-order bound for gamma = 0 with explicit T, else the
    perturbed construction of order N."""
    cert, noise = setup.preset.certificate, setup.preset.noise
    if noise.class_tag.kind == "J_h":
        if params.N != 1:
            raise ConfigurationError("the damped-noise bound is first order; use params.N = 1")
        return theorem2_bound(cert, noise, params.mu, params.epsilon, params.y0_array, params.nu)
    if cert.gamma == 0 and params.N == 1 and params.horizon_mode == "explicit":
        return remark2_bound(cert, setup.h, params.mu, params.epsilon, params.y0_array, params.T, params.nu)
    return theorem1_bound(cert, setup.h, params)


def _sim_horizon(report: BoundReport, params: ExperimentParams) -> float:
    if math.isfinite(report.T):
        return report.T
    if params.T is None:
        raise ConfigurationError("uniform-in-time bound: set params.T as the simulated horizon")
    return float(params.T)


# ---------------------------------------------------------------------------
# subcommands


def _write_rows(out, columns, rows):
    w = csv.DictWriter(out, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)


def _emit(cfg, columns, rows):
    path = cfg["run.out"]
    if path:
        with open(path, "w", newline="") as fh:
            _write_rows(fh, columns, rows)
    else:
        _write_rows(sys.stdout, columns, rows)


def cmd_certify(cfg, setup: Setup) -> int:
    cert, system, noise = setup.preset.certificate, setup.preset.system, setup.preset.noise
    report = verify_certificate(cert, system, setup.grid)
    text = report.to_text()
    ok = report.passed
    text += f"h_estimate: {estimate_h(noise, cert.r0, setup.grid)!r}\n"
    if noise.class_tag.kind == "J_h":
        dc = verify_damped_class(noise, cert.r0, setup.grid)
        text += f"damped_class.passed: {str(dc.passed).lower()}\ndamped_class.integral: {dc.integral!r}\n"
        if dc.diagnostic:
            text += f"damped_class.diagnostic: {dc.diagnostic}\n"
        ok = ok and dc.passed
    sys.stdout.write(text)
    if cfg["run.out"]:
        report.write_violations_csv(cfg["run.out"])
    return 0 if ok else 1


def _reports(cfg, setup):
    out = []
    for combo in cfg.param_grid():
        params = _capped(cfg, _params(cfg, setup, *combo))
        out.append((params, bound_for(setup, params)))
    return out


def cmd_bound(cfg, setup) -> int:
    rows = []
    for _, rep in _reports(cfg, setup):
        if rep.advisory:
            sys.stderr.write(f"advisory: {rep.advisory}\n")
        rows.append(rep.to_row())
    _emit(cfg, CSV_COLUMNS, rows)
    return 0


def _simulate(cfg, setup, params, T) -> McEstimate:
    p = setup.preset
    return estimate_exit_probability(
        p.system,
        p.noise,
        params.mu,
        params.y0_array,
        params.epsilon,
        T,
        cfg["mc.n"],
        _integrator(cfg, params.epsilon, params.mu),
        cfg["mc.level"],
        cfg.workers,
    )


def cmd_simulate(cfg, setup) -> int:
    grid = cfg.param_grid()
    if len(grid) != 1:
        raise ConfigurationError("simulate takes one parameter set; use sweep for lists")
    params = _capped(cfg, _params(cfg, setup, *grid[0]))
    T = float(params.T) if params.horizon_mode == "explicit" else horizon(params)
    if not math.isfinite(T):
        raise ConfigurationError("infinite horizon: set params.horizon = explicit and params.T")
    integ = _integrator(cfg, params.epsilon, params.mu)
    integ.steps_for(T)
    est = _simulate(cfg, setup, params, T)
    row = dict(
        mu=repr(params.mu),
        epsilon=repr(params.epsilon),
        y0_norm=repr(params.y0_norm),
        T=repr(float(T)),
        dt=repr(integ.dt),
        n=str(est.n_trajectories),
        exited=str(est.n_exited),
        p_hat=repr(est.p_hat),
        ci_low=repr(est.ci_low),
        ci_high=repr(est.ci_high),
        aborted=str(est.aborted),
    )
    _emit(cfg, MC_COLUMNS, [row])
    return 0


def _joined(cfg, setup):
    work = []
    for params, rep in _reports(cfg, setup):
        T = _sim_horizon(rep, params)
        _integrator(cfg, params.epsilon, params.mu).steps_for(T)  # validate every row before running any
        work.append((params, rep, T))
    rows, flags = [], []
    for params, rep, T in work:
        est = _simulate(cfg, setup, params, T)
        dominated = compare_bound(est, rep).dominated
        rows.append(compare_row(rep, est, dominated))
        flags.append(dominated)
    return rows, flags


def cmd_sweep(cfg, setup) -> int:
    rows, _ = _joined(cfg, setup)
    _emit(cfg, COMPARE_COLUMNS, rows)
    return 0


def cmd_compare(cfg, setup) -> int:
    rows, flags = _joined(cfg, setup)
    _emit(cfg, COMPARE_COLUMNS, rows)
    bad = len(flags) - sum(flags)
    sys.stderr.write(f"dominated on {sum(flags)} of {len(flags)} rows\n")
    return 0 if bad == 0 else 1


def cmd_escape_demo(cfg, setup) -> int:
    p = setup.preset
    mu, T, eps = cfg["demo.mu"], cfg["demo.T"], cfg["demo.epsilon"]
    count = cfg["demo.trajectories"]
    y0 = np.zeros(p.system.dimension)
    integ = _integrator(cfg, eps, mu)
    stride = integ.path_stride or (1000 if cfg["demo.path_out"] else 0)
    integ = replace(integ, path_stride=stride if cfg["demo.path_out"] else 0)
    batch = run_batch(p.system, p.noise, mu, y0, eps, T, integ, count, workers=cfg.workers)
    rows = [
        dict(
            trajectory=str(batch.start_index + i),
            exited=str(bool(batch.exited[i])).lower(),
            stop_time=repr(float(batch.stop_time[i])),
            final_state=repr(float(batch.final_state[i][0])),
            sup_norm=repr(float(batch.sup_norm[i])),
        )
        for i in range(count)
    ]
    _emit(cfg, DEMO_COLUMNS, rows)
    if cfg["demo.path_out"]:
        with open(cfg["demo.path_out"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trajectory", "t"] + [f"y_{k + 1}" for k in range(p.system.dimension)])
            for i in range(count):
                tr = batch.trajectory(i)
                for s in tr.path_samples:
                    w.writerow([str(batch.start_index + i)] + [repr(float(c)) for c in s])
    k = int(np.sum(batch.exited))
    sys.stderr.write(f"{k} of {count} trajectories left |y| < {eps:g} before T = {T:g}\n")
    return 0


COMMANDS = {
    "certify": cmd_certify,
    "bound": cmd_bound,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "escape-demo": cmd_escape_demo,
}


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="noisestab",
        description="Exit-probability bounds and Monte Carlo checks for noisy stable systems.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="configuration keys (file key = flag, default):\n"
        + "\n".join(f"  {k.name:24s} {k.flag:22s} {k.default}" for k in KEYS),
    )
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("--config", metavar="PATH", help="flat 'key = value' file")
    for k in KEYS:
        ap.add_argument(k.flag, dest=k.name, default=None, metavar="VALUE", help=f"{k.help} [{k.default}]")
    return ap


def resolve_config(ns: argparse.Namespace) -> ExperimentConfig:
    raw = {}
    if ns.config:
        try:
            with open(ns.config) as fh:
                raw = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config: {exc}") from exc
    for k in KEYS:
        v = getattr(ns, k.name)
        if v is not None:
            raw[k.name] = v
    return ExperimentConfig(raw)


def run_subcommand(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = resolve_config(ns)
        setup = build_setup(cfg)
        cfg.validate(setup.preset.certificate.r0, check_radius=ns.command not in ("certify", "escape-demo"))
        return COMMANDS[ns.command](cfg, setup)
    except (ConfigurationError, DomainError) as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return 2


def main() -> None:
    sys.exit(run_subcommand())


if __name__ == "__main__":
    main()
