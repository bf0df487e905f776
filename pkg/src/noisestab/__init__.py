"""Perturbed-Lyapunov stability bounds for locally stable systems under
persistent white noise, with a stopped-process Monte Carlo laboratory."""

import os

import numba

if "NUMBA_THREADING_LAYER" not in os.environ:
    # an outdated TBB makes numba warn while probing layers; prefer OpenMP
    try:
        from numba.np.ufunc import omppool  # noqa: F401

        numba.config.THREADING_LAYER = "omp"
    except ImportError:
        numba.config.THREADING_LAYER = "workqueue"

from .core import (  # noqa: E402
    ConfigurationError,
    DomainError,
    DynamicalSystem,
    ExperimentParams,
    LyapunovCertificate,
    NoiseClass,
    NoiseModel,
    RegimeError,
    apply_generator,
    eval_sigma,
)

__all__ = [
    "ConfigurationError",
    "DomainError",
    "DynamicalSystem",
    "ExperimentParams",
    "LyapunovCertificate",
    "NoiseClass",
    "NoiseModel",
    "RegimeError",
    "apply_generator",
    "eval_sigma",
]
