import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from noisestab.core import DomainError
from noisestab.oracles import brownian_sup_prob, example1_threshold, ou_moments

# Independent 1e6-path numpy random walk with two-sided bridge test
# (scripts/oracle_brownian_sup.py, dt = 1e-4, seed 20240501).
MC_SUP_C1_T1 = 0.629396
MC_SUP_C1_T1_SE = 0.00048296653629832366


def spectral_exit_prob(c, T, terms=200):
    """1 - P(sup |w| < c) from the sine eigenfunction expansion of the heat
    kernel on (-c, c); converges fast for large T/c^2."""
    k = np.arange(terms)
    odd = 2 * k + 1
    stay = 4 / np.pi * np.sum((-1.0) ** k / odd * np.exp(-(odd**2) * np.pi**2 * T / (8 * c * c)))
    return 1.0 - stay


@pytest.mark.parametrize("c,T", [(1.0, 1.0), (3.0, 10.0), (0.5, 0.2), (2.0, 1.0), (1.0, 5.0)])
def test_series_matches_spectral_expansion(c, T):
    assert brownian_sup_prob(c, T).value == pytest.approx(spectral_exit_prob(c, T), abs=1e-11)


def test_series_matches_frozen_monte_carlo():
    value = brownian_sup_prob(1.0, 1.0).value
    assert abs(value - MC_SUP_C1_T1) < 3 * MC_SUP_C1_T1_SE


def test_series_regression_constants():
    assert brownian_sup_prob(1.0, 1.0).value == pytest.approx(0.6292225702004761, rel=1e-12)
    assert brownian_sup_prob(3.0, 10.0).value == pytest.approx(spectral_exit_prob(3.0, 10.0), rel=1e-11)


def test_series_limits():
    assert brownian_sup_prob(50.0, 1.0).value < 1e-300 or brownian_sup_prob(50.0, 1.0).value == 0.0
    assert brownian_sup_prob(1.0, 1e4).value == pytest.approx(1.0, abs=1e-12)


def test_series_truncation_reported():
    r = brownian_sup_prob(1.0, 1.0, tol=1e-12)
    assert r.terms_used >= 1
    assert r.truncation_error_estimate < 1e-12


def test_series_domain():
    with pytest.raises(DomainError):
        brownian_sup_prob(0.0, 1.0)
    with pytest.raises(DomainError):
        brownian_sup_prob(1.0, -1.0)


@given(st.floats(0.1, 5.0), st.floats(0.05, 20.0), st.floats(1.01, 3.0))
def test_series_monotone(c, T, f):
    # comparisons hold up to the two truncation remainders
    base = brownian_sup_prob(c, T)
    wider = brownian_sup_prob(c * f, T)
    longer = brownian_sup_prob(c, T * f)
    tol = 1e-13 + 2 * max(r.truncation_error_estimate for r in (base, wider, longer))
    assert wider.value <= base.value + tol
    assert longer.value >= base.value - tol


@given(st.floats(0.2, 4.0), st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_series_brownian_scaling(c, T, s):
    a = brownian_sup_prob(c, T).value
    b = brownian_sup_prob(c / math.sqrt(s), T / s).value
    assert b == pytest.approx(a, rel=1e-10, abs=1e-15)


@given(st.floats(0.3, 4.0), st.floats(0.1, 10.0))
def test_series_stable_under_refinement(c, T):
    a = brownian_sup_prob(c, T, tol=1e-12).value
    b = brownian_sup_prob(c, T, tol=1e-15).value
    assert b == pytest.approx(a, abs=2e-12)


def test_example1_threshold_substitution():
    expected = (1.0 / abs(4.0 * math.log(0.1 / math.sqrt(8.0)))) ** 2
    assert example1_threshold(1.0, 0.1, 0.5) == pytest.approx(expected, rel=1e-15)
    assert example1_threshold(1.0, 0.1, 0.5) == pytest.approx(0.0055948, rel=1e-4)


def test_example1_threshold_limits():
    with pytest.raises(DomainError):
        example1_threshold(1.0, math.sqrt(8.0), 0.5)
    base = 1.0 / abs(4.0 * math.log(0.1 / math.sqrt(8.0)))
    lo, hi = example1_threshold(1.0, 0.1, 0.5), example1_threshold(1.0, 0.1, 0.999)
    assert lo < hi < base * 1.001
    assert example1_threshold(1.0, 1e-12, 0.5) < example1_threshold(1.0, 1e-3, 0.5)


def test_ou_moments():
    assert ou_moments(1.0, 0.1, 0.0, 0.7) == (0.7, 0.0)
    m, v = ou_moments(1.0, 0.1, 1.0, 1.0)
    assert m == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert v == pytest.approx(0.005 * (1 - math.exp(-2.0)), rel=1e-14)
    m, v = ou_moments(2.0, 0.3, 200.0, 1.0)
    assert m == pytest.approx(0.0, abs=1e-100)
    assert v == pytest.approx(0.09 / 4.0, rel=1e-14)
    with pytest.raises(DomainError):
        ou_moments(0.0, 0.1, 1.0, 1.0)
