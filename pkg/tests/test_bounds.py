import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import assume, given
from hypothesis import strategies as st

from noisestab.bounds import (
    CSV_COLUMNS,
    BoundReport,
    InfeasibleRegion,
    PerturbedLyapunov,
    admissible_region,
    coefficient_a,
    fixed_horizon_region,
    remark1_horizon,
    remark2_bound,
    theorem1_bound,
    theorem1_corner,
    theorem2_bound,
)
from noisestab.core import ConfigurationError, DomainError, ExperimentParams, RegimeError
from noisestab.systems import damped_noise, quadratic_certificate

CERT = quadratic_certificate(1, A=1.0, B=4.0, C=2.0, gamma=1.0, r0=1.0)


def sympy_vn(N, n, h, B, C, gamma, mu, T, v, t):
    """Independent oracle: build V_N symbolically in exact rationals and
    expand it into a polynomial in mu^2 before substituting numbers."""
    V, m2, s = sp.symbols("V m2 s")
    R = sp.Rational
    h, B, C, gamma = (R(x) for x in (h, B, C, gamma))
    expr = V + m2 * n**2 * h * C * s
    for k in range(2, N + 1):
        a = (k) * n**2 * h * (B + C) / gamma  # a_{k-1} = k n^2 h (B + C) / gamma
        expr = V**k + m2 * a * expr
    poly = sp.Poly(sp.expand(expr), m2)
    val = poly.as_expr().subs({V: R(v), m2: R(mu) ** 2, s: R(T) - R(t)})
    return float(val)


def test_coefficient_examples():
    assert coefficient_a(1, 1, 0.5, 4.0, 2.0, 1.0) == 6.0
    assert coefficient_a(2, 1, 0.5, 4.0, 2.0, 1.0) == 9.0
    assert coefficient_a(5, 3, 0.0, 4.0, 2.0, 1.0) == 0.0
    with pytest.raises(RegimeError):
        coefficient_a(1, 1, 0.5, 4.0, 2.0, 0.0)


def test_vn_hand_example():
    # V = 0.04, V_1 = 1.04, a_1 = 6, V_2 = 0.0016 + 0.06 * 1.04
    pl = PerturbedLyapunov(CERT, 2, 0.5, 0.1, 100.0)
    assert pl.value(np.array([0.2]), 0.0) == pytest.approx(0.0640, rel=1e-12)
    assert pl.expanded_value(0.04, 0.0) == pytest.approx(0.0640, rel=1e-12)


def test_vn_base_case_and_zero_noise():
    pl = PerturbedLyapunov(CERT, 1, 0.5, 0.1, 31.0)
    assert pl.value_from_v(0.3, 0.0) == pytest.approx(0.3 + 0.01 * 0.5 * 2 * 31.0, rel=1e-15)
    for N in range(1, 6):
        pl0 = PerturbedLyapunov(CERT, N, 0.5, 0.0, 10.0)
        assert pl0.value_from_v(0.3, 2.0) == pytest.approx(0.3**N, rel=1e-15)


def test_vn_rejects_time_past_horizon():
    with pytest.raises(DomainError):
        PerturbedLyapunov(CERT, 2, 0.5, 0.1, 10.0).value_from_v(0.1, 10.5)


@given(
    st.integers(1, 5),
    st.integers(1, 3),
    st.floats(0.0, 2.0),
    st.floats(0.1, 5.0),
    st.floats(0.1, 5.0),
    st.floats(0.05, 3.0),
    st.floats(0.0, 0.9),
    st.floats(0.0, 1.0),
)
def test_vn_matches_sympy_expansion(N, n, h, B, C, gamma, mu, v):
    T, t = 50.0, 7.0
    cert = quadratic_certificate(n, A=1.0, B=B, C=C, gamma=gamma, r0=1.0)
    pl = PerturbedLyapunov(cert, N, h, mu, T)
    oracle = sympy_vn(N, n, h, B, C, gamma, mu, T, v, t)
    assert pl.value_from_v(v, t) == pytest.approx(oracle, rel=1e-12, abs=1e-300)
    assert pl.expanded_value(v, t) == pytest.approx(oracle, rel=1e-12, abs=1e-300)


@given(st.integers(1, 5), st.floats(0.0, 1.0), st.floats(0.0, 0.99), st.floats(0.0, 1.0), st.floats(0.0, 2.0))
def test_vn_dominates_vpow(N, v, mu, frac, h):
    T = 40.0
    pl = PerturbedLyapunov(CERT, N, h, mu, T)
    assert pl.value_from_v(v, frac * T) >= v**N * (1 - 1e-15) >= 0


def _params(**kw):
    base = dict(mu=0.1, N=1, kappa=0.5, epsilon=0.3, nu=0.1, y0=(0.05,))
    return ExperimentParams(**(base | kw))


def test_theorem1_clipping_example():
    rep = theorem1_bound(CERT, 0.5, _params())
    assert rep.T == pytest.approx(0.1**-1.5, rel=1e-14)
    assert rep.v_n_initial == pytest.approx(0.0025 + 0.01 * 0.5 * 2 * 0.1**-1.5, rel=1e-14)
    assert rep.v_n_initial == pytest.approx(0.3187, abs=1e-4)
    assert rep.bound == 1.0
    assert rep.regime == "theorem1"


def test_theorem1_small_noise_example_still_clips():
    # T = 1000, V_1 = 0.0025 + 1e-4 * 1000 = 0.1025 > eps^2 = 0.09
    rep = theorem1_bound(CERT, 0.5, _params(mu=0.01))
    assert rep.v_n_initial == pytest.approx(0.1025, rel=1e-12)
    assert rep.bound == 1.0


def test_theorem1_vanishes_with_noise_at_origin():
    vals = [theorem1_bound(CERT, 0.5, _params(mu=mu, y0=(0.0,))).bound for mu in (1e-2, 1e-4, 1e-8, 1e-12)]
    assert vals[-1] < 2e-5
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_theorem1_big_o_ratio():
    # V_N(y0, 0; T) <= c (|y0|^(2N) + mu^kappa) over a sampled box
    rng = np.random.default_rng(7)
    ratios = []
    for _ in range(300):
        N = int(rng.integers(1, 4))
        mu = 10 ** rng.uniform(-4, -1)
        y0 = rng.uniform(0.0, 0.25)
        pl = PerturbedLyapunov(CERT, N, 0.5, mu, mu ** (-2 * N + 0.5))
        ratios.append(pl.value_from_v(y0**2, 0.0) / (y0 ** (2 * N) + mu**0.5))
    assert max(ratios) < 100.0


def test_theorem1_requires_decay():
    with pytest.raises(RegimeError):
        theorem1_bound(CERT.with_constants(gamma=0.0), 0.5, _params())


def test_theorem1_checks_radius():
    with pytest.raises(ConfigurationError):
        theorem1_bound(CERT.with_constants(r0=0.2), 0.5, _params())


@given(
    st.floats(1e-4, 0.3),
    st.floats(0.01, 1.0),
    st.floats(0.0, 0.2),
    st.floats(0.25, 0.9),
    st.integers(1, 3),
    st.floats(1.0, 1.5),
)
def test_theorem1_monotone(mu, h, y, eps, N, f):
    def b(**kw):
        args = dict(mu=mu, h=h, y=y, eps=eps) | kw
        p = _params(mu=args["mu"], N=N, epsilon=args["eps"], y0=(args["y"],))
        return theorem1_bound(CERT, args["h"], p).bound

    base = b()
    tol = 1e-12
    if mu * f < 1:
        assert b(mu=mu * f) >= base - tol
    assert b(h=h * f) >= base - tol
    if y * f < eps:
        assert b(y=y * f) >= base - tol
    if eps * f <= 1.0:
        assert b(eps=eps * f) <= base + tol


def test_remark1_horizon_examples():
    assert remark1_horizon(0.1, 1, lambda z: z, 0.1) == pytest.approx(10.0, rel=1e-14)
    # mu^(-4) * sqrt(0.01) = 1e4 * 0.1
    assert remark1_horizon(0.1, 2, math.sqrt, 0.01) == pytest.approx(1e3, rel=1e-12)
    with pytest.raises(ConfigurationError):
        remark1_horizon(0.1, 1, lambda z: z * z, 0.0)


def test_remark1_regime():
    p = _params(horizon_mode="remark1", lambda_fn=lambda z: z, y0=(0.1,))
    rep = theorem1_bound(CERT, 0.5, p)
    assert rep.regime == "remark1"
    assert rep.T == pytest.approx(10.0)


def test_region_n1_closed_form():
    r = admissible_region(CERT, 0.5, 1, 0.3, 0.1, 0.5)
    assert r.delta == pytest.approx(math.sqrt(0.0045), rel=1e-12)
    assert r.Delta == pytest.approx(2.025e-5, rel=1e-9)
    corner = theorem1_corner(CERT, 0.5, 1, 0.5)
    assert corner(r.delta, r.Delta) <= 0.09 * 0.1


def test_region_n2_satisfies_three_term_inequality():
    r = admissible_region(CERT, 0.5, 2, 0.3, 0.1, 0.5)
    a1 = 6.0
    lhs = 1.5 * r.delta**4 + 0.5 * r.Delta**4 * a1**2 + r.Delta**0.5 * a1 * 0.5 * 2
    assert lhs <= 0.3**4 * 0.1
    assert theorem1_corner(CERT, 0.5, 2, 0.5)(r.delta, r.Delta) <= 0.3**4 * 0.1


@given(
    st.integers(1, 5),
    st.floats(0.05, 1.0),
    st.floats(0.01, 0.99),
    st.floats(0.05, 0.95),
    st.floats(0.01, 2.0),
    st.floats(1.0, 3.0),
)
def test_region_self_consistent(N, eps, nu, kappa, h, A):
    cert = CERT.with_constants(A=A)
    try:
        r = admissible_region(cert, h, N, eps, nu, kappa)
    except InfeasibleRegion:
        return
    assert r.delta > 0 and r.Delta > 0
    assert theorem1_corner(cert, h, N, kappa)(r.delta, r.Delta) <= eps ** (2 * N) * nu


def test_region_positive_near_full_confidence():
    for N in range(1, 5):
        r = admissible_region(CERT, 0.5, N, 1.0, 0.99, 0.5)
        assert r.delta > 0 and r.Delta > 0


def test_region_rejects_gamma_zero_higher_order():
    with pytest.raises(RegimeError):
        admissible_region(CERT.with_constants(gamma=0.0), 0.5, 2, 0.3, 0.1, 0.5)


def test_fixed_horizon_region():
    r = fixed_horizon_region(CERT, 0.5, 2, 0.3, 0.1, 100.0)
    pl = PerturbedLyapunov(CERT, 2, 0.5, r.Delta, 100.0)
    assert pl.value_from_v(r.delta**2, 0.0) <= 0.3**4 * 0.1


def test_theorem2_examples():
    noise = damped_noise(0.5)  # h = 1
    assert noise.class_tag.h == pytest.approx(1.0)
    cert = CERT.with_constants(gamma=0.0)
    rep = theorem2_bound(cert, noise, 0.1, 0.3, [0.05])
    assert rep.bound == pytest.approx(0.25, rel=1e-12)
    assert rep.regime == "theorem2" and math.isinf(rep.T)
    assert theorem2_bound(cert, noise, 0.0, 0.3, [0.0]).bound == 0.0
    big = cert.with_constants(r0=1e6)
    assert theorem2_bound(big, noise, 0.1, 1e5, [0.05]).bound < 1e-10


def test_theorem2_needs_damped_class():
    from noisestab.systems import constant_noise

    with pytest.raises(ConfigurationError):
        theorem2_bound(CERT, constant_noise(1), 0.1, 0.3, [0.05])


def test_remark2_bound():
    cert = CERT.with_constants(gamma=0.0)
    rep = remark2_bound(cert, 0.5, 0.1, 0.3, [0.0], 10.0)
    assert rep.v_n_initial == pytest.approx(0.1, rel=1e-12)
    assert rep.bound == 1.0
    assert rep.regime == "remark2" and rep.advisory


@given(st.floats(1e-3, 0.5), st.integers(1, 3), st.floats(0.0, 0.2))
def test_report_csv_round_trip(mu, N, y):
    rep = theorem1_bound(CERT, 0.5, _params(mu=mu, N=N, y0=(y,)))
    row = rep.to_row()
    assert tuple(row) == CSV_COLUMNS
    assert BoundReport.from_row(row) == rep
