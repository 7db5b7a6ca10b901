import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import polynomial as P

from oscbound.vdc import (
    HypothesisError, Poly, RootError, auto_p, interval_sublevel_measure, log_derivative_identity,
    min_abs_derivative, poly_roots, random_suite, sublevel_exponent, verify_thm41,
)


# ---------------------------------------------------------- polynomials

def test_poly_basics():
    f = Poly([1, -3, 0, 1, 0, 0])
    assert f.degree == 3
    assert f(2.0) == pytest.approx(3.0)
    assert list(f.deriv(1)) == [-3, 0, 3]
    assert f.derivs(np.array([1.0]), 4)[:, 0] == pytest.approx([-1, 0, 6, 6, 0])


def test_poly_needs_degree_one():
    with pytest.raises(ValueError):
        Poly([3.0])
    with pytest.raises(ValueError):
        Poly([3.0, 0.0])


def test_poly_text_parses_back():
    from oscbound.expr import evaluate
    f = Poly([0.5, -2, 0, 1.25])
    x = np.linspace(-1, 1, 7)
    assert evaluate(f.to_text(), [x]) == pytest.approx(f(x), rel=1e-14)


# ---------------------------------------------------------- roots

def test_roots_real_pair():
    assert poly_roots([-1, 0, 1]) == pytest.approx([-1, 1])


def test_roots_of_cubic_derivative():
    assert poly_roots(Poly([0, -1, 0, 1]).deriv(1)) == pytest.approx([-1 / math.sqrt(3), 1 / math.sqrt(3)])


def test_roots_complex_pair():
    r = poly_roots([1, 0, 1])
    assert sorted(r, key=lambda z: z.imag) == pytest.approx([-1j, 1j])


def test_roots_with_multiplicity():
    r = poly_roots(P.polyfromroots([0.5, 0.5, -2]))
    assert len(r) == 3
    assert r.real == pytest.approx([-2, 0.5, 0.5], abs=1e-7)


def test_roots_reject_constant():
    with pytest.raises(ValueError):
        poly_roots([2.0])


def test_root_error_carries_partial_result():
    # An impossible residual target forces the failure path.
    with pytest.raises(RootError) as info:
        poly_roots(P.polyfromroots([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]) * 1e3, rtol=1e-30)
    assert info.value.partial is not None and len(info.value.partial) == 7


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=8).filter(lambda c: abs(c[-1]) > 1e-2))
@settings(max_examples=300, deadline=None)
def test_root_residuals(c):
    r = poly_roots(c)
    assert len(r) == len(c) - 1
    scale = P.polyval(np.maximum(1.0, np.abs(r)), np.abs(c))
    assert np.all(np.abs(P.polyval(r, c)) <= 1e-8 * scale)


# ---------------------------------------------------------- identity

suite = random_suite()


@pytest.mark.parametrize("entry", suite[:25], ids=lambda e: f"poly{e.index}")
def test_log_derivative_identity(entry):
    rng = np.random.default_rng(entry.index)
    roots = poly_roots(entry.poly.deriv(1)).real
    x = rng.uniform(-1, 1, 64)
    # Keep away from real roots of f'.
    x = x[np.min(np.abs(x[:, None] - roots[None, :]), axis=1) > 1e-6]
    lhs, rhs = log_derivative_identity(entry.poly, x)
    assert np.all(np.abs(lhs - rhs) <= 1e-8 * np.abs(lhs))


def test_identity_on_a_cubic():
    f = Poly([0, -1, 0, 1])
    x = np.array([0.0, 0.2, 1.5])
    lhs, rhs = log_derivative_identity(f, x)
    assert lhs == pytest.approx(6 * x / (3 * x ** 2 - 1) ** 2)
    assert rhs == pytest.approx(lhs)


# ---------------------------------------------------------- Theorem check

def test_quadratic_normalized_value():
    rep = verify_thm41(Poly([0, 0, 1]), 2, -1, 1, [100, 400, 1600])
    lam, terms, normalized, _ = rep.rows[0]
    assert terms == pytest.approx(0.277843, abs=1e-6)
    assert normalized == pytest.approx(1.389214, abs=1e-6)


def test_linear_phase_normalized_is_one():
    # |f'| = 1 is not strictly above 1, so the check needs to be told to go on.
    with pytest.raises(HypothesisError):
        verify_thm41(Poly([0, 1]), 1, 0, 1)
    rep = verify_thm41(Poly([0, 1]), 1, 0, 1, check_hypothesis=False)
    assert all(row[2] == pytest.approx(1.0) for row in rep.rows)
    assert rep.passed and rep.notes


def test_cubic_with_third_derivative():
    rep = verify_thm41(Poly([0, -3, 0, 1]), 3, -1, 1, compute_lhs=True)
    assert rep.passed
    assert math.isfinite(rep.sup_normalized)
    assert rep.trend_slope <= 0
    assert rep.lhs_slope < 0


def test_cubic_terms_against_riemann_sum():
    f = Poly([0, -3, 0, 1])
    rep = verify_thm41(f, 3, -1, 1, [16.0, 32.0, 64.0])
    lam = 16.0
    n = 4_000_000
    x = -1 + (np.arange(n) + 0.5) * (2 / n)
    d = f.derivs(x, 2)
    with np.errstate(divide="ignore"):
        g = np.minimum(1.0, np.abs(d[2]) / (lam * d[1] ** 2))
    integral = g.sum() * 2 / n
    endpoint = min(2.0, 1 / (lam * 3.0))     # sup|f'| = 3 at x = 0
    assert rep.rows[0][1] == pytest.approx(integral + endpoint, rel=1e-5)


def test_hypothesis_violation_reports_location():
    with pytest.raises(HypothesisError) as info:
        verify_thm41(Poly([0, 0, 0, 1]), 2, -1, 1)
    assert info.value.x == pytest.approx(0.0, abs=1e-6)
    assert info.value.value == pytest.approx(0.0, abs=1e-5)


def test_min_abs_derivative_and_auto_p():
    f = Poly([0, 0, 0.5, 1])     # f'' = 1 + 6x
    inf, x = min_abs_derivative(f, 3, -1, 1)
    assert inf == pytest.approx(6.0)
    assert auto_p(f, -1, 1) == 3
    assert auto_p(f, -1, 1, largest=False) == 3
    assert auto_p(Poly([0, 5, 0.5]), -1, 1, largest=False) == 1


# ---------------------------------------------------------- random suite

def test_suite_is_deterministic():
    again = random_suite()
    assert [e.poly for e in again] == [e.poly for e in suite]
    assert [e.p for e in again] == [e.p for e in suite]


def test_suite_normalization():
    assert len(suite) == 100
    for e in suite:
        assert 2 <= e.poly.degree <= 6
        assert min_abs_derivative(e.poly, e.p, -1, 1)[0] == pytest.approx(1.5, rel=1e-9)


@pytest.mark.parametrize("entry", suite[:10], ids=lambda e: f"poly{e.index}")
def test_sublevel_consistency(entry):
    f = entry.poly
    eps = np.geomspace(1e-6, 1e-3, 13)
    fp = f.deriv(1)
    for r in np.unique(np.round(poly_roots(fp).real, 12)):
        q = P.polymul([-r, 1], fp)
        m = [interval_sublevel_measure(q, -1, 1, e) for e in eps]
        if min(m) == 0:
            continue
        # The measure may shrink faster than eps^(1/p) but not slower.
        assert sublevel_exponent(q, -1, 1, eps) >= 0.9 / entry.p


def test_interval_sublevel_measure_closed_form():
    assert interval_sublevel_measure([0, 0, 1], -1, 1, 0.01) == pytest.approx(0.2)
    assert interval_sublevel_measure([0, 1], -1, 1, 0.1) == pytest.approx(0.2)
    assert interval_sublevel_measure([5, 1], -1, 1, 0.1) == 0.0
