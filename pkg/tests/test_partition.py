import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oscbound.expr import as_univariate
from oscbound.partition import (
    IntervalType, classify, decompose, find_zeros, fprime_extrema, log_derivative_mass,
    monotone_piece_count, partition, ratio_function, type1_margin,
)
from oscbound.vdc import Poly

S2 = 1 / math.sqrt(2)


def fprime(text):
    u = as_univariate(text)
    return lambda x: u.derivs(x, 1)[1]


# ----------------------------------------------------------- find_zeros

def test_single_root():
    z = find_zeros(fprime("x^2"), -1, 1)
    assert z == pytest.approx([0.0], abs=1e-12)


def test_two_roots():
    z = find_zeros(fprime("x^3 - x"), -2, 2)
    assert z == pytest.approx([-1 / math.sqrt(3), 1 / math.sqrt(3)], abs=1e-12)
    assert not any(r.tangential for r in z)


def test_no_roots():
    assert find_zeros(fprime("x"), 0, 1) == []


def test_tangential_root_is_flagged():
    z = find_zeros(lambda x: (x - 0.3) ** 2, 0, 1)
    assert len(z) == 1
    assert z[0].tangential
    assert float(z[0]) == pytest.approx(0.3, abs=1e-5)


def test_expression_input():
    z = find_zeros("cos(x)", 0, 10)
    assert z == pytest.approx([math.pi / 2, 3 * math.pi / 2, 5 * math.pi / 2], abs=1e-12)


# ----------------------------------------------------------- decompose

def test_quadratic_decomposition():
    p = decompose("x^2", -1, 1)
    assert [v for h in p.H for v in (h.c, h.d)] == pytest.approx([-1, -S2, S2, 1], abs=1e-11)
    assert p.G[1] == pytest.approx((-S2, S2), abs=1e-11)
    assert p.G[0] == (-1.0, -1.0) and p.G[-1] == (1.0, 1.0)
    assert p.Z == pytest.approx([-1, 0, 1], abs=1e-12)


def test_linear_decomposition():
    p = decompose("x", 0, 1)
    assert [(h.c, h.d) for h in p.H] == [(0.0, 1.0)]
    assert p.measure_G() == 0.0


def test_flat_phase_has_empty_H():
    p = decompose("exp(-1/x)", 0.05, 0.4)
    assert p.H == []
    assert p.measure_G() == pytest.approx(0.35)


def test_ratio_is_infinite_at_critical_point():
    r = ratio_function("x^2")
    assert np.isinf(r(np.array([0.0])))[0]
    assert r(np.array([0.5]))[0] == pytest.approx(2.0)


# ----------------------------------------------------------- classify

def test_quadratic_tags():
    p = partition("x^2", -1, 1)
    assert [h.tag for h in p.H] == [IntervalType.TYPE2A, IntervalType.TYPE2A]
    h = p.H[1]
    assert h.sup_fprime == pytest.approx(2.0, rel=1e-9)
    assert h.inf_fprime == pytest.approx(math.sqrt(2), rel=1e-9)


def test_linear_full_interval_tag():
    assert partition("x", 0, 1).H[0].tag is IntervalType.TYPE2_FULL


def test_cubic_tag_follows_actual_boundaries():
    p = partition("x^3", 0.1, 1)
    last = p.H[-1]
    assert last.d == 1.0
    # Direct sampling oracle for the variation of |f'| = 3x^2.
    x = np.linspace(last.c, last.d, 100001)
    ratio = (3 * x ** 2).max() / (3 * x ** 2).min()
    assert last.variation_ratio == pytest.approx(ratio, rel=1e-9)
    expected = IntervalType.TYPE1 if ratio > 2 else IntervalType.TYPE2A
    assert last.tag is expected


def test_cubic_tags():
    p = partition("x^3 - x", -2, 2)
    assert [h.tag for h in p.H] == [IntervalType.TYPE1, IntervalType.TYPE2B, IntervalType.TYPE1]
    middle = p.H[1]
    # Symmetric piece around the inflection point, where f'' = 0.
    assert middle.c == pytest.approx(-middle.d, abs=1e-11)


def test_sine_pieces():
    p = partition("sin(x)", 0.2, 6.0)
    assert [h.tag for h in p.H] == [IntervalType.TYPE2A, IntervalType.TYPE2B, IntervalType.TYPE2A]
    # The middle piece straddles pi, where |f'| = 1 is largest.
    assert p.H[1].sup_fprime == pytest.approx(1.0, abs=1e-12)


def test_records_cover_interval():
    rows = partition("x^2", -1, 1).records()
    assert rows[0]["lo"] == -1.0 and rows[-1]["hi"] == 1.0
    assert {r["set"] for r in rows} == {"G", "H"}


# ----------------------------------------------------------- piece counts

@pytest.mark.parametrize("f, a, b, j", [
    ("x^2", -1, 1, 1),
    ("x^3 - x", -2, 2, 2),
    ("sin(x)", 0, 4 * math.pi, 4),
    ("sin(x)", 0, 4 * math.pi - 0.01, 4),
    ("sin(x)", 0.01, 4 * math.pi + 0.01, 5),
])
def test_monotone_piece_count(f, a, b, j):
    assert monotone_piece_count(f, a, b) == j


# ----------------------------------------------------------- Type-1 margin

def test_type1_margin_holds_on_an_example():
    p = partition("x^4 + x", -1, 1)
    type1 = [h for h in p.H if h.tag is IntervalType.TYPE1]
    assert type1
    for h in type1:
        assert type1_margin("x^4 + x", h) < 1


def test_log_derivative_mass_closed_form():
    # For f = x^3 on [1, 2]: int 6x / 9x^4 = (1/3)(1 - 1/4) = 0.25.
    assert log_derivative_mass("x^3", 1, 2) == pytest.approx(0.25, rel=1e-9)


# ----------------------------------------------------------- invariants

polys = st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=7).filter(
    lambda c: any(abs(v) > 1e-3 for v in c[1:]))


@given(polys)
@settings(max_examples=150, deadline=None)
def test_partition_invariants(c):
    f = Poly(c)
    a, b = -1.0, 1.0
    p = partition(f, a, b)
    # Coverage.
    assert p.measure_G() + p.measure_H() == pytest.approx(b - a, rel=1e-9)
    r = ratio_function(f)
    for h in p.H:
        ends = np.array([h.c, h.d])
        assert np.all(np.abs(f.derivs(ends, 1)[1]) > 0)
        inner = np.linspace(h.c, h.d, 66)[1:-1]
        assert np.all(r(inner) < 1)
        assert np.all(f.derivs(inner, 1)[1] != 0)
        for e in (h.c, h.d):
            if e not in (a, b):
                assert r(np.array([e]))[0] == pytest.approx(1.0, abs=1e-6)
        if h.tag is IntervalType.TYPE1:
            assert type1_margin(f, h) < 1
    # Tags agree with the variation rule.
    for h in p.H:
        assert (h.tag is IntervalType.TYPE1) == (h.sup_fprime > 2 * h.inf_fprime)


def test_microscopic_H_interval_is_resolved():
    # f' = 3x^2 + eps never vanishes; f'^2 > |f''| only for |x| < eps^2 / 6.
    eps = 4.652088682002931e-99
    p = partition(Poly([0.0, eps, 0.0, 1.0]), -1, 1)
    tiny = [h for h in p.H if h.c < 0 < h.d]
    assert len(tiny) == 1
    assert tiny[0].d == pytest.approx(eps ** 2 / 6, rel=1e-9)
    assert tiny[0].c == pytest.approx(-eps ** 2 / 6, rel=1e-9)
    assert p.H[-1].c == pytest.approx((2 / 3) ** (1 / 3), rel=1e-12)


def test_fprime_extrema_on_monotone_piece():
    sup, inf = fprime_extrema("x^2", 0.5, 1.0)
    assert sup == pytest.approx(2.0) and inf == pytest.approx(1.0)


def test_classify_is_idempotent():
    p = decompose("x^3 - x", -2, 2)
    first = [h.tag for h in classify(p, "x^3 - x").H]
    assert [h.tag for h in classify(p, "x^3 - x").H] == first
