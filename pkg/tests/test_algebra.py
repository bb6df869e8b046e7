import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from liftcount.algebra import (AlgebraError, PolyRing, coefficients, collapse, multinomial,
                               poly_coeff, rational)

RING = PolyRing(["a", "b"])
SMALL = PolyRing(["a", "b"], limits=[2, 3], caps=[8, 8])

terms = st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3)),
                        st.integers(-5, 5).map(mpq), max_size=5)


def poly(ring, t):
    return ring.from_terms(t)


@settings(max_examples=150, deadline=None)
@given(terms, terms, terms)
def test_ring_axioms(t1, t2, t3):
    a, b, c = (poly(RING, t) for t in (t1, t2, t3))
    assert a + b == b + a
    assert a * b == b * a
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a - a == 0
    assert a * 1 == a and a + 0 == a


@settings(max_examples=150, deadline=None)
@given(terms, terms, st.integers(-3, 3), st.integers(-3, 3))
def test_evaluation_is_a_homomorphism(t1, t2, x, y):
    a, b = poly(RING, t1), poly(RING, t2)
    point = {"a": x, "b": y}
    assert (a * b).evaluate(point) == a.evaluate(point) * b.evaluate(point)
    assert (a + b).evaluate(point) == a.evaluate(point) + b.evaluate(point)


@settings(max_examples=150, deadline=None)
@given(terms, terms)
def test_truncated_product_keeps_low_degrees(t1, t2):
    full = poly(RING, t1) * poly(RING, t2)
    cut = poly(SMALL, t1) * poly(SMALL, t2)
    expected = {e: c for e, c in full.items() if e[0] <= 2 and e[1] <= 3}
    assert dict(cut.items()) == expected


def test_power_matches_repeated_product():
    x = RING.var("a") + 2 * RING.var("b") - 1
    assert x ** 4 == x * x * x * x
    assert x ** 0 == 1


def test_cap_is_enforced():
    ring = PolyRing(["a"], limits=[2], caps=[2])
    with pytest.raises(AlgebraError):
        ring.pack([3])
    with pytest.raises(AlgebraError):
        ring.var("a") ** 3
    with pytest.raises(ValueError):
        PolyRing(["a"], limits=[5], caps=[2])


def test_coefficients_and_collapse():
    a, b = RING.var("a"), RING.var("b")
    e = 3 * a * a * b + a + 7
    assert coefficients(e, "a") == {0: 7, 1: 1, 2: 3 * e.ring.without("a").var("b")}
    assert poly_coeff(e, "b", 1) == 3 * RING.without("b").var("a") ** 2
    assert poly_coeff(5, "a", 0) == 5 and poly_coeff(5, "a", 1) == 0
    assert collapse(RING.const(mpq(4, 2))) == 2


def test_substitute_and_division():
    a, b = RING.var("a"), RING.var("b")
    e = (a + b) * (a - b)
    assert collapse(e.substitute("a", 3).substitute("b", 1)) == 8
    assert (e / 4).evaluate({"a": 3, "b": 1}) == 2
    with pytest.raises(AlgebraError):
        e / a


def test_scalars():
    assert rational("3/4") == mpq(3, 4)
    assert multinomial([2, 1, 1]) == 12
    assert multinomial([]) == 1
