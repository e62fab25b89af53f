from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from pkit.formula import parse
from pkit.model import (
    ModelElement, evaluate, format_element, inf, interval_infinite, is_finite, parse_element,
)


def E(q, z):
    return ModelElement((F(q),) if q else (), z)


def test_lex_order_infinite_beats_finite():
    assert evaluate(parse("x <= y"), {"x": E(0, 5), "y": E(1, 0)}, model="M")
    assert E(0, 10 ** 9) < E(F(1, 10 ** 9), -10 ** 9)


def test_congruence_uses_standard_part():
    assert evaluate(parse("x === 2 mod 3"), {"x": E(F(1, 2), 5)}, model="M")


def test_componentwise_inverse():
    assert evaluate(parse("x + y == 0"), {"x": E(1, 2), "y": E(-1, -2)}, model="M")


def test_is_finite():
    assert is_finite(E(0, 10 ** 9))
    assert not is_finite(E(F(1, 3), 0))
    assert is_finite(E(1, 5) - E(1, 3))
    assert (E(1, 5) - E(1, 3)).z == 2


def test_interval_infinite():
    assert interval_infinite(E(0, 0), E(1, 0))
    assert not interval_infinite(E(0, 0), E(0, 10 ** 6))
    assert not interval_infinite(E(1, -3), E(1, 3))
    with pytest.raises(ValueError):
        interval_infinite(E(1, 0), E(0, 0))


def test_standard_model_rejects_infinite():
    with pytest.raises(ValueError):
        evaluate(parse("x <= 0"), {"x": inf(1)}, model="Z")


elements = st.builds(lambda a, b, z: ModelElement((F(a, 6), F(b, 4)), z),
                     st.integers(-12, 12), st.integers(-8, 8), st.integers(-50, 50))


@settings(max_examples=200, deadline=None)
@given(e=elements, n=st.integers(2, 9))
def test_residue_matches_floor_identity(e, n):
    r = e.residue(n)
    assert 0 <= r < n
    assert e.floordiv(n) * n + r == e
    assert (e - r).divisible(n)
    assert (e - r).exact_div(n) * n == e - r


@settings(max_examples=200, deadline=None)
@given(a=elements, b=elements, c=elements)
def test_ordered_group_laws(a, b, c):
    assert (a + b) + c == a + (b + c)
    assert a + b == b + a
    assert a - a == ModelElement()
    if a <= b:
        assert a + c <= b + c


@settings(max_examples=100, deadline=None)
@given(e=elements)
def test_format_parse_roundtrip(e):
    assert parse_element(format_element(e)) == e
    assert parse_element(e.to_json()) == e


def test_parse_element_forms():
    assert parse_element("inf*1/2 + 3") == E(F(1, 2), 3)
    assert parse_element("7") == ModelElement((), 7)
    assert parse_element("inf2*-1 + inf*3") == ModelElement((F(3), F(-1)), 0)


def test_window_evaluation_of_quantifiers():
    f = parse("exists u. x == 2*u")
    assert evaluate(f, {"x": 6}, window=(-10, 10))
    assert not evaluate(f, {"x": 7}, window=(-10, 10))
