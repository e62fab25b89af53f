import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracle import grid, truth_table
from pkit.formula import (
    And, Atom, Exists, LinearTerm, ParseError, Rel, cong, conj, eq, le, normalize_atomic,
    normalize_term, parse, parse_pres, parse_raw_term, print_formula, substitute,
)

x, y, a = LinearTerm.var("x"), LinearTerm.var("y"), LinearTerm.var("a")


def test_parse_atom():
    f = parse("2*x + a <= 5")
    assert f == Atom(Rel.LE, x * 2 + a, LinearTerm.constant(5))


def test_parse_exists():
    assert parse("exists x. x == 2*y") == Exists("x", Atom(Rel.EQ, x, y * 2))


def test_parse_congruence_and_order():
    f = parse("x === 3 mod 5 and x < y")
    assert f == And((Atom(Rel.CONG, x, LinearTerm.constant(3), 5), Atom(Rel.LT, x, y)))


@pytest.mark.parametrize("text, expected", [
    ("x + (x + a) + 1 + 1", x * 2 + a + 2),
    ("(-x) + x", LinearTerm.constant(0)),
    ("a + a + a + x", x + a * 3),
])
def test_normalize_term(text, expected):
    assert normalize_term(parse_raw_term(text)) == expected


@pytest.mark.parametrize("text", ["x <= ", "x === 1 mod 1", "x * y <= 1", "exists . x == 1",
                                  "x == 1 and", "(x == 1"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse(text)


@pytest.mark.parametrize("text", [
    "exists u. x == 2*u and not y === 1 mod 3",
    "forall u. u < x or u >= y - 1",
    "x == 1 or y == 2 and x <= -3*y + 4",
    "not (x < y)",
])
def test_print_parse_roundtrip(text):
    f = parse(text)
    assert parse(print_formula(f)) == f


def test_pres_header():
    pf = parse_pres("# comment\nparam H = inf*1/2 + 3\nvars y, x\n\nx <= H  # tail\n")
    assert pf.vars == ["y", "x"]
    assert str(pf.params["H"]) == "inf*1/2 + 3"
    assert pf.formula == parse("x <= H")


def _equivalent_on_window(atom, var, other, lo, hi):
    parts = normalize_atomic(atom, var)
    rebuilt = [conj(g, n.to_formula()) for g, n in parts]
    names = [var, other]
    pts = grid(2, lo, hi)
    lhs = truth_table(atom, names, pts, 0)
    rhs = np.zeros(len(pts), dtype=bool)
    for r in rebuilt:
        rhs |= truth_table(r, names, pts, 0)
    return parts, bool((lhs == rhs).all())


def test_normalize_two_x_le_y():
    parts, ok = _equivalent_on_window(le(x * 2, y), "x", "y", -12, 12)
    assert ok
    assert len(parts) == 2
    assert {str(p[1]) for p in parts} == {"x <= (y)/2", "x <= (y - 1)/2"}


def test_normalize_tautology():
    parts = normalize_atomic(eq(x, x), "x")
    assert len(parts) == 1 and parts[0][1].kind == "cong" and parts[0][1].modulus == 1


def test_normalize_unsolvable_congruence_guard():
    atom = cong(x * 3, y, 6)
    parts, ok = _equivalent_on_window(atom, "x", "y", 0, 17)
    assert ok
    # 3x = y (mod 6) has no solution when y = 2 (mod 3)
    pts = grid(2, 0, 17)
    for yv in range(18):
        guards = [truth_table(g, ["x", "y"], np.array([[0, yv]]), 0)[0] for g, _ in parts]
        assert any(guards) == (yv % 3 == 0)


coef = st.integers(-5, 5)


@settings(max_examples=120, deadline=None)
@given(s=coef.filter(bool), t=coef, c=st.integers(-8, 8), op=st.sampled_from(list(Rel)),
       m=st.integers(2, 6))
def test_normalize_atomic_random(s, t, c, op, m):
    lhs = x * s + y * t + c
    atom = Atom(op, lhs, LinearTerm.constant(0), m if op is Rel.CONG else None)
    _, ok = _equivalent_on_window(atom, "x", "y", -10, 10)
    assert ok


def test_substitute():
    f = parse("x + 2*y <= 3")
    g = substitute(f, {"y": LinearTerm.var("x") + 1})
    assert g == parse("3*x + 2 <= 3")
