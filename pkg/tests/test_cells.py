import random
from fractions import Fraction as F

import numpy as np
import pytest

from oracle import grid, truth_table
from pkit.cells import (
    CellDesc, NotGeneric, certify_partition, decompose, decompose_function, dim, generic_point,
    in_dcl, is_independent, point_dim,
)
from pkit.formula import LinearFunction, matrix_representation, parse
from pkit.model import ModelElement, as_element, inf

H = inf(1)


def brute_partition(f, cells, names, lo, hi, env=None):
    """Every window point lies in exactly one cell iff it satisfies f."""
    pts = grid(len(names), lo, hi)
    inside = truth_table(f, names, pts, 0, env)
    hits = sum(truth_table(c.formula(), names, pts, 0, env).astype(int) for c in cells)
    assert (hits == inside.astype(int)).all()
    # spot-check the package's own membership test against the formulas
    for p in pts[:: max(1, len(pts) // 200)]:
        point = dict(zip(names, map(int, p)))
        assert sum(c.contains(point, env) for c in cells) == int(truth_table(
            f, names, p.reshape(1, -1), 0, env)[0])


def test_even_interval_is_one_cell():
    f = parse("0 <= x and x <= 100 and x === 0 mod 2")
    cells = decompose(f, ["x"])
    assert len(cells) == 1 and cells[0].signature == (1,)
    assert certify_partition(f, cells, ["x"]).ok
    brute_partition(f, cells, ["x"], -5, 110)


def test_band_is_one_open_cell():
    f = parse("0 <= x and x <= 100 and x <= y and y <= x + 50 and y === 1 mod 3")
    cells = decompose(f, ["x", "y"])
    assert [c.signature for c in cells] == [(1, 1)]
    assert certify_partition(f, cells, ["x", "y"]).ok


def test_graph_cell():
    f = parse("y == 2*x and 0 <= x and x <= 100")
    cells = decompose(f, ["x", "y"])
    assert [c.signature for c in cells] == [(1, 0)]
    brute_partition(f, cells, ["x", "y"], -3, 30)


def test_nonstandard_triangle():
    f = parse("0 <= y and y <= x and x <= H")
    env = {"H": H}
    cells = decompose(f, ["x", "y"], env)
    assert certify_partition(f, cells, ["x", "y"], env).ok
    assert max(c.dim for c in cells) == 2


def test_certificate_catches_gaps_and_overlaps():
    f = parse("0 <= x and x <= 30 and 0 <= y and y <= x and x + y === 0 mod 3")
    cells = decompose(f, ["x", "y"])
    assert certify_partition(f, cells, ["x", "y"]).ok
    assert not certify_partition(f, cells[1:], ["x", "y"]).ok
    assert not certify_partition(f, cells + [cells[0]], ["x", "y"]).ok


@pytest.mark.parametrize("text", [
    "0 <= x and x <= 20 and (y == x or y == 20 - x) and 0 <= y",
    "x === 1 mod 3 and -10 <= x and x <= 10 or x == 40",
    "2*y <= x and x <= 3*y + 5 and 0 <= x and x <= 40",
    "not (x <= 3) and x <= 25 and y === x mod 4 and 0 <= y and y <= 12",
])
def test_brute_force_partitions(text):
    f = parse(text)
    names = sorted({"x", "y"} & {v for v in ("x", "y") if v in text})
    cells = decompose(f, names)
    brute_partition(f, cells, names, -12, 45)


def test_function_sum():
    pieces = decompose_function(parse("t == x + y"), ["x", "y"], "t")
    assert len(pieces) == 1
    fn = pieces[0].function
    assert fn({"x": 3, "y": 9}) == 12


def test_function_floor_half():
    pieces = decompose_function(parse("2*t <= x and x <= 2*t + 1"), ["x"], "t")
    assert len(pieces) == 2
    for xv in range(-9, 10):
        fn = next(p.function for p in pieces if p.cell.contains({"x": xv}))
        assert fn({"x": xv}) == xv // 2


def test_function_abs():
    pieces = decompose_function(parse("(x >= 0 and t == x) or (x < 0 and t == -x)"), ["x"], "t")
    # the point 0 may be its own cell; only two distinct functions occur
    assert len(pieces) <= 3 and len({str(p.function) for p in pieces if p.cell.dim}) == 2
    for xv in range(-9, 10):
        fn = next(p.function for p in pieces if p.cell.contains({"x": xv}))
        assert fn({"x": xv}) == abs(xv)


def test_function_rejects_relations():
    from pkit.cells import NotFunctional
    with pytest.raises(NotFunctional):
        decompose_function(parse("0 <= t and t <= x"), ["x"], "t")


def test_matrix_representation():
    m = matrix_representation([LinearFunction(("x",), (1,), (1,), (2,), 5)])
    assert m.A == ((F(1, 2),),) and m.c == (1,) and m.gamma == (5,)
    ident = matrix_representation([LinearFunction.affine(("x1", "x2"), (1, 0)),
                                   LinearFunction.affine(("x1", "x2"), (0, 1))])
    assert ident.A == ((1, 0), (0, 1)) and set(ident.c) == {0} and ident.gamma == (0, 0)
    fn = LinearFunction(("x1", "x2"), (1, 2), (0, 0), (3, 1), 0)
    m = matrix_representation([fn])
    assert m.A == ((F(1, 3), F(2)),)
    for x1 in range(-30, 31, 3):
        for x2 in (-4, 0, 7):
            assert m((x1, x2)) == (F(x1, 3) + 2 * x2,) == (fn({"x1": x1, "x2": x2}),)


def test_dim_examples():
    assert dim(parse("y == 2*x and 0 <= x and x <= 100")) == 1
    assert dim(parse("0 <= x and x <= 100 and 0 <= y and y <= 100")) == 2
    box = "0 <= x and x <= 100 and 0 <= y and y <= 100"
    line = "y == 3*x and -200 <= x and x <= 0"
    assert dim(parse(f"({box}) or ({line})")) == 2
    assert dim(parse("x < x")) is None
    assert dim(parse("x == 4 and y == 5")) == 0
    assert dim(parse("0 <= x and x <= H and x == y"), ["x", "y"], {"H": H}) == 1


def test_in_dcl_examples():
    a = in_dcl(ModelElement((), 7), [ModelElement((), 3)])
    assert a is not None and a({"p0": 3}) == 7
    assert in_dcl(inf(1), [ModelElement((), 5)]) is None
    h = in_dcl(inf(F(1, 2)), [inf(1)])
    assert h is not None and h.k == (2,) and h({"p0": inf(1)}) == inf(F(1, 2))


def test_in_dcl_finite_shift():
    h = in_dcl(inf(F(1, 3), 4), [inf(1, 1)])
    assert h is not None and as_element(h({"p0": inf(1, 1)})) == inf(F(1, 3), 4)


def test_generic_point_interval():
    env = {"H": H}
    cells = decompose(parse("0 <= x and x <= H and x === 0 mod 2"), ["x"], env)
    c = next(c for c in cells if c.is_open())
    p = generic_point(c, env)
    assert c.contains(p, env)
    assert in_dcl(p["x"], [H]) is None
    assert point_dim([p["x"]], [H]) == 1


def test_generic_point_zero_cell():
    cells = decompose(parse("x == 5"), ["x"])
    p = generic_point(cells[0])
    assert p == {"x": 5} and point_dim([5], []) == 0


def test_generic_point_box():
    env = {"H": H}
    f = parse("0 <= x and x <= H and 0 <= y and y <= H")
    c = next(c for c in decompose(f, ["x", "y"], env) if c.is_open())
    p = generic_point(c, env)
    assert c.contains(p, env)
    assert is_independent([p["x"], p["y"]], [H])


def test_generic_point_needs_infinite_fibers():
    cells = decompose(parse("H <= x and x <= H + 20"), ["x"], {"H": H})
    c = next(c for c in cells if c.is_open())
    with pytest.raises(NotGeneric):
        generic_point(c, {"H": H})
