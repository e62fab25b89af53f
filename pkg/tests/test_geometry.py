import random
from fractions import Fraction as F

import pytest

from pkit.cells import decompose, dim, in_dcl, is_independent
from pkit.formula import conj, exists, forall, implies, parse
from pkit.geometry import (
    Box, GeneratorForm, GeometryError, LinCong, Parallelogram, Scaled, Strip, as_cbox_of,
    box_around, cbox_around, decompose_bounded, generators_to_strips, octant_closure_holds,
    octant_of, split_generic_centers, strip_formula,
)
from pkit.model import ModelElement, as_element, inf
from pkit.qe import decide, equivalent

H = inf(1)
ENV = {"H": H}


def q(x):
    return inf(F(x))


def open_cell(text, vars, env=ENV):
    return next(c for c in decompose(parse(text), vars, env) if c.is_open())


def test_box_around_interval():
    c = open_cell("0 <= x and x <= H", ["x"])
    b = box_around(c, (q("1/2"),), ENV)
    assert (as_element(b.lower[0]), as_element(b.upper[0])) == (q("1/4"), q("3/4"))
    assert b.is_around_anchor()


def test_box_around_band_margins():
    c = open_cell("0 <= x and x <= H and x <= y and y <= x + H", ["x", "y"])
    b = box_around(c, (q("1/2"), q("3/4")), ENV)
    assert all(m == q("1/8") for pair in b.margins() for m in pair)
    # the whole box is inside the cell
    s = forall(["x", "y"], implies(b.formula(), c.formula()))
    assert decide(s, {**ENV, **b.env()})


def test_intersection_of_boxes_is_a_box():
    c = open_cell("0 <= x and x <= H", ["x"])
    a = (q("1/2"),)
    b1 = box_around(c, a, ENV)
    b2 = Box(("x",), (q("1/3"),), (q("2/3") + 5,), (3,), (a[0].residue(3),), a)
    b = b1.intersect(b2)
    assert b.is_around_anchor() and b.contains(a)


def test_cbox_of_graph_cell():
    cells = decompose(parse("0 <= x and x <= H and t == 2*x"), ["x", "t"], ENV)
    c = next(c for c in cells if c.signature == (1, 0))
    cb = cbox_around(c, (q("1/2"), q("1")), ENV)
    assert cb.box.vars == ("x",)
    assert cb.contains({"x": q("1/2"), "t": q("1")}, ENV)
    s = forall(["x"], implies(cb.box.formula(), exists(["t"], c.formula())))
    assert decide(s, {**ENV, **cb.env()})


def test_cbox_of_open_cell_is_box():
    c = open_cell("0 <= x and x <= H", ["x"])
    a = (q("1/2"),)
    assert cbox_around(c, a, ENV).box == box_around(c, a, ENV)


def test_cbox_transfers_to_larger_cell():
    env = {"H": H, "K": q("1/2")}
    small = open_cell("0 <= x and x <= K", ["x"], env)
    large = open_cell("0 <= x and x <= H", ["x"], env)
    cb = cbox_around(small, (q("1/4"),), env)
    moved = as_cbox_of(cb, large, env)
    assert moved.cell == large and moved.box == cb.box


def test_strip_formula_clears_denominators():
    s = Strip(("x", "y"), (F(1, 2), F(1, 3)), None, Scaled("g2"))
    assert str(strip_formula(s)) == "3*x + 2*y <= 6*g2"


def test_strip_interval_and_membership():
    s = Strip(("x",), (1,), Scaled(0), Scaled(H))
    assert equivalent(s.formula(), parse("0 <= x and x <= H"), {**ENV, **s.env()})
    t = Strip(("x", "y"), (3, 2), None, Scaled(H, 1))
    assert t.holds((6, 6))
    assert not Strip(("x", "y"), (3, 2), None, Scaled(29)).holds((6, 6))


def centered(n=1):
    if n == 1:
        p = Parallelogram(("x",), (Strip(("x",), (1,), Scaled(0), Scaled(H)),), center=(q("1/2"),))
    else:
        p = Parallelogram(("x", "y"), (Strip(("x", "y"), (1, 0), Scaled(0), Scaled(H)),
                                       Strip(("x", "y"), (1, -1), Scaled(-H), Scaled(H))),
                          center=(q("1/2"), q("1/2")))
    assert p.is_centered()
    return p


def test_octant_upper_half():
    p = centered(1)
    o = octant_of(p, (1,))
    assert equivalent(o.formula(), parse("2*x >= H and x <= H"), {**ENV, **o.env()})


def test_opposite_octants_meet_on_level_sets():
    p = centered(2)
    up, down = octant_of(p, (1, 1)), octant_of(p, (-1, -1))
    env = {**up.env(), **down.env()}
    a = p.center
    level = parse("x == ax and x - y == ax - ay")
    env.update({"ax": a[0], "ay": a[1]})
    s = forall(["x", "y"], implies(conj(up.formula(), down.formula()), level))
    assert decide(s, env)


def test_octant_meets_every_box_in_full_dimension():
    p = centered(2)
    o = octant_of(p, (1, -1))
    cell = open_cell("0 <= x and x <= H and -H <= x - y and x - y <= H", ["x", "y"])
    b = box_around(cell, p.center, ENV)
    f = conj(o.formula(), b.formula())
    assert dim(f, ["x", "y"], {**o.env(), **b.env()}) == 2


def test_octant_closure_small():
    p = centered(2)
    o = octant_of(p, (1, 1))
    a = p.center
    pts = [(a[0] + i, a[1] + j) for i in range(0, 4) for j in range(-3, 1)]
    pts = [x for x in pts if o.contains(x)]
    seen = 0
    for x1 in pts:
        for x2 in pts:
            r = octant_closure_holds(o, x1, x2, pts[0])
            if r is not None:
                seen += 1
                assert r
    assert seen > 0


@pytest.mark.parametrize("gf", [
    GeneratorForm(("x",), (0,), ((1,),), (H,)),
    GeneratorForm(("x", "y"), (0, 0), ((1, 0), (0, 1)), (H, H)),
    GeneratorForm(("x", "y"), (0, 0), ((2, 1),), (H,)),
    GeneratorForm(("x", "y"), (1, 2), ((2, 1), (F(1, 2), 3)), (H, q("1/3"))),
])
def test_generators_to_strips(gf):
    p = generators_to_strips(gf)
    assert equivalent(gf.formula(), p.formula(), {**gf.env(), **p.env()})


def test_generator_interval_is_axis_strip():
    p = generators_to_strips(GeneratorForm(("x",), (0,), ((1,),), (H,)))
    assert len(p.strips) == 1 and p.strips[0].coeffs == (1,)
    p2 = generators_to_strips(GeneratorForm(("x", "y"), (0, 0), ((1, 0), (0, 1)), (H, H)))
    assert sorted(s.coeffs for s in p2.normalized().strips) == [(0, 1), (1, 0)]


def test_decompose_box_gives_itself():
    f = parse("0 <= x and x <= H and 0 <= y and y <= H")
    pieces = decompose_bounded(f, inf(2), ["x", "y"], ENV)
    opened = [p for p in pieces if p.dim == 2]
    assert len(opened) >= 1
    env = {**ENV, **{k: v for p in pieces for k, v in p.env().items()}}
    union = pieces[0].formula()
    for p in pieces[1:]:
        union = union | p.formula()
    assert equivalent(f, union, env)


def test_decompose_triangle():
    f = parse("0 <= x and x <= H and x <= y and y <= H")
    pieces = decompose_bounded(f, inf(2), ["x", "y"], ENV)
    env = dict(ENV)
    for p in pieces:
        env.update(p.env())
        assert decide(forall(["x", "y"], implies(p.formula(), f)), env)
    union = pieces[0].formula()
    for p in pieces[1:]:
        union = union | p.formula()
    assert equivalent(f, union, env)
    assert sum(1 for p in pieces if p.dim == 2) <= 4


def test_decompose_rejects_unbounded():
    with pytest.raises(GeometryError):
        decompose_bounded(parse("0 <= x"), inf(2), ["x"], ENV)


def test_split_interval_centers():
    p = Parallelogram(("x",), (Strip(("x",), (1,), Scaled(0), Scaled(H)),))
    pieces = split_generic_centers(p, [], ENV)
    assert sorted(as_element(x.center[0]) for x in pieces) == [q("1/4"), q("3/4")]
    assert all(in_dcl(x.center[0], []) is None for x in pieces)
    assert all(x.is_centered() for x in pieces)


def test_split_box_four_pieces():
    p = Parallelogram(("x", "y"), (Strip(("x", "y"), (1, 0), Scaled(0), Scaled(H)),
                                   Strip(("x", "y"), (0, 1), Scaled(0), Scaled(H))))
    pieces = split_generic_centers(p, [H], ENV)
    assert len(pieces) == 4
    for x in pieces:
        assert x.is_centered()
        assert x.contains(x.center)


def test_split_uses_fresh_classes_when_needed():
    # the midpoint of [0, H] is in dcl(H), so centers must leave dcl(H, H/2...)
    p = Parallelogram(("x",), (Strip(("x",), (1,), Scaled(0), Scaled(H)),))
    pieces = split_generic_centers(p, [H, q("1/4"), q("3/4")], ENV)
    for x in pieces:
        assert is_independent(list(x.center), [H, q("1/4"), q("3/4")])
        assert x.is_centered()


def test_congruence_parallelogram_membership():
    p = Parallelogram(("x", "y"), (Strip(("x", "y"), (1, 1), Scaled(0), Scaled(H)),),
                      congs=(LinCong((1, 1), 3, 1),))
    assert p.contains((1, 0)) and not p.contains((1, 1))
