import itertools
import random

import numpy as np
import pytest

from oracle import grid, np_eval, truth_table
from pkit.formula import (
    And, Exists, Forall, LinearTerm, Not, Or, cong, conj, eq, exists, free_vars, ge, gt, le, lt,
    neg, parse,
)
from pkit.model import evaluate, inf
from pkit.qe import ResourceLimit, Stats, crt_merge, decide, eliminate, equivalent, satisfiable


def agree(f, g, names, lo=-20, hi=20, window=40):
    pts = grid(len(names), lo, hi)
    return bool((truth_table(f, names, pts, window) == truth_table(g, names, pts, window)).all())


@pytest.mark.parametrize("text, expected", [
    ("exists x. y == 2*x", "y === 0 mod 2"),
    ("exists x. x >= y and x <= y", "true"),
    ("exists x. y < 2*x and 2*x < y + 2", "y === 1 mod 2"),
])
def test_eliminate_examples(text, expected):
    f = parse(text)
    g = eliminate(f)
    assert agree(f, g, ["y"])
    assert agree(g, parse(expected), ["y"])


@pytest.mark.parametrize("text, value", [
    ("forall y. exists x. y == 2*x or y == 2*x + 1", True),
    ("exists x. x < x", False),
    ("exists x. x === 0 mod 2 and x === 1 mod 3 and 0 < x and x < 6", True),
    ("exists x. x === 0 mod 2 and x === 1 mod 3 and 0 < x and x < 4", False),
    ("forall x. exists y. x < y and y < x + 2", True),
    ("exists x. forall y. x <= y", False),
])
def test_decide_examples(text, value):
    assert decide(parse(text)) is value


def test_decide_brute_force_example():
    hits = [x for x in range(0, 6) if x % 2 == 0 and x % 3 == 1]
    assert hits == [4]


@pytest.mark.parametrize("text", ["x === 3 mod 4 and 10 <= x", "x + y == 1 and x === 0 mod 2",
                                  "3*x + 5*y == 7 and x >= 20", "x === 2 mod 5 and x === 3 mod 7"])
def test_satisfiable_witness(text):
    f = parse(text)
    w = satisfiable(f)
    assert w is not None
    assert evaluate(f, w)


def test_unsat():
    assert satisfiable(parse("x < x")) is None
    assert satisfiable(parse("2*x == 2*y + 1")) is None


def test_crt_examples():
    assert crt_merge([(2, 0), (3, 1)]) == (6, 4)
    assert crt_merge([(4, 1), (2, 0)]) is None
    assert crt_merge([(5, 2)]) == (5, 2)


def test_crt_brute_force():
    rng = random.Random(7)
    for _ in range(300):
        cs = [(rng.randint(1, 12), rng.randint(0, 11)) for _ in range(rng.randint(1, 3))]
        cs = [(n, c % n) for n, c in cs]
        L = 1
        for n, _ in cs:
            L = L * n // np.gcd(L, n)
        sols = [x for x in range(L) if all(x % n == c for n, c in cs)]
        got = crt_merge(cs)
        if not sols:
            assert got is None
        else:
            assert got == (L, sols[0]) or (got[0] == L and got[1] in sols and len(sols) == 1)


# --------------------------------------------------------------------------
# random formulas with bounded quantifiers, so that the window oracle is exact

def _rand_formula(rng, free, depth, bound_vars=("u", "v", "w")):
    def term(vs):
        d = {v: rng.randint(-3, 3) for v in rng.sample(vs, rng.randint(1, min(2, len(vs))))}
        return LinearTerm.of(d, rng.randint(-6, 6))

    def atom(vs):
        k = rng.random()
        t = term(vs)
        if k < 0.15:
            return cong(t, rng.randint(0, 5), rng.randint(2, 4))
        if k < 0.3:
            return eq(t, 0)
        return rng.choice([le, lt, ge, gt])(t, 0)

    def rec(vs, d, used):
        if d == 0 or rng.random() < 0.25:
            return atom(vs)
        k = rng.random()
        if k < 0.3:
            return And(tuple(rec(vs, d - 1, used) for _ in range(rng.randint(2, 3))))
        if k < 0.55:
            return Or(tuple(rec(vs, d - 1, used) for _ in range(2)))
        if k < 0.65:
            return Not(rec(vs, d - 1, used))
        left = [q for q in bound_vars if q not in used]
        if not left:
            return atom(vs)
        q = left[0]
        body = rec(vs + [q], d - 1, used | {q})
        B = rng.randint(3, 10)
        box = And((le(-B, LinearTerm.var(q)), le(LinearTerm.var(q), B)))
        if rng.random() < 0.5:
            return Exists(q, And((box, body)))
        return Forall(q, Or((Not(box), body)))

    return rec(list(free), depth, set())


@pytest.mark.parametrize("seed", range(6))
def test_random_soundness(seed):
    rng = random.Random(seed)
    for _ in range(40):
        free = ["x", "y"][: rng.randint(1, 2)]
        f = _rand_formula(rng, free, 3)
        g = eliminate(f)
        names = sorted(free_vars(f))
        if not names:
            assert bool(np_eval(f, {}, 12, 0)) == bool(np_eval(g, {}, 12, 0))
            continue
        assert agree(f, g, names, -12, 12, 12), str(f)
        w = satisfiable(f)
        has = bool(truth_table(f, names, grid(len(names), -12, 12), 12).any())
        if has:
            assert w is not None
        if w is not None:
            assert evaluate(g, w)


@pytest.mark.parametrize("seed", range(3))
def test_idempotence_and_consistency(seed):
    rng = random.Random(100 + seed)
    for _ in range(25):
        f = _rand_formula(rng, ["x", "y"], 3)
        g = eliminate(f, canonical=True)
        assert eliminate(g, canonical=True) == g
        s = sorted(free_vars(f))
        assert decide(exists(s, f)) == (satisfiable(f) is not None)


def test_oracle_detects_corruption():
    f = parse("exists u. x == 3*u + 1")
    g = eliminate(f)
    assert agree(f, g, ["x"])
    assert not agree(f, neg(g), ["x"])
    assert not agree(f, parse("x === 1 mod 6"), ["x"])


def test_nonstandard_parameters():
    H = inf(1)
    assert decide(parse("exists x. 2*x == H"), {"H": H})
    assert not decide(parse("exists x. 2*x == H"), {"H": H + 1})
    assert decide(parse("exists x. H < x and x < H + 2"), {"H": H})
    assert decide(parse("forall x. x < H - 5 or x > H or x < 0"), {"H": H}) is False
    assert decide(parse("exists x. 0 < x and x < H and x === 3 mod 7 and x > 1000"), {"H": H})
    assert decide(parse("exists x. x + x == H and 0 < x and x < H"), {"H": H})


def test_equivalent_helper():
    assert equivalent(parse("exists u. x == 2*u"), parse("x === 0 mod 2"))
    assert not equivalent(parse("exists u. x == 2*u"), parse("x === 0 mod 4"))


def test_budget_is_enforced():
    f = parse("forall x. (0 <= x and x <= 50) -> exists u. exists v. (0 <= u and u <= 50 and "
              "0 <= v and v <= 50) and x + 24 == 5*u + 7*v")
    with pytest.raises(ResourceLimit):
        decide(f, budget=200)


def test_stats_count_nodes():
    st = Stats()
    eliminate(parse("exists u. x == 2*u and u > y"), stats=st)
    assert st.nodes > 0 and st.eliminations >= 1


def test_decide_rejects_free_variables():
    with pytest.raises(ValueError):
        decide(parse("x == 1"))
