"""The eight acceptance criteria.  Each test prints one PASS/FAIL line."""

import functools
import glob
import math
import os
import random
import time
from fractions import Fraction as F

import numpy as np
import pytest
from sympy import Matrix, ZZ
from sympy.matrices.normalforms import smith_normal_form

from oracle import abelian_invariants, alternations, count_points, grid, slope, truth_table, window_of
from pkit.cells import certify_partition, decompose, dim
from pkit.formula import disj, free_vars, parse, parse_pres
from pkit.geometry import (
    GeneratorForm, Parallelogram, Scaled, Strip, generators_to_strips, octant_closure_holds, octant_of,
)
from pkit.group import abelian_finite_index, default_center, load_group, local_addition_box
from pkit.lattice import (
    check_local_lattice, LocalLattice, ladder, load_lattice, quotient, stress_well_defined,
    verify_isomorphism,
)
from pkit.model import inf
from pkit.qe import eliminate, equivalent

H = inf(1)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {n}] {'PASS' if ok else 'FAIL'}: {detail}")
    return emit


# 1 ---------------------------------------------------------------------------

def test_1_qe_soundness(corpus_dir, report):
    t0 = time.perf_counter()
    files = sorted(glob.glob(os.path.join(corpus_dir, "*.pres")))
    rng = np.random.default_rng(0)
    bad = []
    max_alt = 0
    for path in files:
        text = open(path).read()
        f = parse_pres(text).formula
        max_alt = max(max_alt, alternations(f))
        g = eliminate(f)
        names = sorted(free_vars(f))
        k = len(names)
        if k <= 2:
            pts = grid(k, -30, 30)
        else:
            pts = rng.integers(-30, 31, size=(10_000, k))
        w = window_of(text)
        lhs = truth_table(f, names, pts, w)
        rhs = truth_table(g, names, pts, w)
        if (lhs != rhs).any():
            bad.append(os.path.basename(path))
    secs = time.perf_counter() - t0
    ok = len(files) >= 50 and not bad and secs < 120
    report(1, ok, f"{len(files)} formulas, max alternations {max_alt}, "
                  f"{len(bad)} disagreements, {secs:.1f}s")
    assert ok, bad


# 2 ---------------------------------------------------------------------------

QF = [
    ("0 <= x and x <= 10", "x"),
    ("x == 3 or x == 7", "x"),
    ("x >= 5 or x <= -5", "x"),
    ("x === 1 mod 4 and x < 20", "x"),
    ("not (x === 0 mod 3) and -9 <= x and x <= 9", "x"),
    ("0 <= x and x <= 100 and x === 0 mod 2", "x"),
    ("x != 4", "x"),
    ("0 <= x and x <= y", "xy"),
    ("x + y == 10 and x >= 0 and y >= 0", "xy"),
    ("2*x <= y and y <= 2*x + 1", "xy"),
    ("x == 2*y or x == 2*y + 1", "xy"),
    ("0 <= x and x <= 20 and 0 <= y and y <= 20 and x + y === 0 mod 3", "xy"),
    ("x < y or y < x", "xy"),
    ("3*x + 2*y <= 12 and x >= 0 and y >= 0", "xy"),
    ("x - y === 1 mod 2 and 0 <= x and x <= 8", "xy"),
    ("x >= 0 and y >= 0 and x + y <= 6", "xy"),
    ("x == 5 and y > 2", "xy"),
    ("y == 3*x - 4", "xy"),
    ("0 <= x and x <= H and 0 <= y and y <= H", "xy"),
    ("0 <= x and x <= H and x == 2*y", "xy"),
    ("x <= y and y <= x + H", "xy"),
    ("(x <= 0 and y >= 0) or (x > 0 and y < 0)", "xy"),
    ("2*y >= x and 3*y <= x + 9", "xy"),
    ("x >= 0 and y >= 0 and z >= 0 and x + y + z <= 4", "xyz"),
    ("x == y and y == z", "xyz"),
    ("x + y == z and 0 <= x and x <= 3 and 0 <= y and y <= 3", "xyz"),
    ("z == 2*x + 3*y and x >= 0", "xyz"),
    ("x <= y and y <= z and z <= x + 5", "xyz"),
    ("x + y + z === 0 mod 2 and 0 <= x and x <= 2 and 0 <= y and y <= 2 and 0 <= z and z <= 2", "xyz"),
    ("0 <= x and x <= H and 0 <= y and y <= x and z == x - y", "xyz"),
    ("x >= z or y >= z", "xyz"),
    ("x === 1 mod 3 and y === 2 mod 3 and z == x + y", "xyz"),
]


def test_2_cell_certificates(report):
    fails = []
    for text, vs in QF:
        f = parse(text)
        env = {"H": H} if "H" in text else {}
        cells = decompose(f, list(vs), env)
        rep = certify_partition(f, cells, list(vs), env)
        if not rep.ok:
            fails.append(text)
    ok = len(QF) >= 30 and not fails
    report(2, ok, f"{len(QF)} formulas certified, {len(fails)} failures")
    assert ok, fails


# 3 ---------------------------------------------------------------------------

BOUNDED = [
    ("0 <= x and x <= H", "x"),
    ("0 <= x and x <= H and x === 0 mod 3", "x"),
    ("x == H or x == 0", "x"),
    ("2*x >= H and x <= H", "x"),
    ("0 <= x and x <= H and 0 <= y and y <= H", "xy"),
    ("0 <= x and x <= H and x == 2*y", "xy"),
    ("0 <= x and x <= y and y <= H", "xy"),
    ("0 <= x and x <= H and y == H - x", "xy"),
    ("0 <= x and x <= H and 0 <= y and y <= 3", "xy"),
    ("0 <= x and x <= H and 0 <= y and y <= H and x + y === 0 mod 5", "xy"),
    ("x == 0 and y == 0", "xy"),
    ("0 <= x and x <= H and (y == 0 or y == x)", "xy"),
    ("0 <= x and 0 <= y and x + 2*y <= H", "xy"),
    ("0 <= x and x <= H and 0 <= y and y <= H and x - y === 1 mod 2", "xy"),
    ("0 <= x and x <= H and 0 <= y and y <= H and 0 <= z and z <= H", "xyz"),
    ("0 <= x and x <= H and 0 <= y and y <= H and z == x + y", "xyz"),
    ("0 <= x and x <= H and y == x and z == 2*x", "xyz"),
    ("0 <= x and x <= y and y <= z and z <= H", "xyz"),
    ("0 <= x and x <= H and 0 <= y and y <= H and 0 <= z and z <= 2", "xyz"),
    ("x == 1 and y == 2 and 0 <= z and z <= H", "xyz"),
    ("0 <= x and x <= H and 0 <= y and y <= H and z == 0 and x === y mod 3", "xyz"),
]

SCALES = {1: (100, 200, 400), 2: (50, 100, 200), 3: (10, 20, 30)}


def test_3_dimension(report):
    rng = random.Random(7)
    off = []
    for text, vs in BOUNDED:
        f = parse(text)
        k = len(vs)
        hs = SCALES[k]
        d = dim(f, list(vs), {"H": max(hs)})
        counts = [count_points(f, list(vs), -1, 2 * h + 1, {"H": h}) for h in hs]
        s = slope(hs, counts)
        if d is None or abs(s - d) > 0.35:
            off.append((text, d, round(s, 2)))
    pairs_bad = []
    pool = [(parse(t), vs) for t, vs in BOUNDED if len(vs) == 2]
    for _ in range(50):
        (fx, _), (fy, _) = rng.sample(pool, 2)
        env = {"H": 100}
        dx, dy = dim(fx, ["x", "y"], env), dim(fy, ["x", "y"], env)
        du = dim(disj(fx, fy), ["x", "y"], env)
        if du != max(dx, dy):
            pairs_bad.append((str(fx), str(fy)))
    ok = len(BOUNDED) >= 20 and not off and not pairs_bad
    report(3, ok, f"{len(BOUNDED)} sets, {len(off)} exponent mismatches, "
                  f"50 unions with {len(pairs_bad)} max-rule failures")
    assert ok, (off, pairs_bad)


# 4 ---------------------------------------------------------------------------

def q(x):
    return inf(F(x))


GENERATOR_FORMS = [
    GeneratorForm(("x",), (0,), ((1,),), (H,)),
    GeneratorForm(("x",), (3,), ((2,),), (q("1/2"),)),
    GeneratorForm(("x",), (-1,), ((F(1, 3),),), (H,)),
    GeneratorForm(("x", "y"), (0, 0), ((1, 0), (0, 1)), (H, H)),
    GeneratorForm(("x", "y"), (0, 0), ((1, 1), (1, -1)), (H, H)),
    GeneratorForm(("x", "y"), (2, -3), ((2, 1), (0, 3)), (H, q("1/4"))),
    GeneratorForm(("x", "y"), (1, 2), ((2, 1), (F(1, 2), 3)), (H, q("1/3"))),
    GeneratorForm(("x", "y"), (0, 0), ((3, 1), (1, 2)), (q("1/2"), H)),
    GeneratorForm(("x", "y"), (0, 0), ((2, 1),), (H,)),
    GeneratorForm(("x", "y"), (5, 5), ((1, -1),), (q("2"),)),
    GeneratorForm(("x", "y"), (0, 1), ((F(1, 2), F(3, 2)),), (H,)),
    GeneratorForm(("x", "y", "z"), (0, 0, 0), ((1, 0, 0), (0, 1, 0), (0, 0, 1)), (H, H, H)),
    GeneratorForm(("x", "y", "z"), (0, 0, 0), ((1, 1, 0), (0, 1, 1), (1, 0, 1)), (H, H, H)),
    GeneratorForm(("x", "y", "z"), (1, 0, 0), ((1, 2, 0), (0, 1, 3)), (H, q("1/2"))),
    GeneratorForm(("x", "y", "z"), (0, 0, 0), ((1, 1, 1),), (H,)),
    GeneratorForm(("x", "y", "z"), (0, 2, 0), ((2, 0, 1),), (q("3/2"),)),
]


def test_4_generator_translation(report):
    t0 = time.perf_counter()
    fails = []
    for gf in GENERATOR_FORMS:
        p = generators_to_strips(gf)
        if not equivalent(gf.formula(), p.formula(), {**gf.env(), **p.env()}):
            fails.append(gf.to_json())
    secs = time.perf_counter() - t0
    full = sum(gf.j == len(gf.vars) for gf in GENERATOR_FORMS)
    ok = len(GENERATOR_FORMS) >= 15 and 0 < full < len(GENERATOR_FORMS) and not fails and secs < 60
    report(4, ok, f"{len(GENERATOR_FORMS)} forms ({full} with j = n), "
                  f"{len(fails)} failures, {secs:.1f}s")
    assert ok, fails


# 5 ---------------------------------------------------------------------------

def random_centered(rng):
    n = rng.choice([1, 2, 2, 3])
    vs = ("x", "y", "z")[:n]
    while True:
        c = 3 if n < 3 else 2
        rows = [tuple(rng.randint(-c, c) for _ in range(n)) for _ in range(n)]
        if Matrix(rows).det() != 0:
            break
    center = tuple(rng.randint(-20, 20) + (inf(F(rng.randint(-2, 2), 4)) if rng.random() < 0.5 else 0)
                   for _ in range(n))
    strips = []
    for row in rows:
        fc = sum(c * x for c, x in zip(row, center))
        m = inf(F(rng.randint(1, 4), 2))
        strips.append(Strip(vs, row, Scaled(fc - m), Scaled(fc + m)))
    p = Parallelogram(vs, tuple(strips), center=center)
    assert p.is_centered()
    eta = tuple(rng.choice((1, -1)) for _ in range(n))
    return octant_of(p, eta)


def random_offset(rng, n):
    out = []
    for _ in range(n):
        v = rng.randint(0, 20)
        if rng.random() < 0.4:
            v = v + inf(F(rng.randint(0, 4), 512))
        out.append(v)
    return out


@functools.lru_cache(maxsize=None)
def _adjugate(rows):
    m = Matrix([list(r) for r in rows])
    return int(m.det()), [[int(x) for x in r] for r in m.adjugate().tolist()]


def octant_point(o, rng):
    """A point a + d with d in the octant's cone: R d = det(R) * (eta * u), u >= 0."""
    det, adj = _adjugate(tuple(tuple(int(c) for c in s.coeffs) for s in o.parent.strips))
    a = o.parent.center
    sign = 1 if det > 0 else -1
    u = [v * e * sign for v, e in zip(random_offset(rng, len(a)), o.eta)]
    return tuple(c + sum(adj[i][j] * u[j] for j in range(len(a))) for i, c in enumerate(a))


def test_5_octant_closure(report):
    rng = random.Random(2024)
    violations = 0
    sampled = []
    for _ in range(20):
        o = random_centered(rng)
        a = o.parent.center
        n = len(a)
        valid = draws = 0
        while valid < 1000 and draws < 200_000:
            draws += 1
            xs = [octant_point(o, rng) for _ in range(3)]
            r = octant_closure_holds(o, *xs)
            if r is None:
                continue
            valid += 1
            violations += not r
        sampled.append(valid)
    ok = violations == 0 and min(sampled) >= 1000
    report(5, ok, f"20 octants, min {min(sampled)} valid triples each, {violations} violations")
    assert ok


# 6 ---------------------------------------------------------------------------

FINITE = ["Z12", "Z7", "Z6xZ4", "Z2xZ2xZ5", "Z3xZ3"]


def test_6_abelian_pipeline(root, corpus_dir, report):
    groups = [("modH", os.path.join(root, "examples", "modH.group"))]
    groups += [(n, os.path.join(corpus_dir, f"{n}.group")) for n in FINITE]
    fails = []
    for name, path in groups:
        g = load_group(open(path).read())
        a = default_center(g)
        box = local_addition_box(g, a)
        rep = abelian_finite_index(g, a)
        if not (box.sentence and rep.ok and rep.abelian and rep.dim_H == rep.dim_G):
            fails.append(name)
    bad = load_group(open(os.path.join(corpus_dir, "nonassoc_control.group")).read())
    rejected = False
    try:
        abelian_finite_index(bad)
    except ValueError as e:
        r = getattr(e, "report", None)
        rejected = r is not None and any(x.counterexample for x in r.results if not x.ok)
    ok = not fails and rejected
    report(6, ok, f"{len(groups)} groups ({len(groups) - len(fails)} certified), "
                  f"control {'rejected with counterexample' if rejected else 'NOT rejected'}")
    assert ok, fails


# 7 and 8 ---------------------------------------------------------------------

KNOWN = {"Z12": [12], "Z6xZ4": [2, 12], "Z2xZ2xZ5": [2, 10]}


def _ladders(corpus_dir):
    out = {}
    for name in KNOWN:
        spec = load_lattice(open(os.path.join(corpus_dir, f"{name}.lattice")).read(), corpus_dir)
        out[name] = ladder(spec["group"], spec["box"], spec.get("center"))
    return out


def sympy_factors(rows):
    d = smith_normal_form(Matrix([list(r) for r in rows]), domain=ZZ)
    return sorted(abs(int(d[i, i])) for i in range(min(d.shape)) if abs(int(d[i, i])) != 1)


def test_7_ladder_pipeline(corpus_dir, report):
    t0 = time.perf_counter()
    fails = []
    stars = {}
    for name, L in _ladders(corpus_dir).items():
        stars[name] = L.n_star
        sep = check_local_lattice(LocalLattice(L.box, list(L.lattice))).ok
        factors = quotient(L.box, L.lattice).to_json()["nontrivial_factors"]
        iso = verify_isomorphism(L).ok
        orders = [int(x) for x in name[1:].split("xZ")]
        if not (L.n_star <= 8 and sep and iso and factors == sympy_factors(L.lattice)
                == KNOWN[name] == abelian_invariants(orders)):
            fails.append(name)
    secs = time.perf_counter() - t0
    ok = not fails and secs < 60
    report(7, ok, f"n* {stars}, {len(fails)} failures, {secs:.1f}s")
    assert ok, fails


def test_8_stress(corpus_dir, report):
    total = 0
    levels = 0
    for name, L in _ladders(corpus_dir).items():
        res = stress_well_defined(L, trials=10_000, seed=8)
        total += sum(res.values())
        levels += len(res)
    ok = total == 0
    report(8, ok, f"10^4 trials on each of {levels} levels, {total} disagreements")
    assert ok
