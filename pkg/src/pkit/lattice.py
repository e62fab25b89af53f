"""Local B-lattices, the ladder of maps f_n on nB, and the realization of a
bounded abelian group as a box group modulo a lattice (finite, desk scale)."""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field
from typing import Sequence

from pkit.group import DefinableGroup, FiniteTable, GroupError, enumerate_group, load_group

__all__ = [
    "IntBox", "LocalLattice", "LatticeReport", "check_local_lattice", "hnf", "snf_diagonal",
    "invariant_factors", "Quotient", "InfiniteQuotient", "quotient", "Ladder", "ladder",
    "LadderError", "verify_isomorphism", "IsoReport", "stress_well_defined", "load_lattice",
]

DEFAULT_LEVELS = 16


class LadderError(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace or []


class InfiniteQuotient(ValueError):
    pass


def _add(u, v):
    return tuple(a + b for a, b in zip(u, v))


def _sub(u, v):
    return tuple(a - b for a, b in zip(u, v))


def _scale(k, u):
    return tuple(k * a for a in u)


@dataclass(frozen=True)
class IntBox:
    """Integer box ``lower <= x <= upper`` around 0 in Z^k."""

    lower: tuple
    upper: tuple

    @staticmethod
    def cube(radius: int, k: int) -> "IntBox":
        return IntBox((-radius,) * k, (radius,) * k)

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(int(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(int(v) for v in self.upper))
        if len(self.lower) != len(self.upper):
            raise ValueError("box arity mismatch")
        if any(l > 0 or u < 0 for l, u in zip(self.lower, self.upper)):
            raise ValueError("box must contain 0")

    @property
    def k(self) -> int:
        return len(self.lower)

    def __contains__(self, v) -> bool:
        return all(l <= x <= u for l, x, u in zip(self.lower, v, self.upper))

    def points(self) -> list:
        return list(itertools.product(*[range(l, u + 1) for l, u in zip(self.lower, self.upper)]))

    def scaled(self, n: int) -> "IntBox":
        return IntBox(_scale(n, self.lower), _scale(n, self.upper))

    def to_json(self):
        return {"lower": list(self.lower), "upper": list(self.upper)}


@dataclass
class LocalLattice:
    box: IntBox
    generators: list
    depth: int = 3

    def points(self, depth: int | None = None) -> list:
        """All integer combinations with coefficients in [-depth, depth]."""
        d = self.depth if depth is None else depth
        k = self.box.k
        out = set()
        for coeffs in itertools.product(range(-d, d + 1), repeat=len(self.generators)):
            v = (0,) * k
            for c, g in zip(coeffs, self.generators):
                v = _add(v, _scale(c, g))
            out.add(v)
        return sorted(out, key=lambda v: (sum(abs(x) for x in v), v))

    def to_json(self):
        return {"box": self.box.to_json(), "generators": [list(g) for g in self.generators],
                "depth": self.depth}


@dataclass
class LatticeReport:
    ok: bool
    checked: int
    violations: list
    meets_box_only_at_zero: bool

    @property
    def witness(self):
        return self.violations[0][1] if self.violations else None

    def to_json(self):
        return {"ok": self.ok, "checked": self.checked,
                "violations": [{"lambda": list(l), "intruder": list(m)} for l, m in self.violations[:20]],
                "witness": None if self.witness is None else list(self.witness),
                "meets_box_only_at_zero": self.meets_box_only_at_zero}


def check_local_lattice(lat: LocalLattice, depth: int | None = None) -> LatticeReport:
    """Separation ``(l + B) & Lambda = {l}`` for every generated point l.

    Generators are scanned first, then the other points by size; the
    reported intruder for each point is the smallest one."""
    pts = lat.points(depth)
    pset = set(pts)
    gens = [tuple(g) for g in lat.generators]
    order = [g for g in gens if g in pset] + [p for p in pts if p not in gens]
    bpts = sorted((b for b in lat.box.points() if any(b)), key=lambda v: (sum(abs(x) for x in v), v))
    violations = []
    for lam in order:
        hits = [_add(lam, b) for b in bpts if _add(lam, b) in pset]
        if hits:
            violations.append((lam, min(hits, key=lambda v: (sum(abs(x) for x in v), v))))
    zero_only = not any(p in lat.box and any(p) for p in pts)
    return LatticeReport(not violations, len(pts), violations, zero_only)


# ---------------------------------------------------------------------------
# integer normal forms


def hnf(rows: Sequence[Sequence[int]]) -> list:
    """Row Hermite normal form: nonzero rows, pivots positive and strictly
    moving right, entries above each pivot reduced into [0, pivot)."""
    A = [list(map(int, r)) for r in rows if any(r)]
    if not A:
        return []
    m, n = len(A), len(A[0])
    r = 0
    for c in range(n):
        if r >= m:
            break
        # Euclid on column c among rows r..m-1
        while True:
            nz = [i for i in range(r, m) if A[i][c] != 0]
            if not nz:
                break
            p = min(nz, key=lambda i: abs(A[i][c]))
            A[r], A[p] = A[p], A[r]
            done = True
            for i in range(r + 1, m):
                if A[i][c]:
                    q = A[i][c] // A[r][c]
                    A[i] = [a - q * b for a, b in zip(A[i], A[r])]
                    if A[i][c]:
                        done = False
            if done:
                break
        if A[r][c] == 0:
            continue
        if A[r][c] < 0:
            A[r] = [-a for a in A[r]]
        for i in range(r):
            q = A[i][c] // A[r][c]
            A[i] = [a - q * b for a, b in zip(A[i], A[r])]
        r += 1
    return [row for row in A[:r] if any(row)]


def snf_diagonal(rows: Sequence[Sequence[int]]) -> list:
    """Diagonal of the Smith normal form (nonzero entries, each dividing the next)."""
    A = [list(map(int, r)) for r in rows]
    if not A or not A[0]:
        return []
    m, n = len(A), len(A[0])
    diag = []
    t = 0
    while t < min(m, n):
        nz = [(i, j) for i in range(t, m) for j in range(t, n) if A[i][j]]
        if not nz:
            break
        i, j = min(nz, key=lambda p: abs(A[p[0]][p[1]]))
        A[t], A[i] = A[i], A[t]
        for row in A:
            row[t], row[j] = row[j], row[t]
        while True:
            changed = False
            for i in range(t + 1, m):
                q = A[i][t] // A[t][t]
                if q:
                    A[i] = [a - q * b for a, b in zip(A[i], A[t])]
                if A[i][t]:
                    A[t], A[i] = A[i], A[t]
                    changed = True
            for j in range(t + 1, n):
                q = A[t][j] // A[t][t]
                if q:
                    for row in A:
                        row[j] -= q * row[t]
                if A[t][j]:
                    for row in A:
                        row[t], row[j] = row[j], row[t]
                    changed = True
            if changed:
                continue
            bad = next(((i, j) for i in range(t + 1, m) for j in range(t + 1, n)
                        if A[i][j] % A[t][t]), None)
            if bad is None:
                break
            A[t] = [a + b for a, b in zip(A[t], A[bad[0]])]
        diag.append(abs(A[t][t]))
        t += 1
    return diag


def invariant_factors(rows) -> list:
    """Invariant factors of Z^k / <rows> (including 1s); 0 marks a free factor."""
    k = len(rows[0]) if rows else 0
    d = snf_diagonal(rows) if rows else []
    return sorted(d) + [0] * (k - len(d))


@dataclass
class Quotient:
    """``Z^k / Lambda`` with canonical representatives in the HNF box."""

    basis: list
    reps: list
    factors: list

    @property
    def order(self) -> int:
        return len(self.reps)

    def reduce(self, v) -> tuple:
        v = list(v)
        for row in self.basis:
            c = next(i for i, x in enumerate(row) if x)
            q = v[c] // row[c]
            if q:
                v = [a - q * b for a, b in zip(v, row)]
        return tuple(v)

    def add(self, u, v) -> tuple:
        return self.reduce(_add(u, v))

    def to_json(self):
        return {"order": self.order, "basis": [list(r) for r in self.basis],
                "invariant_factors": self.factors,
                "nontrivial_factors": [f for f in self.factors if f != 1]}


def quotient(box: IntBox, generators: Sequence, check: bool = True, depth: int = 3) -> Quotient:
    """The finite group ``Z^k / Lambda``; needs Lambda of full rank."""
    gens = [tuple(g) for g in generators]
    if check:
        rep = check_local_lattice(LocalLattice(box, gens, depth))
        if not rep.ok:
            raise ValueError(f"not a local lattice: {rep.violations[0]}")
    H = hnf(gens)
    k = box.k
    if len(H) < k:
        raise InfiniteQuotient(f"lattice has rank {len(H)} < {k}; the quotient is infinite")
    diag = [row[i] for i, row in enumerate(H)]
    reps = list(itertools.product(*[range(d) for d in diag]))
    return Quotient(H, reps, invariant_factors(gens))


# ---------------------------------------------------------------------------
# the ladder


@dataclass
class Ladder:
    group: DefinableGroup
    table: FiniteTable
    box: IntBox
    center: tuple
    levels: list
    n_star: int
    lattice: list
    image: list
    trace: list
    local_hom: bool
    values: dict = field(repr=False, default_factory=dict)

    def f(self, b) -> tuple:
        """f(b) = a + b as a group element."""
        return _add(self.center, b)

    def otimes(self, x, y) -> tuple:
        T = self.table
        return T.op(T.op(x, T.inv(self.center)), y)

    def F(self, v) -> tuple:
        """The induced homomorphism Z^k -> (G, (x)_a), through any decomposition
        of v into box steps."""
        v = tuple(v)
        acc = self.center
        rest = v
        while any(rest):
            step = tuple(max(l, min(u, x)) for l, x, u in zip(self.box.lower, rest, self.box.upper))
            acc = self.otimes(acc, self.f(step))
            rest = _sub(rest, step)
        return acc

    def to_json(self):
        return {"center": list(self.center), "box": self.box.to_json(), "n_star": self.n_star,
                "lattice": [list(v) for v in self.lattice], "image_size": len(self.image),
                "group_order": len(self.table), "index": len(self.table) // max(1, len(self.image)),
                "local_homomorphism": self.local_hom, "trace": self.trace}


def _default_center(table: FiniteTable, box: IntBox) -> tuple:
    """The element a with a + B inside the carrier closest to the middle of
    the carrier's bounding box."""
    pts = table.elements
    k = len(pts[0])
    mid = [(min(p[i] for p in pts) + max(p[i] for p in pts)) / 2 for i in range(k)]
    inside = set(pts)
    ok = [p for p in pts if all(_add(p, b) in inside for b in box.points())]
    if not ok:
        raise LadderError("no element a with a + B inside the carrier")
    return min(ok, key=lambda p: (sum((x - m) ** 2 for x, m in zip(p, mid)), p))


def ladder(g: DefinableGroup, box: IntBox, center=None, max_levels: int = DEFAULT_LEVELS,
           table: FiniteTable | None = None) -> Ladder:
    """Levels f_n on nB by the last-summand recursion, checking that every
    decomposition gives one value; stops once the image is stable and the
    kernel has index |G_0|."""
    T = table or enumerate_group(g)
    if len(T.elements[0]) != box.k:
        raise LadderError("box dimension differs from the group's")
    if any(l == u == 0 for l, u in zip(box.lower, box.upper)):
        raise LadderError("the box does not span Z^k, so nB never covers a full-rank lattice")
    a = tuple(center) if center is not None else _default_center(T, box)
    inside = set(T.elements)
    if a not in inside or any(_add(a, b) not in inside for b in box.points()):
        raise LadderError("a + B is not inside the carrier")
    ainv = T.inv(a)

    def ot(x, y):
        return T.op(T.op(x, ainv), y)

    bpts = box.points()
    f = {b: _add(a, b) for b in bpts}
    # f is a local homomorphism on B
    local = all(ot(f[b], f[c]) == f[_add(b, c)] for b in bpts for c in bpts if _add(b, c) in box)
    vals = {b: {f[b]} for b in bpts}
    levels = [vals]
    images = [set(f.values())]
    trace = [{"level": 1, "points": len(vals), "image": len(images[0]), "lattice": 0,
              "well_defined": True}]
    lam: set = {b for b in bpts if f[b] == a}
    n_star = None
    basis: list = []
    for n in range(2, max_levels + 1):
        prev = levels[-1]
        cur: dict = {}
        for v, s in prev.items():
            for b in bpts:
                w = _add(v, b)
                bucket = cur.setdefault(w, set())
                for x in s:
                    bucket.add(ot(x, f[b]))
        ok = all(len(s) == 1 for s in cur.values())
        levels.append(cur)
        img = {next(iter(s)) for s in cur.values()} if ok else set()
        images.append(img)
        lam |= {v for v, s in cur.items() if s == {a}}
        trace.append({"level": n, "points": len(cur), "image": len(img), "lattice": len(lam),
                      "well_defined": ok})
        if not ok:
            bad = next(v for v, s in cur.items() if len(s) > 1)
            raise LadderError(f"f_{n} is not well defined at {bad}", trace)
        if n_star is None and images[-1] == images[-2]:
            n_star = n - 1
        basis = hnf(sorted(lam))
        if n_star is not None and len(basis) == box.k:
            det = 1
            for i, row in enumerate(basis):
                det *= row[i]
            if det == len(images[-1]):
                break
    else:
        raise LadderError(f"no stabilization within {max_levels} levels", trace)
    img = sorted(images[-1])
    zero_only = all(not any(v) for v in lam if v in box)
    if not zero_only:
        raise LadderError("Lambda meets B outside 0", trace)
    values = {v: next(iter(s)) for lvl in levels for v, s in lvl.items()}
    return Ladder(g, T, box, a, levels, n_star, basis, img, trace, local, values)


# ---------------------------------------------------------------------------
# isomorphism and stress checks


@dataclass
class IsoReport:
    ok: bool
    reason: str
    size_quotient: int | None
    size_image: int

    def to_json(self):
        return {"ok": self.ok, "reason": self.reason, "quotient_order": self.size_quotient,
                "image_order": self.size_image}


def verify_isomorphism(L: Ladder, generators: Sequence | None = None) -> IsoReport:
    """Check ``b + Lambda -> f_n(b)`` is a well-defined bijective homomorphism
    from ``Z^k / Lambda`` onto ``G_0`` by full enumeration."""
    gens = [tuple(v) for v in (L.lattice if generators is None else generators)]
    try:
        Q = quotient(L.box, gens, check=False)
    except InfiniteQuotient as e:
        return IsoReport(False, f"size mismatch: {e}", None, len(L.image))
    if Q.order != len(L.image):
        return IsoReport(False, f"size mismatch: |quotient| = {Q.order}, |G_0| = {len(L.image)}",
                         Q.order, len(L.image))
    for lam in gens:
        if L.F(lam) != L.center:
            return IsoReport(False, f"not well defined: lattice vector {lam} maps to {L.F(lam)}",
                             Q.order, len(L.image))
    phi = {r: L.F(r) for r in Q.reps}
    if set(phi.values()) != set(L.image):
        return IsoReport(False, "not bijective onto G_0", Q.order, len(L.image))
    for r in Q.reps:
        for s in Q.reps:
            if phi[Q.add(r, s)] != L.otimes(phi[r], phi[s]):
                return IsoReport(False, f"not a homomorphism at {r}, {s}", Q.order, len(L.image))
    return IsoReport(True, "isomorphism", Q.order, len(L.image))


def _fold(L: Ladder, parts) -> tuple:
    acc = L.center
    for b in parts:
        acc = L.otimes(acc, L.f(b))
    return acc


def stress_well_defined(L: Ladder, trials: int = 10_000, seed: int = 0,
                        levels: Sequence[int] | None = None) -> dict:
    """Random pairs of decompositions of one element of nB into n box
    elements (the second obtained by transfer moves and shuffling) must
    give the same value."""
    rng = random.Random(seed)
    box = L.box
    levels = list(levels) if levels is not None else list(range(1, len(L.levels) + 1))
    out = {}
    for n in levels:
        bad = 0
        for _ in range(trials):
            first = [tuple(rng.randint(l, u) for l, u in zip(box.lower, box.upper)) for _ in range(n)]
            second = [list(b) for b in first]
            for _ in range(3 * n):
                if n < 2:
                    break
                i, j = rng.sample(range(n), 2)
                c = rng.randrange(box.k)
                lo = max(box.lower[c] - second[i][c], second[j][c] - box.upper[c])
                hi = min(box.upper[c] - second[i][c], second[j][c] - box.lower[c])
                if lo <= hi:
                    d = rng.randint(lo, hi)
                    second[i][c] += d
                    second[j][c] -= d
            rng.shuffle(second)
            second = [tuple(b) for b in second]
            if _fold(L, first) != _fold(L, second):
                bad += 1
        out[n] = bad
    return out


# ---------------------------------------------------------------------------
# files


def load_lattice(text: str, base_dir: str | None = None) -> dict:
    """A ``.lattice`` file: JSON with ``box`` (``radius`` and ``k``, or
    ``lower``/``upper``), optional ``generators`` and ``depth``, and for the
    ladder a ``group`` (inline object or path) and optional ``center``."""
    import os
    d = json.loads(text)
    b = d.get("box")
    if b is None:
        raise ValueError("lattice file needs a box")
    if "radius" in b:
        box = IntBox.cube(int(b["radius"]), int(b.get("k", 1)))
    else:
        box = IntBox(tuple(b["lower"]), tuple(b["upper"]))
    out = {"box": box, "generators": [tuple(g) for g in d.get("generators", [])],
           "depth": int(d.get("depth", 3)), "center": d.get("center"),
           "levels": int(d.get("levels", DEFAULT_LEVELS)), "group": None}
    grp = d.get("group")
    if isinstance(grp, dict):
        out["group"] = load_group(json.dumps(grp))
    elif isinstance(grp, str):
        path = grp if os.path.isabs(grp) or base_dir is None else os.path.join(base_dir, grp)
        with open(path) as fh:
            out["group"] = load_group(fh.read())
    return out
