"""Boxes, C-boxes, linear strips, parallelograms, octants and the
decomposition of bounded definable sets into parallelograms.

Nonstandard constants appear in formulas as named parameters; every object
exposes ``formula()`` together with ``env()`` binding those names.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from pkit.cells import (
    CellDesc, CellError, NotGeneric, _max_rank, decompose, in_dcl, is_independent,
)
from pkit.formula import (
    Formula, LinearTerm, conj, cong, disj, eq, exists, forall, free_vars, iff,
    implies, le, lt,
)
from pkit.model import ModelElement, as_element, simplify_value
from pkit.qe import DEFAULT_BUDGET, _prepare_env, crt_merge, decide

__all__ = [
    "QElt", "Box", "CBox", "box_around", "cbox_around", "Scaled", "Strip",
    "strip_formula", "Parallelogram", "GeneratorForm", "Octant", "octant_of",
    "generators_to_strips", "decompose_bounded", "split_generic_centers",
    "GeometryError",
]


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# rational points of the divisible hull


@dataclass(frozen=True)
class QElt:
    """An element of the divisible hull: rational archimedean parts and a
    rational standard part.  Needed for midpoints and rational bounds."""

    q: tuple = ()
    z: Fraction = Fraction(0)

    def __post_init__(self):
        q = [Fraction(x) for x in self.q]
        while q and q[-1] == 0:
            q.pop()
        object.__setattr__(self, "q", tuple(q))
        object.__setattr__(self, "z", Fraction(self.z))

    @staticmethod
    def of(v) -> "QElt":
        if isinstance(v, QElt):
            return v
        if isinstance(v, Fraction):
            return QElt((), v)
        e = as_element(v)
        return QElt(e.q, e.z)

    def _pad(self, k):
        return self.q + (Fraction(0),) * (k - len(self.q))

    def _key(self, k):
        return self._pad(k) + (self.z,)

    def __add__(self, o):
        o = QElt.of(o)
        k = max(len(self.q), len(o.q))
        return QElt(tuple(a + b for a, b in zip(self._pad(k), o._pad(k))), self.z + o.z)

    __radd__ = __add__

    def __neg__(self):
        return QElt(tuple(-a for a in self.q), -self.z)

    def __sub__(self, o):
        return self + (-QElt.of(o))

    def __rsub__(self, o):
        return QElt.of(o) - self

    def __mul__(self, r):
        r = Fraction(r)
        return QElt(tuple(a * r for a in self.q), self.z * r)

    __rmul__ = __mul__

    def _cmp(self, o):
        o = QElt.of(o)
        k = max(len(self.q), len(o.q))
        a, b = self._key(k), o._key(k)
        return (a > b) - (a < b)

    def __eq__(self, o):
        try:
            return self._cmp(o) == 0
        except TypeError:
            return NotImplemented

    def __hash__(self):
        return hash((self.q, self.z))

    def __lt__(self, o):
        return self._cmp(o) < 0

    def __le__(self, o):
        return self._cmp(o) <= 0

    def __gt__(self, o):
        return self._cmp(o) > 0

    def __ge__(self, o):
        return self._cmp(o) >= 0

    def is_infinite(self) -> bool:
        return bool(self.q)

    def floor(self) -> ModelElement:
        return ModelElement(self.q, math.floor(self.z))

    def ceil(self) -> ModelElement:
        return ModelElement(self.q, math.ceil(self.z))

    def as_scaled(self) -> "Scaled":
        d = self.z.denominator
        return Scaled(simplify_value(ModelElement(tuple(x * d for x in self.q), int(self.z * d))), d)

    def __str__(self):
        return str(self.as_scaled())


def _qabs(v: QElt) -> QElt:
    return -v if v < QElt() else v


# ---------------------------------------------------------------------------
# named constants


class _Names:
    """Collects nonstandard constants under deterministic parameter names."""

    def __init__(self, tag: str):
        self.tag = tag
        self.env: dict = {}

    def term(self, value, label: str) -> LinearTerm:
        if isinstance(value, str):
            return LinearTerm.var(value)
        if isinstance(value, LinearTerm):
            return value
        v = simplify_value(value)
        if isinstance(v, int):
            return LinearTerm.constant(v)
        name = f"{self.tag}_{label}"
        self.env[name] = v
        return LinearTerm.var(name)


def _value(v, env: Mapping):
    """Resolve a constant that may be a parameter name."""
    if isinstance(v, str):
        return env[v]
    if isinstance(v, LinearTerm):
        return v.evaluate(env)
    return v


def _sentence_env(*envs) -> dict:
    out: dict = {}
    for e in envs:
        for k, v in (e or {}).items():
            if k in out and out[k] != v:
                raise GeometryError(f"conflicting values for parameter {k}")
            out[k] = v
    return _prepare_env(out)


# ---------------------------------------------------------------------------
# boxes


@dataclass(frozen=True)
class Box:
    """Product of congruence intervals ``lower_i <= x_i <= upper_i``,
    ``x_i = residue_i (mod modulus_i)``, optionally anchored at a point."""

    vars: tuple
    lower: tuple
    upper: tuple
    moduli: tuple = ()
    residues: tuple = ()
    anchor: tuple | None = None
    tag: str = "box"

    def __post_init__(self):
        n = len(self.vars)
        if not self.moduli:
            object.__setattr__(self, "moduli", (1,) * n)
            object.__setattr__(self, "residues", (0,) * n)
        if not (len(self.lower) == len(self.upper) == len(self.moduli) == len(self.residues) == n):
            raise GeometryError("box arity mismatch")

    @property
    def dim(self) -> int:
        return len(self.vars)

    def formula(self) -> Formula:
        return self._build()[0]

    def env(self) -> dict:
        return self._build()[1]

    def _build(self):
        names = _Names(self.tag)
        parts = []
        for i, v in enumerate(self.vars):
            x = LinearTerm.var(v)
            parts.append(le(names.term(self.lower[i], f"lo{i}"), x))
            parts.append(le(x, names.term(self.upper[i], f"hi{i}")))
            if self.moduli[i] > 1:
                parts.append(cong(x, self.residues[i], self.moduli[i]))
        return conj(*parts), names.env

    def contains(self, point) -> bool:
        pt = _as_tuple(point, self.vars)
        for i, x in enumerate(pt):
            x = as_element(x)
            if not (as_element(self.lower[i]) <= x <= as_element(self.upper[i])):
                return False
            if x.residue(self.moduli[i]) != self.residues[i] % self.moduli[i]:
                return False
        return True

    def margins(self) -> list:
        """(left, right) distances from the anchor in each coordinate."""
        if self.anchor is None:
            raise GeometryError("box has no anchor")
        return [(as_element(a) - as_element(lo), as_element(hi) - as_element(a))
                for a, lo, hi in zip(self.anchor, self.lower, self.upper)]

    def is_around_anchor(self) -> bool:
        return self.anchor is not None and self.contains(self.anchor) and all(
            not l.is_finite() and not r.is_finite() for l, r in self.margins())

    def intersect(self, other: "Box") -> "Box":
        if self.vars != other.vars:
            raise GeometryError("boxes live in different coordinates")
        lo = tuple(simplify_value(max(as_element(a), as_element(b))) for a, b in zip(self.lower, other.lower))
        hi = tuple(simplify_value(min(as_element(a), as_element(b))) for a, b in zip(self.upper, other.upper))
        mods, res = [], []
        for n1, c1, n2, c2 in zip(self.moduli, self.residues, other.moduli, other.residues):
            m = crt_merge([(n1, c1 % n1), (n2, c2 % n2)])
            if m is None:
                raise GeometryError("boxes have incompatible congruences")
            mods.append(m[0])
            res.append(m[1])
        anchor = self.anchor if self.anchor is not None else other.anchor
        out = Box(self.vars, lo, hi, tuple(mods), tuple(res), anchor, self.tag)
        if anchor is not None and not out.is_around_anchor():
            raise GeometryError("intersection is not a box around the anchor")
        return out

    def shrink(self, factor: Fraction) -> "Box":
        """Scale both margins around the anchor by ``factor``; the ends are
        moved onto the congruence class so the box stays nonempty."""
        if self.anchor is None:
            raise GeometryError("only anchored boxes can be shrunk")
        lo, hi = [], []
        for i, (a, l, h) in enumerate(zip(self.anchor, self.lower, self.upper)):
            a = QElt.of(a)
            lo.append(simplify_value((a - (a - QElt.of(l)) * factor).ceil()))
            hi.append(simplify_value((a + (QElt.of(h) - a) * factor).floor()))
        return Box(self.vars, tuple(lo), tuple(hi), self.moduli, self.residues, self.anchor, self.tag)

    def to_json(self) -> dict:
        return {"vars": list(self.vars), "lower": [str(as_element(x)) for x in self.lower],
                "upper": [str(as_element(x)) for x in self.upper],
                "moduli": list(self.moduli), "residues": list(self.residues),
                "anchor": None if self.anchor is None else [str(as_element(x)) for x in self.anchor]}

    def __str__(self):
        parts = []
        for i, v in enumerate(self.vars):
            s = f"{as_element(self.lower[i])} <= {v} <= {as_element(self.upper[i])}"
            if self.moduli[i] > 1:
                s += f" ({v} === {self.residues[i]} mod {self.moduli[i]})"
            parts.append(s)
        return "; ".join(parts)


def _as_tuple(point, vars) -> tuple:
    if isinstance(point, Mapping):
        return tuple(point[v] for v in vars)
    return tuple(point)


@dataclass(frozen=True)
class CBox:
    """``pi^-1(box) & cell`` where ``box`` lives on the 1-coordinates of the cell."""

    cell: CellDesc
    box: Box

    @property
    def dim(self) -> int:
        return self.cell.dim

    def formula(self) -> Formula:
        return conj(self.cell.formula(), self.box.formula())

    def env(self) -> dict:
        return self.box.env()

    def contains(self, point, env: Mapping | None = None) -> bool:
        pt = dict(zip(self.cell.vars, _as_tuple(point, self.cell.vars)))
        return self.cell.contains(pt, env) and self.box.contains(pt)

    def intersect(self, other: "CBox") -> "CBox":
        if self.cell != other.cell:
            raise GeometryError("C-boxes of different cells")
        return CBox(self.cell, self.box.intersect(other.box))

    def to_json(self) -> dict:
        return {"cell": self.cell.to_json(), "box": self.box.to_json()}

    def __str__(self):
        return f"C-box [{self.box}] in {self.cell}"


def _coef_vectors(cell: CellDesc) -> dict:
    """Each cell variable as a rational combination of the 1-coordinates."""
    free = [c.var for c in cell.coords if c.kind != "graph"]
    vec: dict = {}
    for c in cell.coords:
        if c.kind != "graph":
            vec[c.var] = {c.var: Fraction(1)}
        else:
            vec[c.var] = _compose(c.value.num, c.value.den, vec)
    return vec


def _compose(num: LinearTerm, den: int, vec: dict) -> dict:
    out: dict = {}
    for v, a in num.coeffs:
        if v in vec:
            for w, b in vec[v].items():
                out[w] = out.get(w, 0) + Fraction(a, den) * b
    return {w: b for w, b in out.items() if b}


def _radius(cell: CellDesc, point: dict, env: Mapping) -> QElt:
    """Half the smallest slack divided by the largest bound slope."""
    vec = _coef_vectors(cell)
    full = {**env, **point}
    slack = None
    S = Fraction(0)
    for c in cell.coords:
        if c.kind == "graph":
            continue
        a = QElt.of(point[c.var])
        for bnd, sign in ((c.lower, 1), (c.upper, -1)):
            if bnd is None:
                continue
            val = QElt.of(bnd.num.evaluate(full)) * Fraction(1, bnd.den)
            gap = (a - val) * sign
            if gap < QElt():
                raise CellError(f"point is outside the cell at {c.var}")
            slack = gap if slack is None or gap < slack else slack
            S = max(S, sum(abs(x) for x in _compose(bnd.num, bnd.den, vec).values()))
    if slack is None:
        # unbounded in every direction: any infinite radius works
        slack = QElt.of(ModelElement((1,), 0)) * 2
    return slack * Fraction(1, 2 * max(1, S))


def _box_from_radius(cell: CellDesc, point: dict, r: QElt, tag: str) -> Box:
    vars, lo, hi, mods, res, anchor = [], [], [], [], [], []
    for c in cell.coords:
        if c.kind == "graph":
            continue
        a = QElt.of(point[c.var])
        vars.append(c.var)
        lo.append(simplify_value((a - r).ceil()))
        hi.append(simplify_value((a + r).floor()))
        mods.append(c.modulus)
        res.append(c.residue % c.modulus)
        anchor.append(point[c.var])
    return Box(tuple(vars), tuple(lo), tuple(hi), tuple(mods), tuple(res), tuple(anchor), tag)


def _point_dict(cell: CellDesc, a) -> dict:
    if isinstance(a, Mapping):
        return {v: a[v] for v in cell.vars}
    return dict(zip(cell.vars, a))


def box_around(cell: CellDesc, a, env: Mapping | None = None, budget: int = DEFAULT_BUDGET,
               tag: str = "box") -> Box:
    """An anchored box around ``a`` inside the open cell, certified by deciding
    that every box point lies in the cell."""
    if not cell.is_open():
        raise CellError("box_around needs an open cell")
    return cbox_around(cell, a, env, budget, tag).box


def cbox_around(cell: CellDesc, a, env: Mapping | None = None, budget: int = DEFAULT_BUDGET,
                tag: str = "box") -> CBox:
    """A C-box around ``a``: a box on the 1-coordinates whose preimage in the
    cell is certified (by decide) to cover the whole box."""
    env = _prepare_env(env)
    point = _point_dict(cell, a)
    if not cell.contains(point, env):
        raise CellError("point is not in the cell")
    r = _radius(cell, point, env)
    if not r.is_infinite():
        raise NotGeneric("margins around the point are finite; the point is not generic")
    box = _box_from_radius(cell, point, r, tag)
    graph_vars = [c.var for c in cell.coords if c.kind == "graph"]
    senv = _sentence_env(env, box.env())
    body = implies(box.formula(), exists(graph_vars, cell.formula()))
    if not decide(forall(list(box.vars), body), senv, budget):
        raise CellError("box certification failed")
    return CBox(cell, box)


def as_cbox_of(cb: CBox, other: CellDesc, env: Mapping | None = None,
               budget: int = DEFAULT_BUDGET) -> CBox:
    """Reinterpret a C-box of C as a D-box for a cell D containing C with the
    same signature (the two preimages are decided equal)."""
    if cb.cell.signature != other.signature or cb.cell.vars != other.vars:
        raise GeometryError("cells differ in signature")
    senv = _sentence_env(env, cb.env())
    vs = list(cb.cell.vars)
    if not decide(forall(vs, implies(cb.cell.formula(), other.formula())), senv, budget):
        raise GeometryError("the first cell is not contained in the second")
    out = CBox(other, cb.box)
    if not decide(forall(vs, iff(out.formula(), cb.formula())), senv, budget):
        raise GeometryError("preimages differ")
    return out


# ---------------------------------------------------------------------------
# strips


@dataclass(frozen=True)
class Scaled:
    """``value / den`` with ``value`` an element, an integer or a parameter name."""

    value: object
    den: int = 1

    def __post_init__(self):
        if self.den <= 0:
            raise GeometryError("scaled constant needs a positive denominator")

    def q(self, env: Mapping | None = None) -> QElt:
        return QElt.of(_value(self.value, env or {})) * Fraction(1, self.den)

    def __str__(self):
        v = self.value if isinstance(self.value, str) else str(as_element(_value(self.value, {})))
        return v if self.den == 1 else f"({v})/{self.den}"


def _lcm(*xs) -> int:
    out = 1
    for x in xs:
        out = out * x // math.gcd(out, x)
    return out


@dataclass(frozen=True)
class Strip:
    """``lower <= sum q_i x_i <= upper`` with rational ``q_i``; a missing bound
    is open.  Equal bounds describe a hyperplane."""

    vars: tuple
    coeffs: tuple
    lower: Scaled | None = None
    upper: Scaled | None = None
    tag: str = "s"

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(Fraction(c) for c in self.coeffs))
        if len(self.vars) != len(self.coeffs):
            raise GeometryError("strip arity mismatch")

    def scale(self) -> int:
        c = _lcm(*[q.denominator for q in self.coeffs])
        for b in (self.lower, self.upper):
            if b is not None:
                c = _lcm(c, b.den)
        return c

    def functional(self, point, env: Mapping | None = None) -> QElt:
        pt = _as_tuple(point, self.vars)
        out = QElt()
        for q, x in zip(self.coeffs, pt):
            out = out + QElt.of(_value(x, env or {})) * q
        return out

    def holds(self, point, env: Mapping | None = None) -> bool:
        """Exact rational evaluation of the defining inequalities."""
        v = self.functional(point, env)
        if self.lower is not None and v < self.lower.q(env):
            return False
        if self.upper is not None and v > self.upper.q(env):
            return False
        return True

    def width(self, env: Mapping | None = None) -> QElt | None:
        if self.lower is None or self.upper is None:
            return None
        return self.upper.q(env) - self.lower.q(env)

    def is_proper(self, env: Mapping | None = None) -> bool:
        w = self.width(env)
        return w is None or w.is_infinite()

    def is_equation(self) -> bool:
        return self.lower is not None and self.lower == self.upper

    def formula(self) -> Formula:
        return self._build()[0]

    def env(self) -> dict:
        return self._build()[1]

    def _build(self):
        c = self.scale()
        names = _Names(self.tag)
        lhs = LinearTerm.of({v: int(q * c) for v, q in zip(self.vars, self.coeffs)})
        parts = []
        bounds = []
        for b, label in ((self.lower, "lo"), (self.upper, "hi")):
            if b is None:
                bounds.append(None)
                continue
            k = c // b.den
            bounds.append(names.term(b.value, label) * k)
        if self.is_equation():
            return eq(lhs, bounds[0]), names.env
        if bounds[0] is not None:
            parts.append(le(bounds[0], lhs))
        if bounds[1] is not None:
            parts.append(le(lhs, bounds[1]))
        return conj(*parts), names.env

    def to_json(self) -> dict:
        return {"vars": list(self.vars), "coeffs": [str(q) for q in self.coeffs],
                "lower": None if self.lower is None else str(self.lower),
                "upper": None if self.upper is None else str(self.upper),
                "scale": self.scale()}

    def __str__(self):
        f = " + ".join(f"{q}*{v}" for q, v in zip(self.coeffs, self.vars) if q)
        lo = "-inf" if self.lower is None else str(self.lower)
        hi = "+inf" if self.upper is None else str(self.upper)
        return f"{lo} <= {f} <= {hi}"


def strip_formula(s: Strip) -> Formula:
    """The strip with denominators cleared: ``c*lower <= c*f(x) <= c*upper``."""
    return s.formula()


def _primitive(vec) -> tuple:
    """Integer multiple of a rational vector with coprime entries, first nonzero positive."""
    vec = [Fraction(x) for x in vec]
    L = _lcm(*[x.denominator for x in vec])
    ints = [int(x * L) for x in vec]
    g = 0
    for x in ints:
        g = math.gcd(g, x)
    if g == 0:
        return tuple(ints)
    ints = [x // g for x in ints]
    first = next(x for x in ints if x)
    if first < 0:
        ints = [-x for x in ints]
    return tuple(ints)


# ---------------------------------------------------------------------------
# parallelograms


@dataclass(frozen=True)
class LinCong:
    """``sum coeffs_i x_i = residue (mod modulus)``."""

    coeffs: tuple
    modulus: int
    residue: int

    def formula(self, vars) -> Formula:
        return cong(LinearTerm.of(dict(zip(vars, self.coeffs))), self.residue % self.modulus, self.modulus)

    def holds(self, point, vars) -> bool:
        pt = _as_tuple(point, vars)
        total = sum((c * as_element(x) for c, x in zip(self.coeffs, pt) if c), ModelElement())
        return as_element(total).residue(self.modulus) == self.residue % self.modulus


@dataclass(frozen=True)
class Parallelogram:
    """Strip form: an intersection of strips with linear congruences and
    hyperplane equations (the latter describe the affine image of a
    lower-dimensional parallelogram)."""

    vars: tuple
    strips: tuple = ()
    congs: tuple = ()
    equations: tuple = ()
    center: tuple | None = None
    image: dict | None = None
    tag: str = "p"

    @property
    def dim(self) -> int:
        return len(self.vars) - len(self.equations)

    def formula(self) -> Formula:
        return self._build()[0]

    def env(self) -> dict:
        return self._build()[1]

    def _build(self):
        parts, env = [], {}
        for i, s in enumerate(list(self.strips) + list(self.equations)):
            s2 = Strip(s.vars, s.coeffs, s.lower, s.upper, f"{self.tag}{i}")
            f, e = s2._build()
            parts.append(f)
            env.update(e)
        for c in self.congs:
            parts.append(c.formula(self.vars))
        return conj(*parts), env

    def contains(self, point, env: Mapping | None = None) -> bool:
        pt = dict(zip(self.vars, _as_tuple(point, self.vars)))
        for s in list(self.strips) + list(self.equations):
            if not s.holds(tuple(pt[v] for v in s.vars), env):
                return False
        return all(c.holds(pt, self.vars) for c in self.congs)

    def is_centered(self, env: Mapping | None = None) -> bool:
        if self.center is None:
            return False
        for s in self.strips:
            if s.lower is None or s.upper is None:
                return False
            a = s.functional(self._center_on(s), env)
            if (a * 2 - s.lower.q(env) - s.upper.q(env)).is_infinite():
                return False
        return True

    def _center_on(self, s: Strip):
        pt = dict(zip(self.vars, self.center))
        return tuple(pt[v] for v in s.vars)

    def with_center(self, center) -> "Parallelogram":
        return Parallelogram(self.vars, self.strips, self.congs, self.equations,
                             tuple(center), self.image, self.tag)

    def normalized(self, env: Mapping | None = None) -> "Parallelogram":
        """Merge strips whose coefficient vectors agree up to a positive
        rational multiple (intersecting their bounds)."""
        merged: dict = {}
        order = []
        for s in self.strips:
            full = [s.coeffs[s.vars.index(v)] if v in s.vars else Fraction(0) for v in self.vars]
            key = _primitive(full)
            r = Fraction(_dot(key, key)) / _dot(key, full)
            lo = None if s.lower is None else s.lower.q(env) * r
            hi = None if s.upper is None else s.upper.q(env) * r
            if r < 0:
                lo, hi = hi, lo
            if key in merged:
                plo, phi = merged[key]
                lo = plo if lo is None else lo if plo is None else max(lo, plo)
                hi = phi if hi is None else hi if phi is None else min(hi, phi)
            else:
                order.append(key)
            merged[key] = (lo, hi)
        strips = tuple(Strip(self.vars, k, None if merged[k][0] is None else merged[k][0].as_scaled(),
                             None if merged[k][1] is None else merged[k][1].as_scaled())
                       for k in order)
        return Parallelogram(self.vars, strips, self.congs, self.equations, self.center,
                             self.image, self.tag)

    def to_json(self) -> dict:
        return {"vars": list(self.vars), "strips": [s.to_json() for s in self.strips],
                "congruences": [{"coeffs": list(c.coeffs), "modulus": c.modulus,
                                 "residue": c.residue} for c in self.congs],
                "equations": [s.to_json() for s in self.equations],
                "center": None if self.center is None else [str(as_element(x)) for x in self.center],
                "formula": str(self.formula())}

    def __str__(self):
        parts = [str(s) for s in self.strips]
        parts += [f"{s.lower} == " + " + ".join(f"{q}*{v}" for q, v in zip(s.coeffs, s.vars) if q)
                  for s in self.equations]
        parts += [f"{c.coeffs} === {c.residue} mod {c.modulus}" for c in self.congs]
        return " and ".join(parts) if parts else "true"


@dataclass(frozen=True)
class GeneratorForm:
    """Points ``a + sum_i t_i * beta_i`` with integers ``0 <= t_i <= d_i``."""

    vars: tuple
    anchor: tuple
    directions: tuple
    lengths: tuple
    tag: str = "g"

    def __post_init__(self):
        object.__setattr__(self, "directions",
                           tuple(tuple(Fraction(x) for x in b) for b in self.directions))
        n = len(self.vars)
        if len(self.anchor) != n or any(len(b) != n for b in self.directions):
            raise GeometryError("generator arity mismatch")
        if len(self.lengths) != len(self.directions):
            raise GeometryError("one length per generator")

    @property
    def j(self) -> int:
        return len(self.directions)

    def generators(self) -> list:
        """``b_i`` as points (only when every ``beta_i * d_i`` is integral)."""
        out = []
        for b, d in zip(self.directions, self.lengths):
            out.append(tuple(simplify_value(_scale_exact(as_element(d), x)) for x in b))
        return out

    def formula(self) -> Formula:
        return self._build()[0]

    def env(self) -> dict:
        return self._build()[1]

    def _build(self):
        names = _Names(self.tag)
        ts = [f"{self.tag}_t{i}" for i in range(self.j)]
        parts = []
        for i, t in enumerate(ts):
            parts.append(le(0, LinearTerm.var(t)))
            parts.append(le(LinearTerm.var(t), names.term(self.lengths[i], f"d{i}")))
        for k, v in enumerate(self.vars):
            L = _lcm(*[b[k].denominator for b in self.directions])
            rhs = LinearTerm.of({t: int(b[k] * L) for t, b in zip(ts, self.directions)})
            lhs = (LinearTerm.var(v) - names.term(self.anchor[k], f"a{k}")) * L
            parts.append(eq(lhs, rhs))
        return exists(ts, conj(*parts)), names.env

    def to_json(self) -> dict:
        return {"vars": list(self.vars), "anchor": [str(as_element(x)) for x in self.anchor],
                "directions": [[str(x) for x in b] for b in self.directions],
                "lengths": [str(as_element(d)) for d in self.lengths]}


def _scale_exact(e: ModelElement, r: Fraction) -> ModelElement:
    v = QElt.of(e) * r
    if v.z.denominator != 1:
        raise GeometryError("generator is not integral")
    return v.floor()


# rational linear algebra


def _rref(rows):
    rows = [list(map(Fraction, r)) for r in rows]
    m = len(rows)
    n = len(rows[0]) if rows else 0
    piv = []
    r = 0
    for c in range(n):
        p = next((i for i in range(r, m) if rows[i][c] != 0), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        inv = 1 / rows[r][c]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(m):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        piv.append(c)
        r += 1
    return rows[:r], piv


def _nullspace(rows, n) -> list:
    if not rows:
        return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    R, piv = _rref(rows)
    free = [c for c in range(n) if c not in piv]
    basis = []
    for f in free:
        v = [Fraction(0)] * n
        v[f] = Fraction(1)
        for i, p in enumerate(piv):
            v[p] = -R[i][f]
        basis.append(v)
    return basis


def _rank(rows) -> int:
    return len(_rref(rows)[0]) if rows else 0


def _inverse(M):
    n = len(M)
    aug = [list(map(Fraction, row)) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    R, piv = _rref(aug)
    if piv[:n] != list(range(n)):
        raise GeometryError("singular matrix")
    return [row[n:] for row in R]


def _dot(u, v):
    return sum((a * b for a, b in zip(u, v)), Fraction(0))


def _elt_combo(coeffs, elems) -> QElt:
    out = QElt()
    for c, e in zip(coeffs, elems):
        if c:
            out = out + QElt.of(e) * c
    return out


def generators_to_strips(p: GeneratorForm, tag: str | None = None) -> Parallelogram:
    """Strip form of a generator-form parallelogram.

    For ``j = n`` each strip is cut out by the functional vanishing on the
    other generators; integrality of the ``t_i`` becomes a congruence on the
    functional.  For ``j < n`` the free coordinates (pivots of the generator
    matrix) carry the open parallelogram and the dependent ones are given by
    rational linear maps, recorded as equations."""
    tag = tag or p.tag + "s"
    n, j = len(p.vars), p.j
    B = [list(b) for b in p.directions]
    if j == 0:
        eqs = tuple(Strip((v,), (1,), Scaled(simplify_value(a)), Scaled(simplify_value(a)))
                    for v, a in zip(p.vars, p.anchor))
        return Parallelogram(p.vars, (), (), eqs, tuple(p.anchor), {"free": []}, tag)
    if _rank(B) < j:
        raise GeometryError("generator directions are linearly dependent")
    if j == n:
        strips, congs = _open_strips(p.vars, B, p.anchor, p.lengths)
        return Parallelogram(p.vars, strips, congs, (), None, {"free": list(p.vars)}, tag)
    _, piv = _rref(B)
    free = piv
    dep = [k for k in range(n) if k not in free]
    BF = [[b[k] for k in free] for b in B]
    BD = [[b[k] for k in dep] for b in B]
    # x_D = Phi x_F on the span: Phi = BD^T (BF^T)^-1
    inv = _inverse([[BF[i][r] for i in range(j)] for r in range(j)])
    Phi = [[sum(BD[i][r] * inv[i][c] for i in range(j)) for c in range(j)] for r in range(len(dep))]
    fvars = tuple(p.vars[k] for k in free)
    strips, congs = _open_strips(fvars, BF, [p.anchor[k] for k in free], p.lengths)
    # lift congruences to the full coordinate list
    lifted = []
    for c in congs:
        coeffs = [0] * n
        for k, a in zip(free, c.coeffs):
            coeffs[k] = a
        lifted.append(LinCong(tuple(coeffs), c.modulus, c.residue))
    eqs = []
    for r, k in enumerate(dep):
        row = [Fraction(0)] * n
        row[k] = Fraction(1)
        for c, kf in enumerate(free):
            row[kf] -= Phi[r][c]
        ints = _primitive(row)
        val = _elt_combo(ints, p.anchor)
        sc = val.as_scaled()
        eqs.append(Strip(p.vars, ints, sc, sc))
    image = {"free": list(fvars), "dependent": [p.vars[k] for k in dep],
             "maps": [[str(x) for x in row] for row in Phi]}
    return Parallelogram(p.vars, tuple(strips), tuple(lifted), tuple(eqs), None, image, tag)


def _open_strips(vars, B, anchor, lengths):
    n = len(vars)
    strips, congs = [], []
    for i in range(n):
        others = [B[l] for l in range(n) if l != i]
        ns = _nullspace(others, n)
        if len(ns) != 1:
            raise GeometryError("generator directions are linearly dependent")
        H = _primitive(ns[0])
        hb = _dot(H, B[i])
        if hb < 0:
            H = tuple(-x for x in H)
            hb = -hb
        lo = _elt_combo(H, anchor)
        hi = lo + QElt.of(lengths[i]) * hb
        if hi < lo:
            raise GeometryError("generator lengths must be nonnegative")
        strips.append(Strip(tuple(vars), H, lo.as_scaled(), hi.as_scaled()))
        if hb.numerator > 1:
            res = as_element(lo.floor()).residue(hb.numerator)
            if lo.z.denominator != 1:
                raise GeometryError("anchor must be integral")
            congs.append(LinCong(H, hb.numerator, res))
    return strips, congs


# ---------------------------------------------------------------------------
# octants


@dataclass(frozen=True)
class Octant:
    parent: Parallelogram
    eta: tuple

    def _strips(self):
        p = self.parent
        out = []
        for s, e in zip(p.strips, self.eta):
            fa = s.functional(p._center_on(s))
            mid = fa.as_scaled()
            if e == 1:
                out.append(Strip(s.vars, s.coeffs, mid, s.upper))
            else:
                out.append(Strip(s.vars, s.coeffs, s.lower, mid))
        return out

    @functools.cached_property
    def _restricted(self) -> Parallelogram:
        p = self.parent
        return Parallelogram(p.vars, tuple(self._strips()), p.congs, p.equations, p.center,
                             p.image, p.tag + "o")

    def as_parallelogram(self) -> Parallelogram:
        return self._restricted

    def formula(self) -> Formula:
        return self.as_parallelogram().formula()

    def env(self) -> dict:
        return self.as_parallelogram().env()

    def contains(self, point, env: Mapping | None = None) -> bool:
        return self.as_parallelogram().contains(point, env)


def octant_of(p: Parallelogram, eta, env: Mapping | None = None, certify: bool = True,
              budget: int = DEFAULT_BUDGET) -> Octant:
    if p.center is None:
        raise GeometryError("parallelogram has no center")
    eta = tuple(int(e) for e in eta)
    if len(eta) != len(p.strips) or any(e not in (1, -1) for e in eta):
        raise GeometryError("eta must be a sign per strip")
    o = Octant(p, eta)
    if certify:
        senv = _sentence_env(env, p.env(), o.env())
        s = forall(list(p.vars), implies(o.formula(), p.formula()))
        if not decide(s, senv, budget):
            raise GeometryError("octant is not inside the parallelogram")
    return o


def octant_closure_holds(o: Octant, x1, x2, x3, env: Mapping | None = None) -> bool | None:
    """None when the hypothesis fails; otherwise whether x1 + x2 - a is in the octant."""
    a = [as_element(v) for v in o.parent.center]
    X = [[as_element(v) for v in _as_tuple(x, o.parent.vars)] for x in (x1, x2, x3)]
    s3 = tuple(X[0][i] + X[1][i] + X[2][i] - a[i] - a[i] for i in range(len(a)))
    if not all(o.contains(x, env) for x in X) or not o.contains(s3, env):
        return None
    s2 = tuple(X[0][i] + X[1][i] - a[i] for i in range(len(a)))
    return o.contains(s2, env)


# ---------------------------------------------------------------------------
# bounded sets as unions of parallelograms


def _union_equal(f: Formula, pieces: list, vars, env, budget) -> bool:
    penv = _sentence_env(env, *[p.env() for p in pieces])
    union = disj(*[p.formula() for p in pieces])
    return decide(forall(list(vars), iff(f, union)), penv, budget)


def decompose_bounded(f: Formula, bound, vars: Sequence[str], env: Mapping | None = None,
                      budget: int = DEFAULT_BUDGET, certify: bool = True) -> list:
    """Cover a bounded definable set by parallelograms (overlaps allowed),
    decided equal to the input.  Cells of dimension at most 2 are handled."""
    env = _prepare_env(env)
    vars = list(vars)
    names = _Names("bound")
    alpha = names.term(bound, "alpha")
    benv = _sentence_env(env, names.env)
    box = conj(*[conj(lt(-alpha, LinearTerm.var(v)), lt(LinearTerm.var(v), alpha)) for v in vars])
    if not decide(forall(vars, implies(f, box)), benv, budget):
        raise GeometryError("input is not bounded by the given bound")
    cells = decompose(f, vars, env, budget=budget)
    pieces = []
    for i, cell in enumerate(cells):
        mine = _cell_pieces(cell, env, f"c{i}")
        if certify:
            # the cells partition f, so covering each cell covers f
            for p in mine:
                penv = _sentence_env(env, p.env())
                if not decide(forall(vars, implies(p.formula(), f)), penv, budget):
                    raise GeometryError(f"piece {p} leaves the set")
            penv = _sentence_env(env, *[p.env() for p in mine])
            cover = implies(cell.formula(), disj(*[p.formula() for p in mine]))
            if not decide(forall(vars, cover), penv, budget):
                raise GeometryError(f"pieces do not cover the cell {cell}")
        pieces.extend(mine)
    return pieces


def _affine_of(num: LinearTerm, den: int, vec: dict, consts: dict, env) -> tuple:
    """(coefficients on the 1-coordinates, rational constant) of num/den with
    graph coordinates substituted."""
    coef: dict = {}
    const = QElt()
    for v, a in num.coeffs:
        r = Fraction(a, den)
        if v in vec:
            for w, b in vec[v].items():
                coef[w] = coef.get(w, 0) + r * b
            const = const + consts[v] * r
        else:
            const = const + QElt.of(env[v]) * r
    const = const + QElt((), Fraction(num.const, den))
    return {w: b for w, b in coef.items() if b}, const


def _cell_pieces(cell: CellDesc, env, tag: str) -> list:
    vec = _coef_vectors(cell)
    consts: dict = {}
    free = [c for c in cell.coords if c.kind != "graph"]
    for c in cell.coords:
        if c.kind == "graph":
            coef, const = _affine_of(c.value.num, c.value.den, vec, consts, env)
            vec[c.var] = coef
            consts[c.var] = const
        else:
            consts[c.var] = QElt()
    fv = [c.var for c in free]
    if len(free) > 2:
        raise GeometryError("parallelogram covers are implemented for cells of dimension at most 2")
    vars = cell.vars
    # hyperplanes: every graph coordinate as a function of the free ones
    eqs = []
    for c in cell.coords:
        if c.kind != "graph":
            continue
        row = [Fraction(0)] * len(vars)
        row[vars.index(c.var)] = Fraction(1)
        for w, b in vec[c.var].items():
            row[vars.index(w)] -= b
        ints = _primitive(row)
        scale = Fraction(ints[vars.index(c.var)])
        val = consts[c.var] * scale
        sc = val.as_scaled()
        eqs.append(Strip(vars, ints, sc, sc))
    congs = tuple(LinCong(tuple(int(v == c.var) for v in vars), c.modulus, c.residue % c.modulus)
                  for c in free if c.modulus > 1)
    bounds = []
    for c in free:
        lo = _affine_of(c.lower.num, c.lower.den, vec, consts, env) if c.lower is not None else None
        hi = _affine_of(c.upper.num, c.upper.den, vec, consts, env) if c.upper is not None else None
        if lo is None or hi is None:
            raise GeometryError("unbounded cell")
        bounds.append((lo, hi))

    def strip_on(coeffs: dict, lo: QElt, hi: QElt) -> Strip:
        vec_ = [coeffs.get(v, Fraction(0)) for v in vars]
        L = _lcm(*[x.denominator for x in vec_])
        return Strip(vars, tuple(x * L for x in vec_), (lo * L).as_scaled(), (hi * L).as_scaled())

    out = []
    if len(free) == 0:
        return [Parallelogram(vars, (), congs, tuple(eqs), None, {"free": []}, tag)]
    u = fv[0]
    (ulo_c, ulo), (uhi_c, uhi) = bounds[0]
    if ulo_c or uhi_c:
        raise GeometryError("first free coordinate has non-constant bounds")
    if len(free) == 1:
        s = strip_on({u: Fraction(1)}, ulo, uhi)
        return [Parallelogram(vars, (s,), congs, tuple(eqs), None, {"free": fv}, tag)]
    w = fv[1]
    (ac, a0), (bc, b0) = bounds[1]
    pa, pb = ac.get(u, Fraction(0)), bc.get(u, Fraction(0))
    su = strip_on({u: Fraction(1)}, ulo, uhi)
    if pa == pb:
        s2 = strip_on({w: Fraction(1), u: -pa}, a0, b0)
        return [Parallelogram(vars, (su, s2), congs, tuple(eqs), None, {"free": fv}, tag)]
    # trapezoid with vertical sides: a parallelogram along alpha plus a triangle
    alpha = lambda x: a0 + x * pa
    beta = lambda x: b0 + x * pb
    w_lo, w_hi = beta(ulo) - alpha(ulo), beta(uhi) - alpha(uhi)
    wmin = min(w_lo, w_hi)
    if wmin > QElt():
        s2 = strip_on({w: Fraction(1), u: -pa}, a0, a0 + wmin)
        out.append(Parallelogram(vars, (su, s2), congs, tuple(eqs), None, {"free": fv}, f"{tag}p"))
    if w_lo >= w_hi:
        tri = [(ulo, alpha(ulo) + wmin), (ulo, beta(ulo)), (uhi, beta(uhi))]
    else:
        tri = [(uhi, alpha(uhi) + wmin), (uhi, beta(uhi)), (ulo, beta(ulo))]
    for k in range(3):
        V = tri[k]
        V1, V2 = tri[(k + 1) % 3], tri[(k + 2) % 3]
        pieces_strips = []
        for E, F in ((V1, V2), (V2, V1)):
            # functional vanishing on the direction F - V, positive on E - V
            dF = (F[0] - V[0], F[1] - V[1])
            dE = (E[0] - V[0], E[1] - V[1])
            H = _direction_functional(dF)
            hv = H[0] * V[0] + H[1] * V[1]
            he = H[0] * dE[0] + H[1] * dE[1]
            if he < QElt():
                H = (-H[0], -H[1])
                hv, he = -hv, -he
            pieces_strips.append(strip_on({u: H[0], w: H[1]}, hv, hv + he * Fraction(1, 2)))
        out.append(Parallelogram(vars, tuple(pieces_strips), congs, tuple(eqs), None,
                                 {"free": fv}, f"{tag}t{k}"))
    return out


def _direction_functional(d) -> tuple:
    """Rational (h0, h1) with h0*d0 + h1*d1 = 0 for a direction whose
    components are rational multiples of one element."""
    d0, d1 = d
    # both components lie on one line through 0 in the hull; find their ratio
    ratio = _ratio(d0, d1)
    if ratio is None:
        return (Fraction(1), Fraction(0)) if d0 == QElt() else (Fraction(0), Fraction(1))
    # d1 = ratio * d0  ->  functional (ratio, -1)
    return _prim2(ratio, Fraction(-1))


def _prim2(a: Fraction, b: Fraction) -> tuple:
    p = _primitive((a, b))
    return (Fraction(p[0]), Fraction(p[1]))


def _ratio(d0: QElt, d1: QElt):
    if d0 == QElt():
        return None
    k = max(len(d0.q), len(d1.q))
    a, b = d0._key(k), d1._key(k)
    r = None
    for x, y in zip(a, b):
        if x == 0 and y == 0:
            continue
        if x == 0:
            raise GeometryError("triangle edge is not a rational direction")
        rr = y / x
        if r is None:
            r = rr
        elif r != rr:
            raise GeometryError("triangle edge is not a rational direction")
    return r


# ---------------------------------------------------------------------------
# generic centers


def split_generic_centers(p: Parallelogram, params: Sequence = (), env: Mapping | None = None,
                          budget: int = DEFAULT_BUDGET, certify: bool = True) -> list:
    """Split an open bounded full parallelogram into 2^n pieces, each carrying
    a center that is dim-generic over ``params``."""
    env = _prepare_env(env)
    n = len(p.vars)
    if p.equations or len(p.strips) != n:
        raise GeometryError("needs an open full parallelogram with one strip per coordinate")
    F = []
    for s in p.strips:
        if s.lower is None or s.upper is None:
            raise GeometryError("parallelogram is not bounded")
        F.append([s.coeffs[s.vars.index(v)] if v in s.vars else Fraction(0) for v in p.vars])
    Finv = _inverse(F)
    params = [as_element(x) for x in params]
    fresh = max([_max_rank(env)] + [x.rank for x in params] + [0])
    plain = _split_at(p, Finv, env, None)
    if all(_generic(c, params) for _, c in plain):
        pieces = plain
    else:
        pieces = _split_at(p, Finv, env, fresh)
        if not all(_generic(c, params) for _, c in pieces):
            raise NotGeneric("could not find generic centers")
    out = [q.with_center(c) for q, c in pieces]
    if certify and not _union_equal(p.formula(), out, p.vars, _sentence_env(env, p.env()), budget):
        raise GeometryError("split pieces do not cover the parallelogram")
    return out


def _generic(center, params) -> bool:
    return is_independent([as_element(x) for x in center], params)


def _split_at(p: Parallelogram, Finv, env, fresh):
    mids = []
    for i, s in enumerate(p.strips):
        m = (s.lower.q(env) + s.upper.q(env)) * Fraction(1, 2)
        if fresh is not None:
            m = m + QElt.of(ModelElement(tuple([0] * (fresh + i) + [1]), 0))
        mids.append(m)
    out = []
    for choice in itertools.product((0, 1), repeat=len(p.strips)):
        strips, targets = [], []
        for i, (s, half) in enumerate(zip(p.strips, choice)):
            lo, hi = (s.lower.q(env), mids[i]) if half == 0 else (mids[i], s.upper.q(env))
            strips.append(Strip(s.vars, s.coeffs, lo.as_scaled(), hi.as_scaled()))
            targets.append((lo + hi) * Fraction(1, 2))
        x = [sum((targets[j] * Finv[i][j] for j in range(len(targets))), QElt())
             for i in range(len(p.vars))]
        q = Parallelogram(p.vars, tuple(strips), p.congs, (), None, p.image,
                          f"{p.tag}{''.join(map(str, choice))}")
        out.append((q, _round_into(q, [xi.floor() for xi in x], env)))
    return out


def _round_into(q: Parallelogram, x, env) -> tuple:
    """Nearest point (by small standard offsets) satisfying the congruences."""
    mod = _lcm(*[c.modulus for c in q.congs]) if q.congs else 1
    n = len(x)
    for offs in sorted(itertools.product(range(mod), repeat=n), key=lambda o: (sum(o), o)):
        pt = tuple(simplify_value(xi + o) for xi, o in zip(x, offs))
        if q.contains(pt, env):
            return pt
    raise GeometryError("piece has no point near its center")
