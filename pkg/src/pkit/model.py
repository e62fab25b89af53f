"""Elements of Z and of the nonstandard Z-group Q^k x_lex Z, and QF evaluation.

An element ``(q_1, ..., q_k; z)`` stands for ``q_1*inf_1 + ... + q_k*inf_k + z``
where ``inf_1 >> inf_2 >> ... >> 1``.  With ``k = 0`` it is a standard integer.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Union

from pkit.formula import (
    And, Atom, Bottom, Exists, Forall, Formula, Not, Or, Rel, Top,
)


class UnboundVariable(KeyError):
    pass


def _norm_q(q) -> tuple:
    if isinstance(q, (int, Fraction, str)):
        q = (q,)
    q = [Fraction(v) for v in q]
    while q and q[-1] == 0:
        q.pop()
    return tuple(q)


@dataclass(frozen=True, eq=False)
class ModelElement:
    """``q`` holds the archimedean parts (most significant first), ``z`` the
    standard part.  Order is lexicographic, addition componentwise."""

    q: tuple = ()
    z: int = 0

    def __post_init__(self):
        object.__setattr__(self, "q", _norm_q(self.q))
        if not isinstance(self.z, int):
            z = Fraction(self.z)
            if z.denominator != 1:
                raise ValueError(f"standard part must be an integer, got {self.z}")
            object.__setattr__(self, "z", int(z))

    # -- coercion ------------------------------------------------------
    @staticmethod
    def coerce(v) -> "ModelElement":
        if isinstance(v, ModelElement):
            return v
        if isinstance(v, bool):
            raise TypeError("bool is not a model element")
        if isinstance(v, int):
            return ModelElement((), v)
        if isinstance(v, Fraction) and v.denominator == 1:
            return ModelElement((), int(v))
        raise TypeError(f"cannot coerce {v!r} to a model element")

    @property
    def rank(self) -> int:
        return len(self.q)

    def is_finite(self) -> bool:
        return not self.q

    def _key(self, k: int):
        return tuple(self.q) + (Fraction(0),) * (k - len(self.q)) + (self.z,)

    def _cmp(self, other) -> int:
        o = ModelElement.coerce(other)
        k = max(len(self.q), len(o.q))
        a, b = self._key(k), o._key(k)
        return (a > b) - (a < b)

    def __eq__(self, other):
        try:
            return self._cmp(other) == 0
        except TypeError:
            return NotImplemented

    def __hash__(self):
        if not self.q:
            return hash(self.z)
        return hash((self.q, self.z))

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        try:
            o = ModelElement.coerce(other)
        except TypeError:
            return NotImplemented
        k = max(len(self.q), len(o.q))
        a = self.q + (Fraction(0),) * (k - len(self.q))
        b = o.q + (Fraction(0),) * (k - len(o.q))
        return ModelElement(tuple(x + y for x, y in zip(a, b)), self.z + o.z)

    __radd__ = __add__

    def __neg__(self):
        return ModelElement(tuple(-x for x in self.q), -self.z)

    def __sub__(self, other):
        try:
            return self + (-ModelElement.coerce(other))
        except TypeError:
            return NotImplemented

    def __rsub__(self, other):
        return ModelElement.coerce(other) - self

    def __mul__(self, k):
        if isinstance(k, bool) or not isinstance(k, int):
            return NotImplemented
        return ModelElement(tuple(x * k for x in self.q), self.z * k)

    __rmul__ = __mul__

    def __abs__(self):
        return -self if self < 0 else self

    def residue(self, n: int) -> int:
        """Residue mod n.  The archimedean part is n-divisible, so only z counts."""
        return self.z % n

    def divisible(self, n: int) -> bool:
        return self.z % n == 0

    def exact_div(self, n: int) -> "ModelElement":
        if n <= 0 or self.z % n:
            raise ValueError(f"{self} is not divisible by {n}")
        return ModelElement(tuple(x / n for x in self.q), self.z // n)

    def scale(self, r, rounding: str = "floor") -> "ModelElement":
        """Nearest element to ``r*self`` (r rational) in the given direction."""
        r = Fraction(r)
        z = self.z * r
        if rounding == "floor":
            zi = math.floor(z)
        elif rounding == "ceil":
            zi = math.ceil(z)
        else:
            raise ValueError(rounding)
        return ModelElement(tuple(x * r for x in self.q), zi)

    def floordiv(self, n: int) -> "ModelElement":
        return self.scale(Fraction(1, n), "floor")

    def ceildiv(self, n: int) -> "ModelElement":
        return self.scale(Fraction(1, n), "ceil")

    # -- text / json ---------------------------------------------------
    def __str__(self):
        return format_element(self)

    def __repr__(self):
        return f"ModelElement({format_element(self)})"

    def to_json(self):
        if len(self.q) <= 1:
            q = str(self.q[0]) if self.q else "0"
        else:
            q = [str(x) for x in self.q]
        return {"q": q, "z": str(self.z)}


Value = Union[int, ModelElement]

ZERO = ModelElement()
ONE = ModelElement((), 1)


def inf(q=1, z: int = 0, cls: int = 0) -> ModelElement:
    """``q*inf_{cls+1} + z``."""
    qs = [Fraction(0)] * cls + [Fraction(q)]
    return ModelElement(tuple(qs), z)


def as_element(v) -> ModelElement:
    return ModelElement.coerce(v)


def is_finite(e) -> bool:
    return isinstance(e, int) or ModelElement.coerce(e).is_finite()


def interval_infinite(lo, hi) -> bool:
    lo, hi = as_element(lo), as_element(hi)
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    return not (hi - lo).is_finite()


def residue(v, n: int) -> int:
    if isinstance(v, int):
        return v % n
    return v.residue(n)


def simplify_value(v):
    """Return a plain int for standard elements."""
    if isinstance(v, ModelElement) and not v.q:
        return v.z
    return v


def format_element(e) -> str:
    e = as_element(e)
    parts = []
    for i, q in enumerate(e.q):
        if q == 0:
            continue
        name = "inf" if i == 0 else f"inf{i + 1}"
        parts.append(f"{name}*{q}")
    if e.z or not parts:
        parts.append(str(e.z))
    out = parts[0]
    for p in parts[1:]:
        out += f" - {p[1:]}" if p.startswith("-") else f" + {p}"
    return out


_ELT_TERM = re.compile(r"\s*([+-])?\s*(?:(inf(\d*))\s*\*\s*([+-]?\d+(?:/\d+)?)|(inf(\d*))|(\d+))\s*")


def parse_element(text) -> ModelElement:
    """Parse ``inf*1/2 + 3``, ``inf2*-1 + inf*3``, plain integers, or the JSON form."""
    if isinstance(text, ModelElement):
        return text
    if isinstance(text, int):
        return ModelElement((), text)
    if isinstance(text, dict):
        q = text.get("q", "0")
        q = [q] if isinstance(q, (str, int)) else list(q)
        return ModelElement(tuple(Fraction(x) for x in q), int(text.get("z", 0)))
    s = str(text).strip()
    if not s:
        raise ValueError("empty element literal")
    qs: dict = {}
    z = 0
    pos = 0
    first = True
    while pos < len(s):
        m = _ELT_TERM.match(s, pos)
        if not m or m.end() == pos or (not first and m.group(1) is None):
            raise ValueError(f"bad element literal {text!r} at column {pos + 1}")
        sign = -1 if m.group(1) == "-" else 1
        if m.group(2):
            cls = int(m.group(3) or 1) - 1
            qs[cls] = qs.get(cls, 0) + sign * Fraction(m.group(4))
        elif m.group(5):
            cls = int(m.group(6) or 1) - 1
            qs[cls] = qs.get(cls, 0) + sign
        else:
            z += sign * int(m.group(7))
        pos = m.end()
        first = False
    k = max(qs) + 1 if qs else 0
    return ModelElement(tuple(qs.get(i, 0) for i in range(k)), z)


# ---------------------------------------------------------------------------
# evaluation


def eval_term(term, env: Mapping[str, Value]):
    total = term.const
    for v, c in term.coeffs:
        try:
            val = env[v]
        except KeyError:
            raise UnboundVariable(v) from None
        total = total + c * val
    return total


def eval_atom(atom: Atom, env: Mapping[str, Value]) -> bool:
    lhs = eval_term(atom.lhs, env)
    rhs = eval_term(atom.rhs, env)
    op = atom.op
    if op is Rel.CONG:
        return residue(lhs - rhs, atom.modulus) == 0
    if op is Rel.EQ:
        return lhs == rhs
    if op is Rel.LE:
        return lhs <= rhs
    if op is Rel.LT:
        return lhs < rhs
    if op is Rel.GE:
        return lhs >= rhs
    if op is Rel.GT:
        return lhs > rhs
    raise ValueError(op)


def evaluate(f: Formula, assignment: Mapping[str, Value], model: str = "Z",
             window: tuple | None = None) -> bool:
    """Truth of ``f`` at ``assignment``.

    Quantified formulas are only evaluated over standard Z and only with an
    explicit ``window = (lo, hi)``; the answer is then approximate (it only
    searches witnesses inside the window).  Route exact quantified questions
    through :mod:`pkit.qe`.
    """
    if model not in ("Z", "M"):
        raise ValueError(f"unknown model {model!r}")
    if model == "Z":
        for k, v in assignment.items():
            if isinstance(v, ModelElement) and v.q:
                raise ValueError(f"{k} = {v} is not a standard integer")
    return _eval(f, dict(assignment), model, window)


def _eval(f, env, model, window):
    if isinstance(f, Atom):
        return eval_atom(f, env)
    if isinstance(f, Top):
        return True
    if isinstance(f, Bottom):
        return False
    if isinstance(f, And):
        return all(_eval(a, env, model, window) for a in f.args)
    if isinstance(f, Or):
        return any(_eval(a, env, model, window) for a in f.args)
    if isinstance(f, Not):
        return not _eval(f.arg, env, model, window)
    if isinstance(f, (Exists, Forall)):
        if model != "Z" or window is None:
            raise ValueError("quantified evaluation needs model='Z' and a finite window")
        lo, hi = window
        want = isinstance(f, Exists)
        saved = env.get(f.var, _MISSING)
        try:
            for v in range(lo, hi + 1):
                env[f.var] = v
                if _eval(f.body, env, model, window) == want:
                    return want
            return not want
        finally:
            if saved is _MISSING:
                env.pop(f.var, None)
            else:
                env[f.var] = saved
    raise TypeError(f"not a formula: {f!r}")


_MISSING = object()
