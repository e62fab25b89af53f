"""Terms and formulas of L_Pres = {+, -, <, =_N, 0, 1}: AST, parser, printer, normal forms."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping


# ---------------------------------------------------------------------------
# linear terms


@dataclass(frozen=True)
class LinearTerm:
    """``sum(c * v for v, c in coeffs) + const``; ``coeffs`` sorted, no zeros."""

    coeffs: tuple = ()
    const: int = 0

    @staticmethod
    def of(mapping: Mapping[str, int] | None = None, const: int = 0) -> "LinearTerm":
        items = tuple(sorted((v, int(c)) for v, c in (mapping or {}).items() if c))
        return LinearTerm(items, int(const))

    @staticmethod
    def var(name: str, coeff: int = 1) -> "LinearTerm":
        return LinearTerm.of({name: coeff})

    @staticmethod
    def constant(c: int) -> "LinearTerm":
        return LinearTerm((), int(c))

    @property
    def var_coeffs(self) -> dict:
        return dict(self.coeffs)

    @property
    def vars(self) -> frozenset:
        return frozenset(v for v, _ in self.coeffs)

    def coeff(self, v: str) -> int:
        for name, c in self.coeffs:
            if name == v:
                return c
        return 0

    def is_const(self) -> bool:
        return not self.coeffs

    def _combine(self, other: "LinearTerm", sign: int) -> "LinearTerm":
        d = dict(self.coeffs)
        for v, c in other.coeffs:
            d[v] = d.get(v, 0) + sign * c
        return LinearTerm.of(d, self.const + sign * other.const)

    def __add__(self, other):
        if isinstance(other, int):
            return LinearTerm(self.coeffs, self.const + other)
        return self._combine(other, 1)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, int):
            return LinearTerm(self.coeffs, self.const - other)
        return self._combine(other, -1)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return LinearTerm(tuple((v, -c) for v, c in self.coeffs), -self.const)

    def __mul__(self, k: int):
        if not isinstance(k, int):
            return NotImplemented
        if k == 0:
            return LinearTerm()
        return LinearTerm(tuple((v, c * k) for v, c in self.coeffs), self.const * k)

    __rmul__ = __mul__

    def without(self, v: str) -> "LinearTerm":
        return LinearTerm(tuple((n, c) for n, c in self.coeffs if n != v), self.const)

    def var_part(self) -> "LinearTerm":
        return LinearTerm(self.coeffs, 0)

    def content(self) -> int:
        """gcd of the variable coefficients (0 for constants)."""
        g = 0
        for _, c in self.coeffs:
            g = math.gcd(g, c)
        return g

    def substitute(self, v: str, t: "LinearTerm") -> "LinearTerm":
        c = self.coeff(v)
        if not c:
            return self
        return self.without(v) + t * c

    def rename(self, mapping: Mapping[str, str]) -> "LinearTerm":
        d: dict = {}
        for v, c in self.coeffs:
            w = mapping.get(v, v)
            d[w] = d.get(w, 0) + c
        return LinearTerm.of(d, self.const)

    def evaluate(self, env):
        total = self.const
        for v, c in self.coeffs:
            total = total + c * env[v]
        return total

    def __str__(self):
        return print_term(self)


def print_term(t: LinearTerm) -> str:
    parts = []
    for v, c in t.coeffs:
        mag = abs(c)
        body = v if mag == 1 else f"{mag}*{v}"
        parts.append(("-" if c < 0 else "+", body))
    if t.const or not parts:
        parts.append(("-" if t.const < 0 else "+", str(abs(t.const))))
    sign, body = parts[0]
    out = ("-" if sign == "-" else "") + body
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out


# raw (un-normalized) terms -------------------------------------------------


@dataclass(frozen=True)
class RVar:
    name: str


@dataclass(frozen=True)
class RNum:
    value: int


@dataclass(frozen=True)
class RAdd:
    left: object
    right: object


@dataclass(frozen=True)
class RSub:
    left: object
    right: object


@dataclass(frozen=True)
class RNeg:
    arg: object


@dataclass(frozen=True)
class RScale:
    k: int
    arg: object


def normalize_term(raw) -> LinearTerm:
    """Collapse a raw term into ``s*x + sum k_i a_i + l``."""
    if isinstance(raw, LinearTerm):
        return raw
    if isinstance(raw, RVar):
        return LinearTerm.var(raw.name)
    if isinstance(raw, RNum):
        return LinearTerm.constant(raw.value)
    if isinstance(raw, RAdd):
        return normalize_term(raw.left) + normalize_term(raw.right)
    if isinstance(raw, RSub):
        return normalize_term(raw.left) - normalize_term(raw.right)
    if isinstance(raw, RNeg):
        return -normalize_term(raw.arg)
    if isinstance(raw, RScale):
        return normalize_term(raw.arg) * raw.k
    if isinstance(raw, int):
        return LinearTerm.constant(raw)
    if isinstance(raw, str):
        return LinearTerm.var(raw)
    raise TypeError(f"not a term: {raw!r}")


def eval_raw(raw, env):
    if isinstance(raw, RVar):
        return env[raw.name]
    if isinstance(raw, RNum):
        return raw.value
    if isinstance(raw, RAdd):
        return eval_raw(raw.left, env) + eval_raw(raw.right, env)
    if isinstance(raw, RSub):
        return eval_raw(raw.left, env) - eval_raw(raw.right, env)
    if isinstance(raw, RNeg):
        return -eval_raw(raw.arg, env)
    if isinstance(raw, RScale):
        return raw.k * eval_raw(raw.arg, env)
    raise TypeError(raw)


# ---------------------------------------------------------------------------
# formulas


class Rel(enum.Enum):
    EQ = "=="
    LE = "<="
    GE = ">="
    LT = "<"
    GT = ">"
    CONG = "==="


class Formula:
    __slots__ = ()

    def __and__(self, other):
        return conj(self, other)

    def __or__(self, other):
        return disj(self, other)

    def __invert__(self):
        return Not(self)

    def __str__(self):
        return print_formula(self)


@dataclass(frozen=True, eq=True)
class Atom(Formula):
    op: Rel
    lhs: LinearTerm
    rhs: LinearTerm
    modulus: int | None = None

    def __post_init__(self):
        if self.op is Rel.CONG:
            if self.modulus is None or self.modulus < 2:
                raise ValueError(f"congruence modulus must be >= 2, got {self.modulus}")
            if self.rhs.is_const() and not 0 <= self.rhs.const < self.modulus:
                object.__setattr__(self, "rhs", LinearTerm.constant(self.rhs.const % self.modulus))
        elif self.modulus is not None:
            raise ValueError("modulus only allowed on congruences")

    @property
    def residue(self) -> int | None:
        return self.rhs.const if self.op is Rel.CONG and self.rhs.is_const() else None

    def diff(self) -> LinearTerm:
        return self.lhs - self.rhs


@dataclass(frozen=True)
class And(Formula):
    args: tuple


@dataclass(frozen=True)
class Or(Formula):
    args: tuple


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class Forall(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class Top(Formula):
    pass


@dataclass(frozen=True)
class Bottom(Formula):
    pass


TRUE = Top()
FALSE = Bottom()


def _t(x) -> LinearTerm:
    return normalize_term(x)


def eq(a, b) -> Atom:
    return Atom(Rel.EQ, _t(a), _t(b))


def le(a, b) -> Atom:
    return Atom(Rel.LE, _t(a), _t(b))


def ge(a, b) -> Atom:
    return Atom(Rel.GE, _t(a), _t(b))


def lt(a, b) -> Atom:
    return Atom(Rel.LT, _t(a), _t(b))


def gt(a, b) -> Atom:
    return Atom(Rel.GT, _t(a), _t(b))


def cong(a, b, n: int) -> Formula:
    if n == 1:
        return TRUE
    return Atom(Rel.CONG, _t(a), _t(b), n)


def conj(*args) -> Formula:
    """Flattening, simplifying conjunction."""
    out = []
    for a in args:
        if isinstance(a, (list, tuple)):
            a = conj(*a)
        if isinstance(a, Bottom):
            return FALSE
        if isinstance(a, Top):
            continue
        if isinstance(a, And):
            out.extend(a.args)
        else:
            out.append(a)
    out = list(dict.fromkeys(out))
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return And(tuple(out))


def disj(*args) -> Formula:
    out = []
    for a in args:
        if isinstance(a, (list, tuple)):
            a = disj(*a)
        if isinstance(a, Top):
            return TRUE
        if isinstance(a, Bottom):
            continue
        if isinstance(a, Or):
            out.extend(a.args)
        else:
            out.append(a)
    out = list(dict.fromkeys(out))
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return Or(tuple(out))


def neg(f: Formula) -> Formula:
    if isinstance(f, Top):
        return FALSE
    if isinstance(f, Bottom):
        return TRUE
    if isinstance(f, Not):
        return f.arg
    return Not(f)


def implies(a, b) -> Formula:
    return disj(neg(a), b)


def iff(a, b) -> Formula:
    return conj(implies(a, b), implies(b, a))


def exists(vs, body) -> Formula:
    if isinstance(vs, str):
        vs = [vs]
    for v in reversed(list(vs)):
        body = Exists(v, body)
    return body


def forall(vs, body) -> Formula:
    if isinstance(vs, str):
        vs = [vs]
    for v in reversed(list(vs)):
        body = Forall(v, body)
    return body


def free_vars(f: Formula) -> frozenset:
    if isinstance(f, Atom):
        return f.lhs.vars | f.rhs.vars
    if isinstance(f, (And, Or)):
        out = frozenset()
        for a in f.args:
            out |= free_vars(a)
        return out
    if isinstance(f, Not):
        return free_vars(f.arg)
    if isinstance(f, (Exists, Forall)):
        return free_vars(f.body) - {f.var}
    return frozenset()


def all_vars(f: Formula) -> frozenset:
    if isinstance(f, Atom):
        return f.lhs.vars | f.rhs.vars
    if isinstance(f, (And, Or)):
        out = frozenset()
        for a in f.args:
            out |= all_vars(a)
        return out
    if isinstance(f, Not):
        return all_vars(f.arg)
    if isinstance(f, (Exists, Forall)):
        return all_vars(f.body) | {f.var}
    return frozenset()


def is_quantifier_free(f: Formula) -> bool:
    if isinstance(f, (Exists, Forall)):
        return False
    if isinstance(f, (And, Or)):
        return all(is_quantifier_free(a) for a in f.args)
    if isinstance(f, Not):
        return is_quantifier_free(f.arg)
    return True


def node_count(f: Formula) -> int:
    if isinstance(f, (And, Or)):
        return 1 + sum(node_count(a) for a in f.args)
    if isinstance(f, Not):
        return 1 + node_count(f.arg)
    if isinstance(f, (Exists, Forall)):
        return 1 + node_count(f.body)
    return 1


def fresh_name(base: str, avoid: Iterable[str]) -> str:
    avoid = set(avoid)
    i = 0
    while True:
        name = f"{base}_{i}"
        if name not in avoid:
            return name
        i += 1


def substitute(f: Formula, mapping: Mapping[str, LinearTerm]) -> Formula:
    """Capture-avoiding substitution of terms for free variables."""
    mapping = {k: _t(v) for k, v in mapping.items()}
    if not mapping:
        return f
    if isinstance(f, Atom):
        lhs, rhs = f.lhs, f.rhs
        for v, t in mapping.items():
            lhs = lhs.substitute(v, t)
            rhs = rhs.substitute(v, t)
        # substitute simultaneously: the loop is sequential, so guard clashes
        if any(v in t.vars for t in mapping.values() for v in mapping):
            lhs, rhs = _simul(f.lhs, mapping), _simul(f.rhs, mapping)
        return Atom(f.op, lhs, rhs, f.modulus)
    if isinstance(f, And):
        return And(tuple(substitute(a, mapping) for a in f.args))
    if isinstance(f, Or):
        return Or(tuple(substitute(a, mapping) for a in f.args))
    if isinstance(f, Not):
        return Not(substitute(f.arg, mapping))
    if isinstance(f, (Exists, Forall)):
        inner = {k: v for k, v in mapping.items() if k != f.var}
        if not inner:
            return f
        incoming = set()
        for t in inner.values():
            incoming |= t.vars
        var, body = f.var, f.body
        if var in incoming:
            new = fresh_name(var, incoming | all_vars(body) | set(inner))
            body = substitute(body, {var: LinearTerm.var(new)})
            var = new
        return type(f)(var, substitute(body, inner))
    return f


def _simul(t: LinearTerm, mapping) -> LinearTerm:
    out = LinearTerm((), t.const)
    for v, c in t.coeffs:
        out = out + (mapping[v] * c if v in mapping else LinearTerm.var(v, c))
    return out


def rename(f: Formula, mapping: Mapping[str, str]) -> Formula:
    return substitute(f, {k: LinearTerm.var(v) for k, v in mapping.items()})


# ---------------------------------------------------------------------------
# printer


_PREC = {"quant": 0, "or": 2, "and": 3, "not": 4, "atom": 5}


def _kind(f):
    if isinstance(f, (Exists, Forall)):
        return "quant"
    if isinstance(f, Or):
        return "or"
    if isinstance(f, And):
        return "and"
    if isinstance(f, Not):
        return "not"
    return "atom"


def print_formula(f: Formula) -> str:
    if isinstance(f, Top):
        return "true"
    if isinstance(f, Bottom):
        return "false"
    if isinstance(f, Atom):
        if f.op is Rel.CONG:
            return f"{print_term(f.lhs)} === {print_term(f.rhs)} mod {f.modulus}"
        return f"{print_term(f.lhs)} {f.op.value} {print_term(f.rhs)}"
    if isinstance(f, Not):
        inner = print_formula(f.arg)
        if _kind(f.arg) in ("atom", "not"):
            return f"not {inner}"
        return f"not ({inner})"
    if isinstance(f, (Exists, Forall)):
        kw = "exists" if isinstance(f, Exists) else "forall"
        return f"{kw} {f.var}. {print_formula(f.body)}"
    if isinstance(f, (And, Or)):
        kind = _kind(f)
        word = f" {kind} "
        parts = []
        for a in f.args:
            s = print_formula(a)
            # any nested binary node or quantifier is parenthesized so that
            # the tree shape survives a round trip
            if _kind(a) in ("quant", "or", "and"):
                s = f"({s})"
            parts.append(s)
        if len(parts) < 2:
            raise ValueError("And/Or need at least two arguments to print")
        return word.join(parts)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# parser


class ParseError(ValueError):
    def __init__(self, msg, line, col):
        super().__init__(f"{msg} at line {line}, column {col}")
        self.line = line
        self.col = col


_SYMBOLS = ["<->", "===", "==", "!=", "<=", ">=", "->", "<", ">", "+", "-", "*", "(", ")", ".", ","]
_KEYWORDS = {"exists", "forall", "and", "or", "not", "true", "false", "mod"}


@dataclass
class _Tok:
    kind: str  # ident, int, sym, kw, eof
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list:
    toks = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(_Tok("int", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_'"):
                j += 1
            word = text[i:j]
            toks.append(_Tok("kw" if word in _KEYWORDS else "ident", word, line, col))
            col += j - i
            i = j
            continue
        for s in _SYMBOLS:
            if text.startswith(s, i):
                toks.append(_Tok("sym", s, line, col))
                i += len(s)
                col += len(s)
                break
        else:
            raise ParseError(f"unknown symbol {ch!r}", line, col)
    toks.append(_Tok("eof", "", line, col))
    return toks


_RELOPS = {"==": Rel.EQ, "<=": Rel.LE, ">=": Rel.GE, "<": Rel.LT, ">": Rel.GT}


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def accept(self, text):
        if self.tok.text == text and self.tok.kind in ("sym", "kw"):
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            shown = self.tok.text or "end of input"
            self.error(f"expected {text!r}, found {shown!r}")

    # formula := quant | iff
    def formula(self):
        if self.tok.kind == "kw" and self.tok.text in ("exists", "forall"):
            kw = self.tok.text
            self.i += 1
            names = [self.ident()]
            while self.accept(","):
                names.append(self.ident())
            self.expect(".")
            body = self.formula()
            ctor = Exists if kw == "exists" else Forall
            for v in reversed(names):
                body = ctor(v, body)
            return body
        return self.iff()

    def ident(self):
        if self.tok.kind != "ident":
            self.error(f"expected identifier, found {self.tok.text or 'end of input'!r}")
        name = self.tok.text
        self.i += 1
        return name

    def iff(self):
        left = self.imp()
        while self.accept("<->"):
            right = self.quant_or(self.imp)
            left = And((Or((Not(left), right)), Or((Not(right), left))))
        return left

    def imp(self):
        left = self.disj()
        if self.accept("->"):
            right = self.quant_or(self.imp)
            return Or((Not(left), right))
        return left

    def quant_or(self, fn):
        if self.tok.kind == "kw" and self.tok.text in ("exists", "forall"):
            return self.formula()
        return fn()

    def disj(self):
        args = [self.conj()]
        while self.accept("or"):
            args.append(self.quant_or(self.conj))
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conj(self):
        args = [self.unary()]
        while self.accept("and"):
            args.append(self.quant_or(self.unary))
        return args[0] if len(args) == 1 else And(tuple(args))

    def unary(self):
        if self.accept("not"):
            return Not(self.quant_or(self.unary))
        return self.primary()

    def primary(self):
        tok = self.tok
        if self.accept("true"):
            return TRUE
        if self.accept("false"):
            return FALSE
        if tok.kind == "kw" and tok.text in ("exists", "forall"):
            return self.formula()
        if tok.text == "(":
            save = self.i
            try:
                return self.atom()
            except ParseError:
                self.i = save
            self.expect("(")
            f = self.formula()
            self.expect(")")
            return f
        return self.atom()

    def atom(self):
        first = self.term()
        tok = self.tok
        if tok.kind == "sym" and tok.text == "===":
            self.i += 1
            rhs = self.term()
            if not self.accept("mod"):
                self.error("expected 'mod' after congruence")
            mtok = self.tok
            if mtok.kind != "int":
                self.error("expected integer modulus")
            self.i += 1
            n = int(mtok.text)
            if n < 2:
                raise ParseError(f"modulus must be >= 2, got {n}", mtok.line, mtok.col)
            return Atom(Rel.CONG, first, rhs, n)
        if tok.kind == "sym" and tok.text == "!=":
            self.i += 1
            return Not(Atom(Rel.EQ, first, self.term()))
        if not (tok.kind == "sym" and tok.text in _RELOPS):
            self.error(f"expected comparison, found {tok.text or 'end of input'!r}")
        parts = []
        left = first
        while self.tok.kind == "sym" and self.tok.text in _RELOPS:
            op = _RELOPS[self.tok.text]
            self.i += 1
            right = self.term()
            parts.append(Atom(op, left, right))
            left = right
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def term(self):
        return normalize_term(self.raw_term())

    def raw_term(self):
        if self.accept("-"):
            node = RNeg(self.factor())
        else:
            node = self.factor()
        while self.tok.kind == "sym" and self.tok.text in ("+", "-"):
            op = self.tok.text
            self.i += 1
            rhs = self.factor()
            node = RAdd(node, rhs) if op == "+" else RSub(node, rhs)
        return node

    def factor(self):
        tok = self.tok
        if tok.kind == "int":
            self.i += 1
            k = int(tok.text)
            if self.accept("*"):
                return RScale(k, self.factor())
            return RNum(k)
        if tok.kind == "ident":
            self.i += 1
            if self.accept("*"):
                kt = self.tok
                if kt.kind != "int":
                    self.error("'*' needs an integer literal on one side")
                self.i += 1
                return RScale(int(kt.text), RVar(tok.text))
            return RVar(tok.text)
        if self.accept("-"):
            return RNeg(self.factor())
        if self.accept("("):
            t = self.raw_term()
            self.expect(")")
            if self.accept("*"):
                kt = self.tok
                if kt.kind != "int":
                    self.error("'*' needs an integer literal on one side")
                self.i += 1
                return RScale(int(kt.text), t)
            return t
        self.error(f"expected term, found {tok.text or 'end of input'!r}")


def parse(text: str) -> Formula:
    p = _Parser(text)
    f = p.formula()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r}")
    return f


def parse_term(text: str) -> LinearTerm:
    p = _Parser(text)
    t = p.term()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r}")
    return t


def parse_raw_term(text: str):
    p = _Parser(text)
    t = p.raw_term()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r}")
    return t


@dataclass
class PresFile:
    formula: Formula
    params: dict = field(default_factory=dict)
    vars: list | None = None


def parse_pres(text: str) -> PresFile:
    """A ``.pres`` file: optional ``param NAME = <element>`` and ``vars x, y``
    header lines, then one formula."""
    from pkit.model import parse_element

    params: dict = {}
    vars_ = None
    body_lines = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            body_lines.append("")
        elif stripped.startswith("param ") and not any(b.strip() for b in body_lines):
            name, _, val = stripped[len("param "):].partition("=")
            name = name.strip()
            if not name.isidentifier() or not val.strip():
                raise ParseError("malformed param line", lineno, 1)
            params[name] = parse_element(val.strip())
            body_lines.append("")
        elif stripped.startswith("vars ") and not any(b.strip() for b in body_lines):
            vars_ = [v.strip() for v in stripped[5:].split(",") if v.strip()]
            body_lines.append("")
        else:
            body_lines.append(line)
    return PresFile(parse("\n".join(body_lines)), params, vars_)


# ---------------------------------------------------------------------------
# normal forms of atoms with respect to a distinguished variable


@dataclass(frozen=True)
class LinearForm:
    """``num / den`` where ``num`` is a term and the division is exact on the
    guard it comes with."""

    num: LinearTerm
    den: int = 1

    def evaluate(self, env):
        v = self.num.evaluate(env)
        if self.den == 1:
            return v
        if isinstance(v, int):
            if v % self.den:
                raise ValueError(f"{v} not divisible by {self.den}")
            return v // self.den
        return v.exact_div(self.den)

    def __str__(self):
        if self.den == 1:
            return print_term(self.num)
        return f"({print_term(self.num)})/{self.den}"


@dataclass(frozen=True)
class NormalAtom:
    """One of ``x = b``, ``x <= b``, ``x >= b``, ``x =_N c``."""

    kind: str  # "eq", "le", "ge", "cong"
    var: str
    bound: LinearForm | None = None
    modulus: int = 1
    residue: int = 0

    def holds(self, env) -> bool:
        x = env[self.var]
        if self.kind == "cong":
            from pkit.model import residue
            return residue(x, self.modulus) == self.residue % self.modulus
        b = self.bound.evaluate(env)
        if self.kind == "eq":
            return x == b
        if self.kind == "le":
            return x <= b
        return x >= b

    def to_formula(self) -> Formula:
        x = LinearTerm.var(self.var)
        if self.kind == "cong":
            if self.modulus == 1:
                return TRUE
            return cong(x, LinearTerm.constant(self.residue), self.modulus)
        d = self.bound.den
        op = {"eq": Rel.EQ, "le": Rel.LE, "ge": Rel.GE}[self.kind]
        return Atom(op, x * d, self.bound.num)

    def __str__(self):
        if self.kind == "cong":
            return f"{self.var} === {self.residue} mod {self.modulus}"
        sym = {"eq": "==", "le": "<=", "ge": ">="}[self.kind]
        return f"{self.var} {sym} {self.bound}"


def _param_guard(p: LinearTerm, n: int, r: int) -> Formula:
    """Condition ``p = r (mod n)`` on a parameter term (constant folded)."""
    if n == 1:
        return TRUE
    r = (r - p.const) % n
    vp = p.var_part()
    if vp.is_const():
        return TRUE if r == 0 else FALSE
    if vp.coeffs[0][1] < 0:
        vp, r = -vp, (-r) % n
    return Atom(Rel.CONG, vp, LinearTerm.constant(r), n)


def _as_le(atom: Atom) -> tuple:
    """Return (kind, t) with the atom equivalent to ``t <= 0`` / ``t == 0`` / ``t =_N 0``."""
    d = atom.lhs - atom.rhs
    op = atom.op
    if op is Rel.LE:
        return "le", d
    if op is Rel.LT:
        return "le", d + 1
    if op is Rel.GE:
        return "le", -d
    if op is Rel.GT:
        return "le", -d + 1
    if op is Rel.EQ:
        return "eq", d
    return "cong", d


def normalize_atomic(atom: Formula, var: str) -> list:
    """Split ``atom`` into ``[(guard, NormalAtom)]`` so that the atom is
    equivalent to the disjunction of ``guard and normal``.  Guards only
    mention the other variables and are mutually exclusive."""
    if isinstance(atom, Not) and isinstance(atom.arg, Atom):
        raise ValueError("normalize_atomic expects a positive atom")
    if not isinstance(atom, Atom):
        raise TypeError("normalize_atomic expects an atom")
    kind, t = _as_le(atom)
    s = t.coeff(var)
    tau = t.without(var)
    trivial = NormalAtom("cong", var, None, 1, 0)
    if s == 0:
        if tau.is_const():
            ok = {"le": tau.const <= 0, "eq": tau.const == 0,
                  "cong": tau.const % (atom.modulus or 1) == 0}[kind]
            return [(TRUE, trivial)] if ok else []
        return [(atom, trivial)]
    out = []
    if kind == "cong":
        n = atom.modulus
        g = math.gcd(s, n)
        m = n // g
        inv = pow((s // g) % m, -1, m) if m > 1 else 0
        for r in range(n):
            if r % g:
                continue
            guard = _param_guard(tau, n, r)
            if isinstance(guard, Bottom):
                continue
            c = ((-r // g) * inv) % m if m > 1 else 0
            out.append((guard, NormalAtom("cong", var, None, m, c)))
        return out
    if kind == "eq":
        if s < 0:
            s, tau = -s, -tau
        # s*x + tau = 0  <=>  x = -tau/s, needs s | tau
        if s == 1:
            return [(TRUE, NormalAtom("eq", var, LinearForm(-tau, 1)))]
        guard = _param_guard(tau, s, 0)
        if isinstance(guard, Bottom):
            return []
        return [(guard, NormalAtom("eq", var, LinearForm(-tau, s)))]
    # s*x + tau <= 0
    if s > 0:
        # x <= floor(-tau/s)
        for r in range(s):
            guard = _param_guard(tau, s, r)
            if isinstance(guard, Bottom):
                continue
            m = (-r) % s
            out.append((guard, NormalAtom("le", var, LinearForm(-tau - m, s))))
        return out
    a = -s
    # a*x >= tau  ->  x >= ceil(tau/a)
    for r in range(a):
        guard = _param_guard(tau, a, r)
        if isinstance(guard, Bottom):
            continue
        m = (-r) % a
        out.append((guard, NormalAtom("ge", var, LinearForm(tau + m, a))))
    return out


# ---------------------------------------------------------------------------
# B-linear functions and their matrix form


def _exact_div(v, k):
    if k == 1:
        return v
    if isinstance(v, int):
        if v % k:
            raise ValueError(f"{v} is not divisible by {k}")
        return v // k
    return v.exact_div(k)


@dataclass(frozen=True)
class LinearFunction:
    """``f(x) = sum s_i*(x_i - c_i)/k_i + gamma`` on ``x_i = c_i (mod k_i)``.

    ``gamma`` is an integer, a ModelElement, or a LinearTerm over parameter
    names (resolved through the ``params`` mapping at evaluation time)."""

    vars: tuple
    s: tuple
    c: tuple
    k: tuple
    gamma: object = 0

    def __post_init__(self):
        m = len(self.vars)
        if not (len(self.s) == len(self.c) == len(self.k) == m):
            raise ValueError("arity mismatch")
        for ci, ki in zip(self.c, self.k):
            if ki < 1 or not 0 <= ci < ki:
                raise ValueError(f"need 0 <= c < k, got c={ci} k={ki}")

    @staticmethod
    def affine(vars, s, gamma=0) -> "LinearFunction":
        m = len(vars)
        return LinearFunction(tuple(vars), tuple(s), (0,) * m, (1,) * m, gamma)

    def domain_formula(self) -> Formula:
        return conj(*[cong(LinearTerm.var(v), LinearTerm.constant(ci), ki)
                      for v, ci, ki in zip(self.vars, self.c, self.k)])

    def in_domain(self, x: Mapping) -> bool:
        from pkit.model import residue
        return all(residue(x[v], ki) == ci for v, ci, ki in zip(self.vars, self.c, self.k))

    def gamma_value(self, params: Mapping | None = None):
        g = self.gamma
        if isinstance(g, LinearTerm):
            return g.evaluate(params or {})
        return g

    def __call__(self, x: Mapping, params: Mapping | None = None):
        total = self.gamma_value(params)
        for v, si, ci, ki in zip(self.vars, self.s, self.c, self.k):
            total = total + si * _exact_div(x[v] - ci, ki)
        return total

    def coefficients(self) -> tuple:
        return tuple(Fraction(si, ki) for si, ki in zip(self.s, self.k))

    def as_form(self) -> LinearForm:
        """``(sum (L*s_i/k_i)(x_i - c_i) + L*gamma) / L`` with L = lcm(k); gamma must be symbolic or an int."""
        L = 1
        for ki in self.k:
            L = L * ki // math.gcd(L, ki)
        g = self.gamma
        if isinstance(g, int):
            g = LinearTerm.constant(g)
        if not isinstance(g, LinearTerm):
            raise TypeError("as_form needs an integer or symbolic offset")
        num = g * L
        for v, si, ci, ki in zip(self.vars, self.s, self.c, self.k):
            num = num + (LinearTerm.var(v) - ci) * (si * (L // ki))
        return LinearForm(num, L)

    def __str__(self):
        parts = []
        for v, si, ci, ki in zip(self.vars, self.s, self.c, self.k):
            if si == 0:
                continue
            base = v if ci == 0 else f"({v} - {ci})"
            coef = Fraction(si, ki)
            if coef == 1:
                parts.append(base)
            elif coef.denominator == 1:
                parts.append(f"{coef.numerator}*{base}")
            else:
                parts.append(f"{coef}*{base}")
        g = self.gamma
        gs = print_term(g) if isinstance(g, LinearTerm) else str(g)
        if gs != "0" or not parts:
            parts.append(gs)
        return " + ".join(parts)


@dataclass(frozen=True)
class AffineMap:
    """Rows ``A[i]`` applied to ``x - c^i`` plus ``gamma[i]``."""

    A: tuple
    c: tuple
    gamma: tuple

    @property
    def shape(self):
        return len(self.A), (len(self.A[0]) if self.A else 0)

    def __call__(self, x):
        k, m = self.shape
        out = []
        for i in range(k):
            ci = self.c[i * m:(i + 1) * m]
            acc = self.gamma[i]
            for j in range(m):
                a = self.A[i][j]
                if a == 0:
                    continue
                d = x[j] - ci[j]
                if a.denominator == 1:
                    acc = acc + int(a) * d
                else:
                    acc = acc + a.numerator * _exact_div(d, a.denominator)
            out.append(acc)
        return tuple(out)


def matrix_representation(fs) -> AffineMap:
    fs = list(fs)
    if not fs:
        raise ValueError("need at least one function")
    m = len(fs[0].vars)
    if any(len(f.vars) != m for f in fs):
        raise ValueError("functions must share an input arity")
    A = tuple(tuple(Fraction(si, ki) for si, ki in zip(f.s, f.k)) for f in fs)
    c = tuple(ci for f in fs for ci in f.c)
    gamma = tuple(f.gamma for f in fs)
    return AffineMap(A, c, gamma)
