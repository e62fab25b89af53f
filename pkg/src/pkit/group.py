"""Definable groups: axioms by sentence decision, the recentered operations
``x (x)_a y = x a^-1 y`` and ``x (+)_a y = x - a + y``, local linearity, the box on
which the group law is coordinate addition, and the double centralizer."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from pkit.cells import (
    CellDesc, CellError, NotGeneric, decompose, decompose_function, dim, generic_point,
    in_dcl, is_independent,
)
from pkit.formula import (
    FALSE, Formula, LinearTerm, Not, conj, disj, eq, exists, forall, free_vars, iff, implies,
    is_quantifier_free, matrix_representation, neg, parse, substitute,
)
from pkit.geometry import Box, CBox, cbox_around
from pkit.model import ModelElement, as_element, evaluate, parse_element, simplify_value
from pkit.qe import DEFAULT_BUDGET, _prepare_env, decide, eliminate, satisfiable

__all__ = [
    "DefinableGroup", "GroupError", "NotAGroup", "verify_group", "GroupReport",
    "enumerate_group", "FiniteTable", "inverse_of", "local_linearity", "one_sided_linearity",
    "local_addition_box", "abelian_finite_index", "is_generic_finite", "load_group",
    "LocalLinearity", "AdditionBox",
]


class GroupError(ValueError):
    pass


class NotAGroup(GroupError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


def _names(base: str, n: int) -> tuple:
    return (base,) if n == 1 else tuple(f"{base}{i + 1}" for i in range(n))


@dataclass
class DefinableGroup:
    """Carrier ``G(xs)`` and operation graph ``mu(xs, ys, zs)`` with named
    parameters bound in ``params``."""

    n: int
    carrier: Formula
    op: Formula
    params: dict = field(default_factory=dict)
    identity: tuple | None = None
    inverse: Formula | None = None
    bound: object = None
    name: str = "G"
    xs: tuple = ()
    ys: tuple = ()
    zs: tuple = ()

    def __post_init__(self):
        self.xs = tuple(self.xs) or _names("x", self.n)
        self.ys = tuple(self.ys) or _names("y", self.n)
        self.zs = tuple(self.zs) or _names("z", self.n)
        self.params = _prepare_env(self.params)
        if self.identity is not None:
            self.identity = tuple(simplify_value(as_element(v)) for v in self.identity)
        extra = (free_vars(self.carrier) - set(self.xs)) | \
                (free_vars(self.op) - set(self.xs + self.ys + self.zs))
        extra -= set(self.params)
        if extra:
            raise GroupError(f"unbound names in group formulas: {sorted(extra)}")

    # instantiation -------------------------------------------------------
    def G(self, t) -> Formula:
        return substitute(self.carrier, dict(zip(self.xs, _terms(t))))

    def mu(self, a, b, c) -> Formula:
        m = dict(zip(self.xs, _terms(a)))
        m.update(zip(self.ys, _terms(b)))
        m.update(zip(self.zs, _terms(c)))
        return substitute(self.op, m)

    def env(self, *extra) -> dict:
        out = dict(self.params)
        for e in extra:
            out.update(e)
        return _prepare_env(out)

    def to_json(self) -> dict:
        return {"n": self.n, "carrier": str(self.carrier), "op": str(self.op),
                "params": {k: str(as_element(v)) for k, v in sorted(self.params.items())},
                "identity": None if self.identity is None else [str(as_element(v)) for v in self.identity],
                "bound": None if self.bound is None else str(as_element(self.bound))}


def _terms(t) -> list:
    if isinstance(t, (str, int, LinearTerm)):
        t = [t]
    out = []
    for v in t:
        if isinstance(v, str):
            out.append(LinearTerm.var(v))
        elif isinstance(v, int):
            out.append(LinearTerm.constant(v))
        else:
            out.append(v)
    return out


class _Vars:
    """Fresh vector variables for sentences."""

    def __init__(self, g: DefinableGroup):
        self.g = g
        self.k = 0

    def __call__(self, label: str) -> list:
        self.k += 1
        return [f"{label}{self.k}_{i}" for i in range(self.g.n)]


def _point_consts(point, label: str) -> tuple:
    """Terms for a point, naming the nonstandard coordinates."""
    terms, env = [], {}
    for i, v in enumerate(point):
        v = simplify_value(as_element(v))
        if isinstance(v, int):
            terms.append(LinearTerm.constant(v))
        else:
            name = f"{label}_{i}"
            env[name] = v
            terms.append(LinearTerm.var(name))
    return terms, env


def load_group(text: str) -> DefinableGroup:
    """A ``.group`` file: JSON with ``n``, ``carrier``, ``op`` and optional
    ``identity``, ``inverse``, ``params``, ``bound``, ``name``."""
    d = json.loads(text)
    if "n" not in d or "carrier" not in d or "op" not in d:
        raise GroupError("group file needs n, carrier and op")
    params = {k: parse_element(v) for k, v in d.get("params", {}).items()}
    ident = d.get("identity")
    return DefinableGroup(
        n=int(d["n"]), carrier=parse(d["carrier"]), op=parse(d["op"]), params=params,
        identity=None if ident is None else tuple(parse_element(v) for v in ident),
        inverse=parse(d["inverse"]) if d.get("inverse") else None,
        bound=parse_element(d["bound"]) if d.get("bound") is not None else None,
        name=d.get("name", "G"),
    )


# ---------------------------------------------------------------------------
# axioms


@dataclass
class AxiomResult:
    name: str
    ok: bool
    sentence: str
    counterexample: dict | None = None

    def to_json(self):
        ce = None if self.counterexample is None else {
            k: str(as_element(v)) for k, v in sorted(self.counterexample.items())}
        return {"name": self.name, "ok": self.ok, "sentence": self.sentence, "counterexample": ce}


@dataclass
class GroupReport:
    results: list

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)

    def __getitem__(self, name) -> AxiomResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_json(self):
        return {"ok": self.ok, "axioms": [r.to_json() for r in self.results]}


def _axiom(name, vs, hyp, concl, env, budget) -> AxiomResult:
    s = forall(vs, implies(hyp, concl))
    ok = decide(s, env, budget)
    ce = None
    if not ok:
        # the universal prefix is a block; a counterexample falsifies the body
        ce = satisfiable(conj(hyp, neg(concl)), env, order=vs, budget=budget)
    return AxiomResult(name, ok, str(s), ce)


def verify_group(g: DefinableGroup, budget: int = DEFAULT_BUDGET) -> GroupReport:
    """Decide the group axioms for ``(G, mu)``: closure (mu is a total
    function ``G x G -> G``), associativity, identity and inverses."""
    V = _Vars(g)
    env = g.env()
    x, y, z, u, v, w, w2 = (V(s) for s in ("x", "y", "z", "u", "v", "w", "w"))
    res = []
    res.append(_axiom("closure", x + y, conj(g.G(x), g.G(y)),
                      exists(z, conj(g.G(z), g.mu(x, y, z))), env, budget))
    res.append(_axiom("functional", x + y + z + w, conj(g.G(x), g.G(y), g.mu(x, y, z), g.mu(x, y, w)),
                      conj(*[eq(a, b) for a, b in zip(z, w)]), env, budget))
    hyp = conj(g.G(x), g.G(y), g.G(z), g.mu(x, y, u), g.mu(u, z, w), g.mu(y, z, v), g.mu(x, v, w2))
    res.append(_axiom("assoc", x + y + z + u + v + w + w2, hyp,
                      conj(*[eq(a, b) for a, b in zip(w, w2)]), env, budget))
    e = V("e")
    if g.identity is not None:
        eterms, eenv = _point_consts(g.identity, "e")
        env_e = {**env, **eenv}
        res.append(_axiom("identity", x, g.G(x),
                          conj(g.G(eterms), g.mu(eterms, x, x), g.mu(x, eterms, x)), env_e, budget))
        res.append(_axiom("inverse", x, g.G(x),
                          exists(y, conj(g.G(y), g.mu(x, y, eterms), g.mu(y, x, eterms))), env_e, budget))
    else:
        is_id = conj(g.G(e), forall(x, implies(g.G(x), conj(g.mu(e, x, x), g.mu(x, e, x)))))
        s = exists(e, is_id)
        ok = decide(s, env, budget)
        res.append(AxiomResult("identity", ok, str(s)))
        inv = forall(x, implies(g.G(x), exists(y, conj(g.G(y), g.mu(x, y, e), g.mu(y, x, e)))))
        s2 = exists(e, conj(is_id, inv))
        ok2 = ok and decide(s2, env, budget)
        ce = None
        if ok and not ok2:
            eid = find_identity(g, budget)
            eterms, eenv = _point_consts(eid, "e")
            ce = satisfiable(conj(g.G(x), forall(y, neg(conj(g.G(y), g.mu(x, y, eterms),
                                                                 g.mu(y, x, eterms))))),
                             {**env, **eenv}, budget=budget)
        res.append(AxiomResult("inverse", ok2, str(s2), ce))
    return GroupReport(res)


def find_identity(g: DefinableGroup, budget: int = DEFAULT_BUDGET) -> tuple:
    if g.identity is not None:
        return g.identity
    V = _Vars(g)
    e, x = V("e"), V("x")
    is_id = conj(g.G(e), forall(x, implies(g.G(x), conj(g.mu(e, x, x), g.mu(x, e, x)))))
    w = satisfiable(is_id, g.env(), order=e, budget=budget)
    if w is None:
        raise NotAGroup("no identity element")
    return tuple(w[v] for v in e)


def product(g: DefinableGroup, a, b, budget: int = DEFAULT_BUDGET) -> tuple:
    at, aenv = _point_consts(a, "pa")
    bt, benv = _point_consts(b, "pb")
    z = _Vars(g)("z")
    w = satisfiable(g.mu(at, bt, z), g.env(aenv, benv), order=z, budget=budget)
    if w is None:
        raise GroupError("product undefined")
    return tuple(simplify_value(as_element(w[v])) for v in z)


def inverse_of(g: DefinableGroup, a, budget: int = DEFAULT_BUDGET) -> tuple:
    e = find_identity(g, budget)
    at, aenv = _point_consts(a, "pa")
    et, eenv = _point_consts(e, "pe")
    y = _Vars(g)("y")
    f = conj(g.G(y), g.mu(at, y, et))
    w = satisfiable(f, g.env(aenv, eenv), order=y, budget=budget)
    if w is None:
        raise GroupError(f"no inverse for {a}")
    return tuple(simplify_value(as_element(w[v])) for v in y)


# ---------------------------------------------------------------------------
# finite groups by enumeration


@dataclass
class FiniteTable:
    elements: list
    index: dict
    mul: list
    identity: int

    def __len__(self):
        return len(self.elements)

    def op(self, a: tuple, b: tuple) -> tuple:
        return self.elements[self.mul[self.index[a]][self.index[b]]]

    def inv(self, a: tuple) -> tuple:
        i = self.index[a]
        for j in range(len(self.elements)):
            if self.mul[i][j] == self.identity:
                return self.elements[j]
        raise GroupError("no inverse")


MAX_ENUM = 10 ** 6


def enumerate_group(g: DefinableGroup, budget: int = DEFAULT_BUDGET) -> FiniteTable:
    """Cayley table of a group with a finite standard carrier inside the
    bound ``(-alpha, alpha)^n``."""
    if any(isinstance(v, ModelElement) for v in g.params.values()):
        raise GroupError("enumeration needs standard parameters")
    if g.bound is None:
        raise GroupError("enumeration needs a bound")
    a = as_element(g.bound)
    if not a.is_finite():
        raise GroupError("bound is not standard")
    env = g.env()
    carrier = g.carrier if is_quantifier_free(g.carrier) else eliminate(g.carrier, env, budget)
    op = g.op if is_quantifier_free(g.op) else eliminate(g.op, env, budget)
    span = range(-a.z + 1, a.z)
    if len(span) ** g.n > MAX_ENUM:
        raise GroupError("carrier too large to enumerate")
    elems = [p for p in itertools.product(span, repeat=g.n)
             if evaluate(carrier, {**env, **dict(zip(g.xs, p))})]
    index = {p: i for i, p in enumerate(elems)}
    mul = []
    names = g.xs + g.ys + g.zs
    for p in elems:
        row = []
        for q in elems:
            hits = [i for i, r in enumerate(elems)
                    if evaluate(op, {**env, **dict(zip(names, p + q + r))})]
            if len(hits) != 1:
                raise NotAGroup(f"operation is not a function on {p}, {q}")
            row.append(hits[0])
        mul.append(row)
    ident = next((i for i in range(len(elems))
                  if all(mul[i][j] == j == mul[j][i] for j in range(len(elems)))), None)
    if ident is None:
        raise NotAGroup("no identity in the table")
    return FiniteTable(elems, index, mul, ident)


# ---------------------------------------------------------------------------
# local linearity


@dataclass
class LocalLinearity:
    M: object
    N: object
    gamma: tuple
    box_a: CBox
    box_b: CBox | None
    sentence: str
    generic: bool

    def to_json(self):
        def mat(A):
            return [[str(x) for x in row] for row in A.A]
        return {"M": mat(self.M), "N": None if self.N is None else mat(self.N),
                "gamma": [str(as_element(v)) for v in self.gamma],
                "box_a": self.box_a.box.to_json(),
                "box_b": None if self.box_b is None else self.box_b.box.to_json(),
                "sentence": self.sentence, "generic": self.generic}


def _linear_eq(z: str, fn, terms: dict, gname: str) -> Formula:
    """``z = fn(inputs) `` with cleared denominators; fn.gamma is bound to gname."""
    L = 1
    for k in fn.k:
        L = L * k // _gcd(L, k)
    num = LinearTerm.var(gname) * L
    for v, s, c, k in zip(fn.vars, fn.s, fn.c, fn.k):
        num = num + (terms[v] - c) * (s * (L // k))
    return eq(LinearTerm.var(z) * L, num)


def _gcd(a, b):
    while b:
        a, b = b, a % b
    return a


def _piece_at(pieces, point: dict, env):
    for p in pieces:
        if p.cell.contains(point, env) and p.function.in_domain(point):
            return p
    raise CellError("no piece contains the point")


def _split_cbox(cb: CBox, names: Sequence[str], tag: str) -> CBox:
    """Restrict a C-box over (x, y) to the coordinates ``names``."""
    cell = CellDesc(tuple(c for c in cb.cell.coords if c.var in names), cb.cell.params)
    keep = [i for i, v in enumerate(cb.box.vars) if v in names]
    b = cb.box
    box = Box(tuple(b.vars[i] for i in keep), tuple(b.lower[i] for i in keep),
              tuple(b.upper[i] for i in keep), tuple(b.moduli[i] for i in keep),
              tuple(b.residues[i] for i in keep),
              None if b.anchor is None else tuple(b.anchor[i] for i in keep), tag)
    return CBox(cell, box)


def local_linearity(g: DefinableGroup, a, b, budget: int = DEFAULT_BUDGET,
                    require_generic: bool = False) -> LocalLinearity:
    """Affine maps M, N and C-boxes around a and b with
    ``forall x in B_a, y in B_b: x*y = M x + N y + gamma`` decided true."""
    env = g.env()
    a = tuple(simplify_value(as_element(v)) for v in a)
    b = tuple(simplify_value(as_element(v)) for v in b)
    params = list(env.values())
    generic = is_independent(list(a) + list(b), params)
    if require_generic and not generic:
        raise NotGeneric("a and b are not independent generic points")
    inputs = list(g.xs + g.ys)
    point = dict(zip(inputs, a + b))
    fns, cells = [], []
    for k, zk in enumerate(g.zs):
        others = [z for z in g.zs if z != zk]
        graph = conj(g.G(list(g.xs)), g.G(list(g.ys)), exists(others, g.op)) if others else \
            conj(g.G(list(g.xs)), g.G(list(g.ys)), g.op)
        pieces = decompose_function(graph, inputs, zk, env, budget=budget)
        p = _piece_at(pieces, point, env)
        fns.append(p.function)
        cells.append(p.cell)
    # common refinement: the piece cells of every output coordinate
    common = conj(*[c.formula() for c in cells])
    ccells = decompose(common, inputs, env, budget=budget)
    cell = next(c for c in ccells if c.contains(point, env))
    cb = cbox_around(cell, point, env, budget, tag="ll")
    A = matrix_representation(fns)
    n = g.n
    M = type(A)(tuple(row[:n] for row in A.A), A.c, A.gamma)
    N = type(A)(tuple(row[n:] for row in A.A), A.c, A.gamma)
    # certify
    gnames, genv = {}, {}
    for k, fn in enumerate(fns):
        gv = fn.gamma_value(env)
        gnames[k] = f"ll_gamma{k}"
        genv[gnames[k]] = gv
    terms = {v: LinearTerm.var(v) for v in inputs}
    zs = [f"ll_z{k}" for k in range(n)]
    img = conj(*[_linear_eq(zs[k], fns[k], terms, gnames[k]) for k in range(n)])
    body = implies(cb.formula(), exists(zs, conj(img, g.mu(list(g.xs), list(g.ys), zs))))
    graph_vars = list(inputs)
    s = forall(graph_vars, body)
    senv = g.env(cb.env(), genv)
    if not decide(s, senv, budget):
        raise CellError(f"local linearity certification failed: {s}")
    gamma = tuple(fn.gamma_value(env) for fn in fns)
    return LocalLinearity(M, N, gamma, _split_cbox(cb, g.xs, "ba"), _split_cbox(cb, g.ys, "bb"),
                          str(s), generic)


def one_sided_linearity(g: DefinableGroup, a, b, budget: int = DEFAULT_BUDGET,
                        shrink_budget: int = 12) -> LocalLinearity:
    """``x a^-1 b = M x + gamma_1`` on a C-box around a, with values in a C-box around b."""
    env = g.env()
    a = tuple(simplify_value(as_element(v)) for v in a)
    b = tuple(simplify_value(as_element(v)) for v in b)
    c = product(g, inverse_of(g, a, budget), b, budget)
    ct, cenv = _point_consts(c, "os_c")
    env_c = g.env(cenv)
    xs = list(g.xs)
    fns, cells = [], []
    zt = list(g.zs)
    point = dict(zip(xs, a))
    for k, zk in enumerate(zt):
        others = [z for z in zt if z != zk]
        graph = conj(g.G(xs), g.mu(xs, ct, zt))
        if others:
            graph = exists(others, graph)
        pieces = decompose_function(graph, xs, zk, env_c, budget=budget)
        p = _piece_at(pieces, point, env_c)
        fns.append(p.function)
        cells.append(p.cell)
    common = conj(*[c_.formula() for c_ in cells])
    cell = next(c_ for c_ in decompose(common, xs, env_c, budget=budget) if c_.contains(point, env_c))
    cb = cbox_around(cell, point, env_c, budget, tag="os")
    # a C-box around b in the carrier
    bcells = decompose(g.carrier, list(g.xs), env, budget=budget)
    bpoint = dict(zip(g.xs, b))
    bcell = next(c_ for c_ in bcells if c_.contains(bpoint, env))
    yb_vars = [f"ob_{v}" for v in g.xs]
    ren = {v: w for v, w in zip(g.xs, yb_vars)}
    bcb0 = cbox_around(bcell, bpoint, env, budget, tag="ob")
    genv = {f"os_gamma{k}": fn.gamma_value(env_c) for k, fn in enumerate(fns)}
    terms = {v: LinearTerm.var(v) for v in xs}
    zs = [f"os_z{k}" for k in range(g.n)]
    img = conj(*[_linear_eq(zs[k], fns[k], terms, f"os_gamma{k}") for k in range(g.n)])
    in_b = substitute(bcb0.formula(), {v: LinearTerm.var(z) for v, z in zip(g.xs, zs)})
    box = cb.box
    for _ in range(shrink_budget):
        cur = CBox(cb.cell, box)
        body = implies(cur.formula(), exists(zs, conj(img, g.mu(xs, ct, zs), in_b)))
        s = forall(xs, body)
        if decide(s, g.env(cenv, cur.env(), bcb0.env(), genv), budget):
            A = matrix_representation(fns)
            gamma = tuple(fn.gamma_value(env_c) for fn in fns)
            return LocalLinearity(A, None, gamma, cur, bcb0, str(s),
                                  is_independent(list(a) + list(b), list(env.values())))
        box = box.shrink(Fraction(1, 2))
    raise CellError("no certifiable box for the one-sided map within the shrink budget")


# ---------------------------------------------------------------------------
# the box where x a^-1 y = x - a + y


@dataclass
class AdditionBox:
    a: tuple
    a_inv: tuple
    cbox: CBox | None
    sentence: str
    tries: int
    generic: bool
    vars: tuple = ()

    def formula(self, vars=None) -> Formula:
        """Membership in the box; the singleton {a} when there is no C-box."""
        if self.cbox is None:
            terms, _ = _point_consts(self.a, "ab_a")
            f = conj(*[eq(LinearTerm.var(v), t) for v, t in zip(self.vars, terms)])
            own = self.vars
        else:
            f = self.cbox.formula()
            own = self.cbox.cell.vars
        if vars is not None:
            f = substitute(f, {v: LinearTerm.var(w) for v, w in zip(own, vars)})
        return f

    def env(self) -> dict:
        if self.cbox is None:
            return _point_consts(self.a, "ab_a")[1]
        return self.cbox.env()

    def to_json(self):
        return {"a": [str(as_element(v)) for v in self.a],
                "a_inv": [str(as_element(v)) for v in self.a_inv],
                "box": None if self.cbox is None else self.cbox.box.to_json(),
                "singleton": self.cbox is None, "sentence": self.sentence,
                "tries": self.tries, "generic": self.generic}


def _otimes(g: DefinableGroup, ainv_t, x, y, w, V) -> Formula:
    u = V("u")
    return exists(u, conj(g.mu(x, ainv_t, u), g.mu(u, y, w)))


def local_addition_box(g: DefinableGroup, a, budget: int = DEFAULT_BUDGET,
                       shrink_budget: int = 12) -> AdditionBox:
    """A C-box around a on which ``x a^-1 y = x - a + y`` is decided true,
    found by shrinking the largest C-box around a inside the carrier.  When
    a has finite margins in its cell (for instance in a finite group) the box
    is the singleton {a}."""
    env = g.env()
    a = tuple(simplify_value(as_element(v)) for v in a)
    ainv = inverse_of(g, a, budget)
    at, aenv = _point_consts(a, "ab_a")
    it, ienv = _point_consts(ainv, "ab_i")
    V = _Vars(g)
    xs = list(g.xs)
    generic = is_independent(list(a), list(env.values()))
    cells = decompose(g.carrier, xs, env, budget=budget)
    point = dict(zip(xs, a))
    cell = next((c for c in cells if c.contains(point, env)), None)
    if cell is None:
        raise GroupError("a is not in the carrier")
    try:
        cb = cbox_around(cell, point, env, budget, tag="lab")
    except NotGeneric:
        cb = None
    if cb is None:
        w = V("w")
        s = exists(w, conj(g.mu(at, it, w), g.mu(w, at, at)))
        if not decide(s, g.env(aenv, ienv), budget):
            raise GroupError("a a^-1 a != a")
        return AdditionBox(a, ainv, None, str(s), 1, generic, tuple(g.xs))
    box = cb.box
    y_vars = V("y")
    for tries in range(1, shrink_budget + 1):
        cur = CBox(cb.cell, box)
        bx = cur.formula()
        by = substitute(bx, {v: LinearTerm.var(w) for v, w in zip(xs, y_vars)})
        target = [LinearTerm.var(x) - t + LinearTerm.var(y) for x, t, y in zip(xs, at, y_vars)]
        s = forall(xs + y_vars, implies(conj(bx, by), _otimes(g, it, xs, y_vars, target, V)))
        if decide(s, g.env(aenv, ienv, cur.env()), budget):
            return AdditionBox(a, ainv, cur, str(s), tries, generic, tuple(g.xs))
        box = box.shrink(Fraction(1, 2))
    raise GroupError(f"no certifiable addition box within {shrink_budget} shrinks")


# ---------------------------------------------------------------------------
# the double centralizer


@dataclass
class AbelianReport:
    a: tuple
    box: AdditionBox
    H: DefinableGroup
    abelian: bool
    subgroup: bool
    contains_box: bool
    dim_H: int | None
    dim_G: int | None
    iso_hom: bool
    iso_bij: bool
    sentences: dict

    @property
    def ok(self) -> bool:
        return (self.abelian and self.subgroup and self.contains_box and self.iso_hom
                and self.iso_bij and self.dim_H == self.dim_G)

    def to_json(self):
        return {"a": [str(as_element(v)) for v in self.a], "box": self.box.to_json(),
                "H": str(self.H.carrier), "abelian": self.abelian, "subgroup": self.subgroup,
                "contains_box": self.contains_box, "dim_H": self.dim_H, "dim_G": self.dim_G,
                "isomorphism": {"homomorphism": self.iso_hom, "bijective": self.iso_bij},
                "ok": self.ok, "sentences": self.sentences}


def default_center(g: DefinableGroup, budget: int = DEFAULT_BUDGET) -> tuple:
    """A generic point of a top-dimensional cell of the carrier, or the
    identity when the carrier is finite."""
    env = g.env()
    cells = decompose(g.carrier, list(g.xs), env, budget=budget)
    if not cells:
        raise NotAGroup("empty carrier")
    top = max(cells, key=lambda c: c.dim)
    try:
        p = generic_point(top, env)
    except NotGeneric:
        # finite fibers: no generic point, the box will be a singleton
        return find_identity(g, budget)
    return tuple(p[v] for v in g.xs)


def abelian_finite_index(g: DefinableGroup, a=None, budget: int = DEFAULT_BUDGET,
                         check_group: bool = True) -> AbelianReport:
    """``H = C(C(B_a))`` in ``(G, (x)_a)`` with certificates that H is an abelian
    subgroup containing B_a of full dimension, and that ``x -> x a`` is an
    isomorphism ``(G, *) -> (G, (x)_a)``."""
    if check_group:
        rep = verify_group(g, budget)
        if not rep.ok:
            bad = [r.name for r in rep.results if not r.ok]
            raise NotAGroup(f"not a group: {', '.join(bad)} failed", rep)
    if a is None:
        a = default_center(g, budget)
    ab = local_addition_box(g, a, budget)
    a = ab.a
    at, aenv = _point_consts(a, "ab_a")
    it, ienv = _point_consts(ab.a_inv, "ab_i")
    V = _Vars(g)
    env = g.env(aenv, ienv, ab.env())

    def comm(p, q):
        w = V("w")
        return exists(w, conj(_otimes(g, it, p, q, w, V), _otimes(g, it, q, p, w, V)))

    xs = list(g.xs)
    yv, xv = V("y"), V("x")
    in_box = ab.formula(xv)
    cb_y = conj(g.G(yv), forall(xv, implies(in_box, comm(yv, xv))))
    Hf = conj(g.G(xs), forall(yv, implies(cb_y, comm(xs, yv))))
    Hqf = _simplify_subset(eliminate(Hf, env, budget), g, env, budget)
    H = DefinableGroup(g.n, Hqf, conj(g.op, g.G(list(g.xs))), {**g.params, **{k: v for k, v in env.items()
                                                                         if k not in g.params}},
                       None, None, g.bound, g.name + "_H", g.xs, g.ys, g.zs)
    sentences = {"H": str(Hf)}
    p, q, w = V("p"), V("q"), V("w")
    Hp = substitute(Hqf, dict(zip(xs, _terms(p))))
    Hq = substitute(Hqf, dict(zip(xs, _terms(q))))
    Hw = substitute(Hqf, dict(zip(xs, _terms(w))))
    s_ab = forall(p + q, implies(conj(Hp, Hq), comm(p, q)))
    sentences["abelian"] = str(s_ab)
    abelian = decide(s_ab, env, budget)
    Ha = substitute(Hqf, dict(zip(xs, at)))
    s_sub = conj(Ha, forall(p + q, implies(conj(Hp, Hq), exists(w, conj(Hw, _otimes(g, it, p, q, w, V))))),
                 forall(p, implies(Hp, exists(q, conj(Hq, _otimes(g, it, p, q, at, V))))))
    sentences["subgroup"] = str(s_sub)
    subgroup = decide(s_sub, env, budget)
    s_box = forall(xv, implies(in_box, substitute(Hqf, dict(zip(xs, _terms(xv))))))
    sentences["contains_box"] = str(s_box)
    contains = decide(s_box, env, budget)
    dH = dim(Hqf, xs, env, budget=budget)
    dG = dim(g.carrier, xs, g.env(), budget=budget)
    # x -> x a is an isomorphism onto (G, (x)_a)
    x1, y1, r, u1, v1 = V("x"), V("y"), V("r"), V("u"), V("v")
    s_hom = forall(x1 + y1 + r + u1 + v1, implies(
        conj(g.G(x1), g.G(y1), _compose_xy_a(g, x1, y1, at, r, V),
             g.mu(x1, at, u1), g.mu(y1, at, v1)),
        _otimes(g, it, u1, v1, r, V)))
    sentences["homomorphism"] = str(s_hom)
    iso_hom = decide(s_hom, env, budget)
    wv, xa, xb = V("w"), V("x"), V("x")
    s_bij = forall(wv, implies(g.G(wv), conj(
        exists(xa, conj(g.G(xa), g.mu(xa, at, wv))),
        forall(xa + xb, implies(conj(g.G(xa), g.G(xb), g.mu(xa, at, wv), g.mu(xb, at, wv)),
                                conj(*[eq(s1, s2) for s1, s2 in zip(xa, xb)]))))))
    sentences["bijective"] = str(s_bij)
    iso_bij = decide(s_bij, env, budget)
    return AbelianReport(a, ab, H, abelian, subgroup, contains, dH, dG, iso_hom, iso_bij, sentences)


def _simplify_subset(f: Formula, g: DefinableGroup, env, budget) -> Formula:
    """The carrier itself when f defines it, else the union of f's cells."""
    xs = list(g.xs)
    if decide(forall(xs, iff(f, g.carrier)), env, budget):
        return g.carrier
    cells = decompose(f, xs, env, budget=budget)
    return disj(*[c.formula() for c in cells]) if cells else FALSE


def _compose_xy_a(g, x, y, at, r, V) -> Formula:
    m = V("m")
    return exists(m, conj(g.mu(x, y, m), g.mu(m, at, r)))


# ---------------------------------------------------------------------------
# genericity in finite groups


@dataclass
class GenericResult:
    generic: bool
    translates: list
    minimal: bool

    def to_json(self):
        return {"generic": self.generic, "translates": [list(t) for t in self.translates],
                "count": len(self.translates), "minimal": self.minimal}


def is_generic_finite(g: DefinableGroup, X: Formula, table: FiniteTable | None = None,
                      exact_limit: int = 200000) -> GenericResult:
    """Whether finitely many left translates ``g_i X`` cover the finite group;
    the translates come from a greedy cover, then a minimum cover when the
    search is small enough."""
    table = table or enumerate_group(g)
    env = g.env()
    xset = [i for i, p in enumerate(table.elements) if evaluate(X, {**env, **dict(zip(g.xs, p))})]
    n = len(table)
    if not xset:
        return GenericResult(False, [], True)
    covers = [frozenset(table.mul[h][x] for x in xset) for h in range(n)]
    full = frozenset(range(n))
    chosen, got = [], frozenset()
    while got != full:
        h = max(range(n), key=lambda i: (len(covers[i] - got), -i))
        chosen.append(h)
        got |= covers[h]
    lower = -(-n // len(xset))
    minimal = len(chosen) == lower
    if not minimal:
        uniq = sorted(set(covers), key=lambda c: sorted(c))
        rep = {c: covers.index(c) for c in uniq}
        for k in range(lower, len(chosen)):
            combos = itertools.combinations(uniq, k)
            count = 0
            found = None
            for combo in combos:
                count += 1
                if count > exact_limit:
                    break
                if frozenset().union(*combo) == full:
                    found = combo
                    break
            if found is not None:
                chosen = [rep[c] for c in found]
                minimal = True
                break
            if count > exact_limit:
                break
        else:
            minimal = True
    return GenericResult(True, [table.elements[h] for h in chosen], minimal)
