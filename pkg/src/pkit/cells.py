"""Cells, the decomposition algorithm, piecewise-linear functions, dimension,
definable closure and generic points."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from pkit.formula import (
    FALSE, TRUE, And, Atom, Bottom, Formula, LinearForm, LinearFunction, LinearTerm, Or,
    Rel, Top, cong, conj, disj, eq, exists, forall, free_vars, iff,
    implies, is_quantifier_free, le, lt, matrix_representation, neg, print_term,
)
from pkit.model import ModelElement, as_element, evaluate, residue, simplify_value
from pkit.qe import (
    DEFAULT_BUDGET, _disj, _prepare_env, decide, eliminate, lcm, satisfiable,
)

__all__ = [
    "Coord", "CellDesc", "decompose", "decompose_function", "certify_partition",
    "dim", "in_dcl", "generic_point", "matrix_representation", "NotFunctional",
    "NotGeneric", "CellError",
]

DEFAULT_DEPTH = 8


class CellError(ValueError):
    pass


class NotFunctional(CellError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class NotGeneric(CellError):
    pass


# ---------------------------------------------------------------------------
# linear forms as bounds


def form(num: LinearTerm, den: int = 1) -> LinearForm:
    if den < 0:
        num, den = -num, -den
    g = math.gcd(num.content(), num.const, den)
    if g > 1:
        num = LinearTerm(tuple((v, c // g) for v, c in num.coeffs), num.const // g)
        den //= g
    return LinearForm(num, den)


def form_shift(f: LinearForm, k: int) -> LinearForm:
    return form(f.num + k * f.den, f.den)


def form_le(a: LinearForm, b: LinearForm) -> Formula:
    """a <= b for exact forms."""
    return le(a.num * b.den, b.num * a.den)


def form_eq(a: LinearForm, b: LinearForm) -> Formula:
    return eq(a.num * b.den, b.num * a.den)


def form_lt(a: LinearForm, b: LinearForm) -> Formula:
    return le(a.num * b.den + a.den * b.den, b.num * a.den)


def form_str(f: LinearForm) -> str:
    return str(f)


def form_json(f: LinearForm | None):
    if f is None:
        return None
    return {"num": print_term(f.num), "den": f.den}


def form_value(f: LinearForm, env):
    return simplify_value(f.evaluate(env))


def _var_t(t: str) -> LinearTerm:
    return LinearTerm.var(t)


# ---------------------------------------------------------------------------
# cells


@dataclass(frozen=True)
class Coord:
    """One coordinate of a cell: a graph ``var = value`` (0-entry) or a
    congruence interval ``lower <= var <= upper, var = residue (mod modulus)``
    (1-entry).  Bounds are exact forms in the earlier coordinates and the
    parameters; a missing bound means unbounded."""

    var: str
    kind: str
    value: LinearForm | None = None
    lower: LinearForm | None = None
    upper: LinearForm | None = None
    modulus: int = 1
    residue: int = 0

    @property
    def entry(self) -> int:
        return 0 if self.kind == "graph" else 1

    def formula(self) -> Formula:
        t = _var_t(self.var)
        if self.kind == "graph":
            return eq(t * self.value.den, self.value.num)
        parts = []
        if self.lower is not None:
            parts.append(le(self.lower.num, t * self.lower.den))
        if self.upper is not None:
            parts.append(le(t * self.upper.den, self.upper.num))
        if self.modulus > 1:
            parts.append(cong(t, self.residue, self.modulus))
        return conj(*parts)

    def to_json(self) -> dict:
        if self.kind == "graph":
            return {"var": self.var, "entry": 0, "value": form_json(self.value)}
        return {"var": self.var, "entry": 1, "lower": form_json(self.lower),
                "upper": form_json(self.upper), "modulus": self.modulus,
                "residue": self.residue}

    def __str__(self):
        if self.kind == "graph":
            return f"{self.var} = {self.value}"
        lo = "-inf" if self.lower is None else str(self.lower)
        hi = "+inf" if self.upper is None else str(self.upper)
        s = f"{lo} <= {self.var} <= {hi}"
        if self.modulus > 1:
            s += f", {self.var} === {self.residue} mod {self.modulus}"
        return s


@dataclass(frozen=True)
class CellDesc:
    coords: tuple = ()
    params: tuple = ()

    @property
    def vars(self) -> tuple:
        return tuple(c.var for c in self.coords)

    @property
    def signature(self) -> tuple:
        return tuple(c.entry for c in self.coords)

    @property
    def dim(self) -> int:
        return sum(self.signature)

    def is_open(self) -> bool:
        return all(self.signature)

    def formula(self) -> Formula:
        return conj(*[c.formula() for c in self.coords])

    def extend(self, c: Coord) -> "CellDesc":
        return CellDesc(self.coords + (c,), self.params)

    def contains(self, point: Mapping, env: Mapping | None = None) -> bool:
        full = {**(env or {}), **point}
        return evaluate(self.formula(), full, model="M")

    def to_json(self) -> dict:
        return {"signature": list(self.signature), "coords": [c.to_json() for c in self.coords],
                "params": list(self.params), "formula": str(self.formula())}

    def __str__(self):
        sig = ",".join(map(str, self.signature))
        return f"({sig})-cell: " + "; ".join(str(c) for c in self.coords)


# ---------------------------------------------------------------------------
# decomposition


@dataclass
class _Opts:
    env: dict
    depth: int
    budget: int
    params: tuple


def _sat(f: Formula, opts: _Opts) -> bool:
    if isinstance(f, Top):
        return True
    if isinstance(f, Bottom):
        return False
    fv = sorted(free_vars(f) - set(opts.env))
    return decide(exists(fv, f), opts.env, opts.budget)


def _qf(f: Formula, opts: _Opts) -> Formula:
    return eliminate(f, opts.env, opts.budget, canonical=True)


def _atoms(f):
    if isinstance(f, Atom):
        yield f
    elif isinstance(f, (And, Or)):
        for a in f.args:
            yield from _atoms(a)


def _replace(f: Formula, fn) -> Formula:
    """Replace atoms using fn(atom) -> Formula (or None to keep)."""
    if isinstance(f, Atom):
        r = fn(f)
        return f if r is None else r
    if isinstance(f, And):
        out = []
        for a in f.args:
            r = _replace(a, fn)
            if isinstance(r, Bottom):
                return FALSE
            out.append(r)
        return conj(*out)
    if isinstance(f, Or):
        out = []
        for a in f.args:
            r = _replace(a, fn)
            if isinstance(r, Top):
                return TRUE
            out.append(r)
        return disj(*out)
    return f


def _split_base(u: LinearTerm, base: set) -> tuple:
    bp = LinearTerm(tuple((v, c) for v, c in u.coeffs if v in base), 0)
    rest = u - bp
    return bp, rest


def _form_rank(f: LinearForm, base: set):
    nb = sum(1 for v, _ in f.num.coeffs if v in base)
    return (nb, len(f.num.coeffs), f.den, str(f))


def _weak_orders(forms, guard, opts):
    """Feasible weak orders of the forms (as lists of index classes)."""
    results = []

    def cond(order):
        parts = []
        for cls in order:
            r = forms[cls[0]]
            for i in cls[1:]:
                parts.append(form_eq(r, forms[i]))
        for a, b in zip(order, order[1:]):
            parts.append(form_lt(forms[a[0]], forms[b[0]]))
        return conj(*parts)

    def rec(i, order):
        if i == len(forms):
            results.append((order, cond(order)))
            return
        cands = []
        for pos in range(len(order)):
            cands.append(order[:pos] + [order[pos] + [i]] + order[pos + 1:])
        for pos in range(len(order) + 1):
            cands.append(order[:pos] + [[i]] + order[pos:])
        for o in cands:
            if _sat(conj(guard, cond(o)), opts):
                rec(i + 1, o)

    rec(0, [])
    return results


def decompose(f: Formula, vars: Sequence[str], env: Mapping | None = None,
              depth: int = DEFAULT_DEPTH, budget: int = DEFAULT_BUDGET,
              allow_quantifiers: bool = False) -> list:
    """Partition the set defined by ``f`` into cells in the coordinate order
    ``vars``.  Free variables outside ``vars`` must be bound in ``env``."""
    if not allow_quantifiers and not is_quantifier_free(f):
        raise CellError("decompose expects a quantifier-free formula; run eliminate first")
    env = _prepare_env(env)
    vars = list(vars)
    extra = free_vars(f) - set(vars) - set(env)
    if extra:
        raise CellError(f"unbound parameters: {sorted(extra)}")
    if len(set(vars)) != len(vars):
        raise CellError("duplicate variables")
    params = tuple(sorted(set(env) & (free_vars(f) | set())))
    opts = _Opts(env, depth, budget, params)
    g = _qf(f, opts)
    return [CellDesc(c.coords, params) for c in _decompose(g, vars, opts)]


def _decompose(f: Formula, vars: list, opts: _Opts) -> list:
    if isinstance(f, Bottom):
        return []
    if not vars:
        return [CellDesc()] if _sat(f, opts) else []
    t = vars[-1]
    base = vars[:-1]
    bset = set(base)
    tatoms = [a for a in dict.fromkeys(_atoms(f)) if a.lhs.coeff(t)]
    if not tatoms:
        sub = _decompose(f, base, opts)
        return [c.extend(Coord(t, "interval")) for c in sub]

    P = 1
    needs: dict = {}
    for a in tatoms:
        c = a.lhs.coeff(t)
        u = a.lhs.without(t)
        bp, _ = _split_base(u, bset)
        if a.op is Rel.CONG:
            P = lcm(P, a.modulus)
            m = a.modulus
        else:
            m = abs(c)
        if m > 1 and bp.coeffs:
            key = bp if bp.coeffs[0][1] > 0 else -bp
            needs[key] = lcm(needs.get(key, 1), m)

    keys = list(needs)
    groups: dict = {}
    for combo in itertools.product(*[range(needs[k]) for k in keys]):
        res = dict(zip(keys, combo))
        guard = conj(*[cong(k, r, needs[k]) for k, r in res.items()])
        if not _sat(conj(guard, f), opts):
            continue

        def ures(u: LinearTerm, m: int) -> int:
            bp, rest = _split_base(u, bset)
            val = rest.evaluate(opts.env) if rest.coeffs else rest.const
            r = residue(val, m)
            if bp.coeffs:
                if bp.coeffs[0][1] > 0:
                    r += res[bp] if bp in res else 0
                else:
                    r -= res[-bp] if -bp in res else 0
            return r % m

        # normal form of each t-atom under this guard
        info = {}
        forms: list = []
        index: dict = {}

        def fidx(fm):
            if fm not in index:
                index[fm] = len(forms)
                forms.append(fm)
            return index[fm]

        for a in tatoms:
            c = a.lhs.coeff(t)
            u = a.lhs.without(t)
            if a.op is Rel.CONG:
                info[a] = ("cong", c, u)
                continue
            if a.op is Rel.EQ:
                if c < 0:
                    c, u = -c, -u
                if ures(u, c) if c > 1 else 0:
                    info[a] = ("false",)
                else:
                    info[a] = ("eq", fidx(form(-u, c)))
                continue
            if c > 0:
                r = ures(u, c) if c > 1 else 0
                info[a] = ("le", fidx(form(-u - ((-r) % c), c)))
            else:
                k = -c
                r = ures(u, k) if k > 1 else 0
                info[a] = ("ge", fidx(form(u + ((-r) % k), k)))

        for order, ocond in _weak_orders(forms, guard, opts):
            cls_of = {}
            for j, cls in enumerate(order):
                for i in cls:
                    cls_of[i] = j
            reps = [min((forms[i] for i in cls), key=lambda fm: _form_rank(fm, bset)) for cls in order]
            k = len(order)
            pieces = [("I", -1)]
            for j in range(k):
                pieces += [("P", j), ("I", j)]
            for rho in range(P):
                def value(a, piece):
                    kind, j = piece
                    inf_ = info[a]
                    tag = inf_[0]
                    if tag == "false":
                        return FALSE
                    if tag == "cong":
                        _, c, u = inf_
                        return TRUE if (c * rho + ures(u, a.modulus)) % a.modulus == 0 else FALSE
                    ci = cls_of[inf_[1]]
                    if tag == "le":
                        ok = j <= ci if kind == "P" else j < ci
                    elif tag == "ge":
                        ok = j >= ci
                    else:
                        ok = kind == "P" and j == ci
                    return TRUE if ok else FALSE

                residuals = []
                for piece in pieces:
                    r = _replace(f, lambda a, piece=piece: value(a, piece) if a in info else None)
                    residuals.append(r)
                i = 0
                while i < len(pieces):
                    r = residuals[i]
                    if isinstance(r, Bottom):
                        i += 1
                        continue
                    j = i
                    while j + 1 < len(pieces) and residuals[j + 1] == r:
                        j += 1
                    first, last = pieces[i], pieces[j]
                    if i == j and first[0] == "P":
                        kind, lo, hi = "graph", reps[first[1]], reps[first[1]]
                    else:
                        kind = "interval"
                        if first[0] == "P":
                            lo = reps[first[1]]
                        else:
                            lo = None if first[1] < 0 else form_shift(reps[first[1]], 1)
                        if last[0] == "P":
                            hi = reps[last[1]]
                        else:
                            hi = None if last[1] >= k - 1 else form_shift(reps[last[1] + 1], -1)
                    nonempty = _run_nonempty(t, kind, lo, hi, rho, P, opts)
                    cond = conj(guard, ocond, r, nonempty)
                    cond = _qf(cond, opts)
                    if not isinstance(cond, Bottom):
                        key = ("graph", lo, None, 1, 0) if kind == "graph" else \
                            ("interval", lo, hi, P, rho)
                        groups.setdefault(key, []).append(cond)
                    i = j + 1

    # merge residue classes of identical intervals
    merged: dict = {}
    for key, conds in groups.items():
        cond = _qf(_disj(conds), opts)
        if isinstance(cond, Bottom):
            continue
        if key[0] == "interval" and key[3] > 1:
            mkey = ("interval", key[1], key[2], key[3], cond)
            merged.setdefault(mkey, []).append(key[4])
        else:
            merged[key + (cond,)] = None
    out = []
    for key, rhos in merged.items():
        if key[0] == "graph":
            _, lo, _, _, _, cond = key
            for bc in _decompose(cond, base, opts):
                out.append(bc.extend(Coord(t, "graph", value=lo)))
            continue
        if rhos is None:
            _, lo, hi, Pk, rho, cond = key
            classes = [(Pk, rho)]
        else:
            _, lo, hi, Pk, cond = key
            classes = _merge_residues(Pk, sorted(rhos))
        for mod, rho in classes:
            for bc in _decompose(cond, base, opts):
                out.extend(_certify_fiber(bc, t, lo, hi, mod, rho, base, opts))
    return out


def _merge_residues(P: int, rhos: list) -> list:
    """Cover a set of residues mod P by coarser classes where possible."""
    left = set(rhos)
    out = []
    for d in sorted(d for d in range(1, P + 1) if P % d == 0):
        for r in range(d):
            cls = {x for x in range(P) if x % d == r}
            if cls <= left:
                out.append((d, r))
                left -= cls
    return out


def _run_nonempty(t, kind, lo, hi, rho, P, opts) -> Formula:
    tt = _var_t(t)
    parts = []
    if kind == "graph":
        parts.append(eq(tt * lo.den, lo.num))
    else:
        if lo is not None:
            parts.append(le(lo.num, tt * lo.den))
        if hi is not None:
            parts.append(le(tt * hi.den, hi.num))
    if P > 1:
        parts.append(cong(tt, rho, P))
    return _qf(exists(t, conj(*parts)), opts)


def _width_exceeds(lo, hi, n) -> Formula:
    """``hi - lo > n`` with cleared denominators."""
    return lt(lo.num * hi.den + n * (lo.den * hi.den), hi.num * lo.den)


def _certify_fiber(bc: CellDesc, t, lo, hi, mod, rho, base, opts) -> list:
    coord = Coord(t, "interval", lower=lo, upper=hi, modulus=mod, residue=rho)
    if lo is None or hi is None:
        return [bc.extend(coord)]
    width = (opts.depth + 1) * mod
    if _sat(conj(bc.formula(), _width_exceeds(lo, hi, width - 2)), opts):
        return [bc.extend(coord)]
    # fibers are uniformly small: re-emit as finitely many graphs
    out = []
    for i in range(width):
        v = form_shift(lo, i)
        cond = conj(bc.formula(), form_le(v, hi))
        if mod > 1:
            cond = conj(cond, cong(v.num, rho * v.den, mod * v.den))
        cond = _qf(cond, opts)
        if isinstance(cond, Bottom):
            continue
        for c in _decompose(cond, base, opts):
            out.append(c.extend(Coord(t, "graph", value=v)))
    return out


# ---------------------------------------------------------------------------
# certificates


@dataclass
class PartitionReport:
    coverage: bool
    disjoint: bool
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.coverage and self.disjoint

    def to_json(self):
        return {"coverage": self.coverage, "disjoint": self.disjoint, "failures": self.failures}


def _tree(cells: Sequence[CellDesc], k: int) -> list:
    """Level-k nodes as (coord, subtrees), merging identical coordinates;
    leaves carry the number of cells that end there."""
    groups: dict = {}
    for c in cells:
        groups.setdefault(c.coords[k], []).append(c)
    if k == len(cells[0].coords) - 1:
        return [(coord, len(cs)) for coord, cs in groups.items()]
    return [(coord, _tree(cs, k + 1)) for coord, cs in groups.items()]


def certify_partition(f: Formula, cells: Sequence[CellDesc], vars: Sequence[str],
                      env: Mapping | None = None, budget: int = DEFAULT_BUDGET) -> PartitionReport:
    """Decide that the cells cover exactly f and are pairwise disjoint.

    The cells are walked as a tree of coordinates.  At each level the
    coordinates under the current context are split into the regions of
    their overlap pattern (isolated coordinates are their own region); an
    uncovered region must miss the projection of f, and at the last level a
    region touched by two cells is an overlap and must lie inside f."""
    env = _prepare_env(env)
    vars = list(vars)
    n = len(vars)
    if any(c.vars != tuple(vars) for c in cells):
        return PartitionReport(False, False, ["cells do not follow the variable order"])
    if n == 0 or not cells:
        holds = decide(exists(sorted(free_vars(f) - set(env)), f), env, budget)
        return PartitionReport(holds == bool(cells), len(cells) <= 1, [])
    opts = _Opts(env, DEFAULT_DEPTH, budget, ())
    shadows = [_qf(exists(vars[k + 1:], f), opts) for k in range(n - 1)] + [f]
    report = PartitionReport(True, True, [])

    def sat(*parts):
        g = conj(*parts)
        fv = sorted(free_vars(g) - set(env))
        return decide(exists(fv, g), env, budget)

    def walk(ctx: list, nodes: list, k: int):
        forms = [coord.formula() for coord, _ in nodes]
        if sat(*ctx, shadows[k], *[neg(g) for g in forms]):
            report.coverage = False
            report.failures.append(f"gap at level {k + 1} in {conj(*ctx)}")
        m = len(nodes)
        adj = {i: set() for i in range(m)}
        for i in range(m):
            for j in range(i + 1, m):
                if sat(*ctx, forms[i], forms[j]):
                    adj[i].add(j)
                    adj[j].add(i)
        seen = set()
        for i in range(m):
            if i in seen:
                continue
            comp, todo = [], [i]
            seen.add(i)
            while todo:
                u = todo.pop()
                comp.append(u)
                for w in adj[u] - seen:
                    seen.add(w)
                    todo.append(w)
            comp.sort()
            if len(comp) == 1:
                regions = [([comp[0]], [forms[comp[0]]])]
            else:
                regions = []

                def split(idx, inside, parts):
                    if idx == len(comp):
                        if inside:
                            regions.append((inside, parts))
                        return
                    g = forms[comp[idx]]
                    if sat(*ctx, *parts, g):
                        split(idx + 1, inside + [comp[idx]], parts + [g])
                    if sat(*ctx, *parts, neg(g)):
                        split(idx + 1, inside, parts + [neg(g)])

                split(0, [], [])
            for inside, parts in regions:
                sub = ctx + parts
                if k == n - 1:
                    if sum(nodes[i][1] for i in inside) > 1:
                        report.disjoint = False
                        report.failures.append(f"overlap in {conj(*sub)}")
                    if sat(*sub, neg(f)):
                        report.coverage = False
                        report.failures.append(f"cells leave the set in {conj(*sub)}")
                else:
                    kids = [kid for i in inside for kid in nodes[i][1]]
                    walk(sub, kids, k + 1)

    walk([], _tree(cells, 0), 0)
    return report


def dim(f: Formula, vars: Sequence[str] | None = None, env: Mapping | None = None,
        depth: int = DEFAULT_DEPTH, budget: int = DEFAULT_BUDGET) -> int | None:
    """Dimension of the set defined by f, or None when it is empty."""
    env = _prepare_env(env)
    if vars is None:
        vars = sorted(free_vars(f) - set(env))
    if not is_quantifier_free(f):
        f = eliminate(f, env, budget, canonical=True)
    cells = decompose(f, vars, env, depth, budget)
    if not cells:
        return None
    return max(c.dim for c in cells)


# ---------------------------------------------------------------------------
# piecewise-linear functions


def _form_to_function(v: LinearForm, in_vars, residues: dict, env) -> LinearFunction:
    """Residue form of ``v`` given fixed residues of each input mod its k_i."""
    s, c, k = [], [], []
    gamma = Fraction(0)
    rest = v.num
    for x in in_vars:
        a = v.num.coeff(x)
        rest = rest.without(x)
        q = Fraction(a, v.den)
        ki = q.denominator
        ci = residues.get(x, (1, 0))[1] % ki if ki > 1 else 0
        s.append(q.numerator)
        k.append(ki)
        c.append(ci)
        gamma += q * ci
    # gamma = (rest)/den + sum q_i c_i
    restv = rest.evaluate(env) if rest.coeffs else rest.const
    if isinstance(restv, int):
        g = Fraction(restv, v.den) + gamma
        if g.denominator != 1:
            raise CellError("offset is not integral on this piece")
        gval = int(g)
    else:
        scaled = restv.scale(Fraction(1, v.den))
        if scaled * v.den != restv:
            raise CellError("offset is not integral on this piece")
        if gamma.denominator != 1:
            raise CellError("offset is not integral on this piece")
        gval = scaled + int(gamma)
    return LinearFunction(tuple(in_vars), tuple(s), tuple(c), tuple(k), simplify_value(gval))


@dataclass
class Piece:
    cell: CellDesc
    function: LinearFunction
    value: LinearForm

    def to_json(self):
        return {"cell": self.cell.to_json(), "function": str(self.function),
                "s": list(self.function.s), "c": list(self.function.c),
                "k": list(self.function.k), "gamma": str(self.function.gamma)}


def decompose_function(graph: Formula, in_vars: Sequence[str], out_var: str,
                       env: Mapping | None = None, depth: int = DEFAULT_DEPTH,
                       budget: int = DEFAULT_BUDGET, certify: bool = True) -> list:
    """Split the domain of a definable function into cells on which it is
    given by one linear function."""
    env = _prepare_env(env)
    in_vars = list(in_vars)
    if not is_quantifier_free(graph):
        graph = eliminate(graph, env, budget, canonical=True)
    t2 = out_var + "__2"
    from pkit.formula import rename
    g2 = rename(graph, {out_var: t2})
    both = conj(graph, g2, neg(eq(out_var, t2)))
    fv = sorted(free_vars(both) - set(env))
    if decide(exists(fv, both), env, budget):
        w = satisfiable(both, env, budget=budget)
        shown = {k: v for k, v in (w or {}).items()}
        raise NotFunctional(f"graph is not functional, witness {shown}", shown)
    cells = decompose(graph, in_vars + [out_var], env, depth, budget)
    raw = []
    for cell in cells:
        last = cell.coords[-1]
        if last.kind != "graph":
            raise CellError("functional graph produced a 1-entry in the output coordinate")
        base = CellDesc(cell.coords[:-1], cell.params)
        raw.append((base, last.value))
    # regroup: pick for each domain piece a value form valid on it
    values = list(dict.fromkeys(v for _, v in raw))
    valid = []
    for base, _ in raw:
        ok = []
        for v in values:
            s = forall(in_vars, implies(base.formula(), _value_graph(graph, out_var, v)))
            if decide(s, env, budget):
                ok.append(v)
        valid.append(ok)
    remaining = set(range(len(raw)))
    chosen = []
    while remaining:
        best = max(values, key=lambda v: (sum(1 for i in remaining if v in valid[i]), -values.index(v)))
        idx = sorted(i for i in remaining if best in valid[i])
        if not idx:
            raise CellError("internal error: piece without a valid value")
        chosen.append((best, idx))
        remaining -= set(idx)
    pieces = []
    for v, idx in chosen:
        dom = disj(*[raw[i][0].formula() for i in idx])
        doms = decompose(dom, in_vars, env, depth, budget) if len(idx) > 1 else [raw[idx[0]][0]]
        for d in doms:
            pieces.extend(_residue_pieces(d, v, in_vars, env, depth, budget))
    if certify:
        for p in pieces:
            s = forall(in_vars, implies(p.cell.formula(), _value_graph(graph, out_var, p.value)))
            if not decide(s, env, budget):
                raise CellError(f"piece certification failed for {p.cell}")
    return pieces


def _value_graph(graph, out_var, v: LinearForm) -> Formula:
    """``forall t (graph(x, t) <-> den*t = num)``."""
    t = LinearTerm.var(out_var)
    return forall(out_var, iff(graph, eq(t * v.den, v.num)))


def _residue_pieces(cell: CellDesc, v: LinearForm, in_vars, env, depth, budget) -> list:
    """Refine the cell by input residues until v is a B-linear function on each piece."""
    mods = {}
    for x in in_vars:
        q = Fraction(v.num.coeff(x), v.den)
        if q.denominator > 1:
            mods[x] = q.denominator
    fixed = {}
    for c in cell.coords:
        if c.kind == "interval" and c.modulus > 1:
            fixed[c.var] = (c.modulus, c.residue)
    need = {x: m for x, m in mods.items() if not (x in fixed and fixed[x][0] % m == 0)}
    if not need:
        res = {x: (m, fixed[x][1] % m) for x, m in mods.items()}
        return [Piece(cell, _form_to_function(v, in_vars, res, env), v)]
    out = []
    xs = list(need)
    for combo in itertools.product(*[range(need[x]) for x in xs]):
        extra = conj(*[cong(x, r, need[x]) for x, r in zip(xs, combo)])
        sub = conj(cell.formula(), extra)
        if not _sat(sub, _Opts(env, depth, budget, ())):
            continue
        for d in decompose(sub, in_vars, env, depth, budget):
            res = {}
            for x, m in mods.items():
                if x in need:
                    res[x] = (m, combo[xs.index(x)])
                else:
                    res[x] = (m, fixed[x][1] % m)
            out.append(Piece(d, _form_to_function(v, in_vars, res, env), v))
    return out


# ---------------------------------------------------------------------------
# definable closure and generic points


def _qvec(e: ModelElement, k: int) -> list:
    return [Fraction(x) for x in e.q] + [Fraction(0)] * (k - len(e.q))


def _solve_span(cols: list, target: list):
    """Rational lambda with sum lambda_i cols[i] = target, free ones 0; or None."""
    m = len(target)
    n = len(cols)
    rows = [[cols[j][i] for j in range(n)] + [target[i]] for i in range(m)]
    piv = []
    r = 0
    for col in range(n):
        p = next((i for i in range(r, m) if rows[i][col] != 0), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        inv = 1 / rows[r][col]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(m):
            if i != r and rows[i][col] != 0:
                f = rows[i][col]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        piv.append(col)
        r += 1
    for i in range(r, m):
        if rows[i][n] != 0:
            return None
    lam = [Fraction(0)] * n
    for i, col in enumerate(piv):
        lam[col] = rows[i][n]
    return lam


def in_dcl(b, params) -> LinearFunction | None:
    """An 0-definable linear function alpha with alpha(params) = b, or None.

    ``params`` is a list of elements (named p0, p1, ...) or a mapping."""
    if isinstance(params, Mapping):
        names = list(params)
        vals = [as_element(params[n]) for n in names]
    else:
        vals = [as_element(p) for p in params]
        names = [f"p{i}" for i in range(len(vals))]
    b = as_element(b)
    k = max([b.rank] + [v.rank for v in vals] + [0])
    lam = _solve_span([_qvec(v, k) for v in vals], _qvec(b, k))
    if lam is None:
        return None
    if b.is_finite() and all(x == 0 for x in lam):
        # standard target: prefer a nontrivial integer form on a standard parameter
        for i, v in enumerate(vals):
            if v.is_finite() and v.z != 0:
                lam[i] = Fraction(b.z // v.z)
                break
    s, c, kk = [], [], []
    total = ModelElement()
    for v, q in zip(vals, lam):
        ki = q.denominator
        ci = v.residue(ki) if ki > 1 else 0
        s.append(q.numerator)
        c.append(ci)
        kk.append(ki)
        total = total + q.numerator * (v - ci).exact_div(ki)
    gamma = b - total
    if not gamma.is_finite():
        return None
    return LinearFunction(tuple(names), tuple(s), tuple(c), tuple(kk), gamma.z)


def is_independent(point: Sequence, params: Sequence) -> bool:
    """True when no coordinate is in dcl of the parameters and the others."""
    pts = [as_element(p) for p in point]
    for i, p in enumerate(pts):
        others = [as_element(x) for x in params] + pts[:i] + pts[i + 1:]
        if in_dcl(p, others) is not None:
            return False
    return True


def _max_rank(env) -> int:
    k = 0
    for v in env.values():
        if isinstance(v, ModelElement):
            k = max(k, v.rank)
    return k


def generic_point(cell: CellDesc, env: Mapping | None = None, start_rank: int | None = None) -> dict:
    """A point of the cell whose 1-coordinates lie in fresh archimedean
    classes (less significant than everything in env), so that its dimension
    over the parameters equals the cell's dimension."""
    env = _prepare_env(env)
    k = _max_rank(env) if start_rank is None else start_rank
    point: dict = {}
    full = dict(env)
    for c in cell.coords:
        if c.kind == "graph":
            val = c.value.evaluate(full)
        else:
            lo = c.lower.evaluate(full) if c.lower is not None else None
            hi = c.upper.evaluate(full) if c.upper is not None else None
            if lo is not None and hi is not None:
                lo_e, hi_e = as_element(lo), as_element(hi)
                if lo_e > hi_e:
                    raise CellError("empty fiber")
                if (hi_e - lo_e).is_finite():
                    raise NotGeneric(f"coordinate {c.var} has finite fiber [{lo_e}, {hi_e}];"
                                     " no generic point exists for it")
                base = (lo_e + hi_e).floordiv(2)
            elif lo is not None:
                base = as_element(lo)
            elif hi is not None:
                base = as_element(hi)
            else:
                base = ModelElement()
            eps = ModelElement(tuple([0] * k + [1]), 0)
            k += 1
            val = base - eps if (hi is not None and lo is None) else base + eps
            if c.modulus > 1:
                val = val + (c.residue - val.residue(c.modulus)) % c.modulus
        val = simplify_value(val)
        point[c.var] = val
        full[c.var] = val
    if not cell.contains(point, env):
        raise CellError("internal error: generic point left the cell")
    return point


def point_dim(point: Sequence, params: Sequence) -> int:
    """dcl-dimension of a tuple over params (greedy maximal independent subset)."""
    chosen: list = []
    base = [as_element(p) for p in params]
    for p in point:
        if in_dcl(p, base + chosen) is None:
            chosen.append(as_element(p))
    return len(chosen)
