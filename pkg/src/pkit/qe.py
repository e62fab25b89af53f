"""Cooper-style quantifier elimination, decision, and witness search.

Internally every atom is kept canonical: ``t <= 0``, ``t == 0`` or
``t === 0 mod N`` with gcd-reduced coefficients.  Parameters given in ``env``
are folded to truth values as soon as an atom mentions nothing else, which is
how sentences with nonstandard parameters are decided.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from pkit.formula import (
    FALSE, TRUE, And, Atom, Bottom, Exists, Forall, Formula, LinearTerm, Not, Or,
    Rel, Top, all_vars, free_vars, is_quantifier_free, substitute,
)
from pkit.model import ModelElement, as_element, evaluate, residue

ZT = LinearTerm()
DEFAULT_BUDGET = 10 ** 6
DNF_LIMIT = 4096


class ResourceLimit(RuntimeError):
    """Raised when elimination exceeds its node budget."""


class FreeVariableError(ValueError):
    pass


@dataclass
class Stats:
    nodes: int = 0
    eliminations: int = 0
    ms: float = 0.0

    def as_dict(self, timing: bool = False) -> dict:
        d = {"nodes": self.nodes, "eliminations": self.eliminations}
        if timing:
            d["ms"] = round(self.ms, 3)
        return d


@dataclass
class _Ctx:
    env: Mapping = field(default_factory=dict)
    budget: int = DEFAULT_BUDGET
    stats: Stats = field(default_factory=Stats)

    def tick(self, n: int = 1):
        self.stats.nodes += n
        if self.stats.nodes > self.budget:
            raise ResourceLimit(f"node budget {self.budget} exceeded")


def lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


# ---------------------------------------------------------------------------
# canonical atoms


def _fold(t: LinearTerm, env):
    """Value of t if all its variables are in env, else None."""
    if not env:
        return None if t.coeffs else t.const
    for v, _ in t.coeffs:
        if v not in env:
            return None
    return t.evaluate(env)


def mk_le(t: LinearTerm, ctx: _Ctx) -> Formula:
    """``t <= 0``."""
    ctx.tick()
    g = t.content()
    if g == 0:
        return TRUE if t.const <= 0 else FALSE
    if g > 1:
        t = LinearTerm(tuple((v, c // g) for v, c in t.coeffs), -((-t.const) // g))
    val = _fold(t, ctx.env)
    if val is not None:
        return TRUE if val <= 0 else FALSE
    return Atom(Rel.LE, t, ZT)


def mk_eq(t: LinearTerm, ctx: _Ctx) -> Formula:
    ctx.tick()
    g = t.content()
    if g == 0:
        return TRUE if t.const == 0 else FALSE
    if t.const % g:
        return FALSE
    if t.coeffs[0][1] < 0:
        g = -g
    if g != 1:
        t = LinearTerm(tuple((v, c // g) for v, c in t.coeffs), t.const // g)
    val = _fold(t, ctx.env)
    if val is not None:
        return TRUE if val == 0 else FALSE
    return Atom(Rel.EQ, t, ZT)


def mk_dvd(n: int, t: LinearTerm, ctx: _Ctx) -> Formula:
    """``t === 0 mod n``."""
    ctx.tick()
    if n < 0:
        n = -n
    if n == 1:
        return TRUE
    if n == 0:
        return mk_eq(t, ctx)
    coeffs = tuple((v, c % n) for v, c in t.coeffs if c % n)
    const = t.const % n
    g = n
    for _, c in coeffs:
        g = math.gcd(g, c)
    if not coeffs:
        return TRUE if const == 0 else FALSE
    if const % g:
        return FALSE
    if g > 1:
        n //= g
        coeffs = tuple((v, c // g) for v, c in coeffs)
        const //= g
        if n == 1:
            return TRUE
    t = LinearTerm(coeffs, const)
    val = _fold(t, ctx.env)
    if val is not None:
        return TRUE if residue(val, n) == 0 else FALSE
    return Atom(Rel.CONG, t, ZT, n)


def canon_atom(a: Atom, ctx: _Ctx) -> Formula:
    d = a.lhs - a.rhs
    op = a.op
    if op is Rel.LE:
        return mk_le(d, ctx)
    if op is Rel.LT:
        return mk_le(d + 1, ctx)
    if op is Rel.GE:
        return mk_le(-d, ctx)
    if op is Rel.GT:
        return mk_le(-d + 1, ctx)
    if op is Rel.EQ:
        return mk_eq(d, ctx)
    return mk_dvd(a.modulus, d, ctx)


def _is_canon(a: Atom) -> bool:
    return a.rhs == ZT and a.op in (Rel.LE, Rel.EQ, Rel.CONG)


def negate(f: Formula, ctx: _Ctx) -> Formula:
    """Negation of a canonical NNF formula, again canonical NNF."""
    if isinstance(f, Top):
        return FALSE
    if isinstance(f, Bottom):
        return TRUE
    if isinstance(f, And):
        return _disj([negate(a, ctx) for a in f.args])
    if isinstance(f, Or):
        return _conj([negate(a, ctx) for a in f.args])
    if isinstance(f, Atom):
        t = f.lhs
        if f.op is Rel.LE:
            return mk_le(-t + 1, ctx)
        if f.op is Rel.EQ:
            return _disj([mk_le(t + 1, ctx), mk_le(-t + 1, ctx)])
        n = f.modulus
        return _disj([mk_dvd(n, t + r, ctx) for r in range(1, n)])
    raise TypeError(f"negate expects canonical NNF, got {f!r}")


def _conj(args) -> Formula:
    out = []
    seen = set()
    for a in args:
        if isinstance(a, Bottom):
            return FALSE
        if isinstance(a, Top):
            continue
        items = a.args if isinstance(a, And) else (a,)
        for b in items:
            if b not in seen:
                seen.add(b)
                out.append(b)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return And(tuple(out))


def _disj(args) -> Formula:
    out = []
    seen = set()
    for a in args:
        if isinstance(a, Top):
            return TRUE
        if isinstance(a, Bottom):
            continue
        items = a.args if isinstance(a, Or) else (a,)
        for b in items:
            if b not in seen:
                seen.add(b)
                out.append(b)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return Or(tuple(out))


# ---------------------------------------------------------------------------
# congruence merging


def crt_merge(congruences) -> tuple | None:
    """Merge ``x = c_i (mod N_i)`` into one ``x = c (mod lcm N_i)`` or None."""
    n, c = 1, 0
    for ni, ci in congruences:
        if ni < 1:
            raise ValueError("moduli must be positive")
        ci %= ni
        g = math.gcd(n, ni)
        if (ci - c) % g:
            return None
        # solve c + n*k = ci (mod ni)
        m = ni // g
        k = ((ci - c) // g * pow(n // g, -1, m)) % m if m > 1 else 0
        c = c + n * k
        n = lcm(n, ni)
        c %= n
    return n, c


# ---------------------------------------------------------------------------
# conjunction simplification


def simplify_atoms(atoms, ctx: _Ctx):
    """Tighten bounds, detect contradictions, merge congruences with the
    same variable part.  Returns a list of atoms or None for false."""
    upper: dict = {}   # var part p -> tightest c with p + c <= 0  (max c)
    eqs: dict = {}
    dvds: dict = {}    # p -> (N, r) meaning p = r (mod N)
    others = []
    for a in atoms:
        if not isinstance(a, Atom):
            others.append(a)
            continue
        p = LinearTerm(a.lhs.coeffs, 0)
        c = a.lhs.const
        if a.op is Rel.LE:
            if p in upper:
                upper[p] = max(upper[p], c)
            else:
                upper[p] = c
        elif a.op is Rel.EQ:
            if p in eqs and eqs[p] != c:
                return None
            eqs[p] = c
        else:
            r = (-c) % a.modulus
            if p in dvds:
                merged = crt_merge([dvds[p], (a.modulus, r)])
                if merged is None:
                    return None
                dvds[p] = merged
            else:
                dvds[p] = (a.modulus, r)
    # equalities fix p = -c; check/discharge bounds on p and -p
    for p, c in eqs.items():
        if p in upper:
            if -c + upper.pop(p) > 0:
                return None
        np_ = -p
        if np_ in upper:
            if c + upper.pop(np_) > 0:
                return None
        if p in dvds:
            n, r = dvds.pop(p)
            if (-c - r) % n:
                return None
    # opposite bounds: p + c1 <= 0 and -p + c2 <= 0  ->  c2 <= p <= -c1
    for p in list(upper):
        if p not in upper:
            continue
        np_ = -p
        if np_ in upper and p.coeffs[0][1] > 0:
            c1, c2 = upper[p], upper[np_]
            if c2 > -c1:
                return None
            if c2 == -c1:
                del upper[p]
                del upper[np_]
                if p in eqs:
                    if eqs[p] != c1:
                        return None
                else:
                    eqs[p] = c1
                    if p in dvds:
                        n, r = dvds.pop(p)
                        if (-c1 - r) % n:
                            return None
            elif p in dvds and -c1 - c2 < dvds[p][0]:
                # the window c2..-c1 is short: check some residue fits
                n, r = dvds[p]
                if not any((v - r) % n == 0 for v in range(c2, -c1 + 1)):
                    return None
    out = []
    for p, c in eqs.items():
        out.append(mk_eq(p + c, ctx))
    for p, c in upper.items():
        out.append(mk_le(p + c, ctx))
    for p, (n, r) in dvds.items():
        out.append(mk_dvd(n, p - r, ctx))
    out.extend(others)
    res = []
    for a in out:
        if isinstance(a, Bottom):
            return None
        if not isinstance(a, Top):
            res.append(a)
    return res


# ---------------------------------------------------------------------------
# elimination


def _subst_atom(a: Atom, x: str, t: LinearTerm, ctx: _Ctx, scale: int = 1) -> Formula:
    """Replace ``scale*x`` by ``t`` in canonical atom a (scale > 0 divides the
    situation as in the equality step: the atom is first multiplied by scale)."""
    c = a.lhs.coeff(x)
    if not c:
        return a
    if scale == 1:
        new = a.lhs.without(x) + t * c
        if a.op is Rel.LE:
            return mk_le(new, ctx)
        if a.op is Rel.EQ:
            return mk_eq(new, ctx)
        return mk_dvd(a.modulus, new, ctx)
    new = a.lhs.without(x) * scale + t * c
    if a.op is Rel.LE:
        return mk_le(new, ctx)
    if a.op is Rel.EQ:
        return mk_eq(new, ctx)
    return mk_dvd(a.modulus * scale, new, ctx)


def _subst(f: Formula, x: str, t: LinearTerm, ctx: _Ctx) -> Formula:
    if isinstance(f, Atom):
        return _subst_atom(f, x, t, ctx)
    if isinstance(f, And):
        out = []
        for a in f.args:
            r = _subst(a, x, t, ctx)
            if isinstance(r, Bottom):
                return FALSE
            out.append(r)
        return _conj(out)
    if isinstance(f, Or):
        out = []
        for a in f.args:
            r = _subst(a, x, t, ctx)
            if isinstance(r, Top):
                return TRUE
            out.append(r)
        return _disj(out)
    return f


def _vars_of(f: Formula) -> frozenset:
    return free_vars(f)


class _Engine:
    def __init__(self, ctx: _Ctx):
        self.ctx = ctx

    # -- formula-level ------------------------------------------------
    def qe(self, f: Formula) -> Formula:
        ctx = self.ctx
        if isinstance(f, Atom):
            return canon_atom(f, ctx)
        if isinstance(f, (Top, Bottom)):
            return f
        if isinstance(f, Not):
            return negate(self.qe(f.arg), ctx)
        if isinstance(f, And):
            out = []
            for a in f.args:
                r = self.qe(a)
                if isinstance(r, Bottom):
                    return FALSE
                out.append(r)
            return _conj(out)
        if isinstance(f, Or):
            out = []
            for a in f.args:
                r = self.qe(a)
                if isinstance(r, Top):
                    return TRUE
                out.append(r)
            return _disj(out)
        if isinstance(f, (Exists, Forall)):
            kind = type(f)
            block = []
            body = f
            while isinstance(body, kind):
                block.append(body.var)
                body = body.body
            g = self.qe(body)
            if kind is Exists:
                return self.exists(block, g)
            return negate(self.exists(block, negate(g, ctx)), ctx)
        raise TypeError(f"not a formula: {f!r}")

    def exists(self, X, f: Formula) -> Formula:
        fv = _vars_of(f)
        X = [x for x in X if x in fv]
        if not X:
            return f
        self.ctx.stats.eliminations += 1
        if isinstance(f, Or):
            out = []
            for a in f.args:
                r = self.exists(X, a)
                if isinstance(r, Top):
                    return TRUE
                out.append(r)
            return _disj(out)
        args = f.args if isinstance(f, And) else (f,)
        Xs = set(X)
        outside, inside = [], []
        for a in args:
            (inside if _vars_of(a) & Xs else outside).append(a)
        # components of conjuncts linked through shared quantified variables
        comps = _components(inside, Xs)
        result = [*outside]
        for comp_vars, comp in comps:
            r = self.exists_comp([x for x in X if x in comp_vars], comp)
            if isinstance(r, Bottom):
                return FALSE
            result.append(r)
        return _conj(result)

    def exists_comp(self, X, args) -> Formula:
        args = _propagate(list(args), self.ctx)
        if args is None:
            return FALSE
        ors = [a for a in args if isinstance(a, Or)]
        if not ors:
            return self.elim_conj(X, list(args))
        # lazy DNF: split one disjunction, others stay folded
        pick = _bridge(args, ors, set(X)) or min(ors, key=lambda o: len(o.args))
        rest = [a for a in args if a is not pick]
        out = []
        for branch in pick.args:
            r = self.exists(X, _conj(rest + [branch]))
            if isinstance(r, Top):
                return TRUE
            out.append(r)
        return _disj(out)

    # -- conjunctions ---------------------------------------------------
    def elim_conj(self, X, atoms) -> Formula:
        ctx = self.ctx
        atoms = simplify_atoms(atoms, ctx)
        if atoms is None:
            return FALSE
        Xs = set(X)
        rel = [a for a in atoms if a.lhs.vars & Xs]
        keep = [a for a in atoms if not (a.lhs.vars & Xs)]
        if not rel:
            return _conj(keep)
        X = [x for x in X if any(x in a.lhs.vars for a in rel)]
        # split into independent components again (bounds may have decoupled)
        comps = _components(rel, set(X))
        if len(comps) > 1:
            out = list(keep)
            for cv, comp in comps:
                r = self.elim_conj([x for x in X if x in cv], comp)
                if isinstance(r, Bottom):
                    return FALSE
                out.append(r)
            return _conj(out)
        # equality step
        best = None
        for a in rel:
            if a.op is Rel.EQ:
                for x in X:
                    c = a.lhs.coeff(x)
                    if c and (best is None or abs(c) < best[0]):
                        best = (abs(c), a, x)
            if best and best[0] == 1:
                break
        if best is not None:
            _, eqa, x = best
            c = eqa.lhs.coeff(x)
            t = eqa.lhs.without(x)
            if c < 0:
                c, t = -c, -t
            # c*x + t = 0: replace c*x by -t
            new = list(keep)
            if c > 1:
                new.append(mk_dvd(c, t, ctx))
            for a in rel:
                if a is eqa:
                    continue
                r = _subst_atom(a, x, -t, ctx, scale=c)
                new.append(r)
            if any(isinstance(a, Bottom) for a in new):
                return FALSE
            new = [a for a in new if not isinstance(a, Top)]
            flat = []
            for a in new:
                if isinstance(a, And):
                    flat.extend(a.args)
                else:
                    flat.append(a)
            return self.elim_conj([v for v in X if v != x], flat)
        # Cooper step on the cheapest variable
        x, info = min(((x, self._cost(x, rel)) for x in X), key=lambda p: p[1][0])
        disjuncts = self.cooper_conj(x, rel, info)
        rest = [v for v in X if v != x]
        out = []
        for d in disjuncts:
            r = self.elim_conj(rest, d) if rest else _conj(d)
            if isinstance(r, Top):
                return _conj(keep)
            out.append(r)
        return _conj([*keep, _disj(out)])

    def _cost(self, x, rel):
        L = 1
        lo = up = 0
        for a in rel:
            c = a.lhs.coeff(x)
            if not c:
                continue
            L = lcm(L, abs(c))
            if a.op is Rel.LE:
                if c > 0:
                    up += 1
                else:
                    lo += 1
        delta = L
        has_dvd = False
        for a in rel:
            c = a.lhs.coeff(x)
            if c and a.op is Rel.CONG:
                has_dvd = True
                delta = lcm(delta, a.modulus * (L // abs(c)))
        if delta == 1:
            cost = 0 if (lo == 0 or up == 0) else lo * up / 1000
        else:
            cost = max(1, min(lo, up)) * delta
        return cost, L, delta, lo, up, has_dvd

    def cooper_conj(self, x, rel, info) -> list:
        """Eliminate x from a conjunction of canonical atoms (no equalities in
        x).  Returns a list of conjunctions (each a list of atoms)."""
        ctx = self.ctx
        _, L, delta, lo, up, _ = info
        lowers, uppers, dvds, indep = [], [], [], []
        for a in rel:
            c = a.lhs.coeff(x)
            if not c:
                indep.append(a)
                continue
            m = L // abs(c)
            t = a.lhs.without(x) * m
            if a.op is Rel.LE:
                # c*x + u <= 0 scaled: sign(c)*X + m*u <= 0 with X = L*x
                if c > 0:
                    uppers.append(-t)  # X <= -t
                else:
                    lowers.append(t)   # X >= t
            else:
                sgn = 1 if c > 0 else -1
                dvds.append((a.modulus * m, t * sgn))  # N' | X + sgn*t
        if L > 1:
            dvds.append((L, ZT))
        if delta == 1 and not dvds:
            if not lowers or not uppers:
                return [indep]
            atoms = list(indep)
            for l in lowers:
                for u in uppers:
                    r = mk_le(l - u, ctx)
                    if isinstance(r, Bottom):
                        return []
                    if not isinstance(r, Top):
                        atoms.append(r)
            return [atoms]

        def instance(val: LinearTerm, skip_lower=None, skip_upper=None):
            atoms = list(indep)
            for i, l in enumerate(lowers):
                if i == skip_lower:
                    continue
                atoms.append(mk_le(l - val, ctx))
            for i, u in enumerate(uppers):
                if i == skip_upper:
                    continue
                atoms.append(mk_le(val - u, ctx))
            for n, t in dvds:
                atoms.append(mk_dvd(n, val + t, ctx))
            res = []
            for a in atoms:
                if isinstance(a, Bottom):
                    return None
                if not isinstance(a, Top):
                    res.append(a)
            return res

        out = []
        if not lowers or not uppers:
            # unbounded on one side: only the periodic part matters
            for j in range(delta):
                inst = list(indep)
                ok = True
                for n, t in dvds:
                    r = mk_dvd(n, t + j, ctx)
                    if isinstance(r, Bottom):
                        ok = False
                        break
                    if not isinstance(r, Top):
                        inst.append(r)
                if ok:
                    out.append(inst)
                    if len(inst) == len(indep):
                        return [indep]
            return out
        if len(lowers) <= len(uppers):
            for i, l in enumerate(lowers):
                for j in range(delta):
                    inst = instance(l + j, skip_lower=i if j == 0 else None)
                    if inst is not None:
                        out.append(inst)
        else:
            for i, u in enumerate(uppers):
                for j in range(delta):
                    inst = instance(u - j, skip_upper=i if j == 0 else None)
                    if inst is not None:
                        out.append(inst)
        return out

    # -- general NNF Cooper (used when DNF would be too large) ----------
    def cooper_nnf(self, x: str, f: Formula) -> Formula:
        ctx = self.ctx
        L = 1
        for a in _atoms(f):
            c = a.lhs.coeff(x)
            if c:
                L = lcm(L, abs(c))

        def norm(g):
            if isinstance(g, Atom):
                c = g.lhs.coeff(x)
                if not c:
                    return g
                m = L // abs(c)
                t = g.lhs.without(x) * m
                sgn = 1 if c > 0 else -1
                xt = LinearTerm.var(x, sgn)
                if g.op is Rel.LE:
                    return Atom(Rel.LE, xt + t, ZT)
                if g.op is Rel.EQ:
                    return Atom(Rel.EQ, LinearTerm.var(x) + t * sgn, ZT)
                return Atom(Rel.CONG, LinearTerm.var(x) + t * sgn, ZT, g.modulus * m) \
                    if g.modulus * m > 1 else TRUE
            if isinstance(g, And):
                return _conj([norm(a) for a in g.args])
            if isinstance(g, Or):
                return _disj([norm(a) for a in g.args])
            return g

        g = norm(f)
        if L > 1:
            g = _conj([g, Atom(Rel.CONG, LinearTerm.var(x), ZT, L)])
        delta = 1
        B = []
        for a in _atoms(g):
            c = a.lhs.coeff(x)
            if not c:
                continue
            t = a.lhs.without(x)
            if a.op is Rel.CONG:
                delta = lcm(delta, a.modulus)
            elif a.op is Rel.EQ:
                B.append(-t - 1)
            elif c < 0:
                B.append(t - 1)   # x >= t
        B = list(dict.fromkeys(B))

        def minus_inf(h):
            if isinstance(h, Atom):
                c = h.lhs.coeff(x)
                if not c or h.op is Rel.CONG:
                    return h
                if h.op is Rel.EQ:
                    return FALSE
                return TRUE if c > 0 else FALSE
            if isinstance(h, And):
                return _conj([minus_inf(a) for a in h.args])
            if isinstance(h, Or):
                return _disj([minus_inf(a) for a in h.args])
            return h

        gm = minus_inf(g)
        out = []
        for j in range(1, delta + 1):
            r = _subst(gm, x, LinearTerm.constant(j), ctx)
            if isinstance(r, Top):
                return TRUE
            out.append(r)
        for b in B:
            for j in range(1, delta + 1):
                r = _subst(g, x, b + j, ctx)
                if isinstance(r, Top):
                    return TRUE
                out.append(r)
        return _disj(out)


def _key(p: LinearTerm) -> tuple:
    """Sign-normalized variable part, shared by p and -p."""
    return p.coeffs if p.coeffs[0][1] > 0 else (-p).coeffs


def _propagate(args, ctx):
    """Drop disjuncts that contradict the atoms of the conjunction (checked on
    atoms sharing a variable part) and promote single survivors to units.
    Returns the new conjunct list or None when the conjunction is false."""
    atoms = [a for a in args if isinstance(a, Atom)]
    ors = [a for a in args if isinstance(a, Or)]
    others = [a for a in args if not isinstance(a, (Atom, Or))]
    if not ors:
        return args
    changed = True
    while changed:
        changed = False
        index: dict = {}
        for a in atoms:
            index.setdefault(_key(a.lhs), []).append(a)
        kept_ors = []
        for o in ors:
            keep = []
            for b in o.args:
                batoms = [b] if isinstance(b, Atom) else (
                    list(b.args) if isinstance(b, And) and all(isinstance(x, Atom) for x in b.args)
                    else None)
                if batoms is None:
                    keep.append(b)
                    continue
                rel = []
                for x in batoms:
                    rel.extend(index.get(_key(x.lhs), ()))
                if rel and simplify_atoms(rel + batoms, ctx) is None:
                    continue
                keep.append(b)
            if not keep:
                return None
            if len(keep) == 1:
                b = keep[0]
                if isinstance(b, Atom):
                    atoms.append(b)
                elif isinstance(b, And):
                    for x in b.args:
                        (atoms if isinstance(x, Atom) else (ors if isinstance(x, Or) else others)).append(x)
                elif isinstance(b, Or):
                    kept_ors.append(b)
                else:
                    others.append(b)
                changed = True
            else:
                if len(keep) < len(o.args):
                    o = Or(tuple(keep))
                kept_ors.append(o)
        ors = kept_ors
    return atoms + others + ors


def _bridge(args, ors, Xs):
    """A disjunction whose branches each meet one component of the other
    conjuncts while the whole disjunction links several; splitting it lets
    every branch fall apart into independent components."""
    if len(ors) < 2:
        return None
    best = None
    for o in ors:
        rest = [a for a in args if a is not o and _vars_of(a) & Xs]
        root = {}
        for vs, _ in _components(rest, Xs):
            for v in vs:
                root[v] = id(vs)
        touched = {root.get(v, v) for v in _vars_of(o) & Xs}
        if len(touched) < 2:
            continue
        ok = all(len({root.get(v, v) for v in _vars_of(b) & Xs}) <= 1 for b in o.args)
        if ok and (best is None or len(o.args) < len(best.args)):
            best = o
    return best


def _atoms(f):
    if isinstance(f, Atom):
        yield f
    elif isinstance(f, (And, Or)):
        for a in f.args:
            yield from _atoms(a)


def _components(args, Xs):
    """Group conjuncts into classes connected by shared variables from Xs."""
    parent = {}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    info = []
    for a in args:
        vs = _vars_of(a) & Xs
        info.append(vs)
        for v in vs:
            parent.setdefault(v, v)
        vs = list(vs)
        for v in vs[1:]:
            ra, rb = find(vs[0]), find(v)
            if ra != rb:
                parent[ra] = rb
    groups: dict = {}
    for a, vs in zip(args, info):
        root = find(next(iter(vs)))
        groups.setdefault(root, ([], set()))
        groups[root][0].append(a)
        groups[root][1].update(vs)
    return [(vs, items) for items, vs in groups.values()]


# ---------------------------------------------------------------------------
# pretty printing of canonical output


def _pretty_atom(a: Atom) -> Formula:
    t = a.lhs
    pos = LinearTerm(tuple((v, c) for v, c in t.coeffs if c > 0), 0)
    negp = LinearTerm(tuple((v, -c) for v, c in t.coeffs if c < 0), 0)
    if a.op is Rel.CONG:
        n = a.modulus
        p = t.var_part()
        r = (-t.const) % n
        if p.coeffs and p.coeffs[0][1] < 0:
            p, r = -p, (-r) % n
        p = LinearTerm(tuple((v, c % n if c % n <= n // 2 else c % n - n) for v, c in p.coeffs), 0)
        return Atom(Rel.CONG, p, LinearTerm.constant(r), n)
    op = Rel.LE if a.op is Rel.LE else Rel.EQ
    if pos.coeffs:
        return Atom(op, pos, negp - t.const)
    return Atom(op, LinearTerm.constant(t.const), negp)


def pretty(f: Formula) -> Formula:
    if isinstance(f, Atom):
        return _pretty_atom(f) if _is_canon(f) else f
    if isinstance(f, And):
        return And(tuple(pretty(a) for a in f.args))
    if isinstance(f, Or):
        return Or(tuple(pretty(a) for a in f.args))
    if isinstance(f, Not):
        return Not(pretty(f.arg))
    return f


# ---------------------------------------------------------------------------
# public API


def _standardize(f: Formula, avoid: set) -> Formula:
    """Rename bound variables apart from ``avoid`` and from each other."""
    counter = [0]
    used = set(avoid) | set(all_vars(f))

    def go(g):
        if isinstance(g, (Exists, Forall)):
            body = g.body
            var = g.var
            if var in avoid or var in seen:
                new = var
                while new in used or new in seen:
                    counter[0] += 1
                    new = f"{g.var}_{counter[0]}"
                used.add(new)
                body = substitute(body, {var: LinearTerm.var(new)})
                var = new
            seen.add(var)
            return type(g)(var, go(body))
        if isinstance(g, And):
            return And(tuple(go(a) for a in g.args))
        if isinstance(g, Or):
            return Or(tuple(go(a) for a in g.args))
        if isinstance(g, Not):
            return Not(go(g.arg))
        return g

    seen: set = set()
    return go(f)


def _prepare_env(env):
    if not env:
        return {}
    out = {}
    for k, v in env.items():
        e = as_element(v)
        out[k] = e.z if e.is_finite() else e
    return out


def eliminate(f: Formula, env: Mapping | None = None, budget: int = DEFAULT_BUDGET,
              stats: Stats | None = None, canonical: bool = False) -> Formula:
    """Quantifier-free equivalent of ``f``.  Variables bound in ``env`` are
    treated as named constants and folded away."""
    env = _prepare_env(env)
    ctx = _Ctx(env, budget, stats or Stats())
    t0 = time.perf_counter()
    f = _standardize(f, set(env) | set(free_vars(f)))
    out = _Engine(ctx).qe(f)
    ctx.stats.ms += (time.perf_counter() - t0) * 1000
    return out if canonical else pretty(out)


def decide(sentence: Formula, env: Mapping | None = None, budget: int = DEFAULT_BUDGET,
           stats: Stats | None = None) -> bool:
    env = _prepare_env(env)
    free = free_vars(sentence) - set(env)
    if free:
        raise FreeVariableError(f"not a sentence, free variables: {sorted(free)}")
    r = eliminate(sentence, env, budget, stats, canonical=True)
    if isinstance(r, Top):
        return True
    if isinstance(r, Bottom):
        return False
    # every atom mentions only env names; evaluate what is left
    return evaluate(r, env, model="M")


def _solve_1d(g: Formula, v: str, env) -> object | None:
    """Smallest-|value| solution of a QF formula in one variable v."""
    if isinstance(g, Top):
        return 0
    if isinstance(g, Bottom):
        return None
    delta = 1
    points = [0]
    for a in _atoms(g):
        c = a.lhs.coeff(v)
        if not c:
            continue
        if a.op is Rel.CONG:
            delta = lcm(delta, a.modulus)
            continue
        rest = a.lhs.without(v).evaluate(env) if env else a.lhs.without(v).const
        # c*v + rest = 0  ->  v = -rest/c
        val = -rest
        if isinstance(val, int):
            points.append(val // c)
        else:
            points.append(as_element(val).scale(Fraction(1, c)))
    cands = set()
    for p in points:
        for d in range(-delta - 1, delta + 2):
            cands.add(p + d)
    best = None
    for cnd in sorted(cands, key=lambda e: (abs(e), e < 0, str(e))):
        full = dict(env)
        full[v] = cnd
        if evaluate(g, full, model="M"):
            best = cnd
            break
    if isinstance(best, ModelElement) and best.is_finite():
        best = best.z
    return best


def satisfiable(f: Formula, env: Mapping | None = None, order=None,
                budget: int = DEFAULT_BUDGET, stats: Stats | None = None) -> dict | None:
    """A satisfying assignment of the free variables of f (outside env), or None.

    Variables are fixed one at a time; each value is the one of least absolute
    value (then positive) compatible with the choices made so far."""
    env = _prepare_env(env)
    stats = stats or Stats()
    fvs = sorted(free_vars(f) - set(env))
    if order is not None:
        fvs = [v for v in order if v in fvs] + [v for v in fvs if v not in order]
    if not fvs:
        return {} if decide(f, env, budget, stats) else None
    base = eliminate(f, env, budget, stats, canonical=True)
    if isinstance(base, Bottom):
        return None
    witness: dict = {}
    cur = base
    for i, v in enumerate(fvs):
        rest = fvs[i + 1:]
        g = eliminate(Exists_block(rest, cur), env, budget, stats, canonical=True) if rest else cur
        val = _solve_1d(g, v, env)
        if val is None:
            return None
        witness[v] = val
        if isinstance(val, int):
            cur = eliminate(substitute(cur, {v: LinearTerm.constant(val)}), env, budget, stats,
                            canonical=True)
        else:
            env = {**env, v: val}
            cur = eliminate(cur, env, budget, stats, canonical=True)
    check_env = {**env, **witness}
    g = f if is_quantifier_free(f) else base
    if not evaluate(g, check_env, model="M"):
        raise AssertionError("internal error: witness failed verification")
    return witness


def Exists_block(vs, body):
    for v in reversed(list(vs)):
        body = Exists(v, body)
    return body


def equivalent(f: Formula, g: Formula, env: Mapping | None = None,
               budget: int = DEFAULT_BUDGET) -> bool:
    """Decide ``forall free. f <-> g``."""
    from pkit.formula import forall, iff
    env = _prepare_env(env)
    fv = sorted((free_vars(f) | free_vars(g)) - set(env))
    return decide(forall(fv, iff(f, g)), env, budget)


def implies_valid(f: Formula, g: Formula, env: Mapping | None = None,
                  budget: int = DEFAULT_BUDGET) -> bool:
    from pkit.formula import forall, implies
    env = _prepare_env(env)
    fv = sorted((free_vars(f) | free_vars(g)) - set(env))
    return decide(forall(fv, implies(f, g)), env, budget)


def is_empty(f: Formula, env: Mapping | None = None, budget: int = DEFAULT_BUDGET) -> bool:
    from pkit.formula import exists
    env = _prepare_env(env)
    fv = sorted(free_vars(f) - set(env))
    return not decide(exists(fv, f), env, budget)
