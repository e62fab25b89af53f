"""Independent brute-force oracles used by the tests.

Formulas are evaluated over standard integers with numpy: each free
variable is an array, each quantifier adds an axis ranging over a finite
window and is reduced with any/all.  Nothing here calls the package's own
evaluator or eliminator."""

from __future__ import annotations

import itertools
import math
import re

import numpy as np

from pkit.formula import And, Atom, Bottom, Exists, Forall, Not, Or, Rel, Top

DEFAULT_WINDOW = 400


def window_of(text: str) -> int:
    m = re.search(r"#\s*window:\s*(\d+)", text)
    return int(m.group(1)) if m else DEFAULT_WINDOW


def _term(t, env):
    total = np.int64(t.const)
    for v, c in t.coeffs:
        total = total + c * env[v]
    return total


def np_eval(f, env: dict, window: int, depth: int):
    """Truth of f as a boolean array; env maps names to int64 arrays whose
    leading ``depth`` axes index assignments."""
    if isinstance(f, Top):
        return np.bool_(True)
    if isinstance(f, Bottom):
        return np.bool_(False)
    if isinstance(f, Atom):
        lhs, rhs = _term(f.lhs, env), _term(f.rhs, env)
        if f.op is Rel.EQ:
            return lhs == rhs
        if f.op is Rel.LE:
            return lhs <= rhs
        if f.op is Rel.GE:
            return lhs >= rhs
        if f.op is Rel.LT:
            return lhs < rhs
        if f.op is Rel.GT:
            return lhs > rhs
        return np.mod(lhs - rhs, f.modulus) == 0
    if isinstance(f, Not):
        return ~np.asarray(np_eval(f.arg, env, window, depth))
    if isinstance(f, And):
        out = np.bool_(True)
        for a in f.args:
            out = out & np_eval(a, env, window, depth)
        return out
    if isinstance(f, Or):
        out = np.bool_(False)
        for a in f.args:
            out = out | np_eval(a, env, window, depth)
        return out
    if isinstance(f, (Exists, Forall)):
        rng = np.arange(-window, window + 1, dtype=np.int64).reshape((1,) * depth + (-1,))
        inner = {k: (v.reshape(v.shape + (1,) * (depth + 1 - v.ndim)) if np.ndim(v) else v)
                 for k, v in env.items()}
        inner[f.var] = rng
        body = np.asarray(np_eval(f.body, inner, window, depth + 1))
        if body.ndim <= depth:
            return body
        return body.any(axis=depth) if isinstance(f, Exists) else body.all(axis=depth)
    raise TypeError(f"unexpected node {f!r}")


def truth_table(f, names, points: np.ndarray, window: int, params: dict | None = None,
                chunk: int = 2000) -> np.ndarray:
    """Truth of f at each row of ``points`` (columns follow ``names``)."""
    params = params or {}
    out = []
    for s in range(0, max(1, len(points)), chunk):
        block = points[s:s + chunk]
        env = {n: block[:, i].astype(np.int64) for i, n in enumerate(names)}
        env.update({k: np.int64(v) for k, v in params.items()})
        r = np.asarray(np_eval(f, env, window, 1))
        out.append(np.broadcast_to(r, (len(block),)) if r.ndim == 0 else r)
    return np.concatenate(out) if out else np.zeros(0, dtype=bool)


def grid(k: int, lo: int, hi: int) -> np.ndarray:
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64)
    axes = [np.arange(lo, hi + 1)] * k
    return np.array(list(itertools.product(*axes)), dtype=np.int64).reshape(-1, k)


def count_points(f, names, lo: int, hi: int, params: dict) -> int:
    pts = grid(len(names), lo, hi)
    return int(truth_table(f, names, pts, 0, params).sum())


def slope(xs, ys) -> float:
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.maximum(np.asarray(ys, dtype=float), 1.0))
    return float(np.polyfit(lx, ly, 1)[0])


def alternations(f, last=None) -> int:
    """Number of quantifier alternations along the worst path."""
    if isinstance(f, Not):
        return alternations(f.arg, None if last is None else ("F" if last == "E" else "E"))
    if isinstance(f, (And, Or)):
        return max((alternations(a, last) for a in f.args), default=0)
    if isinstance(f, (Exists, Forall)):
        kind = "E" if isinstance(f, Exists) else "F"
        step = 1 if last is not None and kind != last else 0
        return step + alternations(f.body, kind)
    return 0


# ---------------------------------------------------------------------------
# small-group oracles


def cayley(elements, op):
    idx = {e: i for i, e in enumerate(elements)}
    return [[idx[op(a, b)] for b in elements] for a in elements]


def is_associative(table) -> bool:
    n = len(table)
    return all(table[table[a][b]][c] == table[a][table[b][c]]
               for a in range(n) for b in range(n) for c in range(n))


def abelian_invariants(order_pairs) -> list:
    """Invariant factors of a product of cyclic groups of the given orders."""
    primes: dict = {}
    for n in order_pairs:
        m = n
        p = 2
        while m > 1:
            if m % p == 0:
                e = 0
                while m % p == 0:
                    m //= p
                    e += 1
                primes.setdefault(p, []).append(p ** e)
            p += 1
    length = max((len(v) for v in primes.values()), default=0)
    factors = [1] * length
    for p, powers in primes.items():
        powers = sorted(powers, reverse=True)
        for i, q in enumerate(powers):
            factors[length - 1 - i] *= q
    return [f for f in factors if f != 1]


def gcd_all(xs) -> int:
    g = 0
    for x in xs:
        g = math.gcd(g, x)
    return g
