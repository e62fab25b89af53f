"""Command-line front end.  Exit codes: 0 success, 1 verification failure,
2 usage or input error, 3 resource limit."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from pkit.formula import ParseError, free_vars, is_quantifier_free, parse_pres
from pkit.model import parse_element
from pkit.qe import DEFAULT_BUDGET, ResourceLimit, Stats, decide, eliminate, satisfiable

SCHEMA = "pkit/1"

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_LIMIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def _load_pres(path: str, vars_arg: str | None = None):
    pf = parse_pres(_read(path))
    if vars_arg:
        vars_ = [v.strip() for v in vars_arg.split(",") if v.strip()]
    elif pf.vars is not None:
        vars_ = pf.vars
    else:
        vars_ = sorted(free_vars(pf.formula) - set(pf.params))
    return pf, vars_


def _stats(st: Stats, args) -> dict:
    return st.as_dict(timing=args.timing)


def _point(text: str | None):
    if not text:
        return None
    return tuple(parse_element(p.strip()) for p in text.split(","))


# ---------------------------------------------------------------------------
# commands: each returns (exit code, json result, text lines)


def cmd_qe(args):
    pf, _ = _load_pres(args.file)
    st = Stats()
    r = eliminate(pf.formula, pf.params, args.budget, stats=st)
    return EXIT_OK, {"input": str(pf.formula), "result": str(r), "stats": _stats(st, args)}, [str(r)]


def cmd_decide(args):
    pf, _ = _load_pres(args.file)
    free = sorted(free_vars(pf.formula) - set(pf.params))
    if free:
        raise UsageError(f"not a sentence; free variables {', '.join(free)}")
    st = Stats()
    v = decide(pf.formula, pf.params, args.budget, stats=st)
    return (EXIT_OK if v else EXIT_FAIL), {"sentence": str(pf.formula), "result": v,
                                           "stats": _stats(st, args)}, ["true" if v else "false"]


def cmd_sat(args):
    pf, vars_ = _load_pres(args.file, args.vars)
    st = Stats()
    w = satisfiable(pf.formula, pf.params, order=vars_, budget=args.budget, stats=st)
    if w is None:
        return EXIT_FAIL, {"result": False, "witness": None, "stats": _stats(st, args)}, ["unsat"]
    wj = {k: str(v) for k, v in sorted(w.items())}
    return EXIT_OK, {"result": True, "witness": wj, "stats": _stats(st, args)}, \
        [", ".join(f"{k} = {v}" for k, v in wj.items())]


def cmd_cells(args):
    from pkit.cells import certify_partition, decompose
    pf, vars_ = _load_pres(args.file, args.vars)
    f = pf.formula if is_quantifier_free(pf.formula) else eliminate(pf.formula, pf.params, args.budget)
    cells = decompose(f, vars_, pf.params, budget=args.budget)
    out = {"vars": vars_, "cells": [c.to_json() for c in cells], "count": len(cells)}
    lines = [str(c) for c in cells]
    code = EXIT_OK
    if args.certify:
        rep = certify_partition(f, cells, vars_, pf.params, budget=args.budget)
        out["certificate"] = rep.to_json()
        lines.append(f"partition certified: {rep.ok}")
        code = EXIT_OK if rep.ok else EXIT_FAIL
    if args.plot and 1 <= len(vars_) <= 2:
        from pkit.report import plot_cells
        out["figure"] = plot_cells(cells, vars_, pf.params, args.plot)
    return code, out, lines


def cmd_dim(args):
    from pkit.cells import dim
    pf, vars_ = _load_pres(args.file, args.vars)
    d = dim(pf.formula, vars_, pf.params, budget=args.budget)
    return EXIT_OK, {"vars": vars_, "dim": d}, ["empty" if d is None else str(d)]


def cmd_boxes(args):
    from pkit.cells import decompose
    from pkit.geometry import cbox_around
    pf, vars_ = _load_pres(args.file, args.vars)
    a = _point(args.point)
    if a is None or len(a) != len(vars_):
        raise UsageError(f"--point needs {len(vars_)} comma-separated elements")
    f = pf.formula if is_quantifier_free(pf.formula) else eliminate(pf.formula, pf.params, args.budget)
    cells = decompose(f, vars_, pf.params, budget=args.budget)
    pt = dict(zip(vars_, a))
    cell = next((c for c in cells if c.contains(pt, pf.params)), None)
    if cell is None:
        return EXIT_FAIL, {"error": "point is not in the set"}, ["point is not in the set"]
    cb = cbox_around(cell, pt, pf.params, args.budget)
    return EXIT_OK, {"cell": cell.to_json(), "box": cb.box.to_json()}, \
        [f"cell ({''.join(map(str, cell.signature))})"] + \
        [f"{v} in [{lo}, {hi}]" for v, lo, hi in zip(cb.box.vars, cb.box.lower, cb.box.upper)]


def cmd_parallelograms(args):
    from pkit.geometry import decompose_bounded
    pf, vars_ = _load_pres(args.file, args.vars)
    if not args.bound:
        raise UsageError("--bound is required")
    f = pf.formula if is_quantifier_free(pf.formula) else eliminate(pf.formula, pf.params, args.budget)
    pieces = decompose_bounded(f, parse_element(args.bound), vars_, pf.params, args.budget)
    out = {"vars": vars_, "pieces": [p.to_json() for p in pieces], "count": len(pieces)}
    if args.plot and len(vars_) == 2:
        from pkit.report import plot_parallelograms
        out["figure"] = plot_parallelograms(pieces, vars_, pf.params, args.plot)
    return EXIT_OK, out, [str(p) for p in pieces]


def cmd_group(args):
    from pkit import group as G
    g = G.load_group(_read(args.file))
    if args.action == "verify":
        rep = G.verify_group(g, args.budget)
        lines = [f"{r.name}: {'ok' if r.ok else 'FAIL'}" +
                 (f" counterexample {r.to_json()['counterexample']}" if r.counterexample else "")
                 for r in rep.results]
        return (EXIT_OK if rep.ok else EXIT_FAIL), {"group": g.to_json(), **rep.to_json()}, lines
    if args.action == "localize":
        a = _point(args.point) or G.default_center(g, args.budget)
        box = G.local_addition_box(g, a, args.budget)
        out = {"group": g.to_json(), "addition_box": box.to_json()}
        lines = [f"a = {', '.join(map(str, box.a))}",
                 "box: {a}" if box.cbox is None else f"box: {box.cbox.box}"]
        if args.other:
            ll = G.local_linearity(g, a, _point(args.other), args.budget)
            out["local_linearity"] = ll.to_json()
            lines.append(f"M = {ll.to_json()['M']}, N = {ll.to_json()['N']}, gamma = {ll.to_json()['gamma']}")
        return EXIT_OK, out, lines
    if args.action == "abelianize":
        try:
            rep = G.abelian_finite_index(g, _point(args.point), args.budget)
        except G.NotAGroup as e:
            out = {"group": g.to_json(), "error": str(e)}
            if e.report is not None:
                out.update(e.report.to_json())
            return EXIT_FAIL, out, [str(e)]
        j = rep.to_json()
        lines = [f"H: {j['H']}", f"abelian: {rep.abelian}", f"subgroup: {rep.subgroup}",
                 f"contains box: {rep.contains_box}", f"dim(H) = {rep.dim_H}, dim(G) = {rep.dim_G}",
                 f"x -> x a isomorphism: {rep.iso_hom and rep.iso_bij}"]
        return (EXIT_OK if rep.ok else EXIT_FAIL), {"group": g.to_json(), **j}, lines
    raise UsageError(f"unknown group action {args.action}")


def cmd_lattice(args):
    from pkit import lattice as L
    spec = L.load_lattice(_read(args.file), os.path.dirname(os.path.abspath(args.file)))
    box = spec["box"]
    if args.action == "check":
        lat = L.LocalLattice(box, spec["generators"], spec["depth"])
        rep = L.check_local_lattice(lat)
        out = {"lattice": lat.to_json(), **rep.to_json()}
        lines = [f"separation: {'ok' if rep.ok else 'FAIL'} ({rep.checked} points)"]
        if not rep.ok:
            lines.append(f"witness {list(rep.witness)} in {list(rep.violations[0][0])} + B")
        if args.plot and box.k <= 2:
            from pkit.report import plot_lattice
            out["figure"] = plot_lattice(lat.points(), box.lower, box.upper, args.plot)
        return (EXIT_OK if rep.ok else EXIT_FAIL), out, lines
    if args.action == "quotient":
        try:
            q = L.quotient(box, spec["generators"], depth=spec["depth"])
        except L.InfiniteQuotient as e:
            return EXIT_FAIL, {"error": str(e)}, [str(e)]
        except ValueError as e:
            return EXIT_FAIL, {"error": str(e)}, [str(e)]
        j = q.to_json()
        return EXIT_OK, j, [f"order {q.order}", f"invariant factors {j['nontrivial_factors'] or [1]}"]
    if args.action == "ladder":
        if spec["group"] is None:
            raise UsageError("ladder needs a group in the lattice file")
        center = tuple(spec["center"]) if spec["center"] is not None else None
        lad = L.ladder(spec["group"], box, center, spec["levels"])
        iso = L.verify_isomorphism(lad)
        q = L.quotient(box, lad.lattice, check=False)
        lat_rep = L.check_local_lattice(L.LocalLattice(box, lad.lattice, spec["depth"]))
        stress = L.stress_well_defined(lad, args.trials, args.seed)
        ok = iso.ok and lat_rep.ok and all(v == 0 for v in stress.values())
        out = {"ladder": lad.to_json(), "isomorphism": iso.to_json(), "quotient": q.to_json(),
               "local_lattice": lat_rep.to_json(),
               "stress": {"trials": args.trials, "seed": args.seed,
                          "disagreements": {str(k): v for k, v in stress.items()}}}
        if args.plot:
            from pkit.report import plot_ladder
            out["figure"] = plot_ladder(lad.trace, args.plot, len(lad.table))
        lines = [f"center {list(lad.center)}, n* = {lad.n_star}",
                 f"Lambda basis {lad.lattice}", f"invariant factors {q.to_json()['nontrivial_factors']}",
                 f"isomorphism: {iso.ok} ({iso.reason})",
                 f"stress disagreements: {sum(stress.values())}"]
        return (EXIT_OK if ok else EXIT_FAIL), out, lines
    raise UsageError(f"unknown lattice action {args.action}")


def _corpus_one(job):
    path, budget = job
    t0 = time.perf_counter()
    try:
        if path.endswith(".pres"):
            pf, vars_ = _load_pres(path)
            free = sorted(free_vars(pf.formula) - set(pf.params))
            if free:
                r = eliminate(pf.formula, pf.params, budget)
                res = {"kind": "formula", "qf": str(r)}
            else:
                res = {"kind": "sentence", "value": decide(pf.formula, pf.params, budget)}
            ok = True
        elif path.endswith(".group"):
            from pkit import group as G
            rep = G.verify_group(G.load_group(_read(path)), budget)
            res, ok = {"kind": "group", "ok": rep.ok}, True
        elif path.endswith(".lattice"):
            from pkit import lattice as L
            spec = L.load_lattice(_read(path), os.path.dirname(os.path.abspath(path)))
            if spec["generators"]:
                rep = L.check_local_lattice(L.LocalLattice(spec["box"], spec["generators"], spec["depth"]))
                res = {"kind": "lattice", "separated": rep.ok}
            else:
                res = {"kind": "lattice"}
            ok = True
        else:
            return None
        status = "ok" if ok else "fail"
    except ResourceLimit as e:
        res, status = {"error": str(e)}, "limit"
    except Exception as e:  # reported per file, the batch continues
        res, status = {"error": f"{type(e).__name__}: {e}"}, "error"
    return {"file": os.path.basename(path), "status": status, **res,
            "ms": round((time.perf_counter() - t0) * 1000, 1)}


def cmd_corpus(args):
    root = args.file
    if not os.path.isdir(root):
        raise UsageError(f"{root} is not a directory")
    paths = sorted(os.path.join(root, n) for n in os.listdir(root)
                   if n.endswith((".pres", ".group", ".lattice")))
    jobs = [(p, args.budget) for p in paths]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            results = list(ex.map(_corpus_one, jobs))
    else:
        results = [_corpus_one(j) for j in jobs]
    results = [r for r in results if r is not None]
    if not args.timing:
        for r in results:
            r.pop("ms", None)
    bad = [r for r in results if r["status"] != "ok"]
    lines = [f"{r['file']}: {r['status']}" + (f" {r.get('value', '')}" if "value" in r else "")
             for r in results]
    lines.append(f"{len(results) - len(bad)}/{len(results)} ok")
    code = EXIT_OK if not bad else (EXIT_LIMIT if all(r["status"] == "limit" for r in bad) else EXIT_FAIL)
    return code, {"files": results, "ok": not bad}, lines


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pkit", description="Presburger arithmetic toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    common.add_argument("--timing", action="store_true", help="report wall-clock time")
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="QE node budget")
    common.add_argument("--plot", metavar="PNG", default=None, help="render a figure to this file")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, hlp in [("qe", cmd_qe, "eliminate quantifiers"),
                          ("decide", cmd_decide, "decide a sentence"),
                          ("sat", cmd_sat, "find a satisfying assignment"),
                          ("cells", cmd_cells, "cell decomposition"),
                          ("dim", cmd_dim, "dimension of a set"),
                          ("boxes", cmd_boxes, "C-box around a point"),
                          ("parallelograms", cmd_parallelograms, "cover a bounded set by parallelograms"),
                          ("corpus", cmd_corpus, "run every file in a directory")]:
        sp = sub.add_parser(name, parents=[common], help=hlp)
        sp.add_argument("file")
        sp.set_defaults(fn=fn)
        if name in ("sat", "cells", "dim", "boxes", "parallelograms"):
            sp.add_argument("--vars", help="comma-separated coordinate order")
        if name == "cells":
            sp.add_argument("--certify", action="store_true", help="decide coverage and disjointness")
        if name == "boxes":
            sp.add_argument("--point", required=True, help="comma-separated elements")
        if name == "parallelograms":
            sp.add_argument("--bound", help="bound alpha with the set inside (-alpha, alpha)^n")
        if name == "corpus":
            sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    sg = sub.add_parser("group", parents=[common], help="definable group analyses")
    sg.add_argument("action", choices=["verify", "localize", "abelianize"])
    sg.add_argument("file")
    sg.add_argument("--point", help="center a (comma-separated elements)")
    sg.add_argument("--other", help="second point b for local linearity")
    sg.set_defaults(fn=cmd_group)
    sl = sub.add_parser("lattice", parents=[common], help="local lattices and the ladder")
    sl.add_argument("action", choices=["check", "ladder", "quotient"])
    sl.add_argument("file")
    sl.add_argument("--trials", type=int, default=10_000, help="stress trials per level")
    sl.set_defaults(fn=cmd_lattice)
    return p


def run(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_USAGE
    t0 = time.perf_counter()
    try:
        code, result, lines = args.fn(args)
    except (UsageError, ParseError, json.JSONDecodeError) as e:
        print(f"pkit: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceLimit as e:
        code, result, lines = EXIT_LIMIT, {"error": f"resource limit: {e}"}, [f"resource limit: {e}"]
    except (ValueError, RuntimeError) as e:
        code, result, lines = EXIT_FAIL, {"error": f"{type(e).__name__}: {e}"}, [f"error: {e}"]
    elapsed = time.perf_counter() - t0
    if args.json:
        doc = {"schema": SCHEMA, "command": args.command, "exit": code, "result": result}
        if getattr(args, "action", None):
            doc["action"] = args.action
        if args.timing:
            doc["seconds"] = round(elapsed, 3)
        out.write(json.dumps(doc, sort_keys=True, indent=2, default=str) + "\n")
    else:
        for line in lines:
            out.write(line + "\n")
        if args.timing:
            out.write(f"time: {elapsed:.3f}s\n")
    return code


def main(argv=None) -> int:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
