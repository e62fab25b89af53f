"""Figures for CLI reports.  Rendering happens only on request (``--plot``)
and always to files, with the non-interactive backend."""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Mapping, Sequence

from pkit.model import ModelElement, evaluate


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def desk_value(v, scale: int = 24):
    """A standard stand-in for an element, for pictures only: the k-th
    archimedean class is mapped to ``scale / 4**(k-1)``."""
    if not isinstance(v, ModelElement):
        return v
    total = Fraction(v.z)
    for k, q in enumerate(v.q):
        total += q * Fraction(scale, 4 ** k)
    return int(round(total))


def desk_env(env: Mapping, scale: int = 24) -> dict:
    return {k: desk_value(v, scale) for k, v in env.items()}


def plot_cells(cells, vars: Sequence[str], env: Mapping, path: str, window=None,
               title: str = "") -> str:
    """Scatter the integer points of each cell (one or two free variables)."""
    plt = _pyplot()
    denv = desk_env(env)
    if window is None:
        window = (-2, max(8, max([abs(v) for v in denv.values() if isinstance(v, int)] + [0]) + 2))
    lo, hi = window
    fig, ax = plt.subplots(figsize=(5, 5) if len(vars) == 2 else (6, 2.2))
    cmap = plt.get_cmap("tab20")
    for i, cell in enumerate(cells):
        f = cell.formula()
        pts = []
        for p in itertools.product(range(lo, hi + 1), repeat=len(vars)):
            if evaluate(f, {**denv, **dict(zip(vars, p))}, model="Z"):
                pts.append(p)
        if not pts:
            continue
        sig = "".join(map(str, cell.signature))
        if len(vars) == 1:
            ax.scatter([p[0] for p in pts], [0] * len(pts), s=14, color=cmap(i % 20), label=f"({sig})")
        else:
            ax.scatter([p[0] for p in pts], [p[1] for p in pts], s=10, color=cmap(i % 20),
                       label=f"({sig})")
    ax.set_xlabel(vars[0])
    if len(vars) == 2:
        ax.set_ylabel(vars[1])
        ax.set_aspect("equal")
    else:
        ax.set_yticks([])
    if len(cells) <= 12:
        ax.legend(fontsize=7, loc="best")
    ax.set_title(title or f"{len(cells)} cells")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_lattice(points, box_lower, box_upper, path: str, title: str = "") -> str:
    """Lattice points with a translate of the box around each of them (2D;
    1D is drawn on a line)."""
    plt = _pyplot()
    from matplotlib.patches import Rectangle
    k = len(box_lower)
    fig, ax = plt.subplots(figsize=(5, 5) if k >= 2 else (6, 2))
    if k == 1:
        xs = [p[0] for p in points]
        for x in xs:
            ax.add_patch(Rectangle((x + box_lower[0], -0.2), box_upper[0] - box_lower[0], 0.4,
                                   alpha=0.2))
        ax.scatter(xs, [0] * len(xs), s=12, color="k")
        ax.set_yticks([])
    else:
        for p in points:
            ax.add_patch(Rectangle((p[0] + box_lower[0], p[1] + box_lower[1]),
                                   box_upper[0] - box_lower[0], box_upper[1] - box_lower[1], alpha=0.2))
        ax.scatter([p[0] for p in points], [p[1] for p in points], s=12, color="k")
        ax.set_aspect("equal")
    ax.autoscale_view()
    ax.set_title(title or "lattice and box translates")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_ladder(trace, path: str, order: int | None = None) -> str:
    """Image size and kernel size of f_n against the level n."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ns = [t["level"] for t in trace]
    ax.plot(ns, [t["image"] for t in trace], marker="o", label="|f_n(nB)|")
    ax.plot(ns, [t["lattice"] for t in trace], marker="s", label="|Lambda_n| (cumulative)")
    if order is not None:
        ax.axhline(order, color="grey", ls="--", lw=0.8, label="|G|")
    ax.set_xlabel("level n")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_parallelograms(pieces, vars: Sequence[str], env: Mapping, path: str, window=None) -> str:
    """Integer points of each parallelogram piece (two variables)."""
    plt = _pyplot()
    denv = desk_env(env)
    if window is None:
        window = (-2, max(8, max([abs(v) for v in denv.values() if isinstance(v, int)] + [0]) + 2))
    lo, hi = window
    fig, ax = plt.subplots(figsize=(5, 5))
    cmap = plt.get_cmap("tab10")
    for i, p in enumerate(pieces):
        penv = {**denv, **desk_env(p.env())}
        f = p.formula()
        pts = [q for q in itertools.product(range(lo, hi + 1), repeat=len(vars))
               if evaluate(f, {**penv, **dict(zip(vars, q))}, model="Z")]
        if pts:
            ax.scatter([q[0] for q in pts], [q[-1] for q in pts], s=10 + 6 * (len(pieces) - i),
                       color=cmap(i % 10), alpha=0.6, label=p.tag)
    ax.set_xlabel(vars[0])
    ax.set_ylabel(vars[-1])
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
