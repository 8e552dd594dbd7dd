"""Bundled example environments and a generator of random valid ones."""

import json
from importlib.resources import files

import numpy as np

from .environment import load_environment

BUILTIN = ("one_d", "two_cell", "two_fast", "perforated_2d")


def builtin_path(name):
    if name not in BUILTIN:
        raise KeyError(f"unknown builtin environment {name!r}; choose from {BUILTIN}")
    return files("hcwalk") / "data" / f"{name}.json"


def builtin_document(name):
    return json.loads(builtin_path(name).read_text())


def builtin(name, strict=True):
    return load_environment(builtin_document(name), strict=strict)


def random_document(rng, dim=None, max_cells=36, n_fast=None):
    """Random environment document satisfying every validation check.

    Fast components are made connected and unbounded by a spine of edges
    through their cells plus, per direction, a jump of one full period from
    the first cell. Extra random p0 edges, V couplings between labels and
    small negative V on p0 edges are then added.
    """
    dim = dim if dim is not None else int(rng.integers(1, 3))
    while True:
        period = [int(p) for p in rng.integers(1, 7 if dim == 1 else 5, size=dim)]
        if 3 <= int(np.prod(period)) <= max_cells:
            break
    cells = [tuple(int(a) for a in c) for c in np.ndindex(*period)]
    rng.shuffle(cells)
    n_cells = len(cells)
    if n_fast is None:
        n_fast = 1 if n_cells < 5 else int(rng.integers(1, 3))
    n_astral = int(rng.integers(1, max(2, n_cells - 2 * n_fast) + 1))
    n_astral = min(n_astral, n_cells - n_fast)
    astral = cells[:n_astral]
    fast_cells = cells[n_astral:]
    groups = [fast_cells[i::n_fast] for i in range(n_fast)]
    groups = [sorted(g) for g in groups]

    undirected = {}  # (src, offset) -> [p0, v], canonical direction only

    def add(src, off, p0=0.0, v=0.0):
        off = tuple(int(a) for a in off)
        tgt = tuple((s + o) % p for s, o, p in zip(src, off, period))
        neg = tuple(-a for a in off)
        key = (src, off) if (src, off) <= (tgt, neg) else (tgt, neg)
        cur = undirected.setdefault(key, [0.0, 0.0])
        cur[0] += p0
        cur[1] += v

    for g in groups:
        for a, b in zip(g, g[1:]):
            add(a, np.subtract(b, a), p0=rng.uniform(0.2, 1.0))
        for k in range(dim):
            e = [0] * dim
            e[k] = period[k]
            add(g[0], e, p0=rng.uniform(0.2, 1.0))
        for _ in range(int(rng.integers(0, len(g) + 1))):
            a = g[int(rng.integers(len(g)))]
            b = g[int(rng.integers(len(g)))]
            shift = rng.integers(-1, 2, size=dim) * np.array(period)
            off = np.subtract(b, a) + shift
            if np.any(off):
                add(a, off, p0=rng.uniform(0.1, 1.0))

    # V couplings: every astral site and fast component joined to component 1
    def offset_to(a, b):
        off = np.subtract(b, a) + rng.integers(-1, 2, size=dim) * np.array(period)
        if not np.any(off):
            off = off + np.eye(dim, dtype=int)[0] * period[0]
        return off

    hub = groups[0]
    for x in astral:
        add(x, offset_to(x, hub[int(rng.integers(len(hub)))]), v=rng.uniform(0.2, 2.0))
    for g in groups[1:]:
        a = g[int(rng.integers(len(g)))]
        add(a, offset_to(a, hub[int(rng.integers(len(hub)))]), v=rng.uniform(0.2, 2.0))
    for _ in range(int(rng.integers(0, n_cells + 1))):
        a = cells[int(rng.integers(n_cells))]
        b = cells[int(rng.integers(n_cells))]
        off = offset_to(a, b)
        if _label(a, astral, groups) != _label(b, astral, groups) or a in astral:
            add(a, off, v=rng.uniform(0.1, 1.5))

    # scale p0 so every fast row keeps a lazy diagonal of at least 0.1
    out = {c: 0.0 for c in cells}
    for (src, off), (p0, v) in undirected.items():
        tgt = tuple((s + o) % p for s, o, p in zip(src, off, period))
        out[src] += p0
        out[tgt] += p0
    scale = 0.9 / max(max(out.values()), 0.9)
    edges = []
    for (src, off), (p0, v) in sorted(undirected.items()):
        p0 *= scale
        if p0 > 0 and rng.random() < 0.3:
            v -= rng.uniform(0.0, 0.5) * p0
        tgt = [(s + o) % p for s, o, p in zip(src, off, period)]
        neg = [-a for a in off]
        edges.append({"from": list(src), "offset": list(off), "p0": p0, "v": v})
        edges.append({"from": tgt, "offset": neg, "p0": p0, "v": v})
    sites = [{"coord": list(c), "class": _label(c, astral, groups)} for c in sorted(cells)]
    return {"name": "random", "dim": dim, "period": period, "sites": sites, "edges": edges}


def _label(c, astral, groups):
    if c in astral:
        return "astral"
    for i, g in enumerate(groups):
        if c in g:
            return f"fast:{i + 1}"
    raise ValueError(c)


def random_environment(rng, **kw):
    return load_environment(random_document(rng, **kw))
