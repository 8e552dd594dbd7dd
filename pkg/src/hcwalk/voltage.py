"""Voltage-graph test for connectivity of periodic lifts.

A finite quotient graph on torus cells, with every edge labelled by the
integer translation (in units of the period) it performs in the lift,
lifts to a connected and unbounded subgraph of Z^d exactly when the
quotient is connected and the lattice spanned by the cycle voltages is
all of Z^d.
"""

from collections import deque
from enum import Enum

import numpy as np


class LiftVerdict(str, Enum):
    CONNECTED_UNBOUNDED = "connected_unbounded"
    DISCONNECTED = "disconnected"
    BOUNDED = "bounded"


def hermite_rows(vectors, dim):
    """Row-style Hermite normal form of the integer lattice spanned by `vectors`.

    Exact integer arithmetic on Python ints. Returns the nonzero rows in
    echelon form with positive pivots.
    """
    rows = [[int(c) for c in v] for v in vectors if any(int(c) != 0 for c in v)]
    basis = []
    col = 0
    while rows and col < dim:
        live = [r for r in rows if r[col] != 0]
        rest = [r for r in rows if r[col] == 0]
        if not live:
            col += 1
            continue
        # Euclid on the pivot column until a single row carries it
        while len(live) > 1:
            live.sort(key=lambda r: abs(r[col]))
            pivot = live[0]
            nxt = [pivot]
            for r in live[1:]:
                q = r[col] // pivot[col]
                red = [a - q * b for a, b in zip(r, pivot)]
                if red[col] != 0:
                    nxt.append(red)
                elif any(red):
                    rest.append(red)
            live = nxt
        pivot = live[0]
        if pivot[col] < 0:
            pivot = [-a for a in pivot]
        basis.append(pivot)
        rows = rest
        col += 1
    # reduce entries above each pivot into [0, pivot)
    for i, row in enumerate(basis):
        pc = next(c for c, a in enumerate(row) if a != 0)
        for k in range(i):
            q = basis[k][pc] // row[pc]
            if q:
                basis[k] = [a - q * b for a, b in zip(basis[k], row)]
    return basis


def lattice_index(vectors, dim):
    """Index of the lattice spanned by `vectors` in Z^dim (0 if not full rank)."""
    basis = hermite_rows(vectors, dim)
    if len(basis) < dim:
        return 0
    index = 1
    for row in basis:
        index *= next(a for a in row if a != 0)
    return index


def cycle_voltages(nodes, edges, dim):
    """Spanning-tree potentials and cycle voltages of a voltage graph.

    Parameters
    ----------
    nodes : sequence of hashable
        Quotient vertices.
    edges : iterable of (src, dst, voltage)
        Directed edges; ``voltage`` is an integer d-vector.
    dim : int

    Returns
    -------
    reached : set
        Vertices reachable from ``nodes[0]`` ignoring edge direction.
    voltages : list of tuple
        Nonzero net voltages of the fundamental cycles.
    """
    adj = {n: [] for n in nodes}
    for src, dst, volt in edges:
        volt = np.asarray(volt, dtype=np.int64)
        adj[src].append((dst, volt))
        adj[dst].append((src, -volt))
    if not nodes:
        return set(), []
    root = nodes[0]
    potential = {root: np.zeros(dim, dtype=np.int64)}
    queue = deque([root])
    cycles = []
    while queue:
        u = queue.popleft()
        for w, volt in adj[u]:
            pw = potential[u] + volt
            if w not in potential:
                potential[w] = pw
                queue.append(w)
            else:
                delta = pw - potential[w]
                if delta.any():
                    cycles.append(tuple(int(a) for a in delta))
    return set(potential), cycles


def lift_verdict(nodes, edges, dim):
    nodes = list(nodes)
    reached, cycles = cycle_voltages(nodes, edges, dim)
    if len(reached) != len(nodes):
        return LiftVerdict.DISCONNECTED
    if not cycles:
        return LiftVerdict.BOUNDED
    if lattice_index(cycles, dim) == 1:
        return LiftVerdict.CONNECTED_UNBOUNDED
    return LiftVerdict.DISCONNECTED
