"""Sampling of the microscale walk and of the limit hybrid process.

The microscale walk ``X_eps(t) = eps * X(floor(t / eps^2))`` is sampled by
CDF inversion over the per-cell rows of ``P0 + eps^2 V``. The limit
process holds each label for an Exp(lambda(k)) time, diffuses with
covariance ``2 Theta_k`` per unit time while on fast label k, is frozen on
astral labels and jumps according to ``mu``.

Batch samplers split paths into fixed-size chunks, each drawing from its
own Philox stream keyed by ``(seed, tag, chunk)``; results therefore do not
depend on the number of worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

CHUNK = 8192
Z99 = NormalDist().inv_cdf(0.995)


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int | tuple = 0

    def generator(self):
        key = self.stream_id if isinstance(self.stream_id, tuple) else (self.stream_id,)
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(int(k) for k in key))
        return np.random.Generator(np.random.Philox(ss))


@dataclass
class Trajectory:
    """Piecewise record of one path; label ``labels[i]`` holds on ``[times[i], times[i+1])``."""

    times: np.ndarray
    positions: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,)
    kind: str  # "microscale" | "limit"
    eps: float | None = None
    events: np.ndarray | None = None  # limit only: True where a label jump happened


@dataclass
class PathSample:
    """Many paths observed on a shared time grid."""

    times: np.ndarray  # (m,)
    positions: np.ndarray  # (n_paths, m, d)
    labels: np.ndarray  # (n_paths, m)
    kind: str
    eps: float | None = None


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int

    @property
    def half_width(self):
        """99% normal-approximation confidence half-width."""
        return Z99 * self.stderr


def estimate(samples):
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    # shift by the first sample so constant samples give an exact mean and zero spread
    ref = samples[0]
    dev = samples - ref
    mean = ref + dev.mean()
    se = dev.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
    return Estimate(float(mean), float(se), n)


def n_steps(t, eps):
    """``floor(t / eps^2)``, robust to representation error in ``t / eps^2``."""
    return int(math.floor(t / (eps * eps) + 1e-9))


def base_start(env, cell=None):
    """Start convention: lattice point of a designated fast cell and its label.

    The default base cell is the first cell (C order) of ``fast:1``.
    """
    if cell is None:
        flat = int(env.partition.component_cells(0)[0])
    else:
        flat = int(env.geometry.flat(cell))
    coords = env.geometry.coords(flat).astype(np.int64).reshape(env.dim)
    return coords, int(env.partition.label_of[flat])


def _chunks(n_paths):
    return [(c, min(CHUNK, n_paths - c * CHUNK)) for c in range(-(-n_paths // CHUNK))]


def _map(fn, tasks, workers):
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


# ----------------------------------------------------------------------------
# microscale walk

class _WalkTables:
    def __init__(self, env, eps):
        offsets, probs = env.transition_rows(eps)
        self.offsets = offsets
        self.cdf = np.cumsum(probs, axis=1)
        self.cdf[:, -1] = 1.0
        coords = env.geometry.coords(np.arange(env.geometry.cell_count)).reshape(-1, env.dim)
        self.target = env.geometry.flat(coords[:, None, :] + offsets[None, :, :])


def _walk(env, eps, record_steps, n, gen, start):
    tab = _WalkTables(env, eps)
    d = env.dim
    pos = np.tile(start, (n, 1))
    cell = np.full(n, int(env.geometry.flat(start)))
    out_pos = np.empty((n, len(record_steps), d), dtype=np.int64)
    out_cell = np.empty((n, len(record_steps)), dtype=np.int64)
    r = 0
    last = int(record_steps[-1]) if len(record_steps) else 0
    for step in range(last + 1):
        while r < len(record_steps) and record_steps[r] == step:
            out_pos[:, r] = pos
            out_cell[:, r] = cell
            r += 1
        if step == last:
            break
        u = gen.random(n)
        idx = np.minimum((u[:, None] >= tab.cdf[cell]).sum(axis=1), len(tab.offsets) - 1)
        pos += tab.offsets[idx]
        cell = tab.target[cell, idx]
    # the label carried along equals the label of the reduced position
    if not np.array_equal(env.geometry.flat(out_pos), out_cell):
        raise AssertionError("cell tracking diverged from position")
    return out_pos, env.partition.label_of[out_cell]


def run_walk(env, eps, T, rng, start_cell=None):
    """One microscale trajectory on ``[0, T]``, recorded at every step."""
    if not 0 < eps <= env.eps_max * (1 + 1e-12):
        raise ValueError(f"eps={eps} outside (0, eps_max={env.eps_max}]")
    if T <= 0:
        raise ValueError("T must be positive")
    start, _ = base_start(env, start_cell)
    n = n_steps(T, eps)
    steps = np.arange(n + 1)
    pos, lab = _walk(env, eps, steps, 1, rng.generator(), start)
    return Trajectory(steps * eps * eps, eps * pos[0].astype(float), lab[0], "microscale", eps)


def _walk_chunk(args):
    env, eps, steps, seed, tag, chunk, size, start = args
    gen = RngStream(seed, (tag, chunk)).generator()
    return _walk(env, eps, steps, size, gen, start)


def walk_sample(env, eps, times, n_paths, seed, tag=0, start_cell=None, workers=1):
    """Positions and labels of ``n_paths`` independent walks at the given times."""
    if not 0 < eps <= env.eps_max * (1 + 1e-12):
        raise ValueError(f"eps={eps} outside (0, eps_max={env.eps_max}]")
    times = np.asarray(times, dtype=float)
    steps = np.array([n_steps(t, eps) for t in times])
    order = np.argsort(steps, kind="stable")
    start, _ = base_start(env, start_cell)
    tasks = [(env, eps, steps[order], seed, tag, c, s, start) for c, s in _chunks(n_paths)]
    parts = _map(_walk_chunk, tasks, workers)
    pos = np.concatenate([p for p, _ in parts])
    lab = np.concatenate([l for _, l in parts])
    inv = np.argsort(order)
    return PathSample(times, eps * pos[:, inv].astype(float), lab[:, inv], "microscale", eps)


# ----------------------------------------------------------------------------
# limit process

def _factors(model):
    return [np.linalg.cholesky(2.0 * th) for th in model.theta]


def _jump_cdf(model):
    cdf = np.cumsum(np.nan_to_num(model.mu), axis=1)
    cdf[:, -1] = 1.0
    return cdf


def _holding(gen, lam):
    """Exp(lam) holding times; a label with zero intensity is never left."""
    lam = np.asarray(lam, dtype=float)
    live = lam > 0
    scale = np.where(live, 1.0 / np.where(live, lam, 1.0), 1.0)
    return np.where(live, gen.exponential(scale), np.inf)


def _limit(model, x0, k0, times, n, gen):
    d = model.dim
    chol = _factors(model)
    cdf = _jump_cdf(model)
    L = model.n_labels
    x = np.tile(np.asarray(x0, dtype=float), (n, 1))
    k = np.full(n, int(k0))
    s = np.zeros(n)
    nxt = _holding(gen, model.lam[k])
    out_x = np.empty((n, len(times), d))
    out_k = np.empty((n, len(times)), dtype=np.int64)

    def advance(idx, until):
        dt = until - s[idx]
        kk = k[idx]
        for f in range(model.n_fast):
            sel = np.flatnonzero(kk == f)
            if len(sel):
                z = gen.standard_normal((len(sel), d))
                x[idx[sel]] += np.sqrt(dt[sel])[:, None] * (z @ chol[f].T)
        s[idx] = until

    for i, t in enumerate(times):
        while True:
            idx = np.flatnonzero(nxt <= t)
            if not len(idx):
                break
            advance(idx, nxt[idx])
            u = gen.random(len(idx))
            k[idx] = np.minimum((u[:, None] >= cdf[k[idx]]).sum(axis=1), L - 1)
            nxt[idx] = s[idx] + _holding(gen, model.lam[k[idx]])
        advance(np.arange(n), np.full(n, float(t)))
        out_x[:, i] = x
        out_k[:, i] = k
    return out_x, out_k


def _limit_chunk(args):
    model, x0, k0, times, seed, tag, chunk, size = args
    gen = RngStream(seed, (tag, chunk)).generator()
    return _limit(model, x0, k0, times, size, gen)


def limit_sample(model, start, times, n_paths, seed, tag=0, workers=1):
    """Positions and labels of ``n_paths`` limit paths started at ``start = (x0, k0)``."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ValueError("times must be nonnegative and sorted")
    x0, k0 = start
    tasks = [(model, x0, k0, times, seed, tag, c, s) for c, s in _chunks(n_paths)]
    parts = _map(_limit_chunk, tasks, workers)
    pos = np.concatenate([p for p, _ in parts])
    lab = np.concatenate([l for _, l in parts])
    return PathSample(times, pos, lab, "limit")


def run_limit(model, start, T, rng, grid=128):
    """One limit trajectory recorded at every label jump and on a uniform grid of ``grid`` points."""
    gen = rng.generator()
    chol = _factors(model)
    cdf = _jump_cdf(model)
    L = model.n_labels
    x = np.asarray(start[0], dtype=float).copy()
    k = int(start[1])
    d = len(x)
    t = 0.0
    out_t, out_x, out_k, out_e = [0.0], [x.copy()], [k], [False]
    marks = np.linspace(0.0, T, grid)[1:] if grid > 1 else np.array([T])
    nxt = float(_holding(gen, model.lam[k]))
    gi = 0
    while gi < len(marks):
        is_event = nxt < marks[gi]
        until = nxt if is_event else marks[gi]
        if k < model.n_fast:
            x = x + math.sqrt(until - t) * (chol[k] @ gen.standard_normal(d))
        t = until
        if is_event:
            u = gen.random()
            k = min(int((u >= cdf[k]).sum()), L - 1)
            nxt = t + float(_holding(gen, model.lam[k]))
        else:
            gi += 1
        out_t.append(t)
        out_x.append(x.copy())
        out_k.append(k)
        out_e.append(bool(is_event))
    return Trajectory(
        np.array(out_t), np.array(out_x), np.array(out_k), "limit", None, np.array(out_e)
    )


def limit_expectation(model, F, start, t, n_paths, seed, tag=0, workers=1):
    """Monte Carlo estimate of ``E F(X(t))`` for the limit process."""
    if n_paths < 100:
        raise ValueError("n_paths must be at least 100")
    sample = limit_sample(model, start, [t], n_paths, seed, tag=tag, workers=workers)
    return estimate(F(sample.positions[:, 0], sample.labels[:, 0]))


# ----------------------------------------------------------------------------
# exact semigroup

@dataclass
class WindowValues:
    lattice: np.ndarray  # (n, d) integer points
    values: np.ndarray  # (n,)
    eps: float
    steps: int

    def at(self, point):
        point = np.asarray(point)
        hit = np.flatnonzero((self.lattice == point).all(axis=1))
        if not len(hit):
            raise KeyError(f"{point} not in window")
        return float(self.values[hit[0]])


def grid_points(dim, radius):
    axes = [np.arange(-radius, radius + 1)] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def propagate(env, eps, values, radius, steps):
    """Apply the transition operator ``steps`` times to grid values.

    ``values`` lives on the cube of lattice radius ``radius`` centred at 0;
    every application loses ``c1`` sites of border, so the result is exact
    on the cube of radius ``radius - c1 * steps``.
    """
    offsets, probs = env.transition_rows(eps)
    c1 = env.jumps.c1
    d = env.dim
    inner = radius - c1 * steps
    if inner < 0:
        raise ValueError("grid too small for the requested number of steps")
    pts = grid_points(d, radius)
    cells = env.geometry.flat(pts)
    cur = np.asarray(values, dtype=float)
    r = radius
    for _ in range(steps):
        r_new = r - c1
        core = tuple(slice(radius - r_new, radius + r_new + 1) for _ in range(d))
        cell_core = cells[core]
        lo = r - r_new  # = c1, index of the new core inside cur
        here = cur[tuple(slice(lo, lo + 2 * r_new + 1) for _ in range(d))]
        # difference form u + sum_xi p_xi (u(.+xi) - u): constants are kept exactly
        nxt = here.copy()
        for o in range(1, len(offsets)):
            off = offsets[o]
            w = probs[cell_core, o]
            sl = tuple(slice(lo + off[a], lo + off[a] + 2 * r_new + 1) for a in range(d))
            nxt += w * (cur[sl] - here)
        cur, r = nxt, r_new
    return cur


def semigroup_apply(env, eps, F, t, radius=0.0, max_points=4_000_000):
    """``T_eps^floor(t/eps^2) pi_eps F`` on lattice points within ``radius`` of the origin.

    ``pi_eps F`` is evaluated on the whole domain of dependence of the
    window (``c1`` sites per step), so the values are exact up to
    floating point with no truncation of ``F``. Refuses with ``ValueError``
    when that domain exceeds ``max_points`` sites.
    """
    n = n_steps(t, eps)
    out_r = int(math.floor(radius / eps + 1e-9))
    big = out_r + env.jumps.c1 * n
    if (2 * big + 1) ** env.dim > max_points:
        raise ValueError(
            f"exact window needs {(2 * big + 1) ** env.dim} sites, above max_points={max_points}"
        )
    pts = grid_points(env.dim, big)
    flat = pts.reshape(-1, env.dim)
    labels = env.partition.label_of[env.geometry.flat(flat)]
    init = F(eps * flat.astype(float), labels).reshape(pts.shape[:-1])
    vals = propagate(env, eps, init, big, n)
    return WindowValues(grid_points(env.dim, out_r).reshape(-1, env.dim), vals.ravel(), eps, n)
