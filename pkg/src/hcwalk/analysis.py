"""Comparison of the microscale walk with its limit, and trajectory statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .simulate import (
    Estimate, PathSample, base_start, estimate, grid_points, limit_sample,
    n_steps, propagate, semigroup_apply, walk_sample,
)

LIMIT_TAG = 1000
SIGMAS = 3.0


class ReducibleChainError(ValueError):
    pass


@dataclass
class ComparisonRow:
    eps: float
    times: tuple
    function: str
    micro: Estimate
    micro_method: str  # "exact" | "mc"
    limit: Estimate

    @property
    def discrepancy(self):
        return abs(self.micro.mean - self.limit.mean)

    @property
    def tolerance(self):
        """Combined 3-sigma Monte Carlo band of the two estimates."""
        return SIGMAS * math.hypot(self.micro.stderr, self.limit.stderr)


@dataclass
class Trend:
    times: tuple
    function: str
    eps: list
    discrepancy: list
    tolerance: list
    verdict: str  # "consistent" | "inconsistent" | "insufficient data"
    final_within: bool = True


@dataclass
class ComparisonReport:
    rows: list = field(default_factory=list)
    trends: list = field(default_factory=list)
    abs_tol: float = 0.0  # absolute slack added to the 3-sigma band

    def within(self, row):
        return row.discrepancy <= row.tolerance + self.abs_tol

    @property
    def verdict(self):
        verdicts = {t.verdict for t in self.trends}
        if not verdicts or verdicts == {"insufficient data"}:
            return "insufficient data"
        return "inconsistent" if "inconsistent" in verdicts else "consistent"

    def summarize(self):
        groups = {}
        for row in self.rows:
            groups.setdefault((row.times, row.function), []).append(row)
        self.trends = []
        for (times, fn), rows in groups.items():
            rows = sorted(rows, key=lambda r: -r.eps)
            disc = [r.discrepancy for r in rows]
            tol = [r.tolerance for r in rows]
            self.trends.append(Trend(
                times, fn, [r.eps for r in rows], disc, tol,
                trend_verdict(disc, tol), self.within(rows[-1]),
            ))
        return self

    def table(self):
        head = f"{'eps':>8} {'times':>14} {'F':>12} {'micro':>12} {'+/-':>9} {'limit':>12} {'+/-':>9} {'|diff|':>10} {'3sig':>9}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            ts = ",".join(f"{t:g}" for t in r.times)
            lines.append(
                f"{r.eps:8.4g} {ts:>14} {r.function:>12} {r.micro.mean:12.6f} {r.micro.half_width:9.2e} "
                f"{r.limit.mean:12.6f} {r.limit.half_width:9.2e} {r.discrepancy:10.3e} {r.tolerance:9.2e}"
            )
        lines.append("")
        lines.append("trend along decreasing eps:")
        for t in self.trends:
            ts = ",".join(f"{x:g}" for x in t.times)
            tail = "" if t.final_within else " (smallest eps outside tolerance)"
            lines.append(f"  t={ts} F={t.function}: {t.verdict}{tail}")
        lines.append(f"overall: {self.verdict}")
        return "\n".join(lines)


def trend_verdict(discrepancies, tolerances):
    """Monotone trend test with a noise band.

    Along decreasing eps each discrepancy must stay below the previous one
    plus the current combined 3-sigma band (ties allowed, so exact zeros
    pass). Needs at least three values.
    """
    if len(discrepancies) < 3:
        return "insufficient data"
    for prev, cur, tol in zip(discrepancies, discrepancies[1:], tolerances[1:]):
        if not cur <= prev + tol:
            return "inconsistent"
    return "consistent"


def compare_fdd(env, model, functions, times, eps_list, n_paths, seed, start_cell=None,
                micro="auto", exact_budget=2_000_000, workers=1, abs_tol=0.0):
    """One-time marginals ``E F(X_eps(t))`` against ``E F(X(t))`` for every (eps, t, F).

    The microscale side uses the exact semigroup when its domain of
    dependence has at most ``exact_budget`` sites (``micro="auto"``), else
    Monte Carlo. The limit side is one Monte Carlo sample shared by all
    cells. Both processes start from the base fast cell.
    """
    for eps in eps_list:
        if eps > env.eps_max * (1 + 1e-12):
            raise ValueError(f"eps={eps} exceeds eps_max={env.eps_max}")
    lattice0, k0 = base_start(env, start_cell)
    times = sorted(float(t) for t in times)
    lim = limit_sample(model, (np.zeros(env.dim), k0), times, n_paths, seed, tag=LIMIT_TAG, workers=workers)
    report = ComparisonReport(abs_tol=abs_tol)
    for i, eps in enumerate(eps_list):
        sample = None
        for ti, t in enumerate(times):
            span = env.jumps.c1 * n_steps(t, eps) + int(np.abs(lattice0).max())
            use_exact = micro == "exact" or (micro == "auto" and (2 * span + 1) ** env.dim <= exact_budget)
            for F in functions:
                limit_est = estimate(F(lim.positions[:, ti], lim.labels[:, ti]))
                if use_exact:
                    val = _exact_at(env, eps, F, t, lattice0, exact_budget)
                    est, method = Estimate(val, 0.0, 0), "exact"
                else:
                    if sample is None:
                        sample = walk_sample(env, eps, times, n_paths, seed, tag=i,
                                             start_cell=start_cell, workers=workers)
                    est = estimate(F(sample.positions[:, ti], sample.labels[:, ti]))
                    method = "mc"
                report.rows.append(ComparisonRow(eps, (t,), F.name, est, method, limit_est))
    return report.summarize()


def _exact_at(env, eps, F, t, lattice0, budget):
    r = int(np.abs(lattice0).max()) * eps
    w = semigroup_apply(env, eps, F, t, radius=r, max_points=max(budget, 1))
    return w.at(lattice0)


def two_time_exact(env, eps, F, G, t1, t2, start_cell=None):
    """Exact ``E[F(X_eps(t1)) G(X_eps(t2))]`` by nested semigroup application."""
    if t2 < t1:
        raise ValueError("need t1 <= t2")
    lattice0, _ = base_start(env, start_cell)
    n1, n2 = n_steps(t1, eps), n_steps(t2, eps)
    c1, d = env.jumps.c1, env.dim
    r_out = int(np.abs(lattice0).max())
    r_mid = r_out + c1 * n1
    r_big = r_mid + c1 * (n2 - n1)

    def on_grid(func, r):
        pts = grid_points(d, r)
        flat = pts.reshape(-1, d)
        lab = env.partition.label_of[env.geometry.flat(flat)]
        return func(eps * flat.astype(float), lab).reshape(pts.shape[:-1])

    inner = propagate(env, eps, on_grid(G, r_big), r_big, n2 - n1)
    outer = propagate(env, eps, on_grid(F, r_mid) * inner, r_mid, n1)
    idx = tuple(int(a) + r_out for a in lattice0)
    return float(outer[idx])


def compare_two_time(env, model, F, G, t1, t2, eps_list, n_paths, seed, start_cell=None,
                     micro="mc", workers=1, abs_tol=0.0):
    """Two-time statistic ``E[F(X(t1)) G(X(t2))]``, microscale against limit."""
    lattice0, k0 = base_start(env, start_cell)
    lim = limit_sample(model, (np.zeros(env.dim), k0), [t1, t2], n_paths, seed,
                       tag=LIMIT_TAG + 1, workers=workers)
    limit_est = estimate(F(lim.positions[:, 0], lim.labels[:, 0]) * G(lim.positions[:, 1], lim.labels[:, 1]))
    name = f"{F.name}*{G.name}"
    report = ComparisonReport(abs_tol=abs_tol)
    for i, eps in enumerate(eps_list):
        if micro == "exact":
            est, method = Estimate(two_time_exact(env, eps, F, G, t1, t2, start_cell), 0.0, 0), "exact"
        else:
            s = walk_sample(env, eps, [t1, t2], n_paths, seed, tag=100 + i,
                            start_cell=start_cell, workers=workers)
            est = estimate(F(s.positions[:, 0], s.labels[:, 0]) * G(s.positions[:, 1], s.labels[:, 1]))
            method = "mc"
        report.rows.append(ComparisonRow(eps, (float(t1), float(t2)), name, est, method, limit_est))
    return report.summarize()


def stationary_k(model):
    """Stationary law of the label process: ``pi Q = 0``, ``sum(pi) = 1``."""
    n_comp, _ = connected_components(model.alpha > 0, directed=True, connection="strong")
    if n_comp != 1:
        raise ReducibleChainError(f"label process has {n_comp} communicating classes")
    Q = model.generator()
    L = len(Q)
    A = np.vstack([Q.T, np.ones(L)])
    b = np.zeros(L + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(A, b, rcond=None)[0]
    return pi / pi.sum()


def _as_list(trajectories):
    return [trajectories] if hasattr(trajectories, "times") and not isinstance(trajectories, PathSample) else list(trajectories)


def occupation_fractions(trajectories, n_labels=None):
    """Fraction of time spent on each label, pooled over trajectories.

    Each record's label is held until the next record, so limit paths are
    weighted by their exact event intervals and microscale paths by steps.
    """
    trajs = _as_list(trajectories)
    if not trajs:
        raise ValueError("no trajectories")
    if n_labels is None:
        n_labels = int(max(t.labels.max() for t in trajs)) + 1
    acc = np.zeros(n_labels)
    for tr in trajs:
        dt = np.diff(tr.times)
        np.add.at(acc, tr.labels[:-1], dt)
    return acc / acc.sum()


@dataclass
class MSDCurve:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray


def msd(trajectories, t_grid):
    """Mean squared displacement ``E |x(t) - x(0)|^2`` on ``t_grid``.

    Accepts a :class:`PathSample` (grid must be its time grid) or a list of
    trajectories, read at the last record not after each grid time.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if isinstance(trajectories, PathSample):
        idx = [int(np.flatnonzero(np.isclose(trajectories.times, t))[0]) for t in t_grid]
        disp = trajectories.positions[:, idx] - trajectories.positions[:, :1]
        sq = np.sum(disp**2, axis=-1)
    else:
        rows = []
        for tr in _as_list(trajectories):
            at = np.searchsorted(tr.times, t_grid + 1e-12, side="right") - 1
            rows.append(np.sum((tr.positions[at] - tr.positions[0]) ** 2, axis=-1))
        sq = np.array(rows)
    n = len(sq)
    se = sq.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(len(t_grid))
    return MSDCurve(t_grid, sq.mean(axis=0), se)


def label_msd_slopes(trajectories, n_labels=None):
    """Squared displacement per unit time accumulated while on each label.

    For the limit process the slope of label k is ``tr(2 Theta_k)`` on
    fast labels and exactly zero on astral ones.
    """
    trajs = _as_list(trajectories)
    if n_labels is None:
        n_labels = int(max(t.labels.max() for t in trajs)) + 1
    sq = np.zeros(n_labels)
    dt = np.zeros(n_labels)
    for tr in trajs:
        inc = np.sum(np.diff(tr.positions, axis=0) ** 2, axis=-1)
        np.add.at(sq, tr.labels[:-1], inc)
        np.add.at(dt, tr.labels[:-1], np.diff(tr.times))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(dt > 0, sq / np.where(dt > 0, dt, 1.0), np.nan)


def interval_increments(trajectories, label):
    """Position increments and durations of all record intervals spent on ``label``."""
    dx, dt = [], []
    for tr in _as_list(trajectories):
        m = tr.labels[:-1] == label
        dx.append(np.diff(tr.positions, axis=0)[m])
        dt.append(np.diff(tr.times)[m])
    return np.concatenate(dx), np.concatenate(dt)


def jump_counts(trajectories, n_labels):
    """Transition counts of the embedded jump chain of limit trajectories."""
    counts = np.zeros((n_labels, n_labels), dtype=np.int64)
    for tr in _as_list(trajectories):
        ev = np.flatnonzero(tr.events)
        prev = tr.labels[ev - 1]
        np.add.at(counts, (prev, tr.labels[ev]), 1)
    return counts
