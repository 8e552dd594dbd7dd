"""Independent reference computations used only by the tests.

Nothing here imports the solver modules; every oracle works from the raw
environment arrays or from closed forms.
"""

import itertools

import numpy as np
from scipy.linalg import expm


def dense_operator(env):
    """Dense P0 - I on the torus, assembled entry by entry from the jump table."""
    C = env.geometry.cell_count
    K = np.zeros((C, C))
    j = env.jumps
    for c, t, p in zip(j.cells, j.targets, j.p0):
        K[c, t] += p
    K -= np.diag(K.sum(axis=1))
    return K


def pinned_solve(K, rhs):
    """Solve K u = rhs on a connected block by fixing u[0] = 0, then centre.

    Dense Gaussian elimination on the reduced system; the gauge is the zero
    mean representative.
    """
    u = np.zeros(len(K))
    if len(K) > 1:
        u[1:] = np.linalg.solve(K[1:, 1:], rhs[1:])
    return u - u.mean()


def block(env, comp_label):
    cells = np.flatnonzero(env.partition.label_of == comp_label)
    return cells


def oracle_h(env, comp_label):
    """h on the cells of one fast component: (P0 - I) h = -sum p0 xi."""
    K = dense_operator(env)
    cells = block(env, comp_label)
    idx = {c: i for i, c in enumerate(cells)}
    d = env.dim
    b = np.zeros((len(cells), d))
    j = env.jumps
    for c, off, p in zip(j.cells, j.offsets, j.p0):
        if c in idx:
            b[idx[c]] += p * off
    Kb = K[np.ix_(cells, cells)]
    return np.stack([pinned_solve(Kb, -b[:, a]) for a in range(d)], axis=1), Kb


def _local_entries(env, comp_label):
    """(source, target, offset, p0) of every p0 > 0 entry inside a component, local indices."""
    cells = block(env, comp_label)
    idx = {c: i for i, c in enumerate(cells)}
    j = env.jumps
    out = []
    for c, t, off, p in zip(j.cells, j.targets, j.offsets, j.p0):
        if p > 0 and c in idx and t in idx:
            out.append((idx[c], idx[t], np.asarray(off, dtype=float), p))
    return out


def oracle_g(env, comp_label, h, theta):
    """g from Theta - Phi(h), Phi assembled entry by entry."""
    cells = block(env, comp_label)
    d = env.dim
    phi = np.zeros((len(cells), d, d))
    for a, b, off, p in _local_entries(env, comp_label):
        phi[a] += p * np.outer(off, 0.5 * off + h[b])
    K = dense_operator(env)[np.ix_(cells, cells)]
    rhs = theta[None] - phi
    g = np.zeros_like(phi)
    for r in range(d):
        for s in range(d):
            g[:, r, s] = pinned_solve(K, rhs[:, r, s])
    return g


def oracle_q(env, comp_label, alpha):
    """q_j for every label j other than the component's own, by dense elimination."""
    cells = block(env, comp_label)
    lab = env.partition.label_of
    L = env.partition.n_labels
    W = np.zeros((len(cells), L))
    idx = {c: i for i, c in enumerate(cells)}
    j = env.jumps
    for c, t, v in zip(j.cells, j.targets, j.v):
        if c in idx and lab[t] != comp_label:
            W[idx[c], lab[t]] += v
    K = dense_operator(env)[np.ix_(cells, cells)]
    q = np.zeros((len(cells), L))
    for col in range(L):
        if col != comp_label:
            q[:, col] = pinned_solve(K, W[:, col] - alpha[comp_label, col])
    return q


def oracle_theta(env, comp_label, h):
    """Theta by the Dirichlet-form expression, summed edge by edge."""
    cells = block(env, comp_label)
    idx = {c: i for i, c in enumerate(cells)}
    d = env.dim
    th = np.zeros((d, d))
    j = env.jumps
    for c, t, off, p in zip(j.cells, j.targets, j.offsets, j.p0):
        if c in idx and p > 0:
            v = off + h[idx[t]] - h[idx[c]]
            th += p * np.outer(v, v)
    return th / (2 * len(cells))


def oracle_rates(env):
    """alpha from the V mass of every cell into each label, by direct loops."""
    L = env.partition.n_labels
    lab = env.partition.label_of
    raw = np.zeros((env.geometry.cell_count, L))
    j = env.jumps
    for c, t, v in zip(j.cells, j.targets, j.v):
        if lab[c] != lab[t]:
            raw[c, lab[t]] += v
    alpha = np.zeros((L, L))
    for k in range(L):
        alpha[k] = raw[lab == k].mean(axis=0)
    lam = alpha.sum(axis=1)
    return alpha, lam, alpha / lam[:, None]


def lift_bfs(env, comp_label, radius):
    """Brute-force lift exploration on an explicit window of periods.

    Returns (number of reachable lifted sites, whether the walk from one
    lifted cell reaches a translate by every unit period vector).
    """
    d, period = env.dim, np.array(env.period)
    cells = set(block(env, comp_label).tolist())
    j = env.jumps
    adj = {}
    for c, t, off, p in zip(j.cells, j.targets, j.offsets, j.p0):
        if p > 0 and c in cells and t in cells:
            adj.setdefault(c, []).append(np.asarray(off))
    start_flat = min(cells)
    start = tuple(int(a) for a in env.geometry.coords(start_flat).reshape(d))
    bound = radius * period
    seen = {start}
    stack = [start]
    while stack:
        x = stack.pop()
        flat = int(env.geometry.flat(np.array(x)))
        for off in adj.get(flat, []):
            y = tuple(int(a) for a in np.array(x) + off)
            if all(abs(y[a]) <= bound[a] for a in range(d)) and y not in seen:
                seen.add(y)
                stack.append(y)
    hits = all(
        tuple(int(a) for a in np.array(start) + period * e) in seen
        for e in np.eye(d, dtype=int)
    )
    return len(seen), hits


def _fourier_setup(model, length, n):
    d = model.dim
    x1 = (np.arange(n) - n // 2) * (length / n)
    grids = np.meshgrid(*([x1] * d), indexing="ij")
    pts = np.stack(grids, axis=-1).reshape(-1, d)
    k1 = 2 * np.pi * np.fft.fftfreq(n, d=length / n)
    return pts, k1


def _evolve(model, vals, k1, t):
    """Apply the limit semigroup for time t to label-vector grid values."""
    d = model.dim
    n = vals.shape[0]
    Fh = np.fft.fftn(vals, axes=tuple(range(d)))
    Q = model.generator()
    out = np.empty_like(Fh)
    for idx in itertools.product(range(n), repeat=d):
        k = k1[list(idx)]
        M = Q.copy()
        for i in range(model.n_fast):
            M[i, i] -= k @ model.theta[i] @ k
        out[idx] = expm(t * M) @ Fh[idx]
    return np.fft.ifftn(out, axes=tuple(range(d))).real


def limit_semigroup_fourier(model, F, t, length=60.0, n=2**12):
    """Exact ``E F(X(t))`` for every start label at x = 0, by Fourier transform.

    The limit generator is diagonal in Fourier space up to the label
    coupling: on frequency k it is ``Q - diag(k.Theta_i.k on fast labels)``.
    Works for d = 1 and d = 2 (d = 2 uses at most 256 points per axis).
    """
    d = model.dim
    if d == 2:
        n = min(n, 2**8)
    pts, k1 = _fourier_setup(model, length, n)
    vals = F.all_values(pts).reshape((n,) * d + (model.n_labels,))
    return _evolve(model, vals, k1, t)[(n // 2,) * d]


def limit_two_time_fourier(model, F, G, t1, t2, length=60.0, n=2**12):
    """Exact ``E[F(X(t1)) G(X(t2))]`` from x = 0 for every start label (d = 1)."""
    pts, k1 = _fourier_setup(model, length, n)
    L = model.n_labels
    g = G.all_values(pts).reshape(n, L)
    f = F.all_values(pts).reshape(n, L)
    inner = _evolve(model, g, k1, t2 - t1)
    return _evolve(model, f * inner, k1, t1)[n // 2]
