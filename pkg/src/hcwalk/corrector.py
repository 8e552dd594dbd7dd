"""Periodic correctors, effective diffusion matrices and limit jump rates.

On each fast component ``B_i`` the operator ``P0 - I`` restricted to the
component's cells is symmetric, negative semidefinite and has the
constants as its kernel. All three corrector problems are singular
systems on this operator, solved on the mean-zero subspace:

* vector corrector ``h``:  ``(P0 - I) h = -sum_xi p_xi(y) xi``
* matrix corrector ``g``:  ``(P0 - I) g = Theta - Phi(h)``
* rate correctors ``q_j``: ``(P0 - I) q_j = v(., j) - alpha_ij``

where ``v(y, j)`` is the total V-mass from cell ``y`` into label ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .environment import lift_connectivity
from .voltage import LiftVerdict

SOLVER_TOL = 1e-10
FREDHOLM_TOL = 1e-10


class CorrectorError(RuntimeError):
    pass


class FredholmError(CorrectorError):
    """Right-hand side of a singular system is not orthogonal to constants."""


class NotPositiveDefiniteError(CorrectorError):
    pass


@dataclass(frozen=True)
class Component:
    """Restriction of P0 to one fast component."""

    label: int
    cells: np.ndarray  # flat cell indices, sorted
    src: np.ndarray  # local index of entry source
    dst: np.ndarray  # local index of entry target
    offsets: np.ndarray  # (E, d)
    p: np.ndarray  # (E,) p0 weights
    laplacian: sp.csr_matrix  # P0 - I on the component

    @property
    def size(self):
        return len(self.cells)


def fast_components(env):
    j = env.jumps
    lab = env.partition.label_of
    out = []
    for k in range(env.partition.n_fast):
        cells = env.partition.component_cells(k)
        local = -np.ones(env.geometry.cell_count, dtype=np.int64)
        local[cells] = np.arange(len(cells))
        m = (lab[j.cells] == k) & (j.p0 > 0)
        src, dst = local[j.cells[m]], local[j.targets[m]]
        n = len(cells)
        A = sp.coo_matrix((j.p0[m], (src, dst)), shape=(n, n)).tocsr()
        K = (A - sp.diags(np.asarray(A.sum(axis=1)).ravel())).tocsr()
        out.append(Component(k, cells, src, dst, j.offsets[m], j.p0[m], K))
    return out


def _cg_centered(A, rhs, tol, maxiter):
    """Conjugate gradients for ``A x = rhs`` with A symmetric PSD, ker A = constants.

    ``rhs`` must be centered; iterates are re-projected onto the mean-zero
    subspace every step to keep round-off out of the kernel.
    """
    x = np.zeros_like(rhs)
    r = rhs - rhs.mean()
    p = r.copy()
    rr = r @ r
    for _ in range(maxiter):
        if np.abs(r).max() <= tol:
            break
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            break
        a = rr / pAp
        x += a * p
        r -= a * Ap
        r -= r.mean()
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x - x.mean()


def _pinned(A, rhs):
    n = len(rhs)
    x = np.zeros(n)
    if n > 1:
        x[1:] = spla.spsolve(A[1:, 1:].tocsc(), rhs[1:])
    return x - x.mean()


def solve_singular(K, rhs, method="cg", tol=SOLVER_TOL, what="system"):
    """Solve ``K u = rhs`` on a connected fast component, returning the mean-zero solution.

    Parameters
    ----------
    K : sparse matrix
        ``P0 - I`` restricted to the component.
    rhs : (n,) or (n, m) ndarray
        One or several right-hand sides (columns).
    method : {"cg", "pinned"}
        Projected conjugate gradients on ``-K``, or a direct solve with the
        first cell pinned to zero followed by re-centering.

    Returns
    -------
    u : ndarray, same shape as ``rhs``
    residual : float
        Sup-norm of ``K u - rhs``.
    """
    rhs = np.asarray(rhs, dtype=float)
    cols = rhs.reshape(len(rhs), -1)
    defect = np.abs(cols.mean(axis=0)).max() if cols.size else 0.0
    if defect > FREDHOLM_TOL:
        raise FredholmError(f"{what}: right-hand side has mean {defect:.3e}, not orthogonal to constants")
    A = (-K).tocsr()
    n = len(rhs)
    out = np.empty_like(cols)
    for c in range(cols.shape[1]):
        b = cols[:, c] - cols[:, c].mean()
        if method == "cg":
            scale = max(1.0, np.abs(b).max())
            out[:, c] = _cg_centered(A, b, 1e-3 * tol * scale, maxiter=20 * n + 200)
        elif method == "pinned":
            out[:, c] = _pinned(A, b)
        else:
            raise ValueError(f"unknown method {method!r}")
    u = -out
    residual = float(np.abs(K @ u - cols).max()) if cols.size else 0.0
    if residual > tol * max(1.0, float(np.abs(cols).max())):
        raise CorrectorError(f"{what}: residual {residual:.3e} above tolerance {tol:.0e}")
    return u.reshape(rhs.shape), residual


def _check_connected(env):
    for k, verdict in lift_connectivity(env).items():
        if verdict is not LiftVerdict.CONNECTED_UNBOUNDED:
            raise CorrectorError(f"{env.labels[k]} lift is {verdict.value}")


def drift(comp, dim):
    """``b(y) = sum_xi p_xi(y) xi`` per component cell, shape ``(n, d)``."""
    b = np.zeros((comp.size, dim))
    np.add.at(b, comp.src, comp.p[:, None] * comp.offsets)
    return b


def solve_h(env, method="cg", components=None):
    """Vector corrector per fast component.

    Returns a list of ``(n_i, d)`` arrays (mean zero) and the list of
    residuals of ``sum_xi p_xi(y) (xi + h(y+xi) - h(y)) = 0``.
    """
    _check_connected(env)
    comps = components if components is not None else fast_components(env)
    hs, res = [], []
    for comp in comps:
        b = drift(comp, env.dim)
        if np.abs(b.sum(axis=0)).max() > FREDHOLM_TOL * max(1, comp.size):
            raise FredholmError(f"{env.labels[comp.label]}: net drift {b.sum(axis=0)} is not zero")
        h, r = solve_singular(comp.laplacian, -b, method=method, what=f"h on {env.labels[comp.label]}")
        hs.append(h)
        res.append(r)
    return hs, res


def phi(comp, h):
    """``Phi(h)(y) = sum_xi p_xi(y) xi (x) (xi/2 + h(y+xi))``, shape ``(n, d, d)``."""
    xi = comp.offsets.astype(float)
    terms = comp.p[:, None, None] * xi[:, :, None] * (0.5 * xi + h[comp.dst])[:, None, :]
    out = np.zeros((comp.size,) + terms.shape[1:])
    np.add.at(out, comp.src, terms)
    return out


def compute_theta(env, hs, components=None, symmetrize=True):
    """Effective diffusion matrix of each fast component.

    Cell average of ``Phi(h)``, symmetrized. Raises
    :class:`NotPositiveDefiniteError` if the smallest eigenvalue is not
    positive.
    """
    comps = components if components is not None else fast_components(env)
    thetas = []
    for comp, h in zip(comps, hs):
        theta = phi(comp, h).mean(axis=0)
        if symmetrize:
            theta = 0.5 * (theta + theta.T)
            lo = np.linalg.eigvalsh(theta).min()
            if not lo > 0:
                raise NotPositiveDefiniteError(
                    f"Theta on {env.labels[comp.label]} has eigenvalue {lo:.3e}"
                )
        thetas.append(theta)
    return np.array(thetas)


def dirichlet_form_theta(env, hs, components=None):
    """Theta from the energy form ``(1/2|B|) sum p_xi (xi + d_xi h) (x) (xi + d_xi h)``.

    Symmetric positive semidefinite by construction; equal to
    :func:`compute_theta` whenever ``h`` solves its corrector equation.
    """
    comps = components if components is not None else fast_components(env)
    out = []
    for comp, h in zip(comps, hs):
        grad = comp.offsets + h[comp.dst] - h[comp.src]
        out.append(np.einsum("e,ei,ej->ij", comp.p, grad, grad) / (2.0 * comp.size))
    return np.array(out)


def solve_g(env, hs, thetas, method="cg", components=None):
    """Second-order corrector per fast component, shape ``(n_i, d, d)`` each."""
    comps = components if components is not None else fast_components(env)
    gs, res = [], []
    d = env.dim
    for comp, h, theta in zip(comps, hs, thetas):
        rhs = (theta[None] - phi(comp, h)).reshape(comp.size, d * d)
        g, r = solve_singular(comp.laplacian, rhs, method=method, what=f"g on {env.labels[comp.label]}")
        gs.append(g.reshape(comp.size, d, d))
        res.append(r)
    return gs, res


def compute_rates(env):
    """Jump intensities of the limit label process.

    Returns
    -------
    alpha : (L, L) ndarray
        Rate from label k to label j; fast rows are cell averages of the
        V-mass into j, astral rows the V-mass of the single site.
    lam : (L,) ndarray
        ``lam[k] = sum_j alpha[k, j]``.
    mu : (L, L) ndarray
        Embedded jump chain ``alpha[k, j] / lam[k]``.
    """
    W = env.label_coupling()
    lab = env.partition.label_of
    L = env.partition.n_labels
    alpha = np.zeros((L, L))
    for k in range(L):
        alpha[k] = W[lab == k].mean(axis=0)
    np.fill_diagonal(alpha, 0.0)
    lam = alpha.sum(axis=1)
    if not np.all(lam > 0):
        bad = int(np.flatnonzero(lam <= 0)[0])
        raise CorrectorError(f"intensity of {env.labels[bad]} is {lam[bad]}")
    mu = alpha / lam[:, None]
    return alpha, lam, mu


def solve_q(env, alpha=None, method="cg", components=None):
    """Rate correctors: for fast component i and every other label j, ``q[i][:, j]``.

    Returns the list of ``(n_i, L)`` arrays (column i is zero), residuals
    and the Fredholm defects (|mean| of each right-hand side).
    """
    if alpha is None:
        alpha = compute_rates(env)[0]
    comps = components if components is not None else fast_components(env)
    W = env.label_coupling()
    L = env.partition.n_labels
    qs, res, defects = [], [], []
    for comp in comps:
        i = comp.label
        rhs = W[comp.cells] - alpha[i][None, :]
        rhs[:, i] = 0.0
        defects.append(float(np.abs(rhs.mean(axis=0)).max()))
        q, r = solve_singular(comp.laplacian, rhs, method=method, what=f"q on {env.labels[i]}")
        qs.append(q.reshape(comp.size, L))
        res.append(r)
    return qs, res, defects


@dataclass
class CorrectorSet:
    components: list
    h: list
    g: list
    q: list
    residuals: dict = field(default_factory=dict)

    def cell_fields(self, env):
        """Correctors scattered onto all torus cells (zero on astral cells)."""
        C, d, L = env.geometry.cell_count, env.dim, env.partition.n_labels
        h = np.zeros((C, d))
        g = np.zeros((C, d, d))
        q = np.zeros((C, L))
        for comp, hi, gi, qi in zip(self.components, self.h, self.g, self.q):
            h[comp.cells], g[comp.cells], q[comp.cells] = hi, gi, qi
        return h, g, q


@dataclass(frozen=True)
class EffectiveModel:
    """Parameters of the limit process on ``R^d x {labels}``."""

    theta: np.ndarray  # (N, d, d)
    alpha: np.ndarray  # (L, L)
    lam: np.ndarray  # (L,)
    mu: np.ndarray  # (L, L)
    labels: tuple
    n_fast: int

    @property
    def dim(self):
        return self.theta.shape[-1]

    @property
    def n_labels(self):
        return len(self.labels)

    def is_astral(self, k):
        return k >= self.n_fast

    def generator(self):
        Q = self.alpha.copy()
        np.fill_diagonal(Q, -self.lam)
        return Q


def solve_correctors(env, method="cg"):
    """Solve every corrector problem and assemble the effective model."""
    comps = fast_components(env)
    hs, rh = solve_h(env, method=method, components=comps)
    thetas = compute_theta(env, hs, components=comps)
    gs, rg = solve_g(env, hs, thetas, method=method, components=comps)
    alpha, lam, mu = compute_rates(env)
    qs, rq, defects = solve_q(env, alpha, method=method, components=comps)
    energy = dirichlet_form_theta(env, hs, components=comps)
    residuals = {
        "h": max(rh, default=0.0),
        "g": max(rg, default=0.0),
        "q": max(rq, default=0.0),
        "fredholm_q": max(defects, default=0.0),
        "theta_energy_gap": float(np.abs(thetas - energy).max()),
    }
    model = EffectiveModel(thetas, alpha, lam, mu, tuple(env.labels), env.partition.n_fast)
    return CorrectorSet(comps, hs, gs, qs, residuals), model


def corrected_function(env, correctors, F, eps, lattice):
    """Corrected test function ``F_eps`` at integer lattice points.

    On a fast cell with label k:
    ``f_k + eps grad f_k . h + eps^2 hess f_k : g + eps^2 sum_j q_j (f_k - f_j)``;
    on an astral cell with label k just ``f_k``. Positions are ``eps * lattice``.
    """
    lattice = np.asarray(lattice, dtype=np.int64)
    x = eps * lattice.astype(float)
    cell = env.geometry.flat(lattice)
    lab = env.partition.label_of[cell]
    vals = F.all_values(x)
    out = vals[np.arange(len(lab)), lab]
    h, g, q = correctors.cell_fields(env)
    for k in range(env.partition.n_fast):
        m = lab == k
        if not m.any():
            continue
        f = F.funcs[k]
        xm, cm = x[m], cell[m]
        corr = eps * np.einsum("ni,ni->n", f.grad(xm), h[cm])
        corr += eps**2 * np.einsum("nij,nij->n", f.hess(xm), g[cm])
        corr += eps**2 * np.einsum("nj,nj->n", q[cm], vals[m][:, [k]] - vals[m])
        out[m] = out[m] + corr
    return out


def limit_generator_values(model, F, x, labels):
    """``(L F)(x, k)``: diffusion term on fast labels plus the jump generator."""
    vals = F.all_values(x)
    own = vals[np.arange(len(labels)), labels]
    out = np.einsum("nj,nj->n", model.alpha[labels], vals) - model.lam[labels] * own
    for k in range(model.n_fast):
        m = labels == k
        if m.any():
            out[m] += np.einsum("ij,nij->n", model.theta[k], F.funcs[k].hess(x[m]))
    return out


def window_lattice(dim, radius_sites):
    axes = [np.arange(-radius_sites, radius_sites + 1)] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)


def lemma_residual(env, correctors, model, F, eps, radius=None):
    """Sup-norm of ``L_eps F_eps - pi_eps L F`` over lattice points in ``[-R, R]^d``.

    ``L_eps = (T_eps - I) / eps^2`` is applied by direct summation over
    the jumps of ``P0 + eps^2 V``; ``L F`` uses the closed-form derivatives
    of ``F``. The default window is the support radius of ``F`` plus a
    margin of ``c1 * eps``.
    """
    if eps > env.eps_max * (1 + 1e-12):
        raise ValueError(f"eps={eps} exceeds eps_max={env.eps_max}")
    if radius is None:
        radius = F.support_radius + env.jumps.c1 * eps
        if not np.isfinite(radius):
            raise ValueError("test tuple has unbounded support; pass an explicit radius")
    n = int(np.floor(radius / eps + 1e-9))
    pts = window_lattice(env.dim, n)
    offsets, probs = env.transition_rows(eps)
    cell = env.geometry.flat(pts)
    here = corrected_function(env, correctors, F, eps, pts)
    acc = np.zeros(len(pts))
    for o in range(1, len(offsets)):
        w = probs[cell, o]
        live = w > 0
        if not live.any():
            continue
        nb = corrected_function(env, correctors, F, eps, pts[live] + offsets[o])
        acc[live] += w[live] * (nb - here[live])
    lhs = acc / eps**2
    labels = env.partition.label_of[cell]
    rhs = limit_generator_values(model, F, eps * pts.astype(float), labels)
    return float(np.abs(lhs - rhs).max())
