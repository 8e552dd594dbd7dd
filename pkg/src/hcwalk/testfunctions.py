"""Smooth test functions with closed-form gradients and Hessians.

A :class:`FunctionTuple` holds one function per component label, i.e. a
function ``F(x, k)`` on ``R^d x {labels}``.
"""

import math

import numpy as np


class GaussianBump:
    """``amplitude * exp(-rate * |x - center|^2)``."""

    def __init__(self, rate=1.0, center=None, amplitude=1.0):
        self.rate = float(rate)
        self.center = None if center is None else np.asarray(center, dtype=float)
        self.amplitude = float(amplitude)

    def _shift(self, x):
        return x if self.center is None else x - self.center

    def value(self, x):
        y = self._shift(x)
        return self.amplitude * np.exp(-self.rate * np.sum(y * y, axis=-1))

    def grad(self, x):
        y = self._shift(x)
        return -2.0 * self.rate * y * self.value(x)[..., None]

    def hess(self, x):
        y = self._shift(x)
        d = x.shape[-1]
        outer = 4.0 * self.rate**2 * y[..., :, None] * y[..., None, :]
        return (outer - 2.0 * self.rate * np.eye(d)) * self.value(x)[..., None, None]

    @property
    def support_radius(self):
        # |f| < 1e-16 * amplitude beyond this radius
        c = 0.0 if self.center is None else float(np.abs(self.center).max())
        return c + math.sqrt(37.0 / self.rate)


class CosineBump:
    """Compactly supported ``amplitude * cos(pi r / 2R)^4`` for ``r < R``; C^2 across ``r = R``."""

    def __init__(self, radius=1.0, center=None, amplitude=1.0):
        self.radius = float(radius)
        self.center = None if center is None else np.asarray(center, dtype=float)
        self.amplitude = float(amplitude)

    def _polar(self, x):
        y = x if self.center is None else x - self.center
        r = np.sqrt(np.sum(y * y, axis=-1))
        return y, r

    def _radial(self, r):
        w = math.pi / (2.0 * self.radius)
        s = np.minimum(r, self.radius) * w
        c, sn = np.cos(s), np.sin(s)
        inside = r < self.radius
        f = np.where(inside, c**4, 0.0)
        df = np.where(inside, -4.0 * c**3 * sn * w, 0.0)
        d2f = np.where(inside, (12.0 * c**2 * sn**2 - 4.0 * c**4) * w * w, 0.0)
        return self.amplitude * f, self.amplitude * df, self.amplitude * d2f

    def value(self, x):
        return self._radial(self._polar(x)[1])[0]

    def grad(self, x):
        y, r = self._polar(x)
        _, df, _ = self._radial(r)
        safe = np.where(r > 0, r, 1.0)
        return np.where((r > 0)[..., None], y * (df / safe)[..., None], 0.0)

    def hess(self, x):
        y, r = self._polar(x)
        _, df, d2f = self._radial(r)
        d = x.shape[-1]
        small = r < 1e-8 * self.radius
        safe = np.where(small, 1.0, r)
        u = y / safe[..., None]
        uu = u[..., :, None] * u[..., None, :]
        # f'(r)/r -> f''(0) as r -> 0
        tang = np.where(small, d2f, df / safe)
        eye = np.eye(d)
        return d2f[..., None, None] * uu + tang[..., None, None] * (eye - uu)

    @property
    def support_radius(self):
        c = 0.0 if self.center is None else float(np.abs(self.center).max())
        return c + self.radius


class Constant:
    def __init__(self, c=1.0):
        self.c = float(c)

    def value(self, x):
        return np.full(x.shape[:-1], self.c)

    def grad(self, x):
        return np.zeros(x.shape)

    def hess(self, x):
        return np.zeros(x.shape + (x.shape[-1],))

    support_radius = math.inf


class Linear:
    """``coef . x + const``; not compactly supported."""

    def __init__(self, coef, const=0.0):
        self.coef = np.asarray(coef, dtype=float)
        self.const = float(const)

    def value(self, x):
        return x @ self.coef + self.const

    def grad(self, x):
        return np.broadcast_to(self.coef, x.shape).copy()

    def hess(self, x):
        return np.zeros(x.shape + (x.shape[-1],))

    support_radius = math.inf


class FunctionTuple:
    """One scalar function per component label."""

    def __init__(self, funcs, name=""):
        self.funcs = list(funcs)
        self.name = name

    def __len__(self):
        return len(self.funcs)

    @classmethod
    def uniform(cls, func, n_labels, name=""):
        return cls([func] * n_labels, name=name)

    @property
    def support_radius(self):
        return max(f.support_radius for f in self.funcs)

    def all_values(self, x):
        """Values of every label's function at points ``x``: shape ``(n, L)``."""
        return np.stack([f.value(x) for f in self.funcs], axis=-1)

    def __call__(self, x, labels):
        """``F(x_i, k_i)`` for points ``x`` (n, d) and labels (n,)."""
        x = np.asarray(x, dtype=float)
        labels = np.asarray(labels)
        out = np.empty(labels.shape)
        for k in np.unique(labels):
            m = labels == k
            out[m] = self.funcs[int(k)].value(x[m])
        return out


def library(name, labels):
    """Named test tuples used by the command line tools.

    ``labels`` is the list of label names (``fast:i`` / ``astral:j``).
    """
    L = len(labels)
    if name == "const":
        return FunctionTuple.uniform(Constant(1.0), L, name)
    if name == "gauss":
        return FunctionTuple.uniform(GaussianBump(1.0), L, name)
    if name == "gauss-split":
        return FunctionTuple(
            [GaussianBump(1.0) if lab.startswith("fast") else GaussianBump(0.5) for lab in labels],
            name,
        )
    if name == "wide":
        # resolved by coarse meshes: width 2 on fast labels, 2*sqrt(2) on astral ones
        return FunctionTuple(
            [GaussianBump(0.25) if lab.startswith("fast") else GaussianBump(0.125) for lab in labels],
            name,
        )
    if name == "cosine":
        return FunctionTuple.uniform(CosineBump(1.5), L, name)
    raise KeyError(f"unknown test function {name!r}")


LIBRARY = ("const", "gauss", "gauss-split", "wide", "cosine")
