"""Periodic interpolation of uniformly sampled fields on boxes.

All interpolants live on an axis-aligned box with per-axis origin and period
and wrap their argument, so callers may evaluate anywhere in R^d. Cubic
interpolants are C^2 periodic splines; the 2D version is the tensor product
of the 1D construction, built by splining the spline coefficients.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError


def wrap_point(x, origin, period):
    """Map x componentwise into [origin, origin + period)."""
    return x - np.floor((x - origin) / period) * period


class PeriodicCubic1D:
    def __init__(self, values, origin=-0.5, period=1.0):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 3:
            raise ValueError("need a 1D array of at least 3 samples")
        n = values.size
        xs = origin + np.arange(n + 1) * (period / n)
        ys = np.concatenate([values, values[:1]])
        self._pp = CubicSpline(xs, ys, bc_type="periodic")
        self._dpp = self._pp.derivative()
        self.origin = float(origin)
        self.period = float(period)
        self.cells = n
        self.cell_width = period / n

    def _wrap(self, x):
        return wrap_point(np.asarray(x, dtype=float), self.origin, self.period)

    def value(self, x):
        return self._pp(self._wrap(x))

    def gradient(self, x):
        return self._dpp(self._wrap(x))

    def coefficients(self):
        """PPoly coefficients, shape (4, cells), local variable x - left edge."""
        return self._pp.c


class PeriodicLinear1D:
    def __init__(self, values, origin=-0.5, period=1.0):
        values = np.asarray(values, dtype=float)
        n = values.size
        self._vals = np.concatenate([values, values[:1]])
        self.origin = float(origin)
        self.period = float(period)
        self.cells = n
        self.cell_width = period / n

    def value(self, x):
        u = (np.asarray(x, dtype=float) - self.origin) % self.period
        i = np.minimum((u / self.cell_width).astype(int), self.cells - 1)
        t = u / self.cell_width - i
        return (1.0 - t) * self._vals[i] + t * self._vals[i + 1]

    def gradient(self, x):
        u = (np.asarray(x, dtype=float) - self.origin) % self.period
        i = np.minimum((u / self.cell_width).astype(int), self.cells - 1)
        return (self._vals[i + 1] - self._vals[i]) / self.cell_width


class PeriodicCubic2D:
    """Tensor-product periodic cubic spline on a rectangle.

    values[i, j] samples the field at (origin[0] + i*h0, origin[1] + j*h1).
    Coefficients are stored per cell as a 4x4 tensor in the PPoly convention
    (highest power first, local coordinates measured from the lower-left
    cell corner).
    """

    def __init__(self, values, origin=(-0.5, -0.5), period=(1.0, 1.0)):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise ValueError("need a 2D sample array")
        n0, n1 = values.shape
        self.origin = np.asarray(origin, dtype=float)
        self.period = np.asarray(period, dtype=float)
        self.cells = (n0, n1)
        self.h = self.period / np.array([n0, n1], dtype=float)

        vext = np.empty((n0 + 1, n1 + 1))
        vext[:n0, :n1] = values
        vext[n0, :n1] = values[0]
        vext[:, n1] = vext[:, 0]
        x0 = self.origin[0] + np.arange(n0 + 1) * self.h[0]
        x1 = self.origin[1] + np.arange(n1 + 1) * self.h[1]

        inner = CubicSpline(x1, vext, axis=1, bc_type="periodic")
        # inner.c: (4, n1) + (n0+1,); the coefficient rows are periodic in the
        # remaining axis because the data rows are, so a periodic fit applies.
        outer = CubicSpline(x0, inner.c, axis=2, bc_type="periodic")
        # outer.c: (4, n0, 4, n1) -> per-cell tensor [i, j, l, k]
        self._coef = np.ascontiguousarray(np.transpose(outer.c, (1, 3, 0, 2)))

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        u = (pts - self.origin) % self.period
        idx = np.minimum((u / self.h).astype(int),
                         np.array(self.cells) - 1)
        du = u - idx * self.h
        return pts.shape != x.shape, idx, du

    @staticmethod
    def _powers(t):
        one = np.ones_like(t)
        return np.stack([t ** 3, t ** 2, t, one], axis=-1)

    @staticmethod
    def _dpowers(t):
        zero = np.zeros_like(t)
        one = np.ones_like(t)
        return np.stack([3.0 * t ** 2, 2.0 * t, one, zero], axis=-1)

    def value(self, x):
        squeezed, idx, du = self._locate(x)
        coef = self._coef[idx[:, 0], idx[:, 1]]
        p0 = self._powers(du[:, 0])
        p1 = self._powers(du[:, 1])
        out = np.einsum("nlk,nl,nk->n", coef, p0, p1)
        return out[0] if squeezed else out

    def gradient(self, x):
        squeezed, idx, du = self._locate(x)
        coef = self._coef[idx[:, 0], idx[:, 1]]
        p0, d0 = self._powers(du[:, 0]), self._dpowers(du[:, 0])
        p1, d1 = self._powers(du[:, 1]), self._dpowers(du[:, 1])
        g0 = np.einsum("nlk,nl,nk->n", coef, d0, p1)
        g1 = np.einsum("nlk,nl,nk->n", coef, p0, d1)
        out = np.stack([g0, g1], axis=-1)
        return out[0] if squeezed else out


class PeriodicLinear2D:
    def __init__(self, values, origin=(-0.5, -0.5), period=(1.0, 1.0)):
        values = np.asarray(values, dtype=float)
        n0, n1 = values.shape
        vext = np.empty((n0 + 1, n1 + 1))
        vext[:n0, :n1] = values
        vext[n0, :n1] = values[0]
        vext[:, n1] = vext[:, 0]
        self._vals = vext
        self.origin = np.asarray(origin, dtype=float)
        self.period = np.asarray(period, dtype=float)
        self.cells = (n0, n1)
        self.h = self.period / np.array([n0, n1], dtype=float)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        u = (pts - self.origin) % self.period
        idx = np.minimum((u / self.h).astype(int), np.array(self.cells) - 1)
        t = u / self.h - idx
        i, j = idx[:, 0], idx[:, 1]
        s, r = t[:, 0], t[:, 1]
        v = self._vals
        out = ((1 - s) * (1 - r) * v[i, j] + s * (1 - r) * v[i + 1, j]
               + (1 - s) * r * v[i, j + 1] + s * r * v[i + 1, j + 1])
        return out[0] if pts.shape != x.shape else out

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        u = (pts - self.origin) % self.period
        idx = np.minimum((u / self.h).astype(int), np.array(self.cells) - 1)
        t = u / self.h - idx
        i, j = idx[:, 0], idx[:, 1]
        s, r = t[:, 0], t[:, 1]
        v = self._vals
        g0 = ((1 - r) * (v[i + 1, j] - v[i, j])
              + r * (v[i + 1, j + 1] - v[i, j + 1])) / self.h[0]
        g1 = ((1 - s) * (v[i, j + 1] - v[i, j])
              + s * (v[i + 1, j + 1] - v[i + 1, j])) / self.h[1]
        out = np.stack([g0, g1], axis=-1)
        return out[0] if pts.shape != x.shape else out


def periodic_interpolant(values, origin, period, order="cubic"):
    """Build a periodic interpolant matching the dimension of `values`."""
    if order not in ("cubic", "linear"):
        raise ConfigError(f"unknown interpolation order {order!r}")
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        cls = PeriodicCubic1D if order == "cubic" else PeriodicLinear1D
        return cls(values, origin=float(np.atleast_1d(origin)[0]),
                   period=float(np.atleast_1d(period)[0]))
    if values.ndim == 2:
        cls = PeriodicCubic2D if order == "cubic" else PeriodicLinear2D
        o = np.broadcast_to(np.atleast_1d(origin), (2,))
        p = np.broadcast_to(np.atleast_1d(period), (2,))
        return cls(values, origin=tuple(o), period=tuple(p))
    raise ValueError("only 1D and 2D fields are supported")
