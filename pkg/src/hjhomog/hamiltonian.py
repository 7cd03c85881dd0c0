"""Hamiltonian families, periodic potentials, compact bumps and lattice sources.

The workhorse family is the shifted quadratic H(p, x) = |p + pbar|^2 - V(x)
with V a nonnegative unit-periodic potential normalized to min V = 0. A
tabulated family (caller-supplied evaluator with convexity metadata) is
accepted as an extension point; the grid solver does not support it.

Conventions: the unit cell is Q = [-1/2, 1/2)^d and every evaluation wraps
its spatial argument into Q. Bumps are radial, nonnegative, compactly
supported profiles; lattice sources are sums of bump copies over R Z^d
(zeta_R), over Z^d (zeta_inf), or over Z^d thinned by a Bernoulli occupancy
field (zeta_eta).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, LegendreConvergenceError
from .interp import periodic_interpolant


def wrap_Q(x):
    """Wrap coordinates into [-1/2, 1/2). Exact when the input is exact."""
    x = np.asarray(x, dtype=float)
    return x - np.floor(x + 0.5)


# ---------------------------------------------------------------------------
# periodic potential


class PotentialField:
    """Unit-periodic potential from uniform samples over Q, min normalized to 0.

    samples has shape (n,) in 1D or (n0, n1) in 2D, sampling the lattice
    -1/2 + j/n. Interpolation order is "cubic" (C^2 spline, default) or
    "linear".
    """

    def __init__(self, samples, order: str = "cubic", normalize: bool = True):
        samples = np.array(samples, dtype=float)
        if samples.ndim not in (1, 2):
            raise ConfigError("potential samples must be 1D or 2D")
        if order not in ("cubic", "linear"):
            raise ConfigError(f"unknown interpolation order {order!r}")
        if normalize:
            samples = samples - samples.min()
        if samples.min() < 0 or not np.isfinite(samples).all():
            raise ConfigError("potential samples must be finite and >= 0")
        samples.setflags(write=False)
        self.samples = samples
        self.order = order
        self.dim = samples.ndim
        self.min_value = float(samples.min())
        self._interp = periodic_interpolant(samples, origin=-0.5, period=1.0,
                                            order=order)
        self.lipschitz_bound = self._estimate_lipschitz()

    def _estimate_lipschitz(self) -> float:
        if self.samples.max() == self.samples.min():
            return 0.0
        if self.dim == 1:
            xs = np.linspace(-0.5, 0.5, 8 * self.samples.size, endpoint=False)
            return float(np.abs(self._interp.gradient(xs)).max())
        n0, n1 = self.samples.shape
        xs = np.linspace(-0.5, 0.5, 4 * n0, endpoint=False)
        ys = np.linspace(-0.5, 0.5, 4 * n1, endpoint=False)
        pts = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
        return float(np.linalg.norm(self._interp.gradient(pts), axis=-1).max())

    def value(self, x):
        return self._interp.value(x)

    def __call__(self, x):
        return self._interp.value(x)

    @property
    def knots_per_cell(self) -> int:
        return self.samples.shape[0]

    def max_value(self) -> float:
        return float(self.samples.max())

    def dense_min_max(self, refine: int = 8):
        """Min/max of the interpolated field over a refined sample lattice."""
        if self.dim == 1:
            xs = np.linspace(-0.5, 0.5, refine * self.samples.size,
                             endpoint=False)
            v = self.value(xs)
        else:
            n0, n1 = self.samples.shape
            r = max(2, refine // 2)
            xs = np.linspace(-0.5, 0.5, r * n0, endpoint=False)
            ys = np.linspace(-0.5, 0.5, r * n1, endpoint=False)
            pts = np.stack(np.meshgrid(xs, ys, indexing="ij"),
                           axis=-1).reshape(-1, 2)
            v = self.value(pts)
        return float(v.min()), float(v.max())

    @classmethod
    def zero(cls, dim: int = 1, n: int = 16) -> "PotentialField":
        shape = (n,) * dim
        return cls(np.zeros(shape), order="cubic", normalize=False)

    @classmethod
    def cosine(cls, amplitudes, n: int = 256, order: str = "cubic") -> "PotentialField":
        """V(x) = sum_i a_i (1 + cos(2 pi x_i)), sampled on the Q lattice."""
        a = np.atleast_1d(np.asarray(amplitudes, dtype=float))
        if a.ndim != 1 or a.size not in (1, 2) or (a < 0).any():
            raise ConfigError("cosine potential needs 1 or 2 nonnegative amplitudes")
        axes = [-0.5 + np.arange(n) / n for _ in range(a.size)]
        if a.size == 1:
            samples = a[0] * (1.0 + np.cos(2 * np.pi * axes[0]))
        else:
            gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
            samples = (a[0] * (1.0 + np.cos(2 * np.pi * gx))
                       + a[1] * (1.0 + np.cos(2 * np.pi * gy)))
        return cls(samples, order=order, normalize=True)

    @classmethod
    def from_callable(cls, fn, dim: int = 1, n: int = 256,
                      order: str = "cubic") -> "PotentialField":
        axes = [-0.5 + np.arange(n) / n for _ in range(dim)]
        if dim == 1:
            samples = np.asarray([fn(x) for x in axes[0]], dtype=float)
        else:
            gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
            pts = np.stack([gx, gy], axis=-1)
            samples = np.apply_along_axis(fn, -1, pts)
        return cls(samples, order=order, normalize=True)


# ---------------------------------------------------------------------------
# compact bumps


def _smooth_profile(s):
    """The standard C^infinity bump exp(1 - 1/(1 - s^2)) on |s| < 1."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si * si))
    return out


class BumpProfile:
    """Radial nonnegative bump of given amplitude, supported in |x| <= support_radius.

    shape: "tent" (kink at 0 and the edge), "smooth" (C^infinity mollifier
    profile), or "tabulated" (radial samples on [0, support_radius] with
    linear interpolation; last sample must vanish).
    """

    def __init__(self, shape: str, amplitude: float, support_radius: float,
                 table=None):
        if shape not in ("tent", "smooth", "tabulated"):
            raise ConfigError(f"unknown bump shape {shape!r}")
        if amplitude < 0:
            raise ConfigError("bump amplitude must be >= 0")
        if support_radius <= 0:
            raise ConfigError("bump support radius must be > 0")
        self.shape = shape
        self.amplitude = float(amplitude)
        self.support_radius = float(support_radius)
        if shape == "tabulated":
            table = np.array(table, dtype=float)
            if table.ndim != 1 or table.size < 2 or (table < 0).any():
                raise ConfigError("tabulated bump needs nonnegative radial samples")
            if table[-1] != 0.0:
                raise ConfigError("tabulated bump must vanish at the support edge")
            if amplitude > 0:
                table = table * (amplitude / table.max())
            table.setflags(write=False)
            self.table = table
        else:
            self.table = None
        self.lipschitz_bound = self._estimate_lipschitz()

    def _estimate_lipschitz(self) -> float:
        a, D = self.amplitude, self.support_radius
        if a == 0.0:
            return 0.0
        if self.shape == "tent":
            return a / D
        if self.shape == "tabulated":
            dr = D / (self.table.size - 1)
            return float(np.abs(np.diff(self.table)).max() / dr)
        s = np.linspace(0.0, 1.0, 4097, endpoint=False)
        phi = _smooth_profile(s)
        dphi = phi * (-2.0 * s / (1.0 - s * s) ** 2)
        return float(a * np.abs(dphi).max() / D)

    def radial(self, r):
        """Profile value at radius r (vectorized), zero for r >= support_radius."""
        r = np.abs(np.asarray(r, dtype=float))
        s = r / self.support_radius
        if self.shape == "tent":
            return self.amplitude * np.maximum(0.0, 1.0 - s)
        if self.shape == "smooth":
            return self.amplitude * _smooth_profile(s)
        rr = np.minimum(r, self.support_radius)
        idx = rr * (self.table.size - 1) / self.support_radius
        return np.where(s < 1.0, np.interp(idx, np.arange(self.table.size),
                                           self.table), 0.0)

    def at(self, x, dim: int):
        """Evaluate the bump at points x of shape (..., dim) (or scalars, 1D)."""
        x = np.asarray(x, dtype=float)
        if dim == 1:
            return self.radial(x)
        return self.radial(np.linalg.norm(x, axis=-1))

    def radial_breakpoints(self):
        """Radii where the profile loses smoothness; quadrature aligns to these."""
        if self.shape == "tent":
            return np.array([0.0, self.support_radius])
        if self.shape == "tabulated":
            return np.linspace(0.0, self.support_radius, self.table.size)
        return np.array([self.support_radius])


# ---------------------------------------------------------------------------
# Hamiltonian specs


@dataclass(frozen=True)
class HamiltonianSpec:
    """A periodic Hamiltonian: the quadratic family or a tabulated evaluator.

    For family "quadratic", H(p, x) = |p + pbar|^2 - V(x). For "tabulated",
    evaluator(p, x) is called with x already wrapped into Q; p_range bounds
    the admissible |p|_inf and convexity is a lower bound on the Hessian
    D^2_pp H used to bracket Legendre transforms.
    """

    dim: int
    pbar: np.ndarray
    potential: PotentialField
    family: str = "quadratic"
    evaluator: Optional[Callable] = None
    grad_evaluator: Optional[Callable] = None
    p_range: Optional[float] = None
    convexity: float = 2.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError("only dim 1 and 2 are supported")
        pbar = np.atleast_1d(np.asarray(self.pbar, dtype=float))
        if pbar.shape != (self.dim,):
            raise ConfigError("pbar must have one entry per dimension")
        pbar.setflags(write=False)
        object.__setattr__(self, "pbar", pbar)
        if self.potential.dim != self.dim:
            raise ConfigError("potential dimension does not match spec")
        if self.family not in ("quadratic", "tabulated"):
            raise ConfigError(f"unknown family {self.family!r}")
        if self.family == "tabulated" and self.evaluator is None:
            raise ConfigError("tabulated family needs an evaluator")


def quadratic_spec(pbar, potential: Optional[PotentialField] = None) -> HamiltonianSpec:
    pbar = np.atleast_1d(np.asarray(pbar, dtype=float))
    dim = pbar.size
    if potential is None:
        potential = PotentialField.zero(dim=dim)
    return HamiltonianSpec(dim=dim, pbar=pbar, potential=potential)


def _check_p_range(spec, p):
    if spec.p_range is not None:
        if np.max(np.abs(p)) > spec.p_range:
            raise ValueError(
                f"momentum outside tabulated range |p|_inf <= {spec.p_range}")


def eval_H(spec: HamiltonianSpec, p, x):
    """H(p, x mod Z^d). Vectorized over leading axes of p and x."""
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    if spec.family == "quadratic":
        if spec.dim == 1:
            q = p + spec.pbar[0]
            return q * q - spec.potential.value(x)
        q = p + spec.pbar
        return np.sum(q * q, axis=-1) - spec.potential.value(x)
    _check_p_range(spec, p)
    return spec.evaluator(p, wrap_Q(x))


def grad_p_H(spec: HamiltonianSpec, p, x):
    """Momentum gradient of H; 2 (p + pbar) for the quadratic family."""
    p = np.asarray(p, dtype=float)
    if spec.family == "quadratic":
        return 2.0 * (p + (spec.pbar[0] if spec.dim == 1 else spec.pbar))
    _check_p_range(spec, p)
    if spec.grad_evaluator is not None:
        return spec.grad_evaluator(p, wrap_Q(x))
    # central differences, adequate for the extension family
    h = 1e-6
    if spec.dim == 1:
        return (eval_H(spec, p + h, x) - eval_H(spec, p - h, x)) / (2 * h)
    g = np.zeros(2)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        g[i] = (eval_H(spec, p + e, x) - eval_H(spec, p - e, x)) / (2 * h)
    return g


# ---------------------------------------------------------------------------
# Legendre transform


@dataclass(frozen=True)
class LagrangianEval:
    """Legendre transform L(a, x) = sup_p ( -<p, a> - H(p, x) ).

    Closed form for the quadratic family: |a|^2/4 + <pbar, a> + V(x)
    (the sup is attained at p = -a/2 - pbar). Other families fall back to a
    bracketed numeric maximization.
    """

    spec: HamiltonianSpec

    @property
    def closed_form(self) -> bool:
        return self.spec.family == "quadratic"

    def value(self, alpha, x):
        return legendre(self, alpha, x)


def _golden_max(f, lo, hi, tol=1e-12, max_iter=200):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol * max(1.0, abs(a) + abs(b)):
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    else:
        raise LegendreConvergenceError(
            "golden-section maximization did not converge", bracket=(a, b))
    return 0.5 * (a + b)


def legendre(leval: LagrangianEval, alpha, x):
    """Evaluate the Lagrangian; vectorized in the closed-form case."""
    spec = leval.spec
    alpha = np.asarray(alpha, dtype=float)
    if leval.closed_form:
        if spec.dim == 1:
            return (alpha * alpha / 4.0 + spec.pbar[0] * alpha
                    + spec.potential.value(np.asarray(x, dtype=float)))
        return (np.sum(alpha * alpha, axis=-1) / 4.0
                + np.dot(alpha, spec.pbar)
                + spec.potential.value(np.asarray(x, dtype=float)))
    c = max(spec.convexity, 1e-8)
    anorm = float(np.max(np.abs(alpha)))
    p_max = anorm / c + float(np.max(np.abs(spec.pbar))) + 1.0
    if spec.p_range is not None:
        p_max = min(p_max, spec.p_range)

    if spec.dim == 1:
        f = lambda p: float(-p * alpha - eval_H(spec, p, x))
        p_star = _golden_max(f, -p_max, p_max)
        # Newton polish on the stationarity condition
        for _ in range(5):
            h = 1e-6
            g = (f(p_star + h) - f(p_star - h)) / (2 * h)
            hess = (f(p_star + h) - 2 * f(p_star) + f(p_star - h)) / (h * h)
            if hess >= -1e-12:
                break
            p_star = np.clip(p_star - g / hess, -p_max, p_max)
        if abs(p_star) > p_max * (1 - 1e-6):
            raise LegendreConvergenceError(
                "maximizer pinned to the bracket edge", bracket=(-p_max, p_max))
        return f(p_star)

    obj = lambda p: float(np.dot(p, alpha) + eval_H(spec, p, x))
    res = minimize(obj, x0=-alpha / c - spec.pbar, method="L-BFGS-B",
                   bounds=[(-p_max, p_max)] * spec.dim)
    if not res.success:
        raise LegendreConvergenceError(
            f"numeric Legendre transform failed: {res.message}",
            bracket=(-p_max, p_max))
    if np.max(np.abs(res.x)) > p_max * (1 - 1e-6):
        raise LegendreConvergenceError(
            "maximizer pinned to the bracket edge", bracket=(-p_max, p_max))
    return -res.fun


# ---------------------------------------------------------------------------
# lattice sources


def _as_points(x, dim: int):
    x = np.asarray(x, dtype=float)
    if dim == 1:
        scalar = x.ndim == 0
        pts = np.atleast_1d(x)[:, None]
    else:
        scalar = x.ndim == 1
        pts = np.atleast_2d(x)
    return pts, scalar


def _lattice_sum(bump: BumpProfile, spacing: float, pts: np.ndarray,
                 weight_fn=None):
    """Sum bump((x - spacing*k)) over the integer lattice, vectorized in x.

    weight_fn, if given, maps an (M, d) int array of lattice indices to
    per-copy weights (occupancy).
    """
    D = bump.support_radius
    dim = pts.shape[1]
    lo = np.ceil((pts - D) / spacing - 1e-12).astype(np.int64)
    hi = np.floor((pts + D) / spacing + 1e-12).astype(np.int64)
    width = int((hi - lo).max()) if pts.size else 0
    total = np.zeros(pts.shape[0])
    for off in product(range(width + 1), repeat=dim):
        k = lo + np.asarray(off, dtype=np.int64)
        valid = np.all(k <= hi, axis=1)
        if not valid.any():
            continue
        disp = pts - spacing * k
        vals = bump.at(disp[:, 0] if dim == 1 else disp, dim)
        if weight_fn is not None:
            w = np.zeros(pts.shape[0])
            w[valid] = weight_fn(k[valid])
            vals = vals * w
        total += np.where(valid, vals, 0.0)
    return total


def zeta_R(bump: BumpProfile, R: int, x, dim: int = 1):
    """Sum of bump copies centered on the lattice R Z^dim."""
    if not isinstance(R, (int, np.integer)) or R <= 0:
        raise ConfigError("R must be a positive integer")
    pts, scalar = _as_points(x, dim)
    out = _lattice_sum(bump, float(R), pts)
    return float(out[0]) if scalar else out


def zeta_inf(bump: BumpProfile, x, dim: int = 1):
    """Fully occupied lattice source: one bump per integer lattice point."""
    pts, scalar = _as_points(x, dim)
    out = _lattice_sum(bump, 1.0, pts)
    return float(out[0]) if scalar else out


def zeta_eta(bump: BumpProfile, occupancy, x, dim: int = 1):
    """Thinned lattice source: bump copies kept where the occupancy field is 1.

    occupancy must provide occupancy.values_at(k) for integer lattice points
    k of shape (M, dim) and raise WindowError when asked outside its window.
    """
    pts, scalar = _as_points(x, dim)
    out = _lattice_sum(bump, 1.0, pts,
                       weight_fn=lambda k: occupancy.values_at(k))
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# JSON loading


_POTENTIAL_KINDS = ("zero", "cosine", "samples")


def potential_from_dict(d: dict, dim: int) -> PotentialField:
    kind = d.get("kind")
    if kind not in _POTENTIAL_KINDS:
        raise ConfigError(f"potential kind must be one of {_POTENTIAL_KINDS}")
    order = d.get("order", "cubic")
    n = int(d.get("n", 256))
    if kind == "zero":
        return PotentialField.zero(dim=dim, n=min(n, 16))
    if kind == "cosine":
        params = d.get("params", {})
        amps = params.get("amplitudes")
        if amps is None:
            raise ConfigError("cosine potential needs params.amplitudes")
        if len(amps) != dim:
            raise ConfigError("cosine potential needs one amplitude per axis")
        return PotentialField.cosine(amps, n=n, order=order)
    samples = d.get("samples")
    if samples is None:
        raise ConfigError("samples potential needs a samples array")
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != dim:
        raise ConfigError("potential samples dimension does not match spec dim")
    return PotentialField(arr, order=order)


def bump_from_dict(d: dict) -> BumpProfile:
    try:
        return BumpProfile(shape=d["shape"], amplitude=float(d["amplitude"]),
                           support_radius=float(d["support_radius"]),
                           table=d.get("samples"))
    except KeyError as e:
        raise ConfigError(f"bump description missing key {e}") from e


def spec_from_dict(d: dict) -> HamiltonianSpec:
    family = d.get("family", "quadratic")
    if family != "quadratic":
        raise ConfigError("only the quadratic family is JSON-loadable")
    pbar = d.get("pbar")
    if pbar is None:
        raise ConfigError("spec needs pbar")
    pbar = np.atleast_1d(np.asarray(pbar, dtype=float))
    dim = int(d.get("dim", pbar.size))
    if pbar.size != dim:
        raise ConfigError("pbar length does not match dim")
    pot_d = d.get("potential", {"kind": "zero"})
    potential = potential_from_dict(pot_d, dim)
    return HamiltonianSpec(dim=dim, pbar=pbar, potential=potential)


def problem_from_json(source) -> tuple:
    """Load (spec, bump or None) from a JSON document, path or dict."""
    if isinstance(source, dict):
        doc = source
    else:
        text = source.read_text() if hasattr(source, "read_text") else None
        if text is None:
            with open(source) as fh:
                text = fh.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e}") from e
    spec = spec_from_dict(doc)
    bump = bump_from_dict(doc["bump"]) if "bump" in doc else None
    return spec, bump
