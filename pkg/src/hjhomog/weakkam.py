"""Weak-KAM diagnostics on top of computed correctors.

Optimal trajectories follow the corrector flow

    dgamma/dt = -D_pH(Dchi(gamma), gamma),

integrated with classical RK4 on a periodic cubic interpolation of chi
(analytic gradient of the interpolant). Backward runs negate the vector
field. Downstream consumers: rotation numbers as long-time average
velocities, occupational measures as space histograms, the invariance
residual of the projected measure, the value identity along trajectories,
and the structure report for the perturbed corrector.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Optional

import numpy as np
from numba import njit

from .cellpde import GridField
from .errors import ConfigError, StepSizeError
from .hamiltonian import (HamiltonianSpec, LagrangianEval, grad_p_H, legendre,
                          wrap_Q)
from .interp import periodic_interpolant

_STEP_SLACK = 1e-3


# ---------------------------------------------------------------------------
# result types


@dataclass(frozen=True, eq=False)
class Trajectory:
    """RK4 samples of the corrector flow, unwrapped (positions live in R^d)."""

    samples: np.ndarray      # (steps + 1, d)
    x0: np.ndarray
    h_t: float               # signed: negative for backward runs
    integrator: str = "rk4"

    @property
    def steps(self) -> int:
        return self.samples.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def horizon(self) -> float:
        return self.steps * self.h_t

    def times(self) -> np.ndarray:
        return np.arange(self.samples.shape[0]) * self.h_t

    def to_csv(self, path):
        header = ",".join(["t"] + [f"x{i+1}" for i in range(self.dim)])
        np.savetxt(path, np.column_stack([self.times(), self.samples]),
                   delimiter=",", header=header, comments="")


@dataclass(frozen=True, eq=False)
class RotationEstimate:
    e_hat: np.ndarray
    horizon: float
    tail_variance: float     # max-axis variance of four sub-window slopes
    zero_flag: bool          # |e_hat| below tolerance: degenerate rotation


@dataclass(frozen=True, eq=False)
class OccupationalMeasure:
    """Histogram of wrapped positions on the unit cell, total mass 1."""

    masses: np.ndarray       # (bins,)*d
    bins: int
    sample_count: int

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if (m < -1e-15).any() or abs(m.sum() - 1.0) > 1e-9:
            raise ConfigError("measure must be nonnegative with mass 1")

    @property
    def dim(self) -> int:
        return self.masses.ndim

    def bin_centers(self) -> np.ndarray:
        return -0.5 + (np.arange(self.bins) + 0.5) / self.bins

    def centers_grid(self) -> np.ndarray:
        c = self.bin_centers()
        if self.dim == 1:
            return c[:, None]
        gx, gy = np.meshgrid(c, c, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)

    def to_csv(self, path):
        cols = [self.centers_grid()[:, i] for i in range(self.dim)]
        header = ",".join([f"x{i+1}" for i in range(self.dim)] + ["mass"])
        np.savetxt(path, np.column_stack(cols + [self.masses.ravel()]),
                   delimiter=",", header=header, comments="")


@dataclass(frozen=True, eq=False)
class ChiInftyStructureReport:
    c: float                       # far-field offset estimate
    min_all: float                 # min over grid of chi_inf - chi - c
    farfield_sup: float            # sup |chi_inf - chi - c| on <x,e> >= K
    upstream: tuple                # ((K_eps, sup(chi_inf - chi - c)), ...)
    K: float
    e: np.ndarray


# ---------------------------------------------------------------------------
# corrector interpolation


def corrector_interpolant(corrector: GridField, order: str = "cubic"):
    g = corrector.grid
    return periodic_interpolant(corrector.values, origin=-g.R / 2.0,
                                period=float(g.R), order=order)


# ---------------------------------------------------------------------------
# flow integration


@njit(cache=True)
def _chi_prime_1d(coef, origin, period, cw, ncells, x):
    t = (x - origin) % period
    idx = int(t / cw)
    if idx >= ncells:
        idx = ncells - 1
    s = t - idx * cw
    return (3.0 * coef[0, idx] * s + 2.0 * coef[1, idx]) * s + coef[2, idx]


@njit(cache=True)
def _flow_1d(coef, origin, period, cw, ncells, pb0, sign, x0, steps, ht, out):
    """RK4 for dx/dt = sign * (-2)(chi'(x) + pb0).

    Returns the max |velocity| over accepted samples; stage overshoot past
    that bound is how an unstable step size gets detected.
    """
    x = x0
    out[0] = x
    maxg = 0.0
    for i in range(steps):
        k1 = sign * (-2.0) * (_chi_prime_1d(coef, origin, period, cw, ncells,
                                            x) + pb0)
        k2 = sign * (-2.0) * (_chi_prime_1d(coef, origin, period, cw, ncells,
                                            x + 0.5 * ht * k1) + pb0)
        k3 = sign * (-2.0) * (_chi_prime_1d(coef, origin, period, cw, ncells,
                                            x + 0.5 * ht * k2) + pb0)
        k4 = sign * (-2.0) * (_chi_prime_1d(coef, origin, period, cw, ncells,
                                            x + ht * k3) + pb0)
        a = abs(k1)
        if a > maxg:
            maxg = a
        x = x + ht / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = x
    return maxg


def _velocity_closure(spec, grad_chi, sign):
    if spec.family == "quadratic":
        pbar = np.asarray(spec.pbar)

        def vel(x):
            return sign * (-2.0) * (grad_chi(x) + pbar)
    else:
        def vel(x):
            return sign * (-1.0) * np.atleast_1d(
                grad_p_H(spec, grad_chi(x), x))
    return vel


def flow_trajectory(spec: HamiltonianSpec, corrector: Optional[GridField],
                    x0, T: float, h_t: float,
                    order: str = "cubic") -> Trajectory:
    """Integrate the corrector flow from x0 over horizon T (signed).

    corrector None means chi identically 0. The step invariant
    |gamma_{i+1} - gamma_i| <= max|D_pH| * h_t * (1 + 1e-3) is checked over
    the run and violated only by an unstable step size.
    """
    if h_t <= 0:
        raise ConfigError("h_t must be positive (direction comes from T)")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (spec.dim,):
        raise ConfigError("x0 dimension does not match the spec")
    steps = int(round(abs(T) / h_t))
    sign = -1.0 if T < 0 else 1.0
    signed_ht = sign * h_t
    if steps == 0:
        return Trajectory(samples=x0[None, :].copy(), x0=x0, h_t=signed_ht)

    if (spec.family == "quadratic" and spec.dim == 1
            and corrector is not None and order == "cubic"):
        itp = corrector_interpolant(corrector, order)
        coef = np.ascontiguousarray(itp.coefficients())
        out = np.empty(steps + 1)
        maxg = _flow_1d(coef, itp.origin, itp.period,
                        itp.period / coef.shape[1], coef.shape[1],
                        float(spec.pbar[0]), sign, float(x0[0]), steps, h_t,
                        out)
        samples = out[:, None]
    elif spec.family == "quadratic" and corrector is None:
        # constant field: RK4 is exact, so write the line directly
        vel = sign * (-2.0) * np.asarray(spec.pbar)
        ts = np.arange(steps + 1) * h_t
        samples = x0[None, :] + ts[:, None] * vel[None, :]
        maxg = float(np.linalg.norm(vel))
    else:
        if corrector is None:
            def grad_chi(x):
                return np.zeros(spec.dim)
        else:
            itp = corrector_interpolant(corrector, order)

            def grad_chi(x):
                return np.atleast_1d(itp.gradient(x))
        vel = _velocity_closure(spec, grad_chi, sign)
        samples = np.empty((steps + 1, spec.dim))
        samples[0] = x0
        x = x0.copy()
        maxg = 0.0
        for i in range(steps):
            k1 = vel(x)
            k2 = vel(x + 0.5 * h_t * k1)
            k3 = vel(x + 0.5 * h_t * k2)
            k4 = vel(x + h_t * k3)
            maxg = max(maxg, float(np.linalg.norm(k1)))
            x = x + h_t / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            samples[i + 1] = x
    if not np.isfinite(samples).all():
        raise StepSizeError("flow integration produced non-finite positions")
    dstep = np.linalg.norm(np.diff(samples, axis=0), axis=1)
    bound = maxg * h_t * (1.0 + _STEP_SLACK) + 1e-300
    if float(dstep.max(initial=0.0)) > bound:
        raise StepSizeError(
            f"step {dstep.max():.3e} exceeds max|D_pH|*h_t bound "
            f"{bound:.3e}; reduce h_t")
    return Trajectory(samples=samples, x0=x0, h_t=signed_ht)


# ---------------------------------------------------------------------------
# rotation numbers and occupational measures


def rotation_number(traj: Trajectory, min_horizon: float = 100.0,
                    zero_tol: float = 1e-8) -> RotationEstimate:
    """Average velocity (gamma(T) - gamma(0)) / T with a four-window
    slope-variance diagnostic; |e_hat| below zero_tol raises the degenerate
    flag (the nondegeneracy hypothesis fails there)."""
    T = traj.horizon
    if abs(T) < min_horizon:
        raise ConfigError(f"horizon |T|={abs(T):g} below {min_horizon:g}")
    e_hat = (traj.samples[-1] - traj.samples[0]) / T
    q = traj.steps // 4
    if q >= 1:
        slopes = np.stack([
            (traj.samples[(i + 1) * q] - traj.samples[i * q]) / (q * traj.h_t)
            for i in range(4)])
        tail_var = float(np.max(np.var(slopes, axis=0)))
    else:
        tail_var = float("nan")
    zero = bool(np.linalg.norm(e_hat) < zero_tol)
    return RotationEstimate(e_hat=e_hat, horizon=T, tail_variance=tail_var,
                            zero_flag=zero)


def occupational_measure(traj: Trajectory, bins: int) -> OccupationalMeasure:
    """Histogram of wrapped positions on the unit cell; each step carries
    weight h_t/T, so the masses sum to 1."""
    if bins < 1:
        raise ConfigError("need at least one bin")
    pts = traj.samples[:-1] if traj.steps >= 1 else traj.samples
    wrapped = wrap_Q(pts)
    edges = [np.linspace(-0.5, 0.5, bins + 1)] * traj.dim
    hist, _ = np.histogramdd(wrapped, bins=edges)
    return OccupationalMeasure(masses=hist / pts.shape[0], bins=bins,
                               sample_count=pts.shape[0])


def _fourier_modes(dim: int, max_order: int):
    """One representative of each conjugate pair, 0 < |k|_inf <= max_order."""
    for k in product(range(-max_order, max_order + 1), repeat=dim):
        if all(c == 0 for c in k):
            continue
        first = next(c for c in k if c != 0)
        if first > 0:
            yield np.array(k, dtype=float)


def _field_at(spec, corrector, points):
    """D_pH(Dchi(x), x) at the given points, rows aligned with `points`."""
    if corrector is None:
        grads = np.zeros_like(points)
    else:
        itp = corrector_interpolant(corrector)
        g = itp.gradient(points if spec.dim == 2 else points[:, 0])
        grads = np.asarray(g, dtype=float).reshape(points.shape)
    if spec.family == "quadratic":
        return 2.0 * (grads + np.asarray(spec.pbar)[None, :])
    rows = [np.atleast_1d(grad_p_H(spec, grads[i], points[i]))
            for i in range(points.shape[0])]
    return np.asarray(rows)


def check_invariance(measure: OccupationalMeasure, spec: HamiltonianSpec,
                     corrector: Optional[GridField] = None,
                     max_order: int = 3) -> float:
    """Invariance residual of the projected measure under the corrector flow.

    Returns max over tensor Fourier test functions phi (modes up to
    max_order) of |sum_b mass_b <Dphi(c_b), D_pH(Dchi(c_b), c_b)>|; zero in
    the limit exactly when the measure-weighted field is divergence free.
    """
    if measure.dim != spec.dim:
        raise ConfigError("measure and spec dimensions differ")
    centers = measure.centers_grid()
    field = _field_at(spec, corrector, centers)
    mass = measure.masses.ravel()
    worst = 0.0
    for k in _fourier_modes(spec.dim, max_order):
        phase = np.exp(2j * np.pi * (centers @ k))
        val = abs(2.0 * np.pi * np.sum(mass * (field @ k) * phase))
        worst = max(worst, float(val))
    return worst


def verify_value_identity(spec: HamiltonianSpec,
                          corrector: Optional[GridField], hbar: float,
                          traj: Trajectory,
                          leval: Optional[LagrangianEval] = None) -> float:
    """Max over time prefixes of |chi(x0) - int_0^t (L(dgamma,gamma) + hbar)
    - chi(gamma(t))| with trapezoidal quadrature along the trajectory."""
    if traj.h_t <= 0:
        raise ConfigError("value identity applies to forward trajectories")
    leval = leval or LagrangianEval(spec)
    pts = traj.samples
    if corrector is None:
        chi_vals = np.zeros(pts.shape[0])
    else:
        itp = corrector_interpolant(corrector)
        chi_vals = np.asarray(itp.value(pts if spec.dim == 2
                                        else pts[:, 0]), dtype=float)
    field = _field_at(spec, corrector, pts)
    alphas = -field
    xs = pts if spec.dim == 2 else pts[:, 0]
    lvals = np.asarray(legendre(leval, alphas if spec.dim == 2
                                else alphas[:, 0], xs), dtype=float)
    integrand = lvals + hbar
    cum = np.concatenate([
        [0.0],
        np.cumsum(0.5 * traj.h_t * (integrand[1:] + integrand[:-1]))])
    residuals = np.abs(chi_vals[0] - cum - chi_vals)
    return float(residuals.max())


# ---------------------------------------------------------------------------
# perturbed-corrector structure


def chi_infty_structure(chi_inf: GridField, chi: GridField, e,
                        K: Optional[float] = None,
                        upstream_fractions=(0.5, 1.0, 1.5, 2.0)
                        ) -> ChiInftyStructureReport:
    """Structure report for chi_inf versus chi + c on a d=2 torus.

    c is the far-field median of chi_inf - chi over the half-space
    <x,e> >= K (default K = R/4). Reported: min over the grid of
    chi_inf - chi - c, the far-field sup of its absolute value, and
    one-sided sups over upstream half-spaces <x,e> <= -K_eps.
    """
    if chi_inf.grid != chi.grid:
        raise ConfigError("fields live on different grids")
    g = chi_inf.grid
    if g.dim != 2:
        raise ConfigError("structure report is defined for d = 2")
    e = np.asarray(e, dtype=float)
    if np.linalg.norm(e) < 1e-10:
        raise ConfigError("rotation vector ~ 0: cannot orient half-spaces")
    if K is None:
        K = g.R / 4.0
    diff = chi_inf.values - chi.values
    proj = (g.points() @ e).reshape(g.shape)
    far = proj >= K
    if not far.any():
        raise ConfigError(f"no nodes with <x,e> >= {K:g}; lower K")
    c = float(np.median(diff[far]))
    rel = diff - c
    upstream = []
    for frac in upstream_fractions:
        k_eps = frac * K
        mask = proj <= -k_eps
        if mask.any():
            upstream.append((float(k_eps), float(rel[mask].max())))
    return ChiInftyStructureReport(
        c=c, min_all=float(rel.min()),
        farfield_sup=float(np.abs(rel[far]).max()),
        upstream=tuple(upstream), K=float(K), e=e)


def _central_gradient(values, h):
    return np.stack([(np.roll(values, -1, axis=ax)
                      - np.roll(values, 1, axis=ax)) / (2.0 * h)
                     for ax in range(values.ndim)], axis=-1)


def pairing_integral(spec: HamiltonianSpec, chi_inf: GridField,
                     chi: GridField, weights: Optional[GridField] = None
                     ) -> float:
    """int <D_pH(Dchi, x), D(chi_inf - chi)> dsigma over the sub-window
    Q_{R/2}.

    The measure defaults to uniform on the sub-window (the projected
    measure of the zero-potential family); a weight field normalizes over
    the same window. Over the full torus the discrete integral telescopes
    to zero exactly, so the sub-window version is the meaningful one: it
    equals a boundary flux of chi_inf - chi - c and decays as the torus
    grows.
    """
    if chi_inf.grid != chi.grid:
        raise ConfigError("fields live on different grids")
    g = chi_inf.grid
    grad_chi = _central_gradient(chi.values, g.h)
    grad_diff = _central_gradient(chi_inf.values - chi.values, g.h)
    if spec.family == "quadratic":
        field = 2.0 * (grad_chi + np.asarray(spec.pbar))
    else:
        raise NotImplementedError("pairing integral needs the quadratic "
                                  "family")
    integrand = np.sum(field * grad_diff, axis=-1)
    pts = g.points().reshape(g.shape + (g.dim,))
    window = np.all(np.abs(pts) <= g.R / 4.0, axis=-1)
    if weights is None:
        return float(integrand[window].mean())
    if weights.grid != g:
        raise ConfigError("weights live on a different grid")
    w = weights.values[window]
    if w.min() < 0 or w.sum() <= 0:
        raise ConfigError("weights must be nonnegative with positive mass")
    return float(np.sum(integrand[window] * w) / w.sum())
