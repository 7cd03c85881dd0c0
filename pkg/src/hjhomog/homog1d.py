"""Exact 1D machinery: branch inverses, cell conditions, correctors, limits.

In one dimension the ergodic constant of a convex coercive periodic
Hamiltonian is determined by a scalar condition: on a monotone branch of
p -> H(p, x) the inverse H^{-1}(r, x) exists for r >= m(x) = min_p H(p, x),
and lambda is the ergodic constant iff the branch inverse integrates to zero
over the unit cell. Everything here reduces to composite quadrature of
branch inverses plus bisection in the level lambda.

All quadrature panels are aligned to the potential's spline knots and to the
bump's support edges, so each panel integrand is analytic and the composite
Gauss-Legendre error sits at machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BranchExitError,
    ConfigError,
    DegenerateBranchError,
    NoSingleBranchError,
    SupportError,
)
from .hamiltonian import BumpProfile, HamiltonianSpec, eval_H, zeta_R
from .quadrature import PanelPlan, build_edges, lattice_points

_EXPANSIONS = 4
_MAX_BISECT = 240


@dataclass(frozen=True)
class ErgodicConstant1D:
    """Root of a cell condition, with solve diagnostics."""

    value: float
    branch_sign: int
    residual: float
    quadrature_nodes: int
    bisection_iterations: int


def _value_sign(hbar, sign):
    if isinstance(hbar, ErgodicConstant1D):
        return hbar.value, hbar.branch_sign
    return float(hbar), (1 if sign is None else int(sign))


class BranchInverse:
    """Monotone-branch inverse of p -> H(p, x) at fixed x.

    sign +1 selects the increasing branch (p >= argmin), -1 the decreasing
    one. For the quadratic family the inverse is -pbar + sign*sqrt(r + V(x))
    and the fold is m(x) = -V(x). Tabulated specs are inverted numerically.
    """

    def __init__(self, spec: HamiltonianSpec, sign: int):
        if spec.dim != 1:
            raise ConfigError("branch inversion is one-dimensional")
        if sign not in (1, -1):
            raise ConfigError("branch sign must be +1 or -1")
        self.spec = spec
        self.sign = int(sign)

    def m(self, x):
        if self.spec.family == "quadratic":
            return -self.spec.potential.value(x)
        return np.asarray([self._numeric_m(float(xi))
                           for xi in np.atleast_1d(np.asarray(x, float))])

    def invert(self, r, x):
        """p on the branch with H(p, x) = r; requires r >= m(x)."""
        if self.spec.family == "quadratic":
            arg = np.asarray(r, dtype=float) + self.spec.potential.value(x)
            bad = np.min(arg) if np.ndim(arg) else arg
            if bad < -1e-10:
                raise BranchExitError(
                    f"level below the fold by {-float(np.min(arg)):.3e}")
            return -self.spec.pbar[0] + self.sign * np.sqrt(np.maximum(arg, 0.0))
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        x_arr = np.broadcast_to(np.atleast_1d(np.asarray(x, dtype=float)),
                                r_arr.shape)
        out = np.array([self._numeric_invert(ri, xi)
                        for ri, xi in zip(r_arr, x_arr)])
        return out if np.ndim(r) or np.ndim(x) else float(out[0])

    def d_r(self, r, x):
        """Derivative of the inverse in the level, 1 / D_pH at the inverse."""
        if self.spec.family == "quadratic":
            arg = np.asarray(r, dtype=float) + self.spec.potential.value(x)
            root = np.sqrt(np.maximum(arg, 0.0))
            if np.min(root) < 1e-9:
                raise DegenerateBranchError(
                    "momentum derivative vanishes at the requested level")
            return self.sign / (2.0 * root)
        h = 1e-7
        return (self.invert(np.asarray(r) + h, x)
                - self.invert(np.asarray(r) - h, x)) / (2 * h)

    # numeric fallbacks for the tabulated family

    def _numeric_m(self, x: float) -> float:
        lo, hi = self._p_box()
        ps = np.linspace(lo, hi, 257)
        vals = np.asarray([eval_H(self.spec, p, x) for p in ps])
        i = int(np.argmin(vals))
        a, b = ps[max(i - 1, 0)], ps[min(i + 1, ps.size - 1)]
        for _ in range(80):
            c, d = a + (b - a) / 3, b - (b - a) / 3
            if eval_H(self.spec, c, x) < eval_H(self.spec, d, x):
                b = d
            else:
                a = c
        return float(eval_H(self.spec, 0.5 * (a + b), x))

    def _p_box(self):
        pr = self.spec.p_range if self.spec.p_range is not None else 16.0
        return -pr, pr

    def _numeric_invert(self, r: float, x: float) -> float:
        from scipy.optimize import brentq

        lo, hi = self._p_box()
        ps = np.linspace(lo, hi, 257)
        vals = np.asarray([eval_H(self.spec, p, x) for p in ps])
        i_min = int(np.argmin(vals))
        if r < vals[i_min] - 1e-12:
            raise BranchExitError("level below the fold")
        if self.sign > 0:
            a, b = ps[i_min], hi
        else:
            a, b = lo, ps[i_min]
        f = lambda p: eval_H(self.spec, p, x) - r
        if f(a) > 0 and f(b) > 0:
            raise BranchExitError("no crossing on the requested branch")
        if abs(f(a)) < 1e-13:
            return float(a)
        return float(brentq(f, a, b, xtol=1e-13))


def branch_inverse(spec: HamiltonianSpec, sign: int) -> BranchInverse:
    return BranchInverse(spec, sign)


# ---------------------------------------------------------------------------
# quadrature plans aligned to knots and bump edges


def _knot_lattice(spec, a, b):
    n = spec.potential.knots_per_cell
    return lattice_points(a, b, 1.0 / n, offset=-0.5)


def _bump_breaks(bump, centers, a, b):
    if bump is None:
        return np.empty(0)
    radii = bump.radial_breakpoints()
    pts = []
    for c in np.atleast_1d(centers):
        pts.extend(c + radii)
        pts.extend(c - radii)
    pts = np.asarray(pts, dtype=float)
    return pts[(pts > a) & (pts < b)]


def cell_plan(spec, a: float, b: float, bump=None, centers=(),
              panels_per_cell: int = 64, nodes_per_panel: int = 8) -> PanelPlan:
    """Composite plan over [a, b] aligned to potential knots and bump edges."""
    breaks = [_knot_lattice(spec, a, b),
              lattice_points(a, b, 0.5, offset=0.0),
              _bump_breaks(bump, centers, a, b)]
    edges = build_edges(a, b, np.concatenate(breaks),
                        max_panel=1.0 / panels_per_cell)
    return PanelPlan(edges, nodes_per_panel)


def _max_fold(spec) -> float:
    """max over x of m(x), sampled densely."""
    if spec.family == "quadratic":
        vmin, _ = spec.potential.dense_min_max()
        return -vmin
    xs = np.linspace(-0.5, 0.5, 2048, endpoint=False)
    return float(np.max(BranchInverse(spec, 1).m(xs)))


def _residual_closure(spec, sign, plan, zvals):
    if spec.family == "quadratic":
        Vq = spec.potential.value(plan.nodes)
        pb = spec.pbar[0]
        w = plan.weights

        def F(lam):
            arg = Vq + zvals + lam
            if float(arg.min()) < -1e-10:
                raise BranchExitError("level below the fold inside quadrature")
            return float(np.dot(w, -pb + sign * np.sqrt(np.maximum(arg, 0.0))))

        return F
    binv = BranchInverse(spec, sign)
    return lambda lam: float(np.dot(plan.weights,
                                    binv.invert(zvals + lam, plan.nodes)))


def _bisect_to_residual(F, lo, hi, tol):
    """Bisection driven to |F| <= tol; returns None when no sign change."""
    Flo = F(lo)
    if abs(Flo) <= tol:
        return lo, abs(Flo), 0
    Fhi = F(hi)
    expansions = 0
    while np.sign(Flo) == np.sign(Fhi) and expansions < _EXPANSIONS:
        hi = lo + 2.0 * (hi - lo)
        Fhi = F(hi)
        expansions += 1
    if abs(Fhi) <= tol:
        return hi, abs(Fhi), 0
    if np.sign(Flo) == np.sign(Fhi):
        return None
    iters = 0
    for iters in range(1, _MAX_BISECT + 1):
        mid = 0.5 * (lo + hi)
        Fm = F(mid)
        if abs(Fm) <= tol:
            return mid, abs(Fm), iters
        if np.sign(Fm) == np.sign(Flo):
            lo, Flo = mid, Fm
        else:
            hi = mid
        if hi - lo <= np.finfo(float).eps * max(1.0, abs(hi)):
            return mid, abs(Fm), iters
    return 0.5 * (lo + hi), abs(F(0.5 * (lo + hi))), iters


def _solve_cell_condition(spec, plan, zvals, z_sup, tol):
    lam_lo = _max_fold(spec) + 1e-12
    pb_sq = float(np.dot(spec.pbar, spec.pbar))
    width = pb_sq + spec.potential.max_value() + z_sup + 1.0
    failures = []
    for sign in (1, -1):
        F = _residual_closure(spec, sign, plan, zvals)
        hit = _bisect_to_residual(F, lam_lo, lam_lo + width, tol)
        if hit is not None:
            value, residual, iters = hit
            return ErgodicConstant1D(value=float(value), branch_sign=sign,
                                     residual=float(residual),
                                     quadrature_nodes=len(plan),
                                     bisection_iterations=int(iters))
        failures.append(sign)
    raise NoSingleBranchError(
        f"no single-branch root on either branch (tried {failures}); "
        "the drift pbar is too small for the potential")


# ---------------------------------------------------------------------------
# public solves


def solve_hbar_1d(spec: HamiltonianSpec, *, tol: float = 1e-10,
                  panels_per_cell: int = 64,
                  nodes_per_panel: int = 8) -> ErgodicConstant1D:
    """Ergodic constant of the unperturbed Hamiltonian on the unit cell."""
    if spec.dim != 1:
        raise ConfigError("solve_hbar_1d needs a 1D spec")
    plan = cell_plan(spec, -0.5, 0.5, panels_per_cell=panels_per_cell,
                     nodes_per_panel=nodes_per_panel)
    return _solve_cell_condition(spec, plan, np.zeros(len(plan)), 0.0, tol)


def solve_hbar_R_1d(spec: HamiltonianSpec, bump: BumpProfile, R: int, *,
                    tol: float = 1e-10, panels_per_cell: int = 64,
                    nodes_per_panel: int = 8) -> ErgodicConstant1D:
    """Ergodic constant with an R-periodic bump array removed from H.

    Bisection runs on the full R-cell integral, so the root's precision in
    lambda sharpens with R at fixed tolerance.
    """
    if spec.dim != 1:
        raise ConfigError("solve_hbar_R_1d needs a 1D spec")
    if not isinstance(R, (int, np.integer)) or R <= 0:
        raise ConfigError("R must be a positive integer")
    a, b = -R / 2.0, R / 2.0
    centers = np.arange(np.ceil((a - bump.support_radius) / R),
                        np.floor((b + bump.support_radius) / R) + 1) * R
    plan = cell_plan(spec, a, b, bump=bump, centers=centers,
                     panels_per_cell=panels_per_cell,
                     nodes_per_panel=nodes_per_panel)
    zvals = zeta_R(bump, int(R), plan.nodes, dim=1)
    copies = int(np.floor(2 * bump.support_radius / R)) + 1
    return _solve_cell_condition(spec, plan, zvals,
                                 bump.amplitude * copies, tol)


def solve_hbar_eta_exact_1d(spec: HamiltonianSpec, bump: BumpProfile,
                            eta: float, *, tol: float = 1e-10,
                            panels_per_cell: int = 64,
                            nodes_per_panel: int = 8) -> ErgodicConstant1D:
    """Root of the occupancy-averaged cell condition.

    With the bump supported inside one cell, averaging over iid Bernoulli(eta)
    occupancies turns the cell condition into the two-term mixture
    (1-eta) * integral(H^{-1}(lambda)) + eta * integral(H^{-1}(zeta+lambda)),
    which this solves exactly. Requires sppt(zeta) inside Q.
    """
    if spec.dim != 1:
        raise ConfigError("solve_hbar_eta_exact_1d needs a 1D spec")
    if not 0.0 <= eta <= 1.0:
        raise ConfigError("eta must lie in [0, 1]")
    if bump.support_radius > 0.5:
        raise SupportError(
            "bump support must fit inside the unit cell for the exact "
            f"occupancy average (support_radius={bump.support_radius})")
    plan = cell_plan(spec, -0.5, 0.5, bump=bump, centers=(0.0,),
                     panels_per_cell=panels_per_cell,
                     nodes_per_panel=nodes_per_panel)
    zq = bump.at(plan.nodes, 1)

    lam_lo = _max_fold(spec) + 1e-12
    pb_sq = float(np.dot(spec.pbar, spec.pbar))
    width = pb_sq + spec.potential.max_value() + bump.amplitude + 1.0
    for sign in (1, -1):
        F_plain = _residual_closure(spec, sign, plan, np.zeros(len(plan)))
        F_bumped = _residual_closure(spec, sign, plan, zq)
        G = lambda lam: (1.0 - eta) * F_plain(lam) + eta * F_bumped(lam)
        hit = _bisect_to_residual(G, lam_lo, lam_lo + width, tol)
        if hit is not None:
            value, residual, iters = hit
            return ErgodicConstant1D(value=float(value), branch_sign=sign,
                                     residual=float(residual),
                                     quadrature_nodes=len(plan),
                                     bisection_iterations=int(iters))
    raise NoSingleBranchError("no single-branch root on either branch")


def invariant_density_1d(spec: HamiltonianSpec, hbar, x, *, sign=None,
                         panels_per_cell: int = 64, nodes_per_panel: int = 8):
    """Projected Mather density: (1/D_pH at the branch inverse), normalized.

    The density is branch-independent for the quadratic family (the sign
    cancels in the normalization) and integrates to 1 over the unit cell.
    """
    value, s = _value_sign(hbar, sign)
    binv = BranchInverse(spec, s)
    plan = cell_plan(spec, -0.5, 0.5, panels_per_cell=panels_per_cell,
                     nodes_per_panel=nodes_per_panel)
    norm = plan.integrate(binv.d_r(value, plan.nodes))
    dens = binv.d_r(value, np.asarray(x, dtype=float)) / norm
    if np.ndim(x) and float(np.min(dens)) <= 0:
        raise DegenerateBranchError("density must be positive on the branch")
    return dens


def corrector_1d(spec: HamiltonianSpec, hbar, x, *, sign=None,
                 panels_per_cell: int = 64, nodes_per_panel: int = 8):
    """Corrector chi(x) = integral_0^x of the branch inverse, chi(0) = 0.

    Integrates directly over [0, x] without exploiting periodicity, so
    chi(x+1) = chi(x) holds only up to the cell-condition residual; tests
    rely on that as an honest check.
    """
    value, s = _value_sign(hbar, sign)
    binv = BranchInverse(spec, s)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(xs)
    for i, xq in enumerate(xs):
        if xq == 0.0:
            out[i] = 0.0
            continue
        a, b = (0.0, float(xq)) if xq > 0 else (float(xq), 0.0)
        plan = cell_plan(spec, a, b, panels_per_cell=panels_per_cell,
                         nodes_per_panel=nodes_per_panel)
        val = plan.integrate(binv.invert(value, plan.nodes))
        out[i] = val if xq > 0 else -val
    return out if np.ndim(x) else float(out[0])


def limit_formula_1d(spec: HamiltonianSpec, bump: BumpProfile, hbar, *,
                     sign=None, panels_per_cell: int = 64,
                     nodes_per_panel: int = 8) -> float:
    """First-order response of the ergodic constant to one removed bump.

    Returns -(integral_Q dH^{-1}/dr at hbar)^{-1} times the bump-support
    integral of H^{-1}(zeta + hbar) - H^{-1}(hbar). Always <= 0: removing
    mass from the Hamiltonian can only lower the constant, and this is the
    R^{-1} (respectively eta) coefficient of that drop.
    """
    value, s = _value_sign(hbar, sign)
    binv = BranchInverse(spec, s)

    cell = cell_plan(spec, -0.5, 0.5, panels_per_cell=panels_per_cell,
                     nodes_per_panel=nodes_per_panel)
    norm = cell.integrate(binv.d_r(value, cell.nodes))

    D = bump.support_radius
    supp = cell_plan(spec, -D, D, bump=bump, centers=(0.0,),
                     panels_per_cell=panels_per_cell,
                     nodes_per_panel=nodes_per_panel)
    zq = bump.at(supp.nodes, 1)
    # branch guard: the shifted level must stay clear of the fold
    if spec.family == "quadratic":
        gap = spec.potential.value(supp.nodes) + zq + value
        if float(gap.min()) < 1e-9:
            raise BranchExitError(
                "shifted level touches the fold inside the bump support")
    numer = supp.integrate(binv.invert(zq + value, supp.nodes)
                           - binv.invert(value, supp.nodes))
    out = -numer / norm
    assert out <= 1e-12, "limit formula must be nonpositive"
    return float(out)
