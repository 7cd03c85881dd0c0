import numpy as np
import pytest
from scipy.optimize import brentq

from hjhomog import (BumpProfile, ConfigError, NoSingleBranchError,
                     PotentialField, SupportError, corrector_1d,
                     invariant_density_1d, limit_formula_1d, quadratic_spec,
                     solve_hbar_1d, solve_hbar_R_1d, solve_hbar_eta_exact_1d)


def test_free_hamiltonian_constant():
    spec = quadratic_spec([1.5])
    out = solve_hbar_1d(spec)
    assert out.value == pytest.approx(2.25, abs=1e-8)


def test_hbar_against_independent_quadrature(spec1d, hbar1d):
    """Root of |pbar| = integral sqrt(V + lam) from scratch, dense trapezoid."""
    xs = np.linspace(-0.5, 0.5, 20001)
    Vx = spec1d.potential.value(xs)

    def g(lam):
        return np.trapezoid(np.sqrt(Vx + lam), xs) - 2.0

    oracle = brentq(g, spec1d.potential.max_value() + 1e-12, 10.0, xtol=1e-13)
    assert abs(hbar1d.value - oracle) < 1e-8


def test_flat_branch_raises():
    # pbar below the critical momentum has no single-branch root
    spec = quadratic_spec([0.2], PotentialField.cosine([1.0], n=256))
    with pytest.raises(NoSingleBranchError):
        solve_hbar_1d(spec)


def test_hbar_R_monotone_in_R(spec1d, hbar1d, tent_bump):
    values = [solve_hbar_R_1d(spec1d, tent_bump, R).value
              for R in (2, 4, 8, 16)]
    assert all(v <= hbar1d.value + 1e-12 for v in values)
    assert all(values[i] < values[i + 1] for i in range(len(values) - 1))


def test_hbar_R_overlapping_copies_still_bounded(spec1d, hbar1d):
    """Support wider than the cell sums overlapping copies, gap stays >= 0."""
    wide = BumpProfile("tent", 1.0, 1.2)
    out = solve_hbar_R_1d(spec1d, wide, 2)
    assert out.value < hbar1d.value


def test_eta_exact_rejects_overwide_bump(spec1d):
    with pytest.raises(SupportError):
        solve_hbar_eta_exact_1d(spec1d, BumpProfile("tent", 1.0, 0.6), 0.5)


def test_eta_exact_limits(spec1d, hbar1d, tent_bump):
    at_zero = solve_hbar_eta_exact_1d(spec1d, tent_bump, 0.0)
    assert at_zero.value == pytest.approx(hbar1d.value, abs=1e-9)
    at_one = solve_hbar_eta_exact_1d(spec1d, tent_bump, 1.0)
    full = solve_hbar_R_1d(spec1d, tent_bump, 1)
    assert at_one.value == pytest.approx(full.value, abs=1e-9)
    with pytest.raises(ConfigError):
        solve_hbar_eta_exact_1d(spec1d, tent_bump, 1.5)


def test_eta_exact_monotone(spec1d, tent_bump):
    etas = [0.05, 0.1, 0.2, 0.4, 0.8]
    vals = [solve_hbar_eta_exact_1d(spec1d, tent_bump, e).value for e in etas]
    assert all(vals[i] > vals[i + 1] for i in range(len(vals) - 1))


def test_invariant_density_normalization(spec1d, hbar1d):
    xs = np.linspace(-0.5, 0.5, 4001)
    dens = invariant_density_1d(spec1d, hbar1d, xs)
    assert np.all(dens > 0)
    assert np.trapezoid(dens, xs) == pytest.approx(1.0, abs=1e-6)


def test_invariant_density_shape(spec1d, hbar1d):
    """Density is inverse speed: largest where V + hbar is smallest."""
    dens = invariant_density_1d(spec1d, hbar1d, np.array([0.0, 0.5]))
    # V peaks at 0, vanishes at 0.5, so speed peaks at 0
    assert dens[1] > dens[0]


def test_corrector_periodicity_and_normalization(spec1d, hbar1d):
    assert corrector_1d(spec1d, hbar1d, 0.0) == 0.0
    lo = corrector_1d(spec1d, hbar1d, -0.5)
    hi = corrector_1d(spec1d, hbar1d, 0.5)
    # chi(x+1) - chi(x) equals the cell-condition residual scale
    assert abs(hi - lo) < 1e-8


def test_corrector_derivative_is_branch_inverse(spec1d, hbar1d):
    xs = np.linspace(-0.4, 0.4, 21)
    h = 1e-6
    chi_p = (corrector_1d(spec1d, hbar1d, xs + h)
             - corrector_1d(spec1d, hbar1d, xs - h)) / (2 * h)
    expected = np.sqrt(spec1d.potential.value(xs) + hbar1d.value) - 2.0
    np.testing.assert_allclose(chi_p, expected, atol=1e-5)


def test_limit_formula_sign_and_consistency(spec1d, hbar1d, tent_bump):
    """R (hbar_R - hbar) approaches the negative closed-form limit."""
    limit = limit_formula_1d(spec1d, tent_bump, hbar1d)
    assert limit < 0
    r64 = solve_hbar_R_1d(spec1d, tent_bump, 64)
    scaled = 64 * (r64.value - hbar1d.value)
    assert abs(scaled - limit) / abs(limit) < 0.05


def test_limit_formula_zero_bump(spec1d, hbar1d):
    flat = BumpProfile("tent", 0.0, 0.4)
    assert limit_formula_1d(spec1d, flat, hbar1d) == pytest.approx(0.0,
                                                                   abs=1e-12)


def test_diagnostics_fields(spec1d, hbar1d):
    assert hbar1d.branch_sign in (-1, 1)
    assert hbar1d.residual < 1e-9
    assert hbar1d.quadrature_nodes > 0
    assert hbar1d.bisection_iterations > 0
