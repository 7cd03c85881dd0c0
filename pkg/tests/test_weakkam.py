import numpy as np
import pytest

from hjhomog import (BumpProfile, ConfigError, DiscountedSolveConfig,
                     GridField, PeriodicGrid, StepSizeError, check_invariance,
                     chi_infty_structure, compute_chi_infty, eval_H,
                     flow_trajectory, invariant_density_1d,
                     occupational_measure, pairing_integral, quadratic_spec,
                     rotation_number, verify_value_identity)
from hjhomog.weakkam import corrector_interpolant


# ---------------------------------------------------------------------------
# trajectory integration


def test_free_flow_is_exact_line(spec2d_free):
    traj = flow_trajectory(spec2d_free, None, [0.1, 0.2], 50.0, 0.01)
    vel = -2.0 * np.asarray(spec2d_free.pbar)
    expected = np.array([0.1, 0.2]) + traj.times()[:, None] * vel
    np.testing.assert_allclose(traj.samples, expected, atol=1e-10)


def test_flow_zero_horizon_single_sample(spec2d_free):
    traj = flow_trajectory(spec2d_free, None, [0.3, 0.1], 0.0, 0.01)
    assert traj.samples.shape == (1, 2)


def test_backward_flow_reverses_forward(spec1d, exact_corrector512):
    fwd = flow_trajectory(spec1d, exact_corrector512, [0.2], 5.0, 0.001)
    end = fwd.samples[-1, 0]
    back = flow_trajectory(spec1d, exact_corrector512, [end], -5.0, 0.001)
    assert back.h_t < 0
    assert back.samples[-1, 0] == pytest.approx(0.2, abs=1e-6)


def test_flow_matches_closed_form_speed(spec1d, hbar1d, exact_corrector512):
    """gamma_dot = -2(chi'(gamma) + pbar) equals -2 sqrt(V(gamma) + hbar)."""
    traj = flow_trajectory(spec1d, exact_corrector512, [0.1], 2.0, 0.001)
    g = traj.samples[200:-200:200, 0]
    vel = np.gradient(traj.samples[:, 0], 0.001)[200:-200:200]
    expected = -2.0 * np.sqrt(spec1d.potential.value(g) + hbar1d.value)
    np.testing.assert_allclose(vel, expected, atol=5e-3)


def test_equivariance_integer_shift(spec1d, exact_corrector512):
    a = flow_trajectory(spec1d, exact_corrector512, [0.125], 3.0, 0.01)
    b = flow_trajectory(spec1d, exact_corrector512, [1.125], 3.0, 0.01)
    np.testing.assert_allclose(b.samples - 1.0, a.samples, atol=1e-10)


def test_rk4_halving_ratio(spec1d, exact_corrector512):
    def endpoint(ht):
        return flow_trajectory(spec1d, exact_corrector512, [0.0], 2.0,
                               ht).samples[-1, 0]

    ref = endpoint(2.5e-4)
    for big, small in ((0.04, 0.02), (0.016, 0.008)):
        ratio = abs(endpoint(big) - ref) / abs(endpoint(small) - ref)
        assert 8.0 < ratio < 40.0


def test_energy_conserved_along_flow(spec1d, hbar1d, exact_corrector512):
    itp = corrector_interpolant(exact_corrector512)
    traj = flow_trajectory(spec1d, exact_corrector512, [0.0], 500.0, 0.01)
    sub = traj.samples[::100, 0]
    H = np.array([eval_H(spec1d, itp.gradient(x), np.array([x]))
                  for x in sub])
    assert np.abs(H - hbar1d.value).max() < 1e-5


def test_step_size_error_on_skipped_feature():
    """A narrow fast dip crossed in one step exceeds the sampled bound."""
    grid = PeriodicGrid(1, 4, 512)
    xs = grid.axis_nodes()
    dip = GridField(-0.5 * np.exp(-((xs / 0.02) ** 2)), grid)
    spec = quadratic_spec([-0.5])
    with pytest.raises(StepSizeError):
        flow_trajectory(spec, dip, [-0.35], 20.0, 0.2)
    # the same environment integrates cleanly at a resolved step
    traj = flow_trajectory(spec, dip, [-0.35], 20.0, 0.001)
    assert np.isfinite(traj.samples).all()


def test_trajectory_csv(tmp_path, spec2d_free):
    traj = flow_trajectory(spec2d_free, None, [0.0, 0.0], 1.0, 0.1)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == traj.steps + 2


# ---------------------------------------------------------------------------
# rotation numbers


def test_rotation_free_2d_exact(spec2d_free):
    traj = flow_trajectory(spec2d_free, None, [0.0, 0.0], 150.0, 0.01)
    rot = rotation_number(traj)
    np.testing.assert_allclose(rot.e_hat, -2.0 * np.asarray(spec2d_free.pbar),
                               atol=1e-12)
    assert rot.tail_variance < 1e-20
    assert not rot.zero_flag


def test_rotation_requires_horizon(spec2d_free):
    traj = flow_trajectory(spec2d_free, None, [0.0, 0.0], 10.0, 0.01)
    with pytest.raises(ConfigError):
        rotation_number(traj)


def test_rotation_zero_flag():
    spec = quadratic_spec([0.0, 0.0])
    traj = flow_trajectory(spec, None, [0.2, 0.2], 150.0, 0.01)
    rot = rotation_number(traj)
    assert rot.zero_flag
    np.testing.assert_allclose(rot.e_hat, 0.0, atol=1e-12)


def test_rotation_harmonic_mean_oracle(spec1d, hbar1d, exact_corrector512):
    """e equals the negative reciprocal of the mean inverse speed."""
    traj = flow_trajectory(spec1d, exact_corrector512, [0.0], 200.0, 0.005)
    rot = rotation_number(traj)
    xs = np.linspace(-0.5, 0.5, 20001)
    inv_speed = 1.0 / (2.0 * np.sqrt(spec1d.potential.value(xs)
                                     + hbar1d.value))
    oracle = -1.0 / np.trapezoid(inv_speed, xs)
    assert rot.e_hat[0] == pytest.approx(oracle, abs=1e-4)


# ---------------------------------------------------------------------------
# occupational measures


def test_occupational_masses_sum_to_one(spec2d_free):
    traj = flow_trajectory(spec2d_free, None, [0.0, 0.0], 100.0, 0.01)
    meas = occupational_measure(traj, 32)
    assert meas.masses.sum() == pytest.approx(1.0, abs=1e-12)
    assert meas.sample_count == traj.steps


def test_occupational_single_point():
    spec = quadratic_spec([0.0, 0.0])
    traj = flow_trajectory(spec, None, [0.12, -0.07], 10.0, 0.01)
    meas = occupational_measure(traj, 16)
    assert meas.masses.max() == pytest.approx(1.0, abs=1e-12)


def test_occupational_uniform_for_irrational_line(spec2d_free):
    # step chosen incommensurate with the speed so samples fill the torus
    traj = flow_trajectory(spec2d_free, None, [0.0, 0.0], 2000.0, 0.0137)
    meas = occupational_measure(traj, 16)
    l1 = np.abs(meas.masses - 1.0 / 16 ** 2).sum()
    assert l1 < 1e-2


def test_check_invariance_uniform_vs_wrong(spec2d_free):
    traj = flow_trajectory(spec2d_free, None, [0.0, 0.0], 500.0, 0.01)
    meas = occupational_measure(traj, 16)
    uniform = type(meas)(masses=np.full_like(meas.masses, 1.0 / 16 ** 2),
                         bins=16, sample_count=meas.sample_count)
    assert check_invariance(uniform, spec2d_free) < 1e-10
    wrong = np.zeros_like(meas.masses)
    wrong.flat[0] = 1.0
    point = type(meas)(masses=wrong, bins=16,
                       sample_count=meas.sample_count)
    assert check_invariance(point, spec2d_free) > 0.1


def test_occupational_matches_invariant_density(spec1d, hbar1d,
                                                exact_corrector512):
    traj = flow_trajectory(spec1d, exact_corrector512, [0.0], 2000.0, 0.01)
    meas = occupational_measure(traj, 64)
    centers = meas.bin_centers()
    dens = invariant_density_1d(spec1d, hbar1d, centers)
    l1 = np.abs(meas.masses - dens / 64).sum()
    assert l1 < 1e-2


# ---------------------------------------------------------------------------
# value identity


def test_value_identity_free_case_exact(spec2d_free):
    traj = flow_trajectory(spec2d_free, None, [0.2, -0.1], 5.0, 0.01)
    hbar = float(np.dot(spec2d_free.pbar, spec2d_free.pbar))
    assert verify_value_identity(spec2d_free, None, hbar, traj) < 1e-10


def test_value_identity_exact_corrector(spec1d, hbar1d, exact_corrector512):
    traj = flow_trajectory(spec1d, exact_corrector512, [0.25], 10.0, 0.001)
    residual = verify_value_identity(spec1d, exact_corrector512,
                                     hbar1d.value, traj)
    assert residual < 1e-4


def test_value_identity_grid_corrector_tolerance(spec1d, hbar1d):
    """The discounted-grid corrector carries O(theta h) smearing; the
    identity holds at the discretization scale, not the quadrature scale."""
    from hjhomog import corrector_from_discounted
    grid = PeriodicGrid(1, 1, 256)
    chi = corrector_from_discounted(spec1d, grid, np.zeros(grid.shape),
                                    DiscountedSolveConfig())
    traj = flow_trajectory(spec1d, chi, [0.25], 10.0, 0.001)
    residual = verify_value_identity(spec1d, chi, hbar1d.value, traj)
    assert residual < 5e-3


def test_value_identity_rejects_backward(spec2d_free):
    traj = flow_trajectory(spec2d_free, None, [0.0, 0.0], -5.0, 0.01)
    with pytest.raises(ConfigError):
        verify_value_identity(spec2d_free, None, 1.0, traj)


# ---------------------------------------------------------------------------
# far-field structure of the single-bump corrector


@pytest.fixture(scope="module")
def chi_pair_2d(spec2d_free, smooth_bump):
    cfg = DiscountedSolveConfig(accelerator="spectral")
    return compute_chi_infty(spec2d_free, smooth_bump, 8, 64, cfg)


def test_chi_infty_structure_report(spec2d_free, chi_pair_2d):
    chi_inf, chi = chi_pair_2d
    e = -2.0 * np.asarray(spec2d_free.pbar)
    rep = chi_infty_structure(chi_inf, chi, e)
    assert rep.K == pytest.approx(2.0)
    # downstream the difference settles to the constant c
    assert rep.farfield_sup < 0.08
    # nonnegativity up to the grid scale
    assert rep.min_all > -0.08
    # upstream sups decay as the cutoff moves toward the bump... largest first
    sups = [s for _, s in rep.upstream]
    assert all(sups[i] >= sups[i + 1] for i in range(len(sups) - 1))


def test_chi_infty_structure_validation(spec2d_free, chi_pair_2d, spec1d):
    chi_inf, chi = chi_pair_2d
    with pytest.raises(ConfigError):
        chi_infty_structure(chi_inf, chi, np.zeros(2))
    other = GridField(np.zeros((16, 16)), PeriodicGrid(2, 1, 16))
    with pytest.raises(ConfigError):
        chi_infty_structure(chi_inf, other, np.array([1.0, 0.0]))


def test_pairing_integral_small_and_shrinking(spec2d_free, smooth_bump,
                                              chi_pair_2d):
    chi_inf8, chi8 = chi_pair_2d
    p8 = abs(pairing_integral(spec2d_free, chi_inf8, chi8))
    cfg = DiscountedSolveConfig(accelerator="spectral")
    chi_inf16, chi16 = compute_chi_infty(spec2d_free, smooth_bump, 16, 64,
                                         cfg)
    p16 = abs(pairing_integral(spec2d_free, chi_inf16, chi16))
    assert p8 < 0.02
    assert p16 < p8
