import numpy as np
import pytest

from hjhomog import (BumpProfile, GridField, PeriodicGrid, PotentialField,
                     corrector_1d, quadratic_spec, solve_hbar_1d)


@pytest.fixture(scope="session")
def spec1d():
    """Quadratic 1D Hamiltonian with the cosine potential, pbar = 2."""
    return quadratic_spec([2.0], PotentialField.cosine([1.0], n=256))


@pytest.fixture(scope="session")
def hbar1d(spec1d):
    return solve_hbar_1d(spec1d)


@pytest.fixture(scope="session")
def tent_bump():
    return BumpProfile("tent", 1.0, 0.4)


@pytest.fixture(scope="session")
def smooth_bump():
    return BumpProfile("smooth", 1.0, 0.4)


@pytest.fixture(scope="session")
def spec2d_free():
    """Quadratic 2D Hamiltonian, no potential, irrational direction."""
    return quadratic_spec([1.0, np.sqrt(2.0) - 1.0])


@pytest.fixture(scope="session")
def exact_corrector512(spec1d, hbar1d):
    """Exact 1D corrector sampled onto a Q_1 grid at n = 512."""
    grid = PeriodicGrid(1, 1, 512)
    vals = corrector_1d(spec1d, hbar1d.value, grid.axis_nodes())
    vals = vals - vals[grid.nearest_origin_index()[0]]
    return GridField(vals, grid)
