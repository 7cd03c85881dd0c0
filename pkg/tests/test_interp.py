import numpy as np
import pytest

from hjhomog.errors import ConfigError
from hjhomog.interp import (PeriodicCubic1D, PeriodicCubic2D,
                            periodic_interpolant, wrap_point)


def test_wrap_point_centers_interval():
    assert wrap_point(0.75, -0.5, 1.0) == pytest.approx(-0.25)
    assert wrap_point(-0.5, -0.5, 1.0) == pytest.approx(-0.5)


def test_cubic_1d_reproduces_smooth_function():
    f = lambda x: np.sin(2 * np.pi * x) + 0.3 * np.cos(4 * np.pi * x)
    errs = []
    for n in (32, 64):
        xs = -0.5 + np.arange(n) / n
        itp = PeriodicCubic1D(f(xs))
        q = np.linspace(-0.5, 0.5, 1000)
        errs.append(np.abs(itp.value(q) - f(q)).max())
    assert errs[0] < 1e-4
    # cubic spline: one halving should gain about 2^4
    assert errs[0] / errs[1] > 8.0


def test_cubic_1d_gradient_matches_derivative():
    f = lambda x: np.cos(2 * np.pi * x)
    df = lambda x: -2 * np.pi * np.sin(2 * np.pi * x)
    xs = -0.5 + np.arange(128) / 128
    itp = PeriodicCubic1D(f(xs))
    q = np.linspace(-0.5, 0.5, 500)
    assert np.abs(itp.gradient(q) - df(q)).max() < 1e-3


def test_cubic_1d_periodic_wrap():
    rng = np.random.default_rng(3)
    itp = PeriodicCubic1D(rng.normal(size=48))
    q = rng.uniform(-0.5, 0.5, size=40)
    for k in (-2, -1, 1, 3):
        np.testing.assert_allclose(itp.value(q + k), itp.value(q),
                                   rtol=0, atol=1e-12)


def test_cubic_1d_coefficients_consistent_with_value():
    rng = np.random.default_rng(11)
    vals = rng.normal(size=32)
    itp = PeriodicCubic1D(vals, origin=-0.5, period=1.0)
    coef = itp.coefficients()
    cw = 1.0 / 32
    xq = rng.uniform(-0.5, 0.5, size=200)
    t = (xq - (-0.5)) % 1.0
    idx = np.minimum((t / cw).astype(int), 31)
    s = t - idx * cw
    direct = ((coef[0, idx] * s + coef[1, idx]) * s + coef[2, idx]) * s \
        + coef[3, idx]
    np.testing.assert_allclose(direct, itp.value(xq), rtol=0, atol=1e-12)


def test_cubic_2d_value_and_gradient():
    f = lambda x, y: np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
    n = 48
    ax = -0.5 + np.arange(n) / n
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    itp = PeriodicCubic2D(f(gx, gy))
    rng = np.random.default_rng(5)
    pts = rng.uniform(-0.5, 0.5, size=(200, 2))
    vals = itp.value(pts)
    assert np.abs(vals - f(pts[:, 0], pts[:, 1])).max() < 1e-4
    grads = itp.gradient(pts)
    gx_true = 2 * np.pi * np.cos(2 * np.pi * pts[:, 0]) \
        * np.cos(2 * np.pi * pts[:, 1])
    gy_true = -2 * np.pi * np.sin(2 * np.pi * pts[:, 0]) \
        * np.sin(2 * np.pi * pts[:, 1])
    assert np.abs(grads[:, 0] - gx_true).max() < 5e-3
    assert np.abs(grads[:, 1] - gy_true).max() < 5e-3


def test_cubic_2d_periodicity():
    rng = np.random.default_rng(9)
    itp = PeriodicCubic2D(rng.normal(size=(16, 16)))
    pts = rng.uniform(-0.5, 0.5, size=(50, 2))
    np.testing.assert_allclose(itp.value(pts + np.array([2.0, -1.0])),
                               itp.value(pts), rtol=0, atol=1e-12)


def test_dispatcher_orders():
    vals = np.zeros(8)
    assert periodic_interpolant(vals, -0.5, 1.0, "cubic") is not None
    assert periodic_interpolant(vals, -0.5, 1.0, "linear") is not None
    with pytest.raises(ConfigError):
        periodic_interpolant(vals, -0.5, 1.0, "quintic")
