"""Seeded Bernoulli lattice occupancy and Monte Carlo ergodic constants.

Occupancy draws come from a counter-based hash of (seed, lattice index), so
any window of the field is reproducible without materializing global state
and disjoint seeds give independent streams.  Thinning is coupled across
intensities: each site keeps one uniform draw and compares it against eta,
which makes per-sample monotonicity in eta hold exactly.

Monte Carlo estimators average per-realization ergodic constants.  In one
dimension with the bump supported inside a single cell, a realized window of
torus_N cells enters the cell condition only through its occupied-cell count,
so each sample reduces to a two-term mixture root-find identical in shape to
the exact occupancy average.  The grid estimator periodizes a realized window
and runs the discounted solver per sample.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cellpde import (DiscountedSolveConfig, GridField, PeriodicGrid,
                      estimate_hbar_grid)
from .errors import (ConfigError, NoSingleBranchError, SupportError,
                     WindowError)
from .hamiltonian import BumpProfile, HamiltonianSpec, zeta_eta
from .homog1d import (_bisect_to_residual, _max_fold, _residual_closure,
                      cell_plan)

__all__ = [
    "BernoulliField",
    "MCEstimate",
    "sample_field",
    "mc_estimate_hbar_eta_1d",
    "mc_estimate_hbar_eta_grid",
    "hat_f",
    "derive_seed",
]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix64(z):
    """splitmix64 finalizer, vectorized over uint64 arrays (wrapping mults)."""
    with np.errstate(over="ignore"):
        z = (np.asarray(z, dtype=np.uint64) + _GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _u01(seed, k):
    """Uniforms in [0, 1) keyed by (seed, lattice index row)."""
    k = np.asarray(k, dtype=np.int64)
    h = np.full(k.shape[0], np.uint64(seed) & np.uint64(0xFFFFFFFFFFFFFFFF),
                dtype=np.uint64)
    with np.errstate(over="ignore"):
        for j in range(k.shape[1]):
            h = _mix64(h ^ _mix64(k[:, j].astype(np.uint64) +
                                  np.uint64(j + 1) * _GOLDEN))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def derive_seed(seed: int, index: int) -> int:
    """Independent child seed for sample number `index`."""
    return int(_mix64(np.uint64(seed) ^ _mix64(np.uint64(index))))


@dataclass(frozen=True)
class BernoulliField:
    """Lazy iid {0,1} occupancy with success probability eta.

    window, if set, bounds the queryable sites to |k|_inf <= window; queries
    outside raise WindowError.  The draw at a site depends only on (seed, k),
    never on evaluation order.
    """

    eta: float
    seed: int
    window: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}")
        if self.window is not None and self.window < 0:
            raise ConfigError("window must be nonnegative")

    def values_at(self, k) -> np.ndarray:
        """Occupancy (0.0 or 1.0) at integer lattice rows k of shape (M, d)."""
        k = np.asarray(k)
        if k.ndim == 1:
            k = k[:, None]
        if not np.issubdtype(k.dtype, np.integer):
            rounded = np.rint(k)
            if not np.allclose(k, rounded):
                raise ConfigError("lattice indices must be integers")
            k = rounded.astype(np.int64)
        if self.window is not None and k.size:
            if int(np.abs(k).max()) > self.window:
                raise WindowError(
                    f"site outside window |k|_inf <= {self.window}")
        return (_u01(self.seed, k) < self.eta).astype(np.float64)

    def empirical_mean(self, N: int) -> float:
        """Mean occupancy over the centered window |k_i| <= N (1D count 2N+1)."""
        ks = np.arange(-N, N + 1, dtype=np.int64)[:, None]
        return float(self.values_at(ks).mean())


def sample_field(seed: int, eta: float, *,
                 window: Optional[int] = None) -> BernoulliField:
    """Reproducible Bernoulli occupancy field; eta outside [0, 1] errors."""
    return BernoulliField(eta=float(eta), seed=int(seed), window=window)


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error over independent realizations."""

    mean: float
    stderr: float
    samples: int
    method: str
    values: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples < 2:
            raise ConfigError("an MC estimate needs at least 2 samples")


def _aggregate(values, method, diagnostics) -> MCEstimate:
    arr = np.asarray(values, dtype=float)
    return MCEstimate(mean=float(arr.mean()),
                      stderr=float(arr.std(ddof=1) / np.sqrt(arr.size)),
                      samples=int(arr.size), method=method,
                      values=tuple(float(v) for v in arr),
                      diagnostics=diagnostics)


def _run_ordered(task, samples: int, threads: int):
    # ordered deterministic reduction: results keyed by sample index, so the
    # aggregate is bitwise identical for any worker count
    if threads <= 1:
        return [task(i) for i in range(samples)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(task, range(samples)))


def mc_estimate_hbar_eta_1d(spec: HamiltonianSpec, bump: BumpProfile,
                            eta: float, torus_N: int, samples: int, *,
                            seed: int = 0, threads: int = 1,
                            tol: float = 1e-10,
                            panels_per_cell: int = 64,
                            nodes_per_panel: int = 8) -> MCEstimate:
    """Monte Carlo ergodic constant on realized windows of torus_N cells.

    With the bump inside one cell, a realization enters the window-averaged
    cell condition only through its occupied count m, so each sample solves
    (m/N) * integral(H^{-1}(zeta+lambda)) + (1-m/N) * integral(H^{-1}(lambda))
    = 0 exactly.  Windows with zero occupied cells are counted in
    diagnostics["empty_windows"].
    """
    if spec.dim != 1:
        raise ConfigError("mc_estimate_hbar_eta_1d needs a 1D spec")
    if not 0.0 <= eta <= 1.0:
        raise ConfigError("eta must lie in [0, 1]")
    if torus_N < 2:
        raise ConfigError("torus_N must be at least 2")
    if samples < 2:
        raise ConfigError("need at least 2 samples")
    if bump.support_radius > 0.5:
        raise SupportError(
            "bump support must fit inside the unit cell "
            f"(support_radius={bump.support_radius})")

    plan = cell_plan(spec, -0.5, 0.5, bump=bump, centers=(0.0,),
                     panels_per_cell=panels_per_cell,
                     nodes_per_panel=nodes_per_panel)
    zq = bump.at(plan.nodes, 1)
    lam_lo = _max_fold(spec) + 1e-12
    pb_sq = float(np.dot(spec.pbar, spec.pbar))
    width = pb_sq + spec.potential.max_value() + bump.amplitude + 1.0
    sites = (np.arange(torus_N, dtype=np.int64) - torus_N // 2)[:, None]

    def one_sample(i: int):
        occ = sample_field(derive_seed(seed, i), eta)
        m = int(occ.values_at(sites).sum())
        frac = m / torus_N
        for sign in (1, -1):
            F_plain = _residual_closure(spec, sign, plan,
                                        np.zeros(len(plan)))
            F_bumped = _residual_closure(spec, sign, plan, zq)
            G = lambda lam: ((1.0 - frac) * F_plain(lam)
                             + frac * F_bumped(lam))
            hit = _bisect_to_residual(G, lam_lo, lam_lo + width, tol)
            if hit is not None:
                return float(hit[0]), m
        raise NoSingleBranchError(
            f"sample {i}: no single-branch root for occupied fraction {frac}")

    results = _run_ordered(one_sample, samples, threads)
    values = [v for v, _ in results]
    empties = sum(1 for _, m in results if m == 0)
    diag = {"torus_N": int(torus_N), "seed": int(seed),
            "empty_windows": int(empties),
            "mean_occupied": float(np.mean([m for _, m in results]))}
    return _aggregate(values, "exact1d", diag)


class _PeriodizedWindow:
    """Occupancy read R-periodically from a single realized window.

    Wrapping the query index makes the thinned source exactly R-periodic, so
    the grid solver sees one realization of a Q_R window tiled over space.
    """

    def __init__(self, base: BernoulliField, R: int):
        self.base = base
        self.R = int(R)

    def values_at(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        half = self.R // 2
        wrapped = (k + half) % self.R - half
        return self.base.values_at(wrapped)


def mc_estimate_hbar_eta_grid(spec: HamiltonianSpec, bump: BumpProfile,
                              eta: float, R_window: int, samples: int,
                              config: Optional[DiscountedSolveConfig] = None,
                              *, n: int = 64, seed: int = 0,
                              threads: int = 1) -> MCEstimate:
    """Monte Carlo ergodic constant from per-sample discounted grid solves.

    Each sample realizes the occupancy on a Q_{R_window} block, periodizes
    the thinned source over that block, and extrapolates the discounted
    solver on the resulting torus.
    """
    if spec.dim not in (1, 2):
        raise ConfigError("grid MC supports dim 1 or 2")
    if not 0.0 <= eta <= 1.0:
        raise ConfigError("eta must lie in [0, 1]")
    if samples < 2:
        raise ConfigError("need at least 2 samples")
    config = config or DiscountedSolveConfig()
    grid = PeriodicGrid(spec.dim, R_window, n)
    pts = grid.points()

    def one_sample(i: int):
        occ = _PeriodizedWindow(sample_field(derive_seed(seed, i), eta),
                                R_window)
        src = zeta_eta(bump, occ, pts if spec.dim > 1 else pts[:, 0],
                       dim=spec.dim).reshape(grid.shape)
        result = estimate_hbar_grid(spec, grid, GridField(src, grid), config)
        return float(result.value)

    values = _run_ordered(one_sample, samples, threads)
    diag = {"R_window": int(R_window), "n": int(n), "seed": int(seed),
            "grid": grid.descriptor()}
    return _aggregate(values, "discounted-grid", diag)


def hat_f(f, x, N: int) -> float:
    """Finite-window lattice average N^{-d} * sum_{|k_i| <= (N-1)/2} f(x + k).

    x fixes the dimension (scalar means d = 1).  Callers chasing the large-N
    limit sweep N and track the running max of tail averages.
    """
    if N < 1 or int(N) != N:
        raise ConfigError("N must be a positive integer")
    N = int(N)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.size
    half = (N - 1) // 2
    axes = [np.arange(-half, N - half, dtype=np.int64)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    ks = np.stack([m.ravel() for m in mesh], axis=1)
    pts = x[None, :] + ks
    total = float(np.sum(f(pts if d > 1 else pts[:, 0])))
    return total / N ** d
