"""Discounted cell-problem solves on periodic grids (Lax-Friedrichs sweeps).

The discounted approximation delta*v + H(Dv, x) = f is discretized with a
monotone Lax-Friedrichs numerical Hamiltonian

    H_LF(a, b, x) = H((a+b)/2, x) - sum_i theta_i (a_i - b_i) / 2

on one-sided differences a (forward) and b (backward). The reference
iteration is damped Gauss-Seidel in alternating lexicographic orderings,

    v <- v - omega * (delta*v + H_LF - f) / (delta + sum_i theta_i / h),

with theta_i >= max |dH/dp_i| over the gradients the solution visits
(monotonicity), defaulting to that bound sampled on a coercivity ball with
a 1.5 safety margin.

Two iterations find the same discrete fixed point:

* "gs": the sweeps above (numba kernels), plus an optional constant-mode
  correction v += -mean(residual)/delta per cycle. The LF Hamiltonian is
  invariant under constant shifts, so the correction solves the slowest
  (constant) mode exactly and leaves the fixed point unchanged; without it
  that mode contracts like delta/(delta + sum theta_i/h) per sweep.
* "spectral": preconditioned Richardson v -= omega * P^{-1} residual where
  P is the FFT diagonalization of the residual's linearization at the mean
  gradient (which is exactly 0 for periodic v). Gauss-Seidel cycle counts
  grow like (axis node count)^2 because the dissipation acts as an
  O(theta*h) viscosity; the spectral iteration converges at an
  h-independent rate and makes large-torus solves affordable.

"auto" picks spectral on large quadratic-family grids and sweeps otherwise.
Only the quadratic family is wired into either path; tabulated specs raise
NotImplementedError here.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .errors import ConfigError, DivergenceError, SupportError
from .hamiltonian import BumpProfile, HamiltonianSpec

_BALL_MARGIN = 1.5
_RISE_LIMIT = 10          # consecutive residual increases before blowup check
_BLOWUP_FACTOR = 10.0     # rn above this multiple of the best seen = blowup
_SPECTRAL_STALL = 300     # iterations without a new best residual


# ---------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on the torus [-R/2, R/2)^dim with n nodes per unit cell."""

    dim: int
    R: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError("grid dim must be 1 or 2")
        if not isinstance(self.R, (int, np.integer)) or self.R < 1:
            raise ConfigError("grid period R must be a positive integer")
        if self.n < 4:
            raise ConfigError("need at least 4 nodes per unit cell")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self):
        return (self.R * self.n,) * self.dim

    def axis_nodes(self) -> np.ndarray:
        return -self.R / 2.0 + np.arange(self.R * self.n) * self.h

    def mesh(self):
        axes = [self.axis_nodes()] * self.dim
        return np.meshgrid(*axes, indexing="ij")

    def points(self) -> np.ndarray:
        """All nodes as an (N, dim) array in row-major node order."""
        if self.dim == 1:
            return self.axis_nodes()[:, None]
        gx, gy = self.mesh()
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)

    def nearest_origin_index(self):
        i = int(np.argmin(np.abs(self.axis_nodes())))
        return (i,) * self.dim

    def descriptor(self) -> str:
        return f"Q{self.R}^{self.dim} n={self.n}"


_MAGIC = b"HJGF"


@dataclass
class GridField:
    """Scalar field sampled on a PeriodicGrid, with provenance metadata."""

    values: np.ndarray
    grid: PeriodicGrid
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ConfigError("field shape does not match grid")
        if not np.isfinite(self.values).all():
            raise ConfigError("field values must be finite")

    def renormalized_at_origin(self) -> "GridField":
        idx = self.grid.nearest_origin_index()
        meta = dict(self.meta)
        meta["renormalized_at"] = idx
        return GridField(self.values - self.values[idx], self.grid, meta)

    def to_bytes(self) -> bytes:
        head = _MAGIC + struct.pack("<III", self.grid.dim, self.grid.R,
                                    self.grid.n)
        return head + self.values.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, blob: bytes) -> "GridField":
        if blob[:4] != _MAGIC:
            raise ConfigError("not a grid field blob")
        dim, R, n = struct.unpack("<III", blob[4:16])
        grid = PeriodicGrid(dim=int(dim), R=int(R), n=int(n))
        count = (R * n) ** dim
        vals = np.frombuffer(blob, dtype="<f8", count=count, offset=16)
        return cls(vals.reshape(grid.shape).copy(), grid)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "GridField":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self, path):
        pts = self.grid.points()
        cols = [pts[:, i] for i in range(self.grid.dim)] + [self.values.ravel()]
        header = ",".join([f"x{i+1}" for i in range(self.grid.dim)] + ["value"])
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header,
                   comments="")


# ---------------------------------------------------------------------------
# solver configuration and results


def default_delta_schedule():
    return tuple(0.1 * 0.5 ** k for k in range(7))


@dataclass(frozen=True)
class DiscountedSolveConfig:
    delta_schedule: tuple = field(default_factory=default_delta_schedule)
    lf_dissipation: Optional[tuple] = None
    sweep_tol: float = 1e-8
    max_sweeps: int = 400000
    omega: float = 1.0
    mean_correction: bool = True
    fit_points: int = 4
    quadratic_fit: bool = False
    accelerator: str = "auto"    # gs | spectral | auto

    def __post_init__(self):
        sched = tuple(float(d) for d in self.delta_schedule)
        if not sched or any(d <= 0 for d in sched):
            raise ConfigError("delta schedule must be positive and nonempty")
        if not all(b < a for a, b in zip(sched, sched[1:])):
            raise ConfigError("delta schedule must be strictly decreasing")
        object.__setattr__(self, "delta_schedule", sched)
        if not 0 < self.omega <= 1.0:
            raise ConfigError("omega must lie in (0, 1]")
        if self.sweep_tol <= 0:
            raise ConfigError("sweep_tol must be positive")
        if self.accelerator not in ("gs", "spectral", "auto"):
            raise ConfigError("accelerator must be gs, spectral, or auto")


@dataclass(frozen=True)
class ExtrapolationDiagnostics:
    deltas: tuple
    estimates: tuple
    solver_residuals: tuple
    sweep_counts: tuple
    fit_residual: float
    warnings: tuple


@dataclass(frozen=True)
class ErgodicResult:
    value: float
    method: str          # exact1d | discounted-extrapolated | montecarlo
    diagnostics: ExtrapolationDiagnostics
    grid: str


# ---------------------------------------------------------------------------
# numba sweep kernels (quadratic family)


@njit(cache=True)
def _sweep_1d(v, Vn, f, pb0, th0, delta, omega, h, fwd):
    N = v.shape[0]
    denom = delta + th0 / h
    for ii in range(N):
        i = ii if fwd else N - 1 - ii
        ip = i + 1 if i + 1 < N else 0
        im = i - 1 if i >= 1 else N - 1
        a = (v[ip] - v[i]) / h
        b = (v[i] - v[im]) / h
        c = 0.5 * (a + b) + pb0
        res = delta * v[i] + c * c - Vn[i] - 0.5 * th0 * (a - b) - f[i]
        v[i] -= omega * res / denom


@njit(cache=True)
def _sweep_2d(v, Vn, f, pb0, pb1, th0, th1, delta, omega, h, fwd0, fwd1):
    N0, N1 = v.shape
    denom = delta + (th0 + th1) / h
    for ii in range(N0):
        i = ii if fwd0 else N0 - 1 - ii
        ip = i + 1 if i + 1 < N0 else 0
        im = i - 1 if i >= 1 else N0 - 1
        for jj in range(N1):
            j = jj if fwd1 else N1 - 1 - jj
            jp = j + 1 if j + 1 < N1 else 0
            jm = j - 1 if j >= 1 else N1 - 1
            a0 = (v[ip, j] - v[i, j]) / h
            b0 = (v[i, j] - v[im, j]) / h
            a1 = (v[i, jp] - v[i, j]) / h
            b1 = (v[i, j] - v[i, jm]) / h
            c0 = 0.5 * (a0 + b0) + pb0
            c1 = 0.5 * (a1 + b1) + pb1
            res = (delta * v[i, j] + c0 * c0 + c1 * c1 - Vn[i, j]
                   - 0.5 * th0 * (a0 - b0) - 0.5 * th1 * (a1 - b1) - f[i, j])
            v[i, j] -= omega * res / denom


def _lf_residual(v, Vn, f, pbar, theta, delta, h):
    """delta*v + H_LF(Dv, x) - f on the whole grid, vectorized."""
    H = -Vn
    diss = np.zeros_like(v)
    for ax in range(v.ndim):
        vp = np.roll(v, -1, axis=ax)
        vm = np.roll(v, 1, axis=ax)
        a = (vp - v) / h
        b = (v - vm) / h
        c = 0.5 * (a + b) + pbar[ax]
        H = H + c * c
        diss = diss + 0.5 * theta[ax] * (a - b)
    return delta * v + H - diss - f


# ---------------------------------------------------------------------------
# theta estimation


def coercive_lipschitz_bound(spec: HamiltonianSpec, source) -> float:
    """Gradient bound for solutions of delta*v + H(Dv,x) = f.

    |Dv + pbar|^2 = V + f - delta*v <= ||V|| + max f+ + ||delta v|| with
    ||delta v|| <= max |H(0,.) - f|, hence |Dv| <= |pbar| + sqrt(...).
    """
    if spec.family != "quadratic":
        raise NotImplementedError("grid solver supports the quadratic family")
    f = np.asarray(source, dtype=float)
    vmax = spec.potential.max_value()
    pbsq = float(np.dot(spec.pbar, spec.pbar))
    dv_bound = float(np.max(np.abs(pbsq - f))) + vmax
    return float(np.max(np.abs(spec.pbar))
                 + np.sqrt(max(vmax + max(f.max(), 0.0) + dv_bound, 0.0)))


def default_dissipation(spec: HamiltonianSpec, source) -> tuple:
    """Per-axis LF dissipation: sup |dH/dp_i| on a coercivity gradient ball.

    The ball radius is the coercive Lipschitz bound with a 1.5 margin; for
    the quadratic family the sampled sup is the closed form 2(radius +
    |pbar_i|).
    """
    radius = _BALL_MARGIN * coercive_lipschitz_bound(spec, source)
    return tuple(2.0 * (radius + abs(float(pb))) for pb in spec.pbar)


# ---------------------------------------------------------------------------
# iteration drivers


def _node_potential(spec, grid):
    if spec.family != "quadratic":
        raise NotImplementedError("grid solver supports the quadratic family")
    if spec.dim != grid.dim:
        raise ConfigError("spec and grid dimensions differ")
    if grid.dim == 1:
        return spec.potential.value(grid.axis_nodes())
    return spec.potential.value(grid.points()).reshape(grid.shape)


def _source_values(source, grid):
    if isinstance(source, GridField):
        if source.grid != grid:
            raise ConfigError("source lives on a different grid")
        return np.asarray(source.values, dtype=float)
    arr = np.asarray(source, dtype=float)
    if arr.shape != grid.shape:
        raise ConfigError("source shape does not match grid")
    return arr


class _Contraction:
    """Non-contraction detector shared by both iterations.

    The sup-norm residual of a converging sweep decays on waves whose period
    scales with the axis node count, so a few consecutive increases are
    benign; blowup is declared only when the residual has risen repeatedly
    AND sits far above the best value seen, or when no new best appears for
    a full stall window.
    """

    def __init__(self, theta, stall_limit):
        self.theta = tuple(theta)
        self.stall = int(stall_limit)
        self.best = np.inf
        self.prev = np.inf
        self.rises = 0
        self.since_best = 0

    def check(self, rn):
        if not np.isfinite(rn):
            raise DivergenceError(
                f"residual became non-finite; dissipation theta={self.theta} "
                "violates monotonicity for the gradients encountered",
                theta=self.theta)
        if rn < self.best:
            self.best = rn
            self.since_best = 0
        else:
            self.since_best += 1
        self.rises = self.rises + 1 if rn > self.prev * (1 + 1e-12) else 0
        self.prev = rn
        if self.rises >= _RISE_LIMIT and rn > _BLOWUP_FACTOR * self.best:
            raise DivergenceError(
                f"residual increased over {self.rises} consecutive sweeps "
                f"(now {rn:.3e}, best {self.best:.3e}); dissipation theta="
                f"{self.theta} is too small", theta=self.theta)
        if self.since_best >= self.stall:
            raise DivergenceError(
                f"no residual improvement in {self.since_best} sweeps "
                f"(stuck at {rn:.3e}); iteration is not contracting for "
                f"theta={self.theta}", theta=self.theta)


def _solve_gs(spec, grid, Vn, f, delta, config, theta, v0):
    v = np.zeros(grid.shape) if v0 is None else np.array(v0, dtype=float)
    h = grid.h
    sweeps = 0
    axis_nodes = grid.R * grid.n
    watch = _Contraction(theta, max(300, 3 * axis_nodes))
    max_cycles = max(1, config.max_sweeps // (2 ** grid.dim))
    for _ in range(max_cycles):
        if grid.dim == 1:
            for fwd in (True, False):
                _sweep_1d(v, Vn, f, spec.pbar[0], theta[0], delta,
                          config.omega, h, fwd)
                sweeps += 1
        else:
            for fwd0, fwd1 in ((True, True), (False, True), (True, False),
                               (False, False)):
                _sweep_2d(v, Vn, f, spec.pbar[0], spec.pbar[1], theta[0],
                          theta[1], delta, config.omega, h, fwd0, fwd1)
                sweeps += 1
        res = _lf_residual(v, Vn, f, spec.pbar, theta, delta, h)
        if config.mean_correction:
            shift = -float(res.mean()) / delta
            v += shift
            res += delta * shift
        rn = float(np.abs(res).max())
        if rn <= config.sweep_tol:
            return v, rn, sweeps
        watch.check(rn)
    raise DivergenceError(
        f"sweep budget exhausted ({config.max_sweeps}) at delta={delta:g} "
        f"with residual {watch.prev:.3e}; theta={tuple(theta)}",
        theta=tuple(theta))


def _spectral_symbol(grid, pbar, theta, delta):
    h = grid.h
    N = grid.R * grid.n
    full = 2 * np.pi * np.fft.fftfreq(N, d=h)
    half = 2 * np.pi * np.fft.rfftfreq(N, d=h)

    def axis_symbol(kap, pb, th):
        return (1j * 2 * pb * np.sin(kap * h) / h
                + 2 * th / h * np.sin(kap * h / 2) ** 2)

    if grid.dim == 1:
        return delta + axis_symbol(half, pbar[0], theta[0])
    s0 = axis_symbol(full, pbar[0], theta[0])
    s1 = axis_symbol(half, pbar[1], theta[1])
    return delta + s0[:, None] + s1[None, :]


def _solve_spectral(spec, grid, Vn, f, delta, config, theta, v0):
    v = np.zeros(grid.shape) if v0 is None else np.array(v0, dtype=float)
    h = grid.h
    S = _spectral_symbol(grid, spec.pbar, theta, delta)
    axes = tuple(range(grid.dim))
    watch = _Contraction(theta, _SPECTRAL_STALL)
    for it in range(1, config.max_sweeps + 1):
        res = _lf_residual(v, Vn, f, spec.pbar, theta, delta, h)
        rn = float(np.abs(res).max())
        if rn <= config.sweep_tol:
            return v, rn, it - 1
        watch.check(rn)
        corr = np.fft.irfftn(np.fft.rfftn(res, axes=axes) / S, s=grid.shape,
                             axes=axes)
        v -= config.omega * corr
    raise DivergenceError(
        f"iteration budget exhausted ({config.max_sweeps}) at delta={delta:g}"
        f" with residual {watch.prev:.3e}; theta={tuple(theta)}",
        theta=tuple(theta))


def _pick_accelerator(config, grid, spec):
    if config.accelerator != "auto":
        return config.accelerator
    if spec.family == "quadratic" and np.prod(grid.shape) >= 1 << 14:
        return "spectral"
    return "gs"


def _solve_raw(spec, grid, Vn, f, delta, config, theta, v0=None):
    if _pick_accelerator(config, grid, spec) == "spectral":
        return _solve_spectral(spec, grid, Vn, f, delta, config, theta, v0)
    return _solve_gs(spec, grid, Vn, f, delta, config, theta, v0)


# ---------------------------------------------------------------------------
# public solves


def solve_discounted(spec: HamiltonianSpec, grid: PeriodicGrid, source,
                     delta: float, config: DiscountedSolveConfig,
                     v0=None) -> GridField:
    """Solve delta*v + H_LF(Dv, x) = f to the configured sweep tolerance."""
    if delta <= 0:
        raise ConfigError("delta must be positive")
    Vn = _node_potential(spec, grid)
    f = _source_values(source, grid)
    theta = config.lf_dissipation or default_dissipation(spec, f)
    if len(theta) != grid.dim:
        raise ConfigError("lf_dissipation needs one entry per axis")
    v, rn, sweeps = _solve_raw(spec, grid, Vn, f, delta, config, theta, v0)
    return GridField(v, grid, meta={"delta": delta, "residual": rn,
                                    "sweeps": sweeps, "theta": tuple(theta)})


def _schedule_solves(spec, grid, source, config):
    Vn = _node_potential(spec, grid)
    f = _source_values(source, grid)
    theta = config.lf_dissipation or default_dissipation(spec, f)
    if len(theta) != grid.dim:
        raise ConfigError("lf_dissipation needs one entry per axis")
    v = None
    rows = []
    for delta in config.delta_schedule:
        v, rn, sweeps = _solve_raw(spec, grid, Vn, f, delta, config, theta, v)
        rows.append((delta, -delta * float(v.mean()), rn, sweeps))
    return v, rows, theta


def estimate_hbar_grid(spec: HamiltonianSpec, grid: PeriodicGrid, source,
                       config: Optional[DiscountedSolveConfig] = None
                       ) -> ErgodicResult:
    """Ergodic constant from -delta*mean(v) extrapolated along the schedule.

    An affine fit a + b*delta over the last fit_points schedule entries
    removes the leading discount bias; the intercept is the estimate (a
    quadratic fit is available behind config.quadratic_fit). A nonmonotone
    estimate sequence beyond the fit residual is reported as a warning, not
    an error.
    """
    config = config or DiscountedSolveConfig()
    _, rows, _ = _schedule_solves(spec, grid, source, config)
    deltas = np.array([r[0] for r in rows])
    ests = np.array([r[1] for r in rows])
    k = min(config.fit_points, len(rows))
    dt, et = deltas[-k:], ests[-k:]
    if k == 1:
        value, fit_res = float(et[0]), 0.0
    else:
        deg = 2 if (config.quadratic_fit and k >= 3) else 1
        coef = np.polyfit(dt, et, deg)
        value = float(np.polyval(coef, 0.0))
        fit_res = float(np.abs(np.polyval(coef, dt) - et).max())
    warnings = []
    diffs = np.diff(ests)
    if len(diffs) > 1 and diffs.max() > 0 > diffs.min():
        if np.abs(diffs).min() > 10 * max(fit_res, 1e-14):
            warnings.append("estimate sequence is not monotone in delta")
    diag = ExtrapolationDiagnostics(
        deltas=tuple(deltas), estimates=tuple(ests),
        solver_residuals=tuple(r[2] for r in rows),
        sweep_counts=tuple(r[3] for r in rows),
        fit_residual=fit_res, warnings=tuple(warnings))
    return ErgodicResult(value=value, method="discounted-extrapolated",
                         diagnostics=diag, grid=grid.descriptor())


def corrector_from_discounted(spec: HamiltonianSpec, grid: PeriodicGrid,
                              source,
                              config: Optional[DiscountedSolveConfig] = None
                              ) -> GridField:
    """Corrector proxy: the smallest-delta solve renormalized at the origin.

    meta records the largest one-sided difference and the coercivity bound;
    a warning lands in meta when the bound is exceeded (it should stay
    uniform in the grid period).
    """
    config = config or DiscountedSolveConfig()
    v, rows, theta = _schedule_solves(spec, grid, source, config)
    idx = grid.nearest_origin_index()
    chi = v - v[idx]
    max_grad = 0.0
    for ax in range(grid.dim):
        d = np.abs(np.roll(chi, -1, axis=ax) - chi) / grid.h
        max_grad = max(max_grad, float(d.max()))
    lip = coercive_lipschitz_bound(spec, _source_values(source, grid))
    meta = {"delta": rows[-1][0], "residual": rows[-1][2],
            "sweeps": sum(r[3] for r in rows), "theta": tuple(theta),
            "max_one_sided_diff": max_grad, "coercive_lip_bound": lip,
            "renormalized_at": idx}
    if max_grad > lip * (1 + 1e-9):
        meta["warnings"] = ("one-sided differences exceed the coercivity "
                            "bound; refine the grid",)
    return GridField(chi, grid, meta)


def compute_chi_infty(spec: HamiltonianSpec, bump: BumpProfile, R_large: int,
                      n: int,
                      config: Optional[DiscountedSolveConfig] = None):
    """Single-bump corrector on the large torus Q_{R_large}, paired with the
    unperturbed corrector on the same grid.

    The source is one bump copy at the origin (equivalent to the summed
    periodization when the support fits, which is required). The
    unperturbed corrector is solved on the unit cell and tiled: the tiled
    field is a fixed point of the large-torus scheme and the discounted
    fixed point is unique, so tiling is exact. Returns (chi_infty, chi).
    """
    if not isinstance(R_large, (int, np.integer)) or R_large < 8:
        raise ConfigError("R_large must be an integer >= 8")
    if 2 * bump.support_radius >= R_large:
        raise SupportError("bump support does not fit in the torus")
    config = config or DiscountedSolveConfig()
    grid = PeriodicGrid(dim=spec.dim, R=int(R_large), n=int(n))
    source = bump.at(grid.points(), spec.dim).reshape(grid.shape)
    chi_inf = corrector_from_discounted(spec, grid, source, config)

    shift_num = n * (1 - R_large)
    if shift_num % 2 == 0:
        unit = PeriodicGrid(dim=spec.dim, R=1, n=int(n))
        chi_unit = corrector_from_discounted(spec, unit,
                                             np.zeros(unit.shape), config)
        shift = (shift_num // 2) % n
        idx = (np.arange(R_large * n) + shift) % n
        vals = chi_unit.values[idx] if spec.dim == 1 \
            else chi_unit.values[np.ix_(idx, idx)]
        chi = GridField(vals, grid, dict(chi_unit.meta))
        chi = chi.renormalized_at_origin()
    else:
        chi = corrector_from_discounted(spec, grid, np.zeros(grid.shape),
                                        config)
    return chi_inf, chi
