"""Command-line experiment driver: sweeps, rate fits, CSV emission.

Subcommands: hbar, periodic-sweep, random-sweep, weakkam, chi-infty.  Each
reads a JSON config describing the problem and the sweep parameters, writes
one CSV plus a JSON config sidecar into --out, and prints the CSV path.
Every row carries provenance (config hash, seed, grid descriptor, delta
schedule) so any row can be recomputed from the CSV alone.

Seed precedence: --seed flag, then the config's "seed", then the
HJHOMOG_SEED environment variable, then 0.

Exit codes: 0 success, 2 solver error, 3 config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .cellpde import (DiscountedSolveConfig, GridField, PeriodicGrid,
                      compute_chi_infty, corrector_from_discounted,
                      default_delta_schedule, estimate_hbar_grid)
from .errors import ConfigError, HJHomogError
from .hamiltonian import zeta_R, problem_from_json
from .homog1d import (limit_formula_1d, solve_hbar_1d, solve_hbar_R_1d,
                      solve_hbar_eta_exact_1d)
from .randomfield import mc_estimate_hbar_eta_1d
from .weakkam import (chi_infty_structure, check_invariance, flow_trajectory,
                      occupational_measure, pairing_integral, rotation_number)

__all__ = ["ExperimentConfig", "RateFit", "run_hbar", "run_periodic_sweep",
           "run_random_sweep", "run_weakkam", "run_chi_infty_report", "main"]

_KINDS = ("hbar", "periodic-sweep", "random-sweep", "weakkam", "chi-infty")
_DEGENERATE_TOL = 1e-13


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of log(gap) against log(parameter)."""

    slope: float
    intercept: float
    r_squared: float
    residuals: tuple
    points: int
    degenerate: bool = False

    @classmethod
    def fit(cls, params, gaps) -> "RateFit":
        params = np.asarray(params, dtype=float)
        gaps = np.asarray(gaps, dtype=float)
        if np.all(np.abs(gaps) < _DEGENERATE_TOL):
            return cls(slope=float("nan"), intercept=float("nan"),
                       r_squared=float("nan"), residuals=(),
                       points=0, degenerate=True)
        keep = gaps > _DEGENERATE_TOL
        if keep.sum() < 3:
            raise ConfigError("rate fit needs at least 3 nonzero gaps")
        lx, ly = np.log(params[keep]), np.log(gaps[keep])
        slope, intercept = np.polyfit(lx, ly, 1)
        pred = slope * lx + intercept
        res = ly - pred
        ss_tot = float(np.sum((ly - ly.mean()) ** 2))
        r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(res ** 2)) / ss_tot
        return cls(slope=float(slope), intercept=float(intercept),
                   r_squared=float(r2),
                   residuals=tuple(float(r) for r in res),
                   points=int(keep.sum()))


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a problem plus the sweep parameters for its kind."""

    kind: str
    problem: dict
    R_values: tuple = ()
    eta_values: tuple = ()
    R_large_values: tuple = ()
    grid_n: int = 64
    delta_schedule: Optional[tuple] = None
    accelerator: str = "auto"
    seed: int = 0
    samples: int = 8
    torus_N: int = 2000
    threads: int = 1
    x0_values: tuple = ()
    horizon: float = 200.0
    time_step: float = 0.01
    bins: int = 64
    out_name: Optional[str] = None
    raw: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"kind must be one of {_KINDS}")
        if self.kind == "periodic-sweep":
            if not self.R_values:
                raise ConfigError("periodic-sweep needs R_values")
            for R in self.R_values:
                if int(R) != R or R < 2:
                    raise ConfigError("R values must be integers >= 2")
        if self.kind == "random-sweep":
            if not self.eta_values:
                raise ConfigError("random-sweep needs eta_values")
            for eta in self.eta_values:
                if not 0.0 <= eta < 1.0:
                    raise ConfigError(
                        "eta values must lie in (0, 1); 0 is the sentinel row")
        if self.kind == "chi-infty" and not self.R_large_values:
            raise ConfigError("chi-infty needs R_large_values")
        if self.grid_n < 4:
            raise ConfigError("grid_n must be at least 4")

    @classmethod
    def from_dict(cls, doc: dict, *, kind: Optional[str] = None,
                  seed: Optional[int] = None,
                  threads: Optional[int] = None) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        if "problem" not in doc:
            raise ConfigError("config needs a problem section")
        use_kind = kind or doc.get("kind")
        if use_kind is None:
            raise ConfigError("config needs a kind (or pass a subcommand)")
        env_seed = os.environ.get("HJHOMOG_SEED")
        use_seed = (seed if seed is not None
                    else doc.get("seed",
                                 int(env_seed) if env_seed else 0))
        sched = doc.get("delta_schedule")
        return cls(
            kind=use_kind,
            problem=doc["problem"],
            R_values=tuple(doc.get("R_values", ())),
            eta_values=tuple(doc.get("eta_values", ())),
            R_large_values=tuple(doc.get("R_large_values", ())),
            grid_n=int(doc.get("grid_n", 64)),
            delta_schedule=tuple(sched) if sched else None,
            accelerator=doc.get("accelerator", "auto"),
            seed=int(use_seed),
            samples=int(doc.get("samples", 8)),
            torus_N=int(doc.get("torus_N", 2000)),
            threads=int(threads if threads is not None
                        else doc.get("threads", 1)),
            x0_values=tuple(tuple(x) if isinstance(x, (list, tuple)) else (x,)
                            for x in doc.get("x0_values", ())),
            horizon=float(doc.get("horizon", 200.0)),
            time_step=float(doc.get("time_step", 0.01)),
            bins=int(doc.get("bins", 64)),
            out_name=doc.get("out_name"),
            raw=doc,
        )

    @classmethod
    def from_json(cls, path, **kw) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid config JSON: {e}") from e
        return cls.from_dict(doc, **kw)

    def solver_config(self) -> DiscountedSolveConfig:
        sched = self.delta_schedule or default_delta_schedule()
        return DiscountedSolveConfig(delta_schedule=tuple(sched),
                                     accelerator=self.accelerator)

    def config_hash(self) -> str:
        blob = json.dumps({**self.raw, "kind": self.kind, "seed": self.seed},
                          sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _provenance(config: ExperimentConfig, grid: str) -> dict:
    sched = config.delta_schedule or default_delta_schedule()
    return {"config_hash": config.config_hash(), "seed": config.seed,
            "grid": grid, "delta_schedule": ";".join(f"{d:g}" for d in sched)}


def _write_csv(path: Path, rows, columns) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in columns})
    return path


def _write_sidecar(path: Path, config: ExperimentConfig, extra=None):
    doc = {**config.raw, "kind": config.kind, "seed": config.seed,
           "config_hash": config.config_hash()}
    if extra:
        doc["results"] = extra
    side = path.with_suffix(".config.json")
    side.write_text(json.dumps(doc, indent=2, default=str) + "\n")
    return side


def _sweep(values, point_fn, keep_going: bool, label: str):
    """Run point_fn over sorted values; fail fast or collect an error column."""
    rows = []
    for v in sorted(values):
        try:
            row = point_fn(v)
            row.setdefault("error", "")
        except HJHomogError as e:
            if not keep_going:
                raise type(e)(f"{label}={v}: {e}") from e
            row = {label: v, "error": str(e)}
        rows.append(row)
    return rows


def run_hbar(config: ExperimentConfig, out_dir: Path,
             keep_going: bool = False) -> Path:
    """Single effective-constant computation, cross-method in d = 1."""
    spec, bump = problem_from_json(config.problem)
    solver = config.solver_config()
    R = int(config.R_values[0]) if config.R_values else 1
    grid = PeriodicGrid(spec.dim, R, config.grid_n)
    pts = grid.points()
    if bump is not None:
        src = zeta_R(bump, R, pts if spec.dim > 1 else pts[:, 0],
                     dim=spec.dim).reshape(grid.shape)
    else:
        src = np.zeros(grid.shape)
    prov = _provenance(config, grid.descriptor())
    rows = []
    result = estimate_hbar_grid(spec, grid, GridField(src, grid), solver)
    rows.append({"method": "grid", "value": result.value,
                 "fit_residual": result.diagnostics.fit_residual,
                 "residual": max(result.diagnostics.solver_residuals),
                 **prov})
    if spec.dim == 1:
        exact = (solve_hbar_R_1d(spec, bump, R) if bump is not None
                 else solve_hbar_1d(spec))
        rows.append({"method": "exact1d", "value": exact.value,
                     "fit_residual": 0.0, "residual": exact.residual, **prov})
        for row in rows:
            row["cross_method_diff"] = abs(rows[0]["value"] - exact.value)
    name = config.out_name or "hbar.csv"
    cols = ["method", "value", "fit_residual", "residual",
            "cross_method_diff", *prov.keys()]
    path = _write_csv(out_dir / name, rows, cols)
    _write_sidecar(path, config)
    return path


def run_periodic_sweep(config: ExperimentConfig, out_dir: Path,
                       keep_going: bool = False) -> tuple:
    """Gap H̄ - H̄_R per R, its R^d scaling, and the log-log decay fit."""
    spec, bump = problem_from_json(config.problem)
    if bump is None:
        raise ConfigError("periodic-sweep needs a bump in the problem")
    solver = config.solver_config()
    d = spec.dim

    if d == 1:
        hbar = solve_hbar_1d(spec).value
        limit = limit_formula_1d(spec, bump, hbar)

        def point(R):
            r = solve_hbar_R_1d(spec, bump, int(R))
            gap = hbar - r.value
            return {"R": int(R), "hbar_R": r.value, "gap": gap,
                    "scaled_gap": R ** d * (r.value - hbar),
                    "limit_ref": limit, "method": "exact1d",
                    "residual": r.residual,
                    **_provenance(config, "exact")}
    else:
        ref_grid = PeriodicGrid(d, 1, config.grid_n)
        hbar = estimate_hbar_grid(spec, ref_grid,
                                  np.zeros(ref_grid.shape), solver).value

        def point(R):
            grid = PeriodicGrid(d, int(R), config.grid_n)
            src = zeta_R(bump, int(R), grid.points(), dim=d)
            res = estimate_hbar_grid(spec, grid,
                                     GridField(src.reshape(grid.shape), grid),
                                     solver)
            gap = hbar - res.value
            return {"R": int(R), "hbar_R": res.value, "gap": gap,
                    "scaled_gap": R ** d * (res.value - hbar),
                    "limit_ref": "", "method": "grid",
                    "residual": res.diagnostics.fit_residual,
                    **_provenance(config, grid.descriptor())}

    rows = _sweep(config.R_values, point, keep_going, "R")
    good = [r for r in rows if not r.get("error")]
    fit = RateFit.fit([r["R"] for r in good], [r["gap"] for r in good]) \
        if len(good) >= 3 or all(abs(r["gap"]) < _DEGENERATE_TOL
                                 for r in good) else None
    name = config.out_name or "periodic_sweep.csv"
    cols = ["R", "hbar_R", "gap", "scaled_gap", "limit_ref", "method",
            "residual", "error", *_provenance(config, "").keys()]
    path = _write_csv(out_dir / name, rows, cols)
    extra = ({"slope": fit.slope, "intercept": fit.intercept,
              "r_squared": fit.r_squared, "degenerate": fit.degenerate}
             if fit else None)
    _write_sidecar(path, config, extra)
    return path, fit


def run_random_sweep(config: ExperimentConfig, out_dir: Path,
                     keep_going: bool = False) -> tuple:
    """Exact and MC H̄_η per η with the first-order ratio column."""
    spec, bump = problem_from_json(config.problem)
    if bump is None:
        raise ConfigError("random-sweep needs a bump in the problem")
    if spec.dim != 1:
        raise ConfigError("random-sweep is exact only in d = 1")
    hbar = solve_hbar_1d(spec).value
    limit_ref = -limit_formula_1d(spec, bump, hbar)

    def point(eta):
        if eta == 0.0:
            # sentinel row: unperturbed constant, ratio left empty
            return {"eta": 0.0, "exact_value": hbar, "mc_mean": hbar,
                    "mc_stderr": 0.0, "ratio": "", "limit_ref": limit_ref,
                    "method": "exact1d", **_provenance(config, "exact")}
        exact = solve_hbar_eta_exact_1d(spec, bump, float(eta))
        mc = mc_estimate_hbar_eta_1d(spec, bump, float(eta), config.torus_N,
                                     config.samples, seed=config.seed,
                                     threads=config.threads)
        return {"eta": float(eta), "exact_value": exact.value,
                "mc_mean": mc.mean, "mc_stderr": mc.stderr,
                "ratio": (hbar - exact.value) / eta, "limit_ref": limit_ref,
                "method": "exact1d+mc", **_provenance(config, "exact")}

    rows = _sweep(config.eta_values, point, keep_going, "eta")
    good = [r for r in rows if not r.get("error") and r["eta"] > 0]
    fit = RateFit.fit([r["eta"] for r in good],
                      [hbar - r["exact_value"] for r in good]) \
        if len(good) >= 3 else None
    name = config.out_name or "random_sweep.csv"
    cols = ["eta", "exact_value", "mc_mean", "mc_stderr", "ratio",
            "limit_ref", "method", "error", *_provenance(config, "").keys()]
    path = _write_csv(out_dir / name, rows, cols)
    extra = ({"slope": fit.slope, "r_squared": fit.r_squared}
             if fit else None)
    _write_sidecar(path, config, extra)
    return path, fit


def _unperturbed_corrector(spec, config):
    """Grid corrector on Q_1 at the schedule's smallest delta (None if V=0)."""
    if spec.potential.max_value() == 0.0:
        return None
    grid = PeriodicGrid(spec.dim, 1, config.grid_n)
    return corrector_from_discounted(spec, grid, np.zeros(grid.shape),
                                     config.solver_config())


def run_weakkam(config: ExperimentConfig, out_dir: Path,
                keep_going: bool = False) -> Path:
    """Rotation vectors and occupational-measure diagnostics per start point."""
    spec, _ = problem_from_json(config.problem)
    corr = _unperturbed_corrector(spec, config)
    x0s = config.x0_values or ((0.0,) * spec.dim,)

    def point(x0):
        traj = flow_trajectory(spec, corr, np.asarray(x0, dtype=float),
                               config.horizon, config.time_step)
        rot = rotation_number(traj)
        meas = occupational_measure(traj, config.bins)
        inv = check_invariance(meas, spec, corr)
        row = {"x0": ";".join(f"{c:g}" for c in x0),
               "T": config.horizon, "h_t": config.time_step,
               "tail_variance": rot.tail_variance,
               "zero_flag": rot.zero_flag, "bins": config.bins,
               "invariance_residual": inv,
               **_provenance(config, f"flow d={spec.dim}")}
        for j, c in enumerate(rot.e_hat):
            row[f"e{j + 1}"] = float(c)
        return row

    rows = _sweep(x0s, point, keep_going, "x0")
    name = config.out_name or "weakkam.csv"
    ecols = [f"e{j + 1}" for j in range(spec.dim)]
    cols = ["x0", "T", "h_t", *ecols, "tail_variance", "zero_flag", "bins",
            "invariance_residual", "error", *_provenance(config, "").keys()]
    path = _write_csv(out_dir / name, rows, cols)
    _write_sidecar(path, config)
    return path


def run_chi_infty_report(config: ExperimentConfig, out_dir: Path,
                         keep_going: bool = False) -> Path:
    """Far-field structure residuals and the pairing integral per R_large."""
    spec, bump = problem_from_json(config.problem)
    if spec.dim != 2:
        raise ConfigError("chi-infty report needs a d = 2 problem")
    if bump is None:
        raise ConfigError("chi-infty needs a bump in the problem")
    if spec.potential.max_value() == 0.0:
        e = tuple(-2.0 * float(c) for c in spec.pbar)
    else:
        traj = flow_trajectory(spec, _unperturbed_corrector(spec, config),
                               np.zeros(spec.dim), max(config.horizon, 100.0),
                               config.time_step)
        e = tuple(float(c) for c in rotation_number(traj).e_hat)
    solver = config.solver_config()

    def point(R_large):
        chi_inf, chi = compute_chi_infty(spec, bump, int(R_large),
                                         config.grid_n, solver)
        rep = chi_infty_structure(chi_inf, chi, e)
        pairing = pairing_integral(spec, chi_inf, chi)
        row = {"R_large": int(R_large), "c": rep.c, "min_all": rep.min_all,
               "farfield_sup": rep.farfield_sup, "K": rep.K,
               "pairing": pairing,
               **_provenance(config, chi_inf.grid.descriptor())}
        for j, (_, sup) in enumerate(rep.upstream):
            row[f"upstream_{j + 1}"] = sup
        for j, c in enumerate(e):
            row[f"e{j + 1}"] = c
        return row

    rows = _sweep(config.R_large_values, point, keep_going, "R_large")
    name = config.out_name or "chi_infty.csv"
    ucols = [f"upstream_{j + 1}" for j in range(4)]
    cols = ["R_large", "c", "min_all", "farfield_sup", "K", *ucols,
            "pairing", "e1", "e2", "error", *_provenance(config, "").keys()]
    path = _write_csv(out_dir / name, rows, cols)
    _write_sidecar(path, config)
    return path


_RUNNERS = {
    "hbar": run_hbar,
    "periodic-sweep": run_periodic_sweep,
    "random-sweep": run_random_sweep,
    "weakkam": run_weakkam,
    "chi-infty": run_chi_infty_report,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hjhomog",
        description="Effective-Hamiltonian experiments: sweeps, rate fits, "
                    "CSV emission.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in _KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True,
                       help="JSON experiment config")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--keep-going", action="store_true",
                       help="emit partial CSV with an error column instead "
                            "of aborting on the first solver failure")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = ExperimentConfig.from_json(args.config, kind=args.command,
                                            seed=args.seed,
                                            threads=args.threads)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        result = _RUNNERS[args.command](config, out_dir,
                                        keep_going=args.keep_going)
        path = result[0] if isinstance(result, tuple) else result
        print(path)
        if isinstance(result, tuple) and result[1] is not None:
            fit = result[1]
            if fit.degenerate:
                print("rate fit: degenerate (all gaps zero)")
            else:
                print(f"rate fit: slope={fit.slope:.4f} "
                      f"R^2={fit.r_squared:.5f}")
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 3
    except HJHomogError as e:
        print(f"solver error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
