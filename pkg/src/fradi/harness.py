"""Batch studies behind the command line: convergence, TLR memory, factor timing.

Each study returns a list of row dicts; :mod:`fradi.cli` turns them into CSV.
"""
from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .assembly import ConfigurationError, Grid, KernelOperator, assemble
from .cholesky import SPDError, factorize
from .clustering import default_tile_size, order_points
from .dense import assemble_dense, dense_cholesky, dense_lu, dense_solve
from .fields import (
    Formulation,
    ProblemSpec,
    ScalarField,
    beta_bump_2d,
    beta_linear_1d,
    kappa_bump_1d,
    kappa_two_bumps_2d,
)
from .tlr import assemble_tlr, compression_profile

CASES = ("kappa", "beta", "nonsym")
# interior diagnostic: max error over the middle half of the domain
INTERIOR_RADIUS = 0.5


def make_problem(case: str, dim: int, beta0: float | None = None, beta: float = 0.75,
                 delta_mult: float = 4.0) -> ProblemSpec:
    """The standard test problems with a unit source.

    ``kappa``: bump diffusivity, constant order ``beta``.
    ``beta``: linear order ``beta0 + 0.1 x`` in 1D (``beta0`` defaults to 0.7) or
    the radial bump order in 2D, unit diffusivity.
    ``nonsym``: 1D flux form with order ``beta0 + 0.1 x`` (default 0.5).
    """
    if dim not in (1, 2):
        raise ConfigurationError("dim must be 1 or 2")
    if case == "kappa":
        kappa = kappa_bump_1d() if dim == 1 else kappa_two_bumps_2d()
        return ProblemSpec(Formulation.SYMMETRIC_KAPPA, dim=dim, kappa=kappa,
                           beta=ScalarField.const(beta), delta_mult=delta_mult)
    if case == "beta":
        if dim == 1:
            field = beta_linear_1d(0.7 if beta0 is None else beta0)
        else:
            if beta0 is not None:
                raise ConfigurationError("beta0 applies to the 1D linear order only")
            field = beta_bump_2d()
        return ProblemSpec(Formulation.SYMMETRIC_BETA, dim=dim, beta=field, delta_mult=delta_mult)
    if case == "nonsym":
        if dim != 1:
            raise ConfigurationError("the non-symmetric case is 1D only")
        return ProblemSpec(Formulation.NONSYMMETRIC_BETA, dim=1,
                           beta=beta_linear_1d(0.5 if beta0 is None else beta0),
                           delta_mult=delta_mult)
    raise ConfigurationError(f"unknown case {case!r}; expected one of {', '.join(CASES)}")


def grid_for(spec: ProblemSpec, cells: int) -> Grid:
    """Grid with ``cells`` intervals per side of the unit box (``cells - 1`` unknowns)."""
    if cells < 2:
        raise ConfigurationError("a grid needs at least 2 cells per side")
    return Grid.regular(spec.dim, cells - 1, spec.inner, spec.outer)


def check_nested(grids) -> None:
    grids = list(grids)
    if len(grids) < 2:
        raise ConfigurationError("need at least two grids")
    for a, b in zip(grids[:-1], grids[1:]):
        if b != 2 * a:
            raise ConfigurationError(f"grids must double at each step: {a} -> {b} is not nested")


def restrict(coarse: Grid, fine: Grid, u_fine: np.ndarray) -> np.ndarray:
    """Values of ``u_fine`` at the coarse interior nodes (every second fine node)."""
    if (fine.n_side + 1) != 2 * (coarse.n_side + 1):
        raise ConfigurationError("grids are not nested")
    idx = fine.interior_index()
    return u_fine[idx[tuple((2 * coarse.lattice - 1).T)]]


@dataclass
class SolveSettings:
    solver: str = "auto"          # auto | dense | tlr
    eps: float = 1e-6
    tile: int = 0                 # 0 picks the default tile size
    seed: int = 0


def solve_problem(spec: ProblemSpec, grid: Grid, settings: SolveSettings = SolveSettings(),
                  **assemble_kw) -> np.ndarray:
    """Assemble and solve ``A u = f`` on ``grid``."""
    op = assemble(spec, grid, **assemble_kw)
    solver = settings.solver
    if solver == "auto":
        solver = "tlr" if (grid.dim == 2 and op.symmetric) else "dense"
    if solver == "tlr":
        if not op.symmetric:
            raise ConfigurationError("TLR solves need a symmetric formulation")
        m = settings.tile or default_tile_size(op.N)
        part = order_points(grid.points, m)
        L = factorize(assemble_tlr(op, part, settings.eps, seed=settings.seed))
        return L.solve(op.rhs)
    A = assemble_dense(op)
    fac = dense_cholesky(A) if op.symmetric else dense_lu(A)
    return dense_solve(fac, op.rhs)


def _rates(errors):
    out = [None]
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(math.log2(a / b) if a > 0 and b > 0 else None)
    return out


def convergence(spec: ProblemSpec, grids, settings: SolveSettings = SolveSettings(),
                **assemble_kw) -> list[dict]:
    """Successive-grid error study.

    Row ``k`` compares grid ``grids[k]`` with ``grids[k+1]``:
    ``error = max|u_h - u_{h/2}| / max|u_{h/2}|`` over coincident nodes, and
    ``rate`` is ``log2`` of the ratio to the previous row's error.
    """
    grids = list(grids)
    check_nested(grids)
    sols = []
    for g in grids:
        grid = grid_for(spec, g)
        sols.append((grid, solve_problem(spec, grid, settings, **assemble_kw)))
    rows = []
    for (gc, uc), (gf, uf) in zip(sols[:-1], sols[1:]):
        diff = np.abs(uc - restrict(gc, gf, uf))
        scale = np.max(np.abs(uf))
        inner = np.all(np.abs(gc.points) <= INTERIOR_RADIUS, axis=1)
        rows.append({
            "N": gc.N, "h": gc.h,
            "error": float(diff.max() / scale),
            "interior_error": float(diff[inner].max() / scale),
        })
    for key, rk in (("error", "rate"), ("interior_error", "interior_rate")):
        for row, r in zip(rows, _rates([row[key] for row in rows])):
            row[rk] = r
    return [{k: row[k] for k in ("N", "h", "error", "rate", "interior_error", "interior_rate")}
            for row in rows]


def convergence_nonsym(spec: ProblemSpec, grids) -> list[dict]:
    """Treated and untreated flux-form convergence on the same grids."""
    treated = convergence(spec, grids, treated=True)
    untreated = convergence(spec, grids, treated=False)
    rows = []
    for t, u in zip(treated, untreated):
        rows.append({
            "N": t["N"], "h": t["h"],
            "error_treated": t["error"], "rate_treated": t["rate"],
            "error_untreated": u["error"], "rate_untreated": u["rate"],
            "interior_rate_treated": t["interior_rate"],
            "interior_rate_untreated": u["interior_rate"],
        })
    return rows


def fitted_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def _symmetric_operator(spec: ProblemSpec, n_side: int) -> KernelOperator:
    if spec.formulation is Formulation.NONSYMMETRIC_BETA:
        raise ConfigurationError("TLR studies need a symmetric formulation")
    return assemble(spec, Grid.regular(spec.dim, n_side, spec.inner, spec.outer))


def tlr_report(spec: ProblemSpec, sides, eps: float = 1e-6, tile: int = 0,
               seed: int = 0) -> list[dict]:
    """Memory and rank statistics per grid (``sides`` = unknowns per dimension).

    ``tile=0`` uses ``m = sqrt(N)``.  Tiles are compressed and measured one at
    a time, so the largest grids never hold the whole compressed matrix.
    """
    rows = []
    for s in sides:
        op = _symmetric_operator(spec, s)
        m = tile or max(2, round(math.sqrt(op.N)))
        rep = compression_profile(op, order_points(op.grid.points, m), eps, seed=seed)
        rows.append({"N": op.N, "m": m, "eps": eps, "bytes_dense_equiv": rep.dense_equiv_bytes,
                     "bytes_tlr": rep.total_bytes, "avg_rank": rep.avg_rank,
                     "max_rank": rep.max_rank})
    slope = fitted_slope([r["N"] for r in rows], [r["bytes_tlr"] for r in rows]) \
        if len(rows) > 1 else None
    for r in rows:
        r["memory_slope"] = slope
    return rows


def _median_time(fn, reps: int):
    times, out = [], None
    for _ in range(reps):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times), out


def factor_bench(spec: ProblemSpec, sides, eps: float = 1e-6, tile: int = 0, seed: int = 0,
                 reps: int = 3) -> list[dict]:
    """Build, factor and solve timings (median of ``reps``) plus the TLR residual."""
    rows = []
    for s in sides:
        op = _symmetric_operator(spec, s)
        m = tile or max(2, round(math.sqrt(op.N)))
        part = order_points(op.grid.points, m)
        t_build, A = _median_time(lambda: assemble_tlr(op, part, eps, seed=seed), reps)
        row = {"N": op.N, "m": m, "build_time": t_build}
        try:
            t_fac, L = _median_time(lambda: factorize(A), reps)
        except SPDError as exc:
            row.update(factor_time=None, solve_time=None, residual=None, status=f"spd-failure: {exc}")
            rows.append(row)
            continue
        b = np.random.default_rng(seed).standard_normal(op.N)
        t_sol, x = _median_time(lambda: L.solve(b), reps)
        res = np.linalg.norm(A.matvec(x) - b) / np.linalg.norm(b)
        row.update(factor_time=t_fac, solve_time=t_sol, residual=float(res), status="ok")
        rows.append(row)
    ok = [r for r in rows if r["status"] == "ok"]
    slope = fitted_slope([r["N"] for r in ok], [r["factor_time"] for r in ok]) if len(ok) > 1 else None
    for r in rows:
        r["factor_slope"] = slope
    return rows


def solve_rows(spec: ProblemSpec, cells: int, settings: SolveSettings = SolveSettings()) -> list[dict]:
    """Solution values on one grid, one row per unknown."""
    grid = grid_for(spec, cells)
    u = solve_problem(spec, grid, settings)
    pts = grid.points
    names = ["x", "y"][: grid.dim]
    return [{**{n: float(p[d]) for d, n in enumerate(names)}, "u": float(v)}
            for p, v in zip(pts, u)]


__all__ = [
    "CASES", "SolveSettings", "check_nested", "convergence", "convergence_nonsym",
    "factor_bench", "fitted_slope", "grid_for", "make_problem", "restrict", "solve_problem",
    "solve_rows", "tlr_report",
]
