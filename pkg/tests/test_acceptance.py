"""End-to-end acceptance criteria, one test per criterion.

Each test records its measured numbers with ``record_property("detail", ...)``;
``conftest.py`` prints a one-line PASS/FAIL summary per criterion at the end of
the run.  Runtime limits are part of each criterion and are asserted too.
"""
import time

import numpy as np
import pytest

from fradi.assembly import Grid, assemble, window_sums
from fradi.cholesky import factorize
from fradi.clustering import order_points
from fradi.fields import Formulation, ProblemSpec, ScalarField
from fradi.harness import (
    SolveSettings,
    convergence,
    convergence_nonsym,
    factor_bench,
    fitted_slope,
    make_problem,
    tlr_report,
)
from fradi.tlr import assemble_tlr, tile_errors

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

EPS = 1e-6
GRIDS_1D = [64, 128, 256, 512, 1024, 2048]
GRIDS_2D = [16, 32, 64, 128]


class Clock:
    def __init__(self, limit_s):
        self.limit = limit_s
        self.t0 = time.perf_counter()

    @property
    def elapsed(self):
        return time.perf_counter() - self.t0

    def check(self):
        assert self.elapsed <= self.limit, f"runtime {self.elapsed:.0f}s exceeds {self.limit:.0f}s"


def _rate(rows, key="error"):
    """Least-squares rate p of error ~ h^p over every successive-grid row."""
    return fitted_slope([r["h"] for r in rows], [r[key] for r in rows])


def _fmt_rates(rows, key="rate"):
    return "[" + ", ".join("-" if r[key] is None else f"{r[key]:.3f}" for r in rows) + "]"


@pytest.mark.criterion(1, "1D variable-kappa convergence rate in [0.8, 1.2]")
def test_criterion_1_kappa_1d(record_property):
    clock = Clock(120)
    rows = convergence(make_problem("kappa", 1, beta=0.75), GRIDS_1D)
    p = _rate(rows)
    record_property("detail", f"p={p:.3f} pairwise={_fmt_rates(rows)} "
                              f"interior |x|<=0.5 p={_rate(rows, 'interior_error'):.3f} t={clock.elapsed:.0f}s")
    clock.check()
    assert 0.8 <= p <= 1.2


@pytest.mark.criterion(2, "1D variable-beta convergence rate in [0.8, 1.2]")
def test_criterion_2_beta_1d(record_property):
    clock = Clock(120)
    rows = convergence(make_problem("beta", 1, beta0=0.7), GRIDS_1D)
    p = _rate(rows)
    record_property("detail", f"p={p:.3f} pairwise={_fmt_rates(rows)} "
                              f"interior |x|<=0.5 p={_rate(rows, 'interior_error'):.3f} t={clock.elapsed:.0f}s")
    clock.check()
    assert 0.8 <= p <= 1.2


@pytest.mark.criterion(3, "non-symmetric 1D: treated rate in [0.8, 1.2], untreated >= 0.2 lower")
def test_criterion_3_nonsym(record_property):
    clock = Clock(300)
    results = {}
    for beta0 in (0.3, 0.5, 0.7):
        rows = convergence_nonsym(make_problem("nonsym", 1, beta0=beta0), GRIDS_1D)
        pt = fitted_slope([r["h"] for r in rows], [r["error_treated"] for r in rows])
        pu = fitted_slope([r["h"] for r in rows], [r["error_untreated"] for r in rows])
        results[beta0] = (pt, pu)
    record_property("detail", " ".join(f"b0={b}: treated={pt:.3f} untreated={pu:.3f}"
                                       for b, (pt, pu) in results.items()) + f" t={clock.elapsed:.0f}s")
    clock.check()
    for beta0, (pt, pu) in results.items():
        assert 0.8 <= pt <= 1.2, f"beta0={beta0}: treated rate {pt:.3f}"
        assert pu <= pt - 0.2, f"beta0={beta0}: untreated {pu:.3f} vs treated {pt:.3f}"


@pytest.mark.criterion(4, "2D convergence (kappa and beta fields) rate in [0.8, 1.2] with TLR solves")
def test_criterion_4_2d(record_property):
    clock = Clock(1800)
    settings = SolveSettings(solver="tlr", eps=EPS, seed=0)
    rates = {}
    for case in ("kappa", "beta"):
        rows = convergence(make_problem(case, 2), GRIDS_2D, settings)
        rates[case] = (_rate(rows), _fmt_rates(rows), _rate(rows, "interior_error"))
    record_property("detail", " ".join(f"{c}: p={p:.3f} pairwise={pw} interior p={pi:.3f}"
                                       for c, (p, pw, pi) in rates.items()) + f" t={clock.elapsed:.0f}s")
    clock.check()
    for case, (p, _, _) in rates.items():
        assert 0.8 <= p <= 1.2, f"{case}: rate {p:.3f}"


@pytest.mark.criterion(5, "constant-coefficient stencil reduction to 1e-12")
def test_criterion_5_constant_reduction(record_property):
    clock = Clock(60)
    worst = 0.0
    # 1D: each raw stencil row is (s_i / h^2) [1, -2, 1]
    spec = ProblemSpec(Formulation.SYMMETRIC_KAPPA, kappa=ScalarField.const(1.0), beta=ScalarField.const(0.75))
    g = Grid.regular(1, 127)
    op = assemble(spec, g)
    raw = op.correction.raw.tocsr()
    S, _ = window_sums(np.full(g.N, 0.75), None, g, op.window)
    slots = g.slot_map()
    for i in range(g.N):
        k = g.lattice[i, 0]
        cols = [slots[k - 1 - g.kmin], i, slots[k + 1 - g.kmin]]
        expect = S[i, 0] / g.h**2 * np.array([1.0, -2.0, 1.0])
        got = raw[i].toarray().ravel()
        assert np.count_nonzero(got) == 3
        worst = max(worst, np.abs(got[cols] - expect).max() / np.abs(expect).max())
    # 2D: C is a multiple of the 5-point Laplacian
    spec2 = ProblemSpec(Formulation.SYMMETRIC_KAPPA, dim=2, kappa=ScalarField.const(1.0),
                        beta=ScalarField.const(0.75))
    n = 31
    op2 = assemble(spec2, Grid.regular(2, n))
    T = np.diag(-2 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    lap = np.kron(T, np.eye(n)) + np.kron(np.eye(n), T)
    C = op2.C.toarray()
    scale = C[n * n // 2, n * n // 2] / -4.0
    worst2 = np.abs(C - scale * lap).max() / abs(scale * 4)
    record_property("detail", f"1D max rel dev={worst:.2e} 2D max rel dev={worst2:.2e}")
    clock.check()
    assert worst <= 1e-12 and worst2 <= 1e-12


@pytest.mark.criterion(6, "TLR fidelity at N=4096: per-tile error <= eps, Frobenius <= nb*eps")
def test_criterion_6_tlr_fidelity(record_property):
    clock = Clock(300)
    op = assemble(make_problem("kappa", 2), Grid.regular(2, 64))
    part = order_points(op.grid.points, 64)
    A = assemble_tlr(op, part, EPS, seed=0)
    errs = tile_errors(A, op, ord=2)
    dense = op.dense()[np.ix_(part.order, part.order)]
    rel = np.linalg.norm(A.to_dense() - dense) / np.linalg.norm(dense)
    rep = A.memory_stats()
    record_property("detail", f"N={op.N} nb={A.nb} max tile err={errs.max():.2e} rel F={rel:.2e} "
                              f"avg rank={rep.avg_rank:.1f} t={clock.elapsed:.0f}s")
    clock.check()
    assert errs.max() <= EPS
    assert rel <= A.nb * EPS


@pytest.mark.criterion(7, "TLR Cholesky: |LL^T - A|_F/|A|_F <= 100 eps, 20-RHS residual <= 1e3 eps")
def test_criterion_7_cholesky(record_property):
    clock = Clock(600)
    out = []
    cases = [("kappa", 1, 512, 64), ("kappa", 2, 64, 64)]
    checks = []
    for case, dim, side, m in cases:
        op = assemble(make_problem(case, dim), Grid.regular(dim, side))
        part = order_points(op.grid.points, m)
        A = assemble_tlr(op, part, EPS, seed=0)
        L = factorize(A)
        dense = op.dense()
        Dp = dense[np.ix_(part.order, part.order)]
        Ld = L.to_dense()
        ferr = np.linalg.norm(Ld @ Ld.T - Dp) / np.linalg.norm(Dp)
        B = np.random.default_rng(7).standard_normal((op.N, 20))
        X = L.solve(B)
        res = (np.linalg.norm(dense @ X - B, axis=0) / np.linalg.norm(B, axis=0)).max()
        once = all(v == 1 for v in L.update_counts.values())
        out.append(f"N={op.N}: factor err={ferr:.2e} max residual={res:.2e} single-update={once}")
        checks.append((ferr, res, once))
    record_property("detail", "; ".join(out) + f" t={clock.elapsed:.0f}s")
    clock.check()
    for ferr, res, once in checks:
        assert ferr <= 100 * EPS and res <= 1e3 * EPS and once


@pytest.mark.criterion(8, "TLR memory slope over 32^2..256^2 with m=sqrt(N) in [1.3, 1.7]")
def test_criterion_8_memory_scaling(record_property):
    clock = Clock(1200)
    rows = tlr_report(make_problem("kappa", 2), [32, 64, 128, 256], EPS, tile=0, seed=0)
    slope = rows[0]["memory_slope"]
    record_property("detail", f"slope={slope:.3f} bytes=" +
                    ",".join(f"{r['bytes_tlr']}" for r in rows) +
                    " avg ranks=" + ",".join(f"{r['avg_rank']:.1f}" for r in rows) +
                    f" t={clock.elapsed:.0f}s")
    clock.check()
    assert all(r["bytes_tlr"] < r["bytes_dense_equiv"] for r in rows)
    assert 1.3 <= slope <= 1.7


@pytest.mark.criterion(9, "factorization time slope over N=1024..16384 <= 2.3")
def test_criterion_9_factor_scaling(record_property):
    clock = Clock(1200)
    rows = factor_bench(make_problem("kappa", 2), [32, 64, 128], EPS, tile=0, seed=0, reps=3)
    slope = rows[0]["factor_slope"]
    record_property("detail", f"slope={slope:.3f} factor s=" +
                    ",".join(f"{r['factor_time']:.2f}" for r in rows) +
                    " solve/factor=" + ",".join(f"{r['solve_time'] / r['factor_time']:.3f}" for r in rows) +
                    " residual=" + ",".join(f"{r['residual']:.1e}" for r in rows) +
                    f" t={clock.elapsed:.0f}s")
    clock.check()
    assert all(r["status"] == "ok" for r in rows)
    assert slope <= 2.3
    assert all(r["residual"] <= 1e3 * EPS for r in rows)
    assert all(r["solve_time"] < 0.05 * r["factor_time"] for r in rows)


@pytest.mark.criterion(10, "2D variable-beta N=16384, m=512: avg rank within 50% of 27.8, factor memory <= 1.25x")
def test_criterion_10_rank_statistics(record_property):
    clock = Clock(900)
    op = assemble(make_problem("beta", 2), Grid.regular(2, 128))
    part = order_points(op.grid.points, 512)
    A = assemble_tlr(op, part, EPS, seed=0)
    rep = A.memory_stats()
    L = factorize(A)
    lrep = L.memory_stats()
    ratio = lrep.total_bytes / rep.total_bytes
    record_property("detail", f"avg rank={rep.avg_rank:.2f} (target 27.8) factor avg rank={lrep.avg_rank:.2f} "
                              f"memory ratio={ratio:.3f} t={clock.elapsed:.0f}s")
    clock.check()
    assert 0.5 * 27.8 <= rep.avg_rank <= 1.5 * 27.8
    assert ratio <= 1.25
