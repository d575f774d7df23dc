"""Compare the compiled kernel loops with the NumPy fallback.

    python benchmarks/bench_kernels.py --side 48 --reps 3

Both backends are timed on the same inputs and their outputs compared.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from fradi import _kernels_py, kernels
from fradi.assembly import Grid, _kernel_table, _pad2
from fradi.fields import beta_bump_2d


def _time(fn, reps):
    ts = []
    for _ in range(reps):
        t = time.perf_counter()
        out = fn()
        ts.append(time.perf_counter() - t)
    return statistics.median(ts), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--side", type=int, default=48, help="interior points per side (2D)")
    ap.add_argument("--reps", type=int, default=3)
    args = ap.parse_args(argv)

    try:
        from fradi import _kernels as compiled
    except ImportError:
        compiled = None
        print("compiled extension not built; timing the NumPy fallback only")

    g = Grid.regular(2, args.side)
    lat_all = _pad2(g.all_lattice)
    rows = lat_all[: g.N]
    c_all = np.ones(lat_all.shape[0])
    b_all = beta_bump_2d()(g.to_points(g.all_lattice))
    cases = {
        "constant exponent": (_kernel_table(g, 0.75), False, np.zeros_like(b_all)),
        "variable exponent": (_kernel_table(g, None), True, b_all),
    }
    impls = {"numpy": _kernels_py}
    if compiled is not None:
        impls["cython"] = compiled

    print(f"N = {g.N} interior points, {lat_all.shape[0]} lattice points")
    print(f"{'case':<20} {'op':<8} {'backend':<8} {'seconds':>10} {'speedup':>8}")
    for name, (table, variable, b) in cases.items():
        ops = {
            "block": lambda impl: kernels.kernel_block(rows, rows, c_all[: g.N], c_all[: g.N],
                                                       b[: g.N], b[: g.N], table, variable, 2, impl),
            "rowsum": lambda impl: kernels.kernel_rowsum(rows, lat_all, c_all[: g.N], c_all,
                                                         b[: g.N], b, table, variable, 2, impl),
        }
        for opname, op in ops.items():
            results = {k: _time(lambda: op(impl), args.reps) for k, impl in impls.items()}
            base = results["numpy"][0]
            for k, (t, out) in results.items():
                print(f"{name:<20} {opname:<8} {k:<8} {t:>10.4f} {base / t:>8.1f}")
            if "cython" in results:
                a, c = results["numpy"][1], results["cython"][1]
                err = np.max(np.abs(a - c)) / max(np.max(np.abs(a)), 1e-300)
                print(f"{'':<20} {'':<8} max relative difference {err:.2e}")


if __name__ == "__main__":
    main()
