"""Backend selection for the lattice kernel loops.

The compiled extension is used when it imports; set ``FRADI_PURE_PYTHON=1``
to force the NumPy fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("FRADI_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py


def _prep(rows, cols, c_r, c_c, b_r, b_c, table):
    f = np.ascontiguousarray
    return (
        f(rows, dtype=np.int64), f(cols, dtype=np.int64),
        f(c_r, dtype=float), f(c_c, dtype=float),
        f(b_r, dtype=float), f(b_c, dtype=float), f(table, dtype=float),
    )


def kernel_block(rows, cols, c_r, c_c, b_r, b_c, table, variable, n, impl=None):
    args = _prep(rows, cols, c_r, c_c, b_r, b_c, table)
    return (impl or _impl).kernel_block(*args, bool(variable), float(n))


def kernel_rowsum(rows, cols, c_r, c_c, b_r, b_c, table, variable, n, impl=None):
    args = _prep(rows, cols, c_r, c_c, b_r, b_c, table)
    return (impl or _impl).kernel_rowsum(*args, bool(variable), float(n))
