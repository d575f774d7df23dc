"""NumPy implementation of the lattice kernel loops (fallback for ``_kernels``).

Points are integer lattice coordinates ``(P, 2)`` (1D problems carry a zero
second column).  ``table[|dk0|, |dk1|]`` holds either ``r**-e`` for a constant
exponent ``e`` (``variable=False``, entry ``[0, 0]`` must be 0) or ``ln r``
(``variable=True``), in which case the kernel is
``c_r c_c exp(-(n + b_r + b_c) ln r)``.
"""
from __future__ import annotations

import numpy as np

_CHUNK = 1 << 22


def kernel_block(rows, cols, c_r, c_c, b_r, b_c, table, variable, n):
    d0 = np.abs(rows[:, 0, None] - cols[None, :, 0])
    d1 = np.abs(rows[:, 1, None] - cols[None, :, 1])
    t = table[d0, d1]
    if variable:
        coincident = (d0 == 0) & (d1 == 0)
        expo = n + (b_r[:, None] + b_c[None, :])
        g = np.exp(-expo * t)
        g[coincident] = 0.0
    else:
        g = t
    # pairwise products first so that swapping rows and columns is bitwise symmetric
    return (c_r[:, None] * c_c[None, :]) * g


def kernel_rowsum(rows, cols, c_r, c_c, b_r, b_c, table, variable, n):
    out = np.empty(rows.shape[0])
    step = max(1, _CHUNK // max(1, cols.shape[0]))
    for s in range(0, rows.shape[0], step):
        sl = slice(s, s + step)
        out[sl] = kernel_block(rows[sl], cols, c_r[sl], c_c, b_r[sl], b_c, table, variable, n).sum(axis=1)
    return out
