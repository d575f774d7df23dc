"""Dense reference path: assembly, Cholesky/LU solves and SVD epsilon-ranks.

Everything here is deliberately plain; it is the oracle the tile-low-rank code
is checked against.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

DEFAULT_CAP = 8192


class CapacityError(ValueError):
    """The requested dense matrix is larger than the configured cap."""


class FactorizationError(ArithmeticError):
    """A pivot was zero or (for Cholesky) not positive.

    ``index`` is the row of the failing pivot inside the factored matrix.
    """

    def __init__(self, message: str, index: int, pivot: float):
        super().__init__(message)
        self.index = index
        self.pivot = pivot


def assemble_dense(op, cap: int = DEFAULT_CAP) -> np.ndarray:
    """All ``N x N`` entries of ``op`` as a C-contiguous float64 array."""
    if op.N > cap:
        raise CapacityError(f"dense assembly of N={op.N} exceeds the cap of {cap}")
    A = np.ascontiguousarray(op.dense(), dtype=np.float64)
    if not np.all(np.isfinite(A)):
        raise FloatingPointError("assembled matrix has non-finite entries")
    return A


def _failed_pivot(A: np.ndarray, k: int) -> float:
    """Schur-complement pivot at row ``k`` given that ``A[:k, :k]`` is SPD."""
    if k == 0:
        return float(A[0, 0])
    L = la.cholesky(A[:k, :k], lower=True)
    x = la.solve_triangular(L, A[:k, k], lower=True)
    return float(A[k, k] - x @ x)


def cholesky_lower(A: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises :class:`FactorizationError` on a non-positive pivot."""
    A = np.asarray(A, dtype=float)
    c, info = la.lapack.dpotrf(A, lower=1, clean=1)
    if info > 0:
        k = info - 1
        p = _failed_pivot(A, k)
        raise FactorizationError(f"non-positive pivot {p:.6g} at row {k}", k, p)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return c


@dataclass
class DenseCholesky:
    L: np.ndarray

    def solve(self, b):
        y = la.solve_triangular(self.L, b, lower=True)
        return la.solve_triangular(self.L, y, lower=True, trans="T")


@dataclass
class DenseLU:
    lu: np.ndarray
    piv: np.ndarray

    def solve(self, b):
        return la.lu_solve((self.lu, self.piv), b)


def dense_cholesky(A) -> DenseCholesky:
    return DenseCholesky(cholesky_lower(A))


def dense_lu(A) -> DenseLU:
    A = np.asarray(A, dtype=float)
    lu, piv, info = la.lapack.dgetrf(A)
    if info > 0:
        k = info - 1
        raise FactorizationError(f"zero pivot at row {k}", k, 0.0)
    if info < 0:
        raise ValueError(f"dgetrf: illegal argument {-info}")
    return DenseLU(lu, piv)


def dense_solve(factor, b) -> np.ndarray:
    """Solve with a factor from :func:`dense_cholesky` or :func:`dense_lu`."""
    return factor.solve(np.asarray(b, dtype=float))


def singular_values(tile) -> np.ndarray:
    tile = np.asarray(tile, dtype=float)
    if tile.size == 0:
        return np.zeros(0)
    return la.svd(tile, compute_uv=False, lapack_driver="gesdd")


def svd_eps_rank(tile, eps: float) -> int:
    """Smallest ``k`` with ``||tile - best rank-k||_2 <= eps``."""
    s = singular_values(tile)
    return int(np.count_nonzero(s > eps))
