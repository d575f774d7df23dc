"""Left-looking Cholesky factorization of symmetric TLR matrices.

For block column ``k`` the pending updates ``A(i,k) - sum_j L(i,j) L(k,j)^T``
are never formed densely: the sum is applied as an operator and compressed
once by :func:`~fradi.tlr.ara`.  The diagonal tile is updated densely and
factored; the column below it becomes ``L(i,k) = U (L(k,k)^{-1} V)^T``.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .dense import FactorizationError, cholesky_lower
from .parallel import map_ordered
from .tlr import DEFAULT_BLOCK, LowRankTile, TLRMatrix, ara, tile_rng


class SPDError(FactorizationError):
    """A diagonal tile lost positive definiteness during the factorization."""

    def __init__(self, block: int, index: int, pivot: float):
        msg = (f"non-positive pivot {pivot:.6g} in diagonal tile {block} (local row {index}); "
               "the operator should be SPD, so try a smaller eps or check the assembly")
        super().__init__(msg, index, pivot)
        self.block = block


@dataclass
class TLRFactor(TLRMatrix):
    """Lower-triangular TLR factor ``L`` with ``A ~ L L^T``."""

    update_counts: Counter = field(default_factory=Counter, repr=False)

    def __post_init__(self):
        self.kind = "factor"
        self.symmetric = False

    def solve(self, b, tile_order: bool = False) -> np.ndarray:
        """``(L L^T)^{-1} b`` by a forward and a backward block substitution."""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.N:
            raise ValueError(f"right-hand side length {b.shape[0]} does not match N={self.N}")
        p = self.partition
        y = (b if tile_order else b[p.order]).copy()
        nb = self.nb
        for k in range(nb):
            sk = p.tile_slice(k)
            for j in range(k):
                y[sk] -= _apply(self.tiles[k, j], y[p.tile_slice(j)])
            y[sk] = la.solve_triangular(self.tiles[k, k], y[sk], lower=True)
        for k in reversed(range(nb)):
            sk = p.tile_slice(k)
            for i in range(k + 1, nb):
                y[sk] -= _apply_t(self.tiles[i, k], y[p.tile_slice(i)])
            y[sk] = la.solve_triangular(self.tiles[k, k], y[sk], lower=True, trans="T")
        if tile_order:
            return y
        out = np.empty_like(y)
        out[p.order] = y
        return out


def _apply(t, x):
    return t.matvec(x) if isinstance(t, LowRankTile) else t @ x


def _apply_t(t, x):
    return t.rmatvec(x) if isinstance(t, LowRankTile) else t.T @ x


def _factors(t):
    """``(U, V)`` with ``t = U V^T``; dense tiles use ``V = I``."""
    if isinstance(t, LowRankTile):
        return t.U, t.V
    return t, np.eye(t.shape[1])


def factorize(A: TLRMatrix, eps: float | None = None, block: int = DEFAULT_BLOCK,
              seed: int | None = None, workers: int | None = None) -> TLRFactor:
    """Left-looking TLR Cholesky of a symmetric :class:`TLRMatrix`.

    Raises :class:`SPDError` if a diagonal tile is not positive definite
    after its updates.  Updates within a block column may run in parallel;
    every tile draws from its own seeded generator, so the result does not
    depend on the worker count.
    """
    if not A.symmetric:
        raise ValueError("Cholesky needs a symmetric TLR matrix; use the dense LU path instead")
    eps = A.eps if eps is None else eps
    seed = A.seed if seed is None else seed
    nb = A.nb
    L: dict = {}
    counts: Counter = Counter()

    for k in range(nb):
        # diagonal tile: dense update then Cholesky
        Akk = np.array(A.tile(k, k), dtype=float, copy=True)
        for j in range(k):
            U, V = _factors(L[k, j])
            Akk -= U @ ((V.T @ V) @ U.T)
        try:
            Lkk = cholesky_lower(Akk)
        except FactorizationError as exc:
            raise SPDError(k, exc.index, exc.pivot) from None
        L[k, k] = Lkk
        counts[k, k] += 1

        left = [j for j in range(k) if _rank(L[k, j])]
        kfac = {j: _factors(L[k, j]) for j in left}

        def column(i):
            a = A.tile(i, k)
            terms_u, terms_w = [], []
            for j in left:
                Uij, Vij = _factors(L[i, j])
                if Uij.shape[1] == 0:
                    continue
                Ukj, Vkj = kfac[j]
                terms_u.append(Uij)
                terms_w.append(Ukj @ (Vkj.T @ Vij))
            if terms_u:
                Ucat = np.hstack(terms_u)
                Wcat = np.hstack(terms_w)
                if isinstance(a, LowRankTile):
                    mm = lambda X: a.matvec(X) - Ucat @ (Wcat.T @ X)
                    rm = lambda Y: a.rmatvec(Y) - Wcat @ (Ucat.T @ Y)
                else:
                    mm = lambda X: a @ X - Ucat @ (Wcat.T @ X)
                    rm = lambda Y: a.T @ Y - Wcat @ (Ucat.T @ Y)
                res = ara(mm, rm, (a.shape[0], a.shape[1]), eps, block, tile_rng(seed, i, k, 1))
                if res.dense_fallback:
                    upd = _dense(a) - Ucat @ Wcat.T
                else:
                    upd = res.tile
            else:
                upd = a
            # L(i,k) = A(i,k) L(k,k)^{-T}
            if isinstance(upd, LowRankTile):
                Vn = la.solve_triangular(Lkk, upd.V, lower=True) if upd.k else upd.V
                return LowRankTile(upd.U, Vn)
            return la.solve_triangular(Lkk, upd.T, lower=True).T

        below = list(range(k + 1, nb))
        for i, t in zip(below, map_ordered(column, below, workers)):
            L[i, k] = t
            counts[i, k] += 1

    return TLRFactor(A.partition, eps, False, L, seed, A.dim, "factor", counts)


def _rank(t) -> int:
    return t.k if isinstance(t, LowRankTile) else min(t.shape)


def _dense(t) -> np.ndarray:
    return t.to_dense() if isinstance(t, LowRankTile) else np.asarray(t)


def solve(L: TLRFactor, b, tile_order: bool = False) -> np.ndarray:
    return L.solve(b, tile_order)
