"""Tile-low-rank (TLR) matrices.

The matrix is cut into ``nb x nb`` tiles following a :class:`TilePartition`.
Diagonal tiles are stored dense; off-diagonal tiles are compressed to
``U V^T`` with an adaptive randomized range finder (:func:`ara`), unless the
rank cap is hit, in which case the tile is kept dense.  Symmetric matrices
store the lower triangle only.

Rows and columns of a :class:`TLRMatrix` are in *tile order* (the KD-tree
order of the partition); :meth:`TLRMatrix.matvec` accepts and returns vectors
in the original point order unless ``tile_order=True``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.linalg as la

from .clustering import TilePartition
from .parallel import map_ordered

WORD = 8
DEFAULT_BLOCK = 16
MAGIC = b"TLR1"
_HEADER = struct.Struct("<4sIqqqdBBxxxxxxq")
_TILE = struct.Struct("<qqBxxxxxxxqqq")
KIND_MATRIX, KIND_FACTOR = 0, 1
TILE_DENSE, TILE_LOWRANK = 0, 1


@dataclass
class LowRankTile:
    """``U @ V.T`` with ``U`` of shape ``(rows, k)`` and ``V`` of shape ``(cols, k)``."""

    U: np.ndarray
    V: np.ndarray

    @property
    def k(self) -> int:
        return self.U.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.U.shape[0], self.V.shape[0]

    @property
    def nbytes(self) -> int:
        return WORD * (self.U.size + self.V.size)

    def to_dense(self) -> np.ndarray:
        return self.U @ self.V.T

    def matvec(self, x):
        return self.U @ (self.V.T @ x)

    def rmatvec(self, x):
        return self.V @ (self.U.T @ x)

    @property
    def T(self) -> "LowRankTile":
        return LowRankTile(self.V, self.U)

    @classmethod
    def zero(cls, rows: int, cols: int) -> "LowRankTile":
        return cls(np.zeros((rows, 0)), np.zeros((cols, 0)))


Tile = Union[np.ndarray, LowRankTile]


@dataclass
class AraResult:
    tile: LowRankTile | None
    dense_fallback: bool
    samples: int


def tile_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for one tile, independent of scheduling order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


def ara(matmul: Callable, rmatmul: Callable, shape: tuple[int, int], eps: float,
        block: int = DEFAULT_BLOCK, rng: np.random.Generator | None = None,
        max_rank: int | None = None) -> AraResult:
    """Adaptive randomized approximation of an operator given by its products.

    ``matmul(X)`` must return ``A @ X`` and ``rmatmul(Y)`` must return ``A.T @ Y``.
    Blocks of ``block`` Gaussian vectors are drawn until the largest residual
    sample norm falls below ``eps / 10``; the captured range is then
    recompressed by an SVD truncated at ``eps / 2``.  If the basis would need
    more than ``max_rank`` columns (default ``min(shape)``) the result has
    ``dense_fallback=True`` and no tile.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    rows, cols = shape
    if rng is None:
        rng = np.random.default_rng()
    cap = min(rows, cols) if max_rank is None else min(max_rank, rows, cols)
    Q = np.zeros((rows, 0))
    samples = 0
    tol = eps / 10.0
    while True:
        omega = rng.standard_normal((cols, block))
        Y = matmul(omega)
        samples += block
        if Q.shape[1]:
            # two passes of block Gram-Schmidt keep Q orthonormal to rounding
            Y -= Q @ (Q.T @ Y)
            Y -= Q @ (Q.T @ Y)
        if np.max(np.linalg.norm(Y, axis=0)) < tol:
            break
        if Q.shape[1] >= cap:
            return AraResult(None, True, samples)
        Qy, _ = np.linalg.qr(Y)
        if Q.shape[1]:
            # near rank-deficient blocks turn rounding noise into unit vectors;
            # projecting the orthonormal block once more keeps Q orthogonal
            Qy -= Q @ (Q.T @ Qy)
            Qy, _ = np.linalg.qr(Qy)
        Q = np.hstack([Q, Qy])
        if Q.shape[1] > cap:
            return AraResult(None, True, samples)
    if Q.shape[1] == 0:
        return AraResult(LowRankTile.zero(rows, cols), False, samples)
    B = rmatmul(Q).T                      # Q^T A, shape (r, cols)
    Ub, s, Vbt = la.svd(B, full_matrices=False, lapack_driver="gesdd")
    k = int(np.count_nonzero(s > eps / 2.0))
    U = Q @ (Ub[:, :k] * s[:k])
    V = np.ascontiguousarray(Vbt[:k].T)
    return AraResult(LowRankTile(np.ascontiguousarray(U), V), False, samples)


def compress_dense(tile: np.ndarray, eps: float, block: int = DEFAULT_BLOCK,
                   rng: np.random.Generator | None = None) -> Tile:
    """ARA on an explicit tile; returns the dense tile itself if the rank cap is hit."""
    res = ara(lambda X: tile @ X, lambda Y: tile.T @ Y, tile.shape, eps, block, rng)
    return tile if res.dense_fallback else res.tile


def tile_nbytes(t: Tile) -> int:
    return t.nbytes if isinstance(t, LowRankTile) else WORD * t.size


def tile_dense(t: Tile) -> np.ndarray:
    return t.to_dense() if isinstance(t, LowRankTile) else t


def tile_rank(t: Tile) -> int:
    """Stored rank; a dense off-diagonal tile counts as full rank."""
    return t.k if isinstance(t, LowRankTile) else min(t.shape)


@dataclass
class MemoryReport:
    N: int
    m: int
    nb: int
    eps: float
    total_bytes: int
    dense_bytes: int
    lowrank_bytes: int
    dense_equiv_bytes: int
    rank_histogram: dict[int, int]
    avg_rank: float
    max_rank: int
    dense_fallbacks: int

    @property
    def offdiag_tiles(self) -> int:
        return sum(self.rank_histogram.values())


def _report(N, partition, eps, diag_bytes, offdiag) -> MemoryReport:
    """``offdiag`` is a list of ``(rank, nbytes, is_dense)`` for stored off-diagonal tiles."""
    hist: dict[int, int] = {}
    lr_bytes = dense_off = fallbacks = 0
    for k, nbytes, is_dense in offdiag:
        hist[k] = hist.get(k, 0) + 1
        if is_dense:
            dense_off += nbytes
            fallbacks += 1
        else:
            lr_bytes += nbytes
    ranks = [k for k, _, _ in offdiag]
    return MemoryReport(
        N=N, m=partition.m, nb=partition.nb, eps=eps,
        total_bytes=diag_bytes + dense_off + lr_bytes,
        dense_bytes=diag_bytes + dense_off, lowrank_bytes=lr_bytes,
        dense_equiv_bytes=WORD * N * N,
        rank_histogram=dict(sorted(hist.items())),
        avg_rank=float(np.mean(ranks)) if ranks else 0.0,
        max_rank=int(max(ranks)) if ranks else 0,
        dense_fallbacks=fallbacks,
    )


@dataclass
class TLRMatrix:
    """Tiles keyed by ``(i, j)``; symmetric matrices keep ``i >= j`` only.

    ``kind`` is ``"matrix"`` or ``"factor"`` (a lower-triangular Cholesky factor,
    whose upper tiles are zero).
    """

    partition: TilePartition
    eps: float
    symmetric: bool
    tiles: dict = field(repr=False)
    seed: int = 0
    dim: int = 1
    kind: str = "matrix"

    @property
    def N(self) -> int:
        return self.partition.N

    @property
    def nb(self) -> int:
        return self.partition.nb

    @property
    def m(self) -> int:
        return self.partition.m

    def tile(self, i: int, j: int) -> Tile:
        """Tile ``(i, j)`` (transposing stored lower tiles for symmetric matrices)."""
        if (i, j) in self.tiles:
            return self.tiles[i, j]
        if self.symmetric and (j, i) in self.tiles:
            t = self.tiles[j, i]
            return t.T
        a, b = self.partition.tile_range(i)
        c, d = self.partition.tile_range(j)
        return LowRankTile.zero(b - a, d - c)

    def to_dense(self, tile_order: bool = True) -> np.ndarray:
        out = np.zeros((self.N, self.N))
        p = self.partition
        for i in range(self.nb):
            for j in range(self.nb):
                out[p.tile_slice(i), p.tile_slice(j)] = tile_dense(self.tile(i, j))
        if tile_order:
            return out
        inv = p.permutation
        return out[np.ix_(inv, inv)]

    def matvec(self, x, tile_order: bool = False, workers: int | None = None) -> np.ndarray:
        """``A @ x``.  Row blocks may run in parallel; each sums its tiles in
        column order, so the result does not depend on the worker count."""
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.N:
            raise ValueError(f"vector length {x.shape[0]} does not match N={self.N}")
        p = self.partition
        xt = x if tile_order else x[p.order]

        def row(i):
            acc = np.zeros((p.sizes()[i],) + xt.shape[1:])
            for j in range(self.nb):
                t = self.tile(i, j)
                if isinstance(t, LowRankTile):
                    if t.k:
                        acc += t.matvec(xt[p.tile_slice(j)])
                else:
                    acc += t @ xt[p.tile_slice(j)]
            return acc

        y = np.concatenate(map_ordered(row, range(self.nb), workers))
        if tile_order:
            return y
        out = np.empty_like(y)
        out[p.order] = y
        return out

    def memory_stats(self) -> MemoryReport:
        diag = 0
        off = []
        for (i, j), t in self.tiles.items():
            if i == j:
                diag += tile_nbytes(t)
            else:
                off.append((tile_rank(t), tile_nbytes(t), not isinstance(t, LowRankTile)))
        return _report(self.N, self.partition, self.eps, diag, off)

    # -- binary snapshot ----------------------------------------------------

    def save(self, path) -> None:
        kind = KIND_FACTOR if self.kind == "factor" else KIND_MATRIX
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, self.dim, self.N, self.m, self.nb, self.eps,
                                  int(self.symmetric), kind, self.seed))
            fh.write(struct.pack("<q", len(self.tiles)))
            np.asarray(self.partition.order, dtype="<i8").tofile(fh)
            np.asarray(self.partition.starts, dtype="<i8").tofile(fh)
            np.asarray(self.partition.lower, dtype="<f8").tofile(fh)
            np.asarray(self.partition.upper, dtype="<f8").tofile(fh)
            for (i, j) in sorted(self.tiles):
                t = self.tiles[i, j]
                if isinstance(t, LowRankTile):
                    r, c = t.shape
                    fh.write(_TILE.pack(i, j, TILE_LOWRANK, r, c, t.k))
                    np.ascontiguousarray(t.U, dtype="<f8").tofile(fh)
                    np.ascontiguousarray(t.V, dtype="<f8").tofile(fh)
                else:
                    r, c = t.shape
                    fh.write(_TILE.pack(i, j, TILE_DENSE, r, c, 0))
                    np.ascontiguousarray(t, dtype="<f8").tofile(fh)

    @classmethod
    def load(cls, path) -> "TLRMatrix":
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) < _HEADER.size:
                raise ValueError("truncated snapshot header")
            magic, dim, N, m, nb, eps, symmetric, kind, seed = _HEADER.unpack(head)
            if magic != MAGIC:
                raise ValueError(f"not a TLR snapshot (magic {magic!r})")
            (count,) = struct.unpack("<q", fh.read(8))

            def arr(n, dtype="<f8"):
                a = np.fromfile(fh, dtype=dtype, count=n)
                if a.size != n:
                    raise ValueError("truncated snapshot payload")
                return a

            order = arr(N, "<i8").astype(np.int64)
            starts = arr(nb + 1, "<i8").astype(np.int64)
            lower = arr(nb * dim).reshape(nb, dim)
            upper = arr(nb * dim).reshape(nb, dim)
            part = TilePartition(m, order, starts, lower, upper)
            tiles = {}
            for _ in range(count):
                raw = fh.read(_TILE.size)
                if len(raw) < _TILE.size:
                    raise ValueError("truncated tile record")
                i, j, tkind, r, c, k = _TILE.unpack(raw)
                if tkind == TILE_LOWRANK:
                    tiles[i, j] = LowRankTile(arr(r * k).reshape(r, k), arr(c * k).reshape(c, k))
                elif tkind == TILE_DENSE:
                    tiles[i, j] = arr(r * c).reshape(r, c)
                else:
                    raise ValueError(f"unknown tile kind {tkind}")
        if kind == KIND_FACTOR:
            from .cholesky import TLRFactor

            return TLRFactor(part, eps, False, tiles, seed, dim, "factor")
        return cls(part, eps, bool(symmetric), tiles, seed, dim, "matrix")


# -- assembly ---------------------------------------------------------------

class _TileSource:
    """Evaluates tiles of an operator in the partition's order."""

    def __init__(self, op, partition: TilePartition):
        self.op = op
        self.p = partition
        self.order = partition.order
        C = getattr(op, "C", None)
        self.kernel_op = C is not None and hasattr(op, "dense_part")
        if self.kernel_op:
            order = self.order
            self.C = C[order][:, order].tocsr()
            self.D = op.D[order]
            owner = np.repeat(np.arange(partition.nb), partition.sizes())
            coo = self.C.tocoo()
            self.touched = set(zip(owner[coo.row].tolist(), owner[coo.col].tolist()))

    def __call__(self, i: int, j: int) -> np.ndarray:
        p, order = self.p, self.order
        si, sj = p.tile_slice(i), p.tile_slice(j)
        if not self.kernel_op:
            return self.op.entries(order[si], order[sj])
        out = self.op.dense_part(order[si], order[sj])
        if i == j:
            out[np.diag_indices_from(out)] += self.D[si]
        if (i, j) in self.touched:
            out += self.C[si, sj].toarray()
        return out


def _tile_list(nb: int, symmetric: bool):
    return [(i, j) for i in range(nb) for j in range(nb) if not symmetric or j <= i]


def assemble_tlr(op, partition: TilePartition, eps: float, block: int = DEFAULT_BLOCK,
                 seed: int = 0, symmetric: bool | None = None,
                 workers: int | None = None) -> TLRMatrix:
    """Evaluate every tile densely and compress the off-diagonal ones to ``eps``."""
    if partition.N != op.N:
        raise ValueError("partition and operator sizes differ")
    if symmetric is None:
        symmetric = bool(getattr(op, "symmetric", False))
    src = _TileSource(op, partition)

    def build(ij):
        i, j = ij
        t = src(i, j)
        if i == j:
            return t
        return compress_dense(t, eps, block, tile_rng(seed, i, j))

    keys = _tile_list(partition.nb, symmetric)
    tiles = dict(zip(keys, map_ordered(build, keys, workers)))
    return TLRMatrix(partition, eps, symmetric, tiles, seed, op.grid.dim, "matrix")


def compression_profile(op, partition: TilePartition, eps: float, block: int = DEFAULT_BLOCK,
                        seed: int = 0, symmetric: bool | None = None,
                        workers: int | None = None) -> MemoryReport:
    """The :meth:`TLRMatrix.memory_stats` of :func:`assemble_tlr` without keeping
    the tiles, for sizes whose compressed form does not fit in memory."""
    if symmetric is None:
        symmetric = bool(getattr(op, "symmetric", False))
    src = _TileSource(op, partition)

    def measure(ij):
        i, j = ij
        t = src(i, j)
        if i == j:
            return (None, WORD * t.size, True)
        c = compress_dense(t, eps, block, tile_rng(seed, i, j))
        return (tile_rank(c), tile_nbytes(c), not isinstance(c, LowRankTile))

    keys = _tile_list(partition.nb, symmetric)
    res = map_ordered(measure, keys, workers)
    diag = sum(b for k, b, _ in res if k is None)
    off = [r for r in res if r[0] is not None]
    return _report(op.N, partition, eps, diag, off)


def tile_errors(A: TLRMatrix, op, ord=2) -> np.ndarray:
    """``||A_ij - tile_ij||`` for every stored tile, against freshly evaluated entries."""
    src = _TileSource(op, A.partition)
    keys = sorted(A.tiles)
    return np.array([np.linalg.norm(src(i, j) - tile_dense(A.tiles[i, j]), ord=ord)
                     for i, j in keys])
