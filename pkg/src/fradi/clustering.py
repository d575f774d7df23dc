"""KD-tree ordering of grid points into uniform tiles.

A cluster is split along the longest side of its bounding box.  The left
child takes ``(P/2) m`` points, ``P`` being the power of two closest to the
cluster's tile count, so every tile holds exactly ``m`` points except the last.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# returned by admissibility_eta for touching or overlapping boxes
NON_ADMISSIBLE = math.inf


def nearest_power_of_two(t: int) -> int:
    """Power of two closest to ``t >= 1``; exact ties go to the larger one."""
    if t < 1:
        raise ValueError("t must be positive")
    lo = 1 << (t.bit_length() - 1)
    hi = lo if lo == t else lo << 1
    return hi if (hi - t) <= (t - lo) else lo


@dataclass(frozen=True)
class TilePartition:
    """Result of :func:`order_points`.

    ``order[new] = old`` and ``permutation[old] = new``; tile ``t`` covers the
    reordered indices ``starts[t]:starts[t + 1]``.
    """

    m: int
    order: np.ndarray = field(repr=False)
    starts: np.ndarray = field(repr=False)
    lower: np.ndarray = field(repr=False)   # (nb, dim) bounding-box corners
    upper: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return int(self.order.size)

    @property
    def nb(self) -> int:
        return int(self.starts.size - 1)

    @property
    def permutation(self) -> np.ndarray:
        perm = np.empty_like(self.order)
        perm[self.order] = np.arange(self.order.size)
        return perm

    def tile_range(self, t: int) -> tuple[int, int]:
        return int(self.starts[t]), int(self.starts[t + 1])

    def tile_slice(self, t: int) -> slice:
        return slice(int(self.starts[t]), int(self.starts[t + 1]))

    def sizes(self) -> np.ndarray:
        return np.diff(self.starts)

    @classmethod
    def contiguous(cls, points, m: int) -> "TilePartition":
        """Tiles of ``m`` consecutive points in the given order (no reordering)."""
        pts = np.asarray(points, dtype=float)
        pts = pts.reshape(pts.shape[0], -1)
        n = pts.shape[0]
        starts = np.append(np.arange(0, n, m), n)
        lo = np.array([pts[a:b].min(axis=0) for a, b in zip(starts[:-1], starts[1:])])
        hi = np.array([pts[a:b].max(axis=0) for a, b in zip(starts[:-1], starts[1:])])
        return cls(m, np.arange(n), starts, lo, hi)


def _sort_along(pts: np.ndarray, idx: np.ndarray, axis: int) -> np.ndarray:
    """``idx`` sorted by coordinate ``axis``, then the other coordinates, then index."""
    dim = pts.shape[1]
    others = [d for d in range(dim) if d != axis]
    # lexsort uses the last key as primary
    keys = [idx] + [pts[idx, d] for d in reversed(others)] + [pts[idx, axis]]
    return idx[np.lexsort(keys)]


def order_points(points, m: int) -> TilePartition:
    """KD-tree ordering of ``points`` (shape ``(N,)`` or ``(N, dim)``) into tiles of ``m``."""
    if m < 2:
        raise ValueError("tile size m must be at least 2")
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise ValueError("cannot order an empty point set")

    leaves: list[np.ndarray] = []
    stack = [np.arange(pts.shape[0])]
    while stack:
        idx = stack.pop()
        count = idx.size
        if count <= m:
            leaves.append(idx)
            continue
        box = pts[idx]
        axis = int(np.argmax(box.max(axis=0) - box.min(axis=0)))
        idx = _sort_along(pts, idx, axis)
        P = nearest_power_of_two(math.ceil(count / m))
        left = (P // 2) * m
        # push right first so the left child is processed (and emitted) first
        stack.append(idx[left:])
        stack.append(idx[:left])

    order = np.concatenate(leaves)
    starts = np.zeros(len(leaves) + 1, dtype=np.int64)
    starts[1:] = np.cumsum([leaf.size for leaf in leaves])
    lower = np.array([pts[leaf].min(axis=0) for leaf in leaves])
    upper = np.array([pts[leaf].max(axis=0) for leaf in leaves])
    return TilePartition(m, order, starts, lower, upper)


def box_distance(lo1, hi1, lo2, hi2) -> float:
    """Euclidean distance between two axis-aligned boxes (0 if they touch)."""
    gap = np.maximum(0.0, np.maximum(np.asarray(lo1) - hi2, np.asarray(lo2) - hi1))
    return float(np.sqrt((gap**2).sum()))


def box_diameter(lo, hi) -> float:
    return float(np.sqrt(((np.asarray(hi) - lo) ** 2).sum()))


def admissibility_eta(partition: TilePartition, t: int, s: int) -> float:
    """``max(diam t, diam s) / dist(t, s)``; :data:`NON_ADMISSIBLE` when the boxes touch."""
    if t == s:
        raise ValueError("admissibility is defined for distinct tiles")
    lo, hi = partition.lower, partition.upper
    return eta_boxes(lo[t], hi[t], lo[s], hi[s])


def eta_boxes(lo1, hi1, lo2, hi2) -> float:
    """Admissibility ratio of two boxes given by their corners."""
    dist = box_distance(lo1, hi1, lo2, hi2)
    if dist == 0.0:
        return NON_ADMISSIBLE
    return max(box_diameter(lo1, hi1), box_diameter(lo2, hi2)) / dist


def default_tile_size(N: int, multiple: int = 32) -> int:
    """``ceil(sqrt(N))`` rounded up to a multiple of ``multiple`` (at least ``multiple``)."""
    m = math.ceil(math.sqrt(N))
    return max(multiple, multiple * math.ceil(m / multiple))
