"""Regular grids and the singularity-corrected discrete operators.

Symmetric formulations produce ``A = B + D + C``:

* ``B_ij = -2 h^n gamma(x_i, x_j)`` for ``i != j`` (evaluated lazily),
* ``D_i = 2 h^n sum_{j != i} gamma(x_i, x_j)`` over every lattice point of the
  outer box, interior and exterior,
* ``C`` the sparse 3/5-point correction left over from subtracting the local
  singular behaviour of the integrand inside the window.

The non-symmetric (flux) formulation is 1D only and is represented by
:class:`NonsymOperator`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.signal import fftconvolve

from . import kernels
from .fields import Formulation, ProblemSpec, WindowSpec, omega, validate_fields, window
from .quadrature import corr_log_nd, corr_u2_nd, window_moment


class ConfigurationError(ValueError):
    """Problem settings the discretisation does not support."""


@dataclass(frozen=True)
class Grid:
    """Uniform lattice ``origin + k h``; interior points have ``1 <= k_d <= n_side``."""

    dim: int
    n_side: int
    h: float
    origin: float
    kmin: int
    kmax: int
    lattice: np.ndarray = field(repr=False)
    ext_lattice: np.ndarray = field(repr=False)

    @classmethod
    def regular(cls, dim: int, n_side: int, inner=(-1.0, 1.0), outer=(-2.0, 2.0)) -> "Grid":
        if n_side < 1:
            raise ConfigurationError("need at least one interior point per dimension")
        a, b = inner
        A, B = outer
        h = (b - a) / (n_side + 1)
        kmin = -int(math.floor((a - A) / h + 1e-9))
        kmax = n_side + 1 + int(math.floor((B - b) / h + 1e-9))
        ks = np.arange(kmin, kmax + 1)
        mesh = np.stack(np.meshgrid(*([ks] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
        inside = np.all((mesh >= 1) & (mesh <= n_side), axis=1)
        return cls(dim, n_side, h, float(a), kmin, kmax, mesh[inside].copy(), mesh[~inside].copy())

    @property
    def N(self) -> int:
        return self.lattice.shape[0]

    @property
    def M(self) -> int:
        return self.ext_lattice.shape[0]

    def to_points(self, lattice) -> np.ndarray:
        return self.origin + np.asarray(lattice, dtype=float) * self.h

    @property
    def points(self) -> np.ndarray:
        return self.to_points(self.lattice)

    @property
    def ext_points(self) -> np.ndarray:
        return self.to_points(self.ext_lattice)

    @property
    def all_lattice(self) -> np.ndarray:
        return np.concatenate([self.lattice, self.ext_lattice])

    def permuted(self, order) -> "Grid":
        """Grid whose interior point ``i`` is the current point ``order[i]``."""
        order = np.asarray(order)
        if sorted(order.tolist()) != list(range(self.N)):
            raise ValueError("order must be a permutation of the interior indices")
        return Grid(self.dim, self.n_side, self.h, self.origin, self.kmin, self.kmax,
                    self.lattice[order], self.ext_lattice)

    def slot_map(self) -> np.ndarray:
        """Lattice box -> index (interior ``0..N-1``, exterior ``N..N+M-1``)."""
        size = self.kmax - self.kmin + 1
        slots = np.full((size,) * self.dim, -1, dtype=np.int64)
        allk = self.all_lattice - self.kmin
        slots[tuple(allk.T)] = np.arange(allk.shape[0])
        return slots

    def interior_index(self) -> np.ndarray:
        """Lattice coordinates ``(k_1..k_n)`` of the interior -> interior index (row-major)."""
        idx = np.full((self.n_side,) * self.dim, -1, dtype=np.int64)
        idx[tuple((self.lattice - 1).T)] = np.arange(self.N)
        return idx


def _pad2(lat: np.ndarray) -> np.ndarray:
    if lat.shape[1] == 2:
        return np.ascontiguousarray(lat, dtype=np.int64)
    return np.ascontiguousarray(np.column_stack([lat, np.zeros(lat.shape[0], dtype=np.int64)]))


@dataclass
class SparseCorrection:
    """The correction stencil.

    ``raw`` is the stencil as assembled, with columns over interior and
    exterior slots (rows sum to zero); ``matrix`` is the interior block after
    symmetrisation, the part that enters ``A``.
    """

    raw: sp.csr_matrix
    matrix: sp.csr_matrix

    @property
    def interior_raw(self) -> sp.csr_matrix:
        n = self.matrix.shape[0]
        return self.raw[:, :n]


@dataclass
class KernelOperator:
    """``A = B + D + C`` for the symmetric formulations."""

    spec: ProblemSpec
    grid: Grid
    window: WindowSpec
    scale: float
    c: np.ndarray
    b: np.ndarray
    variable_exponent: bool
    table: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    correction: SparseCorrection = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    symmetric: bool = True

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def C(self) -> sp.csr_matrix:
        return self.correction.matrix

    def kernel(self, rows, cols) -> np.ndarray:
        """gamma(x_i, x_j) for index arrays ``rows``, ``cols`` (0 where i == j)."""
        lat = self._lat
        return kernels.kernel_block(lat[rows], lat[cols], self.c[rows], self.c[cols],
                                    self.b[rows], self.b[cols], self.table,
                                    self.variable_exponent, self.grid.dim)

    def dense_part(self, rows, cols) -> np.ndarray:
        """Block of ``B``."""
        return -self.scale * self.kernel(rows, cols)

    @property
    def _lat(self) -> np.ndarray:
        lat = getattr(self, "_lat_cache", None)
        if lat is None:
            lat = _pad2(self.grid.lattice)
            self._lat_cache = lat
        return lat

    def block(self, r0: int, r1: int, c0: int, c1: int) -> np.ndarray:
        """Dense block ``A[r0:r1, c0:c1]``."""
        rows, cols = np.arange(r0, r1), np.arange(c0, c1)
        out = self.dense_part(rows, cols)
        lo, hi = max(r0, c0), min(r1, c1)
        if lo < hi:
            k = np.arange(lo, hi)
            out[k - r0, k - c0] += self.D[k]
        cb = self.C[r0:r1, c0:c1]
        if cb.nnz:
            out += cb.toarray()
        return out

    def entries(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        out = self.dense_part(rows, cols)
        same = rows[:, None] == cols[None, :]
        out = out + np.where(same, self.D[rows][:, None], 0.0)
        cb = self.C[rows][:, cols]
        if cb.nnz:
            out += cb.toarray()
        return out

    def dense(self) -> np.ndarray:
        return self.block(0, self.N, 0, self.N)

    def permuted(self, order) -> "KernelOperator":
        """The same operator with interior point ``i`` taken from ``order[i]``."""
        order = np.asarray(order, dtype=np.int64)
        C = self.C[order][:, order].tocsr()
        raw = self.correction.raw
        raw = sp.hstack([raw[order][:, order], raw[order][:, self.N:]]).tocsr()
        return KernelOperator(
            spec=self.spec, grid=self.grid.permuted(order), window=self.window, scale=self.scale,
            c=self.c[order], b=self.b[order], variable_exponent=self.variable_exponent,
            table=self.table, D=self.D[order], correction=SparseCorrection(raw, C),
            rhs=self.rhs[order],
        )


@dataclass
class NonsymOperator:
    """1D flux formulation: ``(Q_{i+1/2} - Q_{i-1/2}) / h`` at interior nodes.

    Fluxes live at the cell midpoints ``origin + (f + 1/2) h``, ``f = 0..n_side``.
    """

    spec: ProblemSpec
    grid: Grid
    window: WindowSpec
    treated: bool
    flux_x: np.ndarray
    flux_coef: np.ndarray      # -kappa * omega at each flux point
    flux_beta: np.ndarray
    window_coef: np.ndarray    # C1 + C2 at each flux point
    rhs: np.ndarray = field(repr=False)
    symmetric: bool = False

    @property
    def N(self) -> int:
        return self.grid.N

    def flux_rows(self, f, cols) -> np.ndarray:
        """Rows of the flux matrix ``Q = G u`` for flux indices ``f``."""
        h = self.grid.h
        f = np.asarray(f, dtype=np.int64)
        k = self.grid.lattice[cols, 0]
        xj = self.grid.to_points(k[:, None])[:, 0]
        d = xj[None, :] - self.flux_x[f][:, None]
        g = h * d * np.abs(d) ** (-self.flux_beta[f][:, None] - 2.0)
        if self.treated:
            w = (self.window_coef[f] / h)[:, None]
            g = g + w * ((k[None, :] == f[:, None] + 1).astype(float)
                         - (k[None, :] == f[:, None]).astype(float))
        return self.flux_coef[f][:, None] * g

    def entries(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        k = self.grid.lattice[rows, 0]
        return (self.flux_rows(k, cols) - self.flux_rows(k - 1, cols)) / self.grid.h

    def block(self, r0, r1, c0, c1) -> np.ndarray:
        return self.entries(np.arange(r0, r1), np.arange(c0, c1))

    def dense(self) -> np.ndarray:
        idx = np.arange(self.N)
        return self.entries(idx, idx)


# --------------------------------------------------------------------------

def _window_offsets(dim: int, h: float, delta: float) -> np.ndarray:
    K = int(math.ceil(delta / h))
    ks = np.arange(-K, K + 1)
    off = np.stack(np.meshgrid(*([ks] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    r = h * np.sqrt((off.astype(float) ** 2).sum(axis=1))
    return off[(r > 0) & (r < delta)]


def window_sums(beta, dbeta, grid: Grid, win: WindowSpec):
    """Per-point, per-direction discrete window sums minus their exact integrals.

    Returns ``(S, T)`` with shape ``(P, n)``:

    ``S[i, d] = h^n sum_k w (h k_d)^2 |hk|^(-n-2b_i) - int w y_d^2 |y|^(-n-2b_i)``
    ``T[i, d]`` the same with the extra factor ``dbeta[i, d] ln|hk|``.
    """
    n, h, delta = grid.dim, grid.h, win.delta
    beta = np.asarray(beta, dtype=float)
    off = _window_offsets(n, h, delta)
    hk = h * off.astype(float)
    r = np.sqrt((hk**2).sum(axis=1))
    lr = np.log(r)
    w = window(r, delta)
    kern = np.exp(-(n + 2.0 * beta)[:, None] * lr[None, :]) * w[None, :]     # (P, K)
    S = np.empty((beta.size, n))
    T = np.zeros((beta.size, n))
    exact_u2 = corr_u2_nd(beta, delta, n)
    for d in range(n):
        m2 = hk[:, d] ** 2
        S[:, d] = h**n * (kern @ m2) - exact_u2
        if dbeta is not None:
            T[:, d] = dbeta[:, d] * (h**n * (kern @ (m2 * lr))) - corr_log_nd(beta, dbeta[:, d], delta, n)
    return S, T


def _kernel_table(grid: Grid, beta_const: float | None) -> np.ndarray:
    size = grid.kmax - grid.kmin + 1
    d0 = np.arange(size, dtype=float)[:, None]
    d1 = (np.arange(size, dtype=float) if grid.dim == 2 else np.zeros(1))[None, :]
    r = grid.h * np.sqrt(d0**2 + d1**2)
    with np.errstate(divide="ignore"):
        lr = np.log(r)
    lr[0, 0] = 0.0
    if beta_const is None:
        return lr
    tab = np.exp(-(grid.dim + 2.0 * beta_const) * lr)
    tab[0, 0] = 0.0
    return tab


def rowsum_convolution(grid: Grid, c_all: np.ndarray, table: np.ndarray) -> np.ndarray:
    """``sum_j c_j table[|k_i - k_j|]`` over the whole lattice for every interior ``i``.

    Valid when the kernel exponent is constant: the sum is then a discrete
    convolution of the lattice field ``c`` with the kernel table.
    """
    size = grid.kmax - grid.kmin + 1
    box = np.zeros((size,) * grid.dim)
    box[tuple((grid.all_lattice - grid.kmin).T)] = c_all
    tab = table if grid.dim == 2 else table[:, 0]
    kern = tab
    for ax in range(grid.dim):
        flipped = np.flip(kern, axis=ax).take(np.arange(size - 1), axis=ax)
        kern = np.concatenate([flipped, kern], axis=ax)
    full = fftconvolve(box, kern, mode="full")
    sl = tuple(slice(size - 1, 2 * size - 1) for _ in range(grid.dim))
    conv = full[sl]
    return conv[tuple((grid.lattice - grid.kmin).T)]


def _threaded_rowsum(lat_all, N, c_all, b_all, table, variable, dim) -> np.ndarray:
    from .parallel import map_chunks

    def work(sl):
        return kernels.kernel_rowsum(lat_all[sl], lat_all, c_all[sl], c_all, b_all[sl], b_all,
                                     table, variable, dim)

    return np.concatenate(map_chunks(work, N))


def _check_formulation(spec: ProblemSpec, grid: Grid) -> None:
    if spec.dim != grid.dim:
        raise ConfigurationError("grid and problem dimensions differ")
    f = spec.formulation
    if f is Formulation.NONSYMMETRIC_BETA and grid.dim != 1:
        raise ConfigurationError("the non-symmetric formulation is implemented in 1D only")
    if f is Formulation.SYMMETRIC_KAPPA and not spec.beta.is_constant:
        raise ConfigurationError(
            "variable kappa together with variable beta is not supported; "
            "use the symmetric-variable-beta formulation with constant kappa")
    if f is Formulation.SYMMETRIC_BETA and not spec.kappa.is_constant:
        raise ConfigurationError(
            "variable beta together with variable kappa is not supported; "
            "use the symmetric-variable-kappa formulation with constant beta")


def build_correction(spec: ProblemSpec, grid: Grid, win: WindowSpec, c_all: np.ndarray,
                     half_point: bool = False) -> SparseCorrection:
    """Correction stencil for either symmetric formulation (see module docstring)."""
    n, h, N = grid.dim, grid.h, grid.N
    pts = grid.points
    slots = grid.slot_map()
    beta_i = spec.beta(pts)
    var_beta = spec.formulation is Formulation.SYMMETRIC_BETA and not spec.beta.is_constant
    dbeta = spec.beta.grad(pts) if var_beta else None
    S, T = window_sums(beta_i, dbeta, grid, win)
    idx = np.arange(N)
    rows, cols, vals = [], [], []
    for d in range(n):
        e = np.zeros(n, dtype=np.int64)
        e[d] = 1
        lo = slots[tuple((grid.lattice - e - grid.kmin).T)]
        hi = slots[tuple((grid.lattice + e - grid.kmin).T)]
        if np.any(lo < 0) or np.any(hi < 0):
            raise ConfigurationError("stencil neighbour outside the lattice")
        if spec.formulation is Formulation.SYMMETRIC_KAPPA:
            ci = c_all[:N]
            if half_point:
                c_lo = np.sqrt(spec.kappa(pts - 0.5 * h * e))
                c_hi = np.sqrt(spec.kappa(pts + 0.5 * h * e))
                k_lo, k_hi = ci * (2 * c_lo - ci), ci * (2 * c_hi - ci)
            else:
                k_lo, k_hi = ci * c_all[lo], ci * c_all[hi]
            s = S[:, d] / h**2
            w_lo, w_hi, w_c = s * k_lo, s * k_hi, -s * (k_lo + k_hi)
        else:
            kap = c_all[0] ** 2  # constant kappa scales the whole operator
            s = kap * S[:, d] / h**2
            t = kap * T[:, d] / h
            # u'' stencil weighted by S, -2 u' central difference weighted by T
            w_lo, w_hi, w_c = s + t, s - t, -2.0 * s
        rows += [idx, idx, idx]
        cols += [lo, idx, hi]
        vals += [w_lo, w_c, w_hi]
    raw = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N, N + grid.M),
    )
    inner = raw[:, :N]
    # (C + C^T) / 2 keeps the first-derivative terms consistent to O(h^2)
    sym = ((inner + inner.T) * 0.5).tocsr()
    sym.sum_duplicates()
    return SparseCorrection(raw, sym)


def assemble_symmetric(spec: ProblemSpec, grid: Grid, half_point: bool = False,
                       direct_rowsum: bool = False) -> KernelOperator:
    """Assemble either symmetric formulation in 1D or 2D.

    With a constant exponent the diagonal sums ``D`` are computed by FFT
    convolution unless ``direct_rowsum`` is set.
    """
    if spec.formulation is Formulation.NONSYMMETRIC_BETA:
        raise ConfigurationError("use assemble_nonsym for the non-symmetric formulation")
    _check_formulation(spec, grid)
    win = spec.window_for(grid.h)
    all_pts = grid.to_points(grid.all_lattice)
    validate_fields(spec, all_pts)
    kappa_all = spec.kappa(all_pts)
    c_all = np.sqrt(kappa_all)
    beta_const = spec.beta.constant
    b_all = spec.beta(all_pts) if beta_const is None else np.zeros(all_pts.shape[0])
    table = _kernel_table(grid, beta_const)
    scale = 2.0 * grid.h**grid.dim
    N = grid.N
    variable = beta_const is None
    if variable or direct_rowsum:
        lat_all = _pad2(grid.all_lattice)
        rowsum = _threaded_rowsum(lat_all, N, c_all, b_all, table, variable, grid.dim)
    else:
        rowsum = c_all[:N] * rowsum_convolution(grid, c_all, table)
    corr = build_correction(spec, grid, win, c_all, half_point)
    return KernelOperator(
        spec=spec, grid=grid, window=win, scale=scale,
        c=c_all[:N].copy(), b=b_all[:N].copy(), variable_exponent=variable, table=table,
        D=scale * rowsum, correction=corr, rhs=rhs(spec, grid),
    )


def assemble_symmetric_kappa_1d(spec: ProblemSpec, grid: Grid, half_point: bool = False):
    if spec.formulation is not Formulation.SYMMETRIC_KAPPA or grid.dim != 1:
        raise ConfigurationError("expected the 1D symmetric variable-kappa formulation")
    return assemble_symmetric(spec, grid, half_point)


def assemble_symmetric_beta_1d(spec: ProblemSpec, grid: Grid):
    if spec.formulation is not Formulation.SYMMETRIC_BETA or grid.dim != 1:
        raise ConfigurationError("expected the 1D symmetric variable-beta formulation")
    return assemble_symmetric(spec, grid)


def assemble_symmetric_2d(spec: ProblemSpec, grid: Grid, half_point: bool = False):
    if grid.dim != 2:
        raise ConfigurationError("expected a 2D grid")
    if not spec.kappa.is_constant and not spec.beta.is_constant:
        raise ConfigurationError("kappa and beta cannot both vary in one problem")
    return assemble_symmetric(spec, grid, half_point)


def assemble_nonsym_1d(spec: ProblemSpec, grid: Grid, treated: bool = True) -> NonsymOperator:
    if spec.formulation is not Formulation.NONSYMMETRIC_BETA:
        raise ConfigurationError("expected the non-symmetric formulation")
    _check_formulation(spec, grid)
    h = grid.h
    win = spec.window_for(h)
    f_idx = np.arange(grid.n_side + 1)
    fx = grid.origin + (f_idx + 0.5) * h
    fpts = fx[:, None]
    validate_fields(spec, np.concatenate([fpts, grid.points]))
    beta_f = spec.beta(fpts)
    coef = -spec.kappa(fpts) * omega(beta_f, 1)
    # midpoint-rule window sum over the 2m nodes around each flux point
    m = int(math.ceil(win.delta / h))
    off = (np.arange(1, m + 1) - 0.5) * h
    wv = window(off, win.delta)
    c1 = -2.0 * h * (wv[None, :] * off[None, :] ** (-beta_f[:, None])).sum(axis=1)
    c2 = 2.0 * window_moment(-beta_f, win.delta)
    return NonsymOperator(spec, grid, win, treated, fx, coef, beta_f, c1 + c2, rhs(spec, grid))


def assemble(spec: ProblemSpec, grid: Grid, **kw):
    if spec.formulation is Formulation.NONSYMMETRIC_BETA:
        return assemble_nonsym_1d(spec, grid, **kw)
    return assemble_symmetric(spec, grid, **kw)


def rhs(spec: ProblemSpec, grid: Grid) -> np.ndarray:
    return spec.source(grid.points)
