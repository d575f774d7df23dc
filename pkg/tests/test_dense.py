import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fradi.assembly import Grid, assemble
from fradi.dense import (
    CapacityError,
    FactorizationError,
    assemble_dense,
    cholesky_lower,
    dense_cholesky,
    dense_lu,
    dense_solve,
    svd_eps_rank,
)
from fradi.fields import Formulation, ProblemSpec, ScalarField
from fradi.harness import grid_for, make_problem
from fradi.quadrature import corr_u2_1d


def test_assemble_dense_matches_entries():
    op = assemble(make_problem("beta", 2), Grid.regular(2, 15))
    A = assemble_dense(op)
    assert A.flags.c_contiguous and A.dtype == np.float64
    rng = np.random.default_rng(0)
    i, j = rng.integers(0, op.N, 10_000), rng.integers(0, op.N, 10_000)
    for a, b in zip(np.array_split(i, 20), np.array_split(j, 20)):
        np.testing.assert_array_equal(np.diag(op.entries(a, b)), A[a, b])
    assert np.abs(A - A.T).max() <= 1e-12 * np.abs(A).max()


def test_capacity():
    op = assemble(make_problem("kappa", 1), Grid.regular(1, 63))
    with pytest.raises(CapacityError):
        assemble_dense(op, cap=32)


def test_center_row_by_hand():
    # constant coefficients, 256 unknowns: B, D and C at the middle row from first principles
    beta = 0.5
    spec = ProblemSpec(Formulation.SYMMETRIC_KAPPA, kappa=ScalarField.const(1.0), beta=ScalarField.const(beta))
    g = grid_for(spec, 257)
    A = assemble_dense(assemble(spec, g))
    h, i = g.h, 128
    x = -1 + (i + 1) * h
    delta = 4 * h
    # every lattice point of [-2, 2] other than x
    layers = int(math.floor(1 / h + 1e-9))
    ks = np.arange(-layers, 257 + layers + 1)
    ys = -1 + ks * h
    ys = ys[np.abs(ys - x) > h / 2]
    D = 2 * h * np.sum(np.abs(ys - x) ** (-1 - 2 * beta))
    s_sum = 0.0
    for k in range(1, 4):
        r = k * h
        t = r / delta
        w = 1 - 35 * t**4 + 84 * t**5 - 70 * t**6 + 20 * t**7
        s_sum += 2 * h * w * r ** (1 - 2 * beta)
    s = s_sum - corr_u2_1d(beta, delta)
    assert A[i, i] == pytest.approx(D - 2 * s / h**2, rel=1e-12)
    assert A[i, i + 1] == pytest.approx(-2 * h / h ** (1 + 2 * beta) + s / h**2, rel=1e-12)
    assert A[i, i + 5] == pytest.approx(-2 * h / (5 * h) ** (1 + 2 * beta), rel=1e-12)


def test_cholesky_trivial_cases():
    np.testing.assert_array_equal(dense_cholesky(np.eye(5)).L, np.eye(5))
    np.testing.assert_allclose(dense_cholesky(4 * np.eye(3)).L, 2 * np.eye(3))


def test_cholesky_pivot_failure_reports_index():
    A = np.diag([4.0, 1.0, -2.0, 3.0])
    with pytest.raises(FactorizationError) as exc:
        cholesky_lower(A)
    assert exc.value.index == 2 and exc.value.pivot == -2.0
    B = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(FactorizationError) as exc:
        cholesky_lower(B)
    assert exc.value.index == 1 and exc.value.pivot == pytest.approx(-3.0)


def test_lu_singular():
    with pytest.raises(FactorizationError):
        dense_lu(np.zeros((3, 3)))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 300), st.integers(0, 10**6))
def test_random_spd_solve(n, seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    A = G @ G.T + n * np.eye(n)
    b = rng.standard_normal(n)
    x = dense_solve(dense_cholesky(A), b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
    y = dense_solve(dense_lu(A + np.triu(G, 1)), b)
    assert np.linalg.norm((A + np.triu(G, 1)) @ y - b) <= 1e-10 * np.linalg.norm(b)


def test_oracle_self_consistency_n1024():
    rng = np.random.default_rng(5)
    G = rng.standard_normal((1024, 1024))
    A = G @ G.T + 1024 * np.eye(1024)
    b = rng.standard_normal((1024, 3))
    x = dense_solve(dense_cholesky(A), b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_nonsym_solve_residual():
    spec = make_problem("nonsym", 1)
    op = assemble(spec, grid_for(spec, 128))
    A = assemble_dense(op)
    x = dense_solve(dense_lu(A), op.rhs)
    assert np.linalg.norm(A @ x - op.rhs) <= 1e-10 * np.linalg.norm(op.rhs)


def test_svd_eps_rank():
    assert svd_eps_rank(np.zeros((7, 5)), 1e-12) == 0
    u, v = np.arange(1.0, 6.0), np.ones(4)
    assert svd_eps_rank(np.outer(u, v), 0.5 * np.linalg.norm(u) * np.linalg.norm(v)) == 1
    assert svd_eps_rank(np.outer(u, v), 2 * np.linalg.norm(u) * np.linalg.norm(v)) == 0
    M = np.random.default_rng(0).standard_normal((20, 30))
    s = np.linalg.svd(M, compute_uv=False)
    for k in (0, 5, 19):
        assert svd_eps_rank(M, s[k] * (1 + 1e-12)) == k


def test_eps_rank_grows_with_log_eps():
    # a well-separated 2D kernel tile
    x = np.stack(np.meshgrid(np.linspace(0, 1, 12), np.linspace(0, 1, 12)), -1).reshape(-1, 2)
    y = x + np.array([3.0, 0.0])
    K = 1.0 / np.linalg.norm(x[:, None] - y[None], axis=2) ** 2.5
    epss = 10.0 ** -np.arange(2, 11, 2)
    ranks = np.array([svd_eps_rank(K, e * np.linalg.norm(K, 2)) for e in epss])
    assert np.all(np.diff(ranks) >= 0) and ranks[-1] > ranks[0]
    # in 2D the rank grows roughly like |log eps|^2: check a positive, moderate exponent
    slope = np.polyfit(np.log(-np.log(epss)), np.log(ranks), 1)[0]
    assert 0.5 < slope < 3.0
