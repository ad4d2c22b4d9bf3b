import numpy as np
import pytest
import scipy.sparse as sp

from irksolve.linop import (ExactBanded, FactorizationFailure, IdentityMass,
                            SparseOperator, ZeroOperator,
                            build_inner_preconditioner, fov_upper_bound,
                            shifted_operator)
from irksolve.spatial import (GridSpec, build_advdiff, build_fem_mass_1d,
                              build_upwind_advection, d2_matrix)

rng = np.random.default_rng(11)


def test_apply_is_linear():
    grid = GridSpec(dim=1, n=32)
    ops = [build_advdiff(grid, 0.7, 0.2, 4),
           build_upwind_advection(grid, 1.3),
           shifted_operator(2.0, 0.1, IdentityMass(32),
                            build_advdiff(grid, 0.7, 0.2, 2))]
    for op in ops:
        u = rng.standard_normal(op.n)
        v = rng.standard_normal(op.n)
        a, b = 0.37, -1.91
        lhs = op.apply(a * u + b * v)
        rhs = a * op.apply(u) + b * op.apply(v)
        scale = max(np.linalg.norm(lhs), 1.0)
        assert np.linalg.norm(lhs - rhs) < 1e-12 * scale


def test_shifted_operator_trivial_cases():
    n = 16
    M = IdentityMass(n)
    L = SparseOperator(sp.random(n, n, density=0.3, random_state=1))
    op = shifted_operator(1.0, 0.0, M, L)
    v = rng.standard_normal(n)
    assert np.allclose(op.apply(v), v)

    D2 = d2_matrix(n, 0.5, 2)
    op = shifted_operator(2.0, 0.1, M, SparseOperator(D2))
    ref = 2.0 * np.eye(n) - 0.1 * D2.toarray()
    assert np.max(np.abs(op.to_dense() - ref)) < 1e-14


def test_exact_banded_residual_gauss2_shift():
    # gamma* = 2 sqrt(3) shift of 1D diffusion, N = 64
    grid = GridSpec(dim=1, n=64)
    L = build_advdiff(grid, 0.0, 1.0, 2)
    op = shifted_operator(2.0 * np.sqrt(3.0), 0.05, IdentityMass(64), L)
    pc = ExactBanded(op)
    v = rng.standard_normal(64)
    x = pc.apply(v)
    assert np.linalg.norm(op.apply(x) - v) < 1e-12 * np.linalg.norm(v)


def test_exact_matches_dense_solve():
    for n in (32, 128):
        grid = GridSpec(dim=1, n=n)
        L = build_advdiff(grid, 0.4, 0.8, 4)
        op = shifted_operator(1.7, 0.02, IdentityMass(n), L)
        dense = op.to_dense()
        v = rng.standard_normal(n)
        ref = np.linalg.solve(dense, v)
        for kind in ("exact_banded", "exact_sparse_lu"):
            pc = build_inner_preconditioner(kind, op)
            assert np.linalg.norm(pc.apply(v) - ref) < 1e-10 * np.linalg.norm(ref)


def test_jacobi_on_identity():
    op = SparseOperator(sp.identity(8, format="csr"))
    pc = build_inner_preconditioner("jacobi", op, sweeps=1)
    v = rng.standard_normal(8)
    assert np.allclose(pc.apply(v), v)
    assert pc.applications == 1


def test_relaxation_counts_sweeps():
    grid = GridSpec(dim=1, n=32)
    op = shifted_operator(3.0, 0.05, IdentityMass(32),
                          build_advdiff(grid, 0.0, 1.0, 2))
    pc = build_inner_preconditioner("gs", op, sweeps=3)
    pc.apply(rng.standard_normal(32))
    pc.apply(rng.standard_normal(32))
    assert pc.applications == 6


def test_inner_krylov_residual_reduction():
    grid = GridSpec(dim=2, n=16)
    L = build_advdiff(grid, (0.85, 1.0), (0.3, 0.25), 2)
    op = shifted_operator(2.5, 0.1, IdentityMass(grid.size), L)
    base = build_inner_preconditioner("gs", op, sweeps=1)
    pc = build_inner_preconditioner("inner_krylov", op, tol=1e-10,
                                    maxit=500, base=base)
    v = rng.standard_normal(op.n)
    x = pc.apply(v)
    assert np.linalg.norm(op.apply(x) - v) <= 1e-10 * np.linalg.norm(v) * 10


def test_factorization_failure_on_singular():
    op = SparseOperator(sp.csr_matrix(np.zeros((4, 4))))
    with pytest.raises(FactorizationFailure):
        build_inner_preconditioner("exact_sparse_lu", op)


def test_fov_skew_and_negative_identity():
    n = 24
    K = rng.standard_normal((n, n))
    skew = SparseOperator(sp.csr_matrix(K - K.T))
    assert abs(fov_upper_bound(skew)) < 1e-12
    neg = SparseOperator(-sp.identity(n, format="csr"))
    assert fov_upper_bound(neg) == pytest.approx(-1.0, abs=1e-12)


def test_fov_upwind_nonpositive():
    grid = GridSpec(dim=1, n=64)
    assert fov_upper_bound(build_upwind_advection(grid, 1.0)) <= 1e-12


def test_fov_lanczos_path_matches_dense():
    grid = GridSpec(dim=2, n=40)  # N = 1600 > default dense limit
    L = build_advdiff(grid, (0.85, 1.0), (0.3, 0.25), 4)
    val = fov_upper_bound(L)
    ref = fov_upper_bound(L, dense_limit=4096)
    assert val == pytest.approx(ref, abs=1e-8)
    assert val <= 1e-8


def test_mass_inverse_contract():
    grid = GridSpec(dim=1, n=64)
    M = build_fem_mass_1d(grid)
    v = rng.standard_normal(64)
    assert np.linalg.norm(M.apply(M.solve(v)) - v) < 1e-12 * np.linalg.norm(v)
    assert np.linalg.norm(M.solve(M.apply(v)) - v) < 1e-12 * np.linalg.norm(v)


def test_zero_operator():
    z = ZeroOperator(5)
    assert np.all(z.apply(np.ones(5)) == 0)
    assert fov_upper_bound(z) == 0.0


def test_dimension_mismatch():
    from irksolve.linop import DimensionMismatch
    grid = GridSpec(dim=1, n=16)
    L = build_advdiff(grid, 0.5, 0.5, 2)
    with pytest.raises(DimensionMismatch):
        shifted_operator(1.0, 0.1, IdentityMass(8), L)


def test_matrix_free_shifted_operator():
    # no assembled form on L: the shift must compose matrix-free
    from irksolve.linop import ComposedOperator
    n = 20
    A = rng.standard_normal((n, n))
    A = -(A @ A.T)
    L = ComposedOperator(n, lambda v: A @ v)
    assert L.mat is None
    op = shifted_operator(2.5, 0.1, IdentityMass(n), L)
    assert op.mat is None
    v = rng.standard_normal(n)
    ref = 2.5 * v - 0.1 * (A @ v)
    assert np.allclose(op.apply(v), ref, atol=1e-13)
    # linearity holds for the composed apply as well
    u = rng.standard_normal(n)
    lhs = op.apply(0.3 * u - 1.7 * v)
    rhs = 0.3 * op.apply(u) - 1.7 * op.apply(v)
    assert np.linalg.norm(lhs - rhs) < 1e-12 * max(np.linalg.norm(lhs), 1.0)
    assert np.max(np.abs(op.to_dense() - (2.5 * np.eye(n) - 0.1 * A))) < 1e-12
    # dense fallback of the fov bound on the matrix-free L itself
    assert fov_upper_bound(L) <= 1e-12
