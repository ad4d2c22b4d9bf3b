import numpy as np
import pytest
import scipy.sparse as sp

from irksolve.krylov import KrylovConfig, solve
from irksolve.linop import (IdentityMass, SparseOperator,
                            build_inner_preconditioner, shifted_operator)
from irksolve.spatial import GridSpec, build_advdiff
from irksolve.stepper import IRKStepper, LinearProblem
from irksolve.tableaux import build_tableau

rng = np.random.default_rng(5)


def spd_tridiag(n):
    main = 2.0 + np.arange(n) * 0.01
    off = -0.7 * np.ones(n - 1)
    return SparseOperator(sp.diags([off, main, off], [-1, 0, 1], format="csr"))


def test_identity_converges_in_one_iteration():
    op = SparseOperator(sp.identity(20, format="csr"))
    b = rng.standard_normal(20)
    for method in ("cg", "gmres", "fgmres"):
        x, rep = solve(op, b, None, KrylovConfig(method=method, rel_tol=1e-12))
        assert rep.converged and rep.iterations == 1
        assert np.allclose(x, b, atol=1e-12)


def test_exactly_preconditioned_spd_one_iteration():
    op = spd_tridiag(16)
    pc = build_inner_preconditioner("exact_sparse_lu", op)
    b = rng.standard_normal(16)
    x, rep = solve(op, b, pc, KrylovConfig(method="cg", rel_tol=1e-12))
    assert rep.converged and rep.iterations == 1
    assert np.linalg.norm(op.apply(x) - b) < 1e-12 * np.linalg.norm(b)


def test_cg_iteration_bound_on_quadratic_factor():
    # Gauss-2 quadratic factor on 1D diffusion: kappa(P_gamma*) <= 1.1547,
    # so CG on the preconditioned pair sits far below the Chebyshev bound
    # for kappa_b = 1.1547^2 (~25 iterations at tol 1e-12).
    grid = GridSpec(dim=1, n=128)
    prob = LinearProblem(IdentityMass(128), build_advdiff(grid, 0.0, 1.0, 2))
    st = IRKStepper(build_tableau("gauss", 2), prob, dt=2 * grid.h,
                    outer_cfg=KrylovConfig(method="cg", rel_tol=1e-12))
    (_f, _g, op, pc) = st._solvers[0]
    b = prob.M.apply(rng.standard_normal(128))
    x, rep = solve(op, b, pc, st.outer_cfg)
    assert rep.converged
    assert rep.iterations <= 25
    assert np.linalg.norm(op.apply(x) - b) <= 1e-12 * np.linalg.norm(b)


def test_gmres_history_monotone():
    n = 60
    A = rng.standard_normal((n, n))
    A = -(A @ A.T) - 0.5 * np.eye(n)
    op = SparseOperator(sp.csr_matrix(A))
    b = rng.standard_normal(n)
    x, rep = solve(op, b, None, KrylovConfig(method="gmres", rel_tol=1e-10,
                                             restart=12, max_iters=500))
    assert rep.converged
    h = rep.residual_history
    assert all(h[i + 1] <= h[i] * (1.0 + 1e-9) + 1e-300 for i in range(len(h) - 1))


def test_max_iters_returns_best_iterate_unconverged():
    op = spd_tridiag(200)
    b = rng.standard_normal(200)
    x, rep = solve(op, b, None, KrylovConfig(method="gmres", rel_tol=1e-14,
                                             restart=5, max_iters=3))
    assert not rep.converged
    assert rep.iterations == 3
    assert np.linalg.norm(op.apply(x) - b) < np.linalg.norm(b)  # progress


def test_cg_symmetry_probe_rejects_nonsymmetric():
    n = 30
    A = rng.standard_normal((n, n)) - 3 * np.eye(n)
    op = SparseOperator(sp.csr_matrix(A))
    with pytest.raises(ValueError):
        solve(op, rng.standard_normal(n), None, KrylovConfig(method="cg"))


def test_preconditioner_application_count():
    op = spd_tridiag(64)
    pc = build_inner_preconditioner("gs", op, sweeps=2)
    b = rng.standard_normal(64)
    _x, rep = solve(op, b, pc, KrylovConfig(method="gmres", rel_tol=1e-10,
                                            restart=30, max_iters=200))
    assert rep.converged
    # one application per iteration plus one per restart-cycle reconstruction
    assert rep.preconditioner_applications >= 2 * rep.iterations
    assert rep.preconditioner_applications <= 2 * (rep.iterations + 1 + rep.iterations // 30)


def test_zero_rhs():
    op = spd_tridiag(10)
    x, rep = solve(op, np.zeros(10), None, KrylovConfig(method="gmres"))
    assert rep.converged and rep.iterations == 0
    assert np.all(x == 0)


def test_fgmres_with_variable_preconditioner():
    grid = GridSpec(dim=1, n=96)
    L = build_advdiff(grid, 0.3, 1.0, 2)
    op = shifted_operator(2.0, 0.08, IdentityMass(96), L)
    base = build_inner_preconditioner("gs", op, sweeps=1)
    pc = build_inner_preconditioner("inner_krylov", op, tol=1e-2, maxit=50,
                                    base=base)
    b = rng.standard_normal(96)
    x, rep = solve(op, b, pc, KrylovConfig(method="fgmres", rel_tol=1e-11,
                                           restart=30, max_iters=300))
    assert rep.converged
    assert np.linalg.norm(op.apply(x) - b) <= 1e-11 * np.linalg.norm(b) * 2
    assert rep.preconditioner_applications > rep.iterations  # inner loop counted


def test_cg_breakdown_on_indefinite():
    from irksolve.krylov import Breakdown
    op = SparseOperator(sp.diags([1.0, -1.0], 0, format="csr"))
    b = np.array([1.0, 1.0])
    with pytest.raises(Breakdown):
        solve(op, b, None, KrylovConfig(method="cg", rel_tol=1e-12))
