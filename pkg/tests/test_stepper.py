import tracemalloc

import numpy as np
import pytest
import scipy.sparse as sp

from irksolve.conditioning import random_stable_matrix
from irksolve.krylov import KrylovConfig
from irksolve.linop import IdentityMass, SparseOperator, ZeroOperator
from irksolve.spatial import GridSpec, build_fem_mass_1d
from irksolve.spectral import spectral_decompose
from irksolve.stepper import (FactorSolveFailure, IRKStepper, LinearProblem,
                              advance_oracle, block_prec_advance,
                              sdirk_advance)
from irksolve.tableaux import build_tableau

rng = np.random.default_rng(2024)
TIGHT = KrylovConfig(method="auto", rel_tol=1e-13, max_iters=4000)


def random_problem(n, seed, scale=2.0, forcing=True):
    r = np.random.default_rng(seed)
    L = SparseOperator(sp.csr_matrix(random_stable_matrix(n, r, scale=scale)))
    if forcing:
        v0 = r.standard_normal(n)
        v1 = r.standard_normal(n)

        def f(t):
            return np.cos(1.3 * t) * v0 + np.sin(0.7 * t) * v1
    else:
        f = None
    return LinearProblem(IdentityMass(n), L, forcing=f)


def stability_function(tableau, z):
    s = tableau.s
    return 1.0 + z * tableau.b0 @ np.linalg.solve(
        np.eye(s) - z * tableau.A0, np.ones(s))


def test_zero_rhs_zero_operator():
    n = 6
    prob = LinearProblem(IdentityMass(n), ZeroOperator(n))
    st = IRKStepper(build_tableau("gauss", 2), prob, dt=0.5, outer_cfg=TIGHT)
    u = rng.standard_normal(n)
    z = st.assemble_rhs_z(np.zeros(n), 0.0)
    assert np.all(z == 0)
    u1, _ = st.advance(u, 0.0)
    assert np.allclose(u1, u, atol=1e-14)


def test_backward_euler_rhs_assembly():
    n = 5
    prob = random_problem(n, seed=1)
    st = IRKStepper(build_tableau("backwardEuler", 1), prob, dt=0.3,
                    outer_cfg=TIGHT)
    u = rng.standard_normal(n)
    z = st.assemble_rhs_z(u, 0.4)
    ref = prob.forcing(0.4 + 0.3) + prob.L.apply(u)
    assert np.linalg.norm(z - ref) < 1e-13 * np.linalg.norm(ref)


def test_rhs_assembly_matches_kronecker_oracle():
    # Gauss-2, random 8x8 L, M = I, stage-dependent forcing
    n = 8
    t = build_tableau("gauss", 2)
    r = np.random.default_rng(3)
    Lm = random_stable_matrix(n, r, scale=1.5)
    fvals = {}

    def forcing(time):
        key = round(time, 12)
        if key not in fvals:
            fvals[key] = r.standard_normal(n)
        return fvals[key]

    prob = LinearProblem(IdentityMass(n), SparseOperator(sp.csr_matrix(Lm)),
                         forcing=forcing)
    dt = 0.37
    u = r.standard_normal(n)
    st = IRKStepper(t, prob, dt, outer_cfg=TIGHT)
    z = st.assemble_rhs_z(u, 0.0)

    # dense oracle: (b^T A0^{-1} x I) adj(M_s) f with adjugate via the
    # ring determinant assembled from eigenvalue factors
    B = np.linalg.inv(t.A0)
    Lhat = dt * Lm
    Ms = np.kron(B, np.eye(n)) - np.kron(np.eye(2), Lhat)
    lam = np.linalg.eigvals(B)
    eta, beta = lam[0].real, abs(lam[0].imag)
    D = (eta * np.eye(n) - Lhat) @ (eta * np.eye(n) - Lhat) + beta ** 2 * np.eye(n)
    Lu = Lm @ u
    f = np.concatenate([forcing(dt * c) + Lu for c in t.c0])
    z_oracle = (np.kron(t.b0 @ B, np.eye(n)) @ np.kron(np.eye(2), D)
                @ np.linalg.solve(Ms, f))
    assert np.linalg.norm(z - z_oracle) < 1e-10 * np.linalg.norm(z_oracle)


def test_solve_factors_zero_operator_scaling():
    # L = 0: y = z / P_s(0) = z / det(A0^{-1})
    n = 4
    prob = LinearProblem(IdentityMass(n), ZeroOperator(n))
    for fam, s in [("gauss", 2), ("radauIIA", 3)]:
        t = build_tableau(fam, s)
        st = IRKStepper(t, prob, dt=0.2, outer_cfg=TIGHT)
        z = rng.standard_normal(n)
        y, _ = st.solve_factors(z)
        det = np.linalg.det(np.linalg.inv(t.A0))
        assert np.linalg.norm(y - z / det) < 1e-11 * np.linalg.norm(z / det)


def test_dahlquist_matches_stability_function():
    lam, dt = -1.0, 0.1
    t = build_tableau("gauss", 2)
    prob = LinearProblem(IdentityMass(1),
                         SparseOperator(sp.csr_matrix([[lam]])))
    st = IRKStepper(t, prob, dt, outer_cfg=TIGHT)
    u1, _ = st.advance(np.array([1.0]), 0.0)
    R = stability_function(t, lam * dt)
    assert u1[0] == pytest.approx(R, rel=1e-12)
    # and the oracle agrees with the closed form too
    uo = advance_oracle(t, prob, np.array([1.0]), 0.0, dt)
    assert uo[0] == pytest.approx(R, rel=1e-12)


def test_oracle_backward_euler_closed_form():
    prob = LinearProblem(IdentityMass(1),
                         SparseOperator(sp.csr_matrix([[-1.0]])))
    t = build_tableau("backwardEuler", 1)
    u = advance_oracle(t, prob, np.array([1.0]), 0.0, 0.25)
    assert u[0] == pytest.approx(1.0 / 1.25, rel=1e-14)


def test_oracle_gauss2_a_stability_stiff():
    lam = -1.0e6
    prob = LinearProblem(IdentityMass(1),
                         SparseOperator(sp.csr_matrix([[lam]])))
    t = build_tableau("gauss", 2)
    u = advance_oracle(t, prob, np.array([1.0]), 0.0, 1.0)
    assert abs(u[0]) < 1.0
    assert u[0] == pytest.approx(stability_function(t, lam), rel=1e-9)


def test_polynomial_forcing_exact_integration():
    # u' = f(t) with cubic f: one Gauss-2 step is exact (2s-1 = 3)
    n = 1
    coeffs = np.array([0.3, -1.2, 0.5, 2.0])  # ascending

    def f(t):
        return np.array([np.polyval(coeffs[::-1], t)])

    prob = LinearProblem(IdentityMass(n), ZeroOperator(n), forcing=f)
    t = build_tableau("gauss", 2)
    dt, t0 = 0.7, 0.3
    st = IRKStepper(t, prob, dt, outer_cfg=TIGHT)
    u1, _ = st.advance(np.array([0.1]), t0)
    anti = np.concatenate([[0.0], coeffs / np.arange(1, 5)])
    exact = 0.1 + np.polyval(anti[::-1], t0 + dt) - np.polyval(anti[::-1], t0)
    assert u1[0] == pytest.approx(exact, abs=1e-12)


def test_rotation_block_quadratic_solve():
    # L = dt-scaled rotation: solving Q_eta equals the exact rational
    # inverse evaluated at the eigenvalues +-i*omega
    om, dt = 1.9, 0.8
    Lm = np.array([[0.0, om], [-om, 0.0]])
    prob = LinearProblem(IdentityMass(2), SparseOperator(sp.csr_matrix(Lm)))
    t = build_tableau("gauss", 2)
    st = IRKStepper(t, prob, dt, outer_cfg=TIGHT)
    sd = spectral_decompose(t)
    eta, beta = sd.pairs[0].eta, sd.pairs[0].beta
    z = rng.standard_normal(2)
    y, _ = st.solve_factors(z)
    xi = om * dt  # Lhat has eigenvalues +- i xi
    q = (eta - 1j * xi) ** 2 + beta ** 2   # scalar symbol at eigenvalue i*xi
    # closed form: Q^{-1} = Re/Im structure of 1/q acting on the block
    Lhat = dt * Lm
    Q = ((eta * np.eye(2) - Lhat) @ (eta * np.eye(2) - Lhat)
         + beta ** 2 * np.eye(2))
    ref = np.linalg.solve(Q, z)
    assert np.linalg.norm(y - ref) < 1e-11 * np.linalg.norm(ref)
    # eigen-symbol cross-check: |eigs of Q| equal |q|
    assert np.sort(np.abs(np.linalg.eigvals(Q))) == pytest.approx(
        [abs(q), abs(q)], rel=1e-12)


@pytest.mark.parametrize("fam,s", [("Gauss", 1), ("Gauss", 3), ("Gauss", 5),
                                   ("RadauIIA", 2), ("RadauIIA", 5),
                                   ("LobattoIIIC", 3), ("LobattoIIIC", 4),
                                   ("SDIRK2L", 2), ("SDIRK3L", 3),
                                   ("BackwardEuler", 1)])
def test_oracle_equivalence_identity_mass(fam, s):
    n = 16
    prob = random_problem(n, seed=100 + s)
    tab = build_tableau(fam, s)
    st = IRKStepper(tab, prob, dt=0.21, outer_cfg=TIGHT)
    u = np.random.default_rng(s).standard_normal(n)
    uo = u.copy()
    tn = 0.0
    for _ in range(5):
        u, _ = st.advance(u, tn)
        uo = advance_oracle(tab, prob, uo, tn, 0.21)
        tn += 0.21
    assert np.linalg.norm(u - uo) < 1e-9 * np.linalg.norm(uo)


def test_oracle_equivalence_fem_mass():
    n = 24
    grid = GridSpec(dim=1, n=n)
    M = build_fem_mass_1d(grid)
    r = np.random.default_rng(9)
    L = SparseOperator(sp.csr_matrix(random_stable_matrix(n, r, scale=1.0)))
    v0 = r.standard_normal(n)
    prob = LinearProblem(M, L, forcing=lambda t: np.sin(t) * v0)
    for fam, s in [("Gauss", 2), ("RadauIIA", 3), ("LobattoIIIC", 2)]:
        tab = build_tableau(fam, s)
        st = IRKStepper(tab, prob, dt=0.15, outer_cfg=TIGHT)
        u = r.standard_normal(n)
        uo = u.copy()
        tn = 0.0
        for _ in range(5):
            u, _ = st.advance(u, tn)
            uo = advance_oracle(tab, prob, uo, tn, 0.15)
            tn += 0.15
        assert np.linalg.norm(u - uo) < 1e-9 * np.linalg.norm(uo), (fam, s)


def test_linearity_in_initial_data():
    n = 10
    prob = random_problem(n, seed=4, forcing=False)
    st = IRKStepper(build_tableau("radauIIA", 3), prob, dt=0.11,
                    outer_cfg=TIGHT)
    u = rng.standard_normal(n)
    a = -2.35
    u1, _ = st.advance(u, 0.0)
    u1s, _ = st.advance(a * u, 0.0)
    assert np.linalg.norm(u1s - a * u1) < 1e-12 * np.linalg.norm(a * u1)


def test_gamma_mode_switches_preconditioner_shift():
    n = 8
    prob = random_problem(n, seed=6, forcing=False)
    t = build_tableau("gauss", 2)
    sd = spectral_decompose(t)
    st_g = IRKStepper(t, prob, dt=0.1, gamma_mode="gamma_star")
    st_e = IRKStepper(t, prob, dt=0.1, gamma_mode="eta")
    (_i, _e, _b, gamma_g), = st_g.factor_summary()
    (_i, _e, _b, gamma_e), = st_e.factor_summary()
    assert gamma_g == pytest.approx(sd.pairs[0].gamma_star, rel=1e-14)
    assert gamma_e == pytest.approx(sd.pairs[0].eta, rel=1e-14)


def test_no_stage_storage():
    # stepper retains no (s, N)-sized state and the advance working set
    # does not grow with s beyond the fixed Horner workspace
    n = 200_000
    ones = np.ones(n)
    prob = LinearProblem(IdentityMass(n), ZeroOperator(n),
                         forcing=lambda t: ones)
    u = np.zeros(n)

    peaks = {}
    for s in (2, 5):
        st = IRKStepper(build_tableau("gauss", s), prob, dt=0.1,
                        outer_cfg=KrylovConfig(method="gmres", rel_tol=1e-10,
                                               restart=5))
        tracemalloc.start()
        st.advance(u, 0.0)
        _cur, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        peaks[s] = peak
        for attr in vars(st).values():
            assert not (isinstance(attr, np.ndarray) and attr.size >= st.tableau.s * n)
    # allow a few extra N-vectors of slack, nothing like (s2-s1)*N growth
    assert peaks[5] - peaks[2] < 6 * n * 8


def test_dt_must_be_positive():
    prob = random_problem(4, seed=8)
    with pytest.raises(ValueError):
        IRKStepper(build_tableau("gauss", 2), prob, dt=0.0)


def test_sdirk_advance_matches_oracle():
    n = 12
    prob = random_problem(n, seed=12)
    u = rng.standard_normal(n)
    for fam, s in [("BackwardEuler", 1), ("SDIRK2L", 2), ("SDIRK3L", 3)]:
        tab = build_tableau(fam, s)
        ua, _ = sdirk_advance(tab, prob, u, 0.0, 0.2, outer_cfg=TIGHT)
        uo = advance_oracle(tab, prob, u, 0.0, 0.2)
        assert np.linalg.norm(ua - uo) < 1e-11 * np.linalg.norm(uo), fam


def test_sdirk_advance_rejects_full_tableau():
    prob = random_problem(4, seed=13)
    with pytest.raises(ValueError):
        sdirk_advance(build_tableau("gauss", 2), prob,
                      np.zeros(4), 0.0, 0.1)


def test_block_prec_advance_matches_oracle():
    n = 16
    prob = random_problem(n, seed=14)
    u = rng.standard_normal(n)
    tab = build_tableau("gauss", 2)
    uo = advance_oracle(tab, prob, u, 0.0, 0.18)
    for variant in ("GSL", "LD"):
        ub, reps = block_prec_advance(tab, prob, u, 0.0, 0.18,
                                      variant=variant, outer_cfg=TIGHT)
        assert np.linalg.norm(ub - uo) < 1e-10 * np.linalg.norm(uo)
        assert reps[0].iterations > 0
        assert reps[0].preconditioner_applications > 0


def test_block_prec_s1_equals_backward_euler():
    n = 8
    prob = random_problem(n, seed=15)
    u = rng.standard_normal(n)
    tab = build_tableau("backwardEuler", 1)
    ub, _ = block_prec_advance(tab, prob, u, 0.0, 0.3, outer_cfg=TIGHT)
    uo = advance_oracle(tab, prob, u, 0.0, 0.3)
    assert np.linalg.norm(ub - uo) < 1e-11 * np.linalg.norm(uo)


def test_factor_solve_failure_carries_report():
    n = 32
    prob = random_problem(n, seed=16, scale=40.0, forcing=False)
    # non-dominant operator + relaxation: warned about, not rejected
    with pytest.warns(UserWarning, match="diagonally dominant"):
        st = IRKStepper(build_tableau("gauss", 2), prob, dt=1.0,
                        outer_cfg=KrylovConfig(method="gmres", rel_tol=1e-13,
                                               max_iters=2),
                        inner_kind="jacobi", inner_params={"sweeps": 1})
    with pytest.raises(FactorSolveFailure) as exc:
        st.advance(rng.standard_normal(n), 0.0)
    assert exc.value.factor_index == 0
    assert exc.value.report.iterations == 2
