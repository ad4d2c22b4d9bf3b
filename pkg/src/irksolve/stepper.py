"""The IRK time stepper.

One step works entirely on N-vectors (no stage storage):

1. assemble z = sum_i R_i(Lhat) (M^{-1} f_i), Horner on the adjugate-row
   polynomials, with f_i = f(t_n + c_i dt) + L u_n;
2. solve P_s(Lhat) y = z one real factor at a time: each conjugate pair
   is the quadratic M Q_eta y = M z solved by an outer Krylov iteration
   preconditioned with P M P, where P approximates the backward-Euler
   matrix (gamma M - dt L)^{-1} and gamma is the pair's optimal shift
   sqrt(eta^2 + beta^2) (or eta, for comparison runs); real eigenvalues
   contribute a single shifted solve;
3. update u_{n+1} = u_n + dt * y.

A dense direct-solve stepper over the full stage system is provided as
the reference oracle, along with SDIRK and block-preconditioned
baselines for iteration-count comparisons.
"""

import numpy as np

from .krylov import KrylovConfig, KrylovReport, solve
from .linop import (LinearOperator, MassOperator, Preconditioner,
                    build_inner_preconditioner, fov_upper_bound,
                    shifted_operator)
from .spectral import (QuadraticFactor, adjugate_row_polynomials,
                       factor_list, spectral_decompose)
from .tableaux import ButcherTableau

__all__ = [
    "LinearProblem",
    "IRKStepper",
    "advance_oracle",
    "sdirk_advance",
    "block_prec_advance",
    "FactorSolveFailure",
    "SingularSystem",
]


class FactorSolveFailure(RuntimeError):
    """An outer Krylov solve for one factor did not converge."""

    def __init__(self, factor_index: int, report: KrylovReport):
        super().__init__(f"factor {factor_index} did not converge "
                         f"(final residual {report.final_residual:.3e} "
                         f"after {report.iterations} iterations)")
        self.factor_index = factor_index
        self.report = report


class SingularSystem(RuntimeError):
    """Dense stage system is singular."""


def _is_symmetric(mat, tol=1e-12) -> bool:
    if mat is None:
        return False
    d = mat - mat.T
    if d.nnz == 0:
        return True
    scale = max(np.max(np.abs(mat.data)) if mat.nnz else 0.0, 1e-300)
    return np.max(np.abs(d.data)) <= tol * scale


class LinearProblem:
    """Method-of-lines system M u'(t) = L u + f(t).

    forcing maps t to an N-vector (None for f = 0); exact_solution, when
    available, maps t to the exact grid solution.  The left-half-plane
    condition W(L) <= 0 is verified once at construction.
    """

    def __init__(self, M: MassOperator, L: LinearOperator, forcing=None,
                 exact_solution=None, check_fov: bool = True):
        if M.n != L.n:
            raise ValueError(f"mass dim {M.n} != operator dim {L.n}")
        self.M = M
        self.L = L
        self.forcing = forcing
        self.exact_solution = exact_solution
        self.n = L.n
        if check_fov:
            scale = 1.0
            if L.mat is not None and L.mat.nnz:
                scale = max(1.0, float(np.max(np.abs(L.mat.data))))
            bound = fov_upper_bound(L)
            if bound > 1e-8 * scale:
                raise ValueError(
                    f"spatial operator violates W(L) <= 0: "
                    f"max Re W(L) = {bound:.3e}")
        self.is_symmetric = _is_symmetric(M.mat) and _is_symmetric(L.mat)

    def stage_rhs(self, t_stage: float, Lu_n: np.ndarray) -> np.ndarray:
        """f_i = f(t_stage) + L u_n, with L u_n computed once per step."""
        if self.forcing is None:
            return Lu_n.copy()
        return self.forcing(t_stage) + Lu_n


class _QuadraticSystem(LinearOperator):
    """Matrix-free M Q_eta = (eta M - dt L) M^{-1} (eta M - dt L) + beta^2 M;
    one mass solve per application."""

    def __init__(self, A_eta: LinearOperator, M: MassOperator, beta: float):
        super().__init__(A_eta.n)
        self._A = A_eta
        self._M = M
        self._b2 = beta * beta

    def apply(self, v):
        w = self._A.apply(self._M.solve(self._A.apply(v)))
        return w + self._b2 * self._M.apply(v)


class _SandwichPreconditioner(Preconditioner):
    """P M P, the conjugate-pair preconditioner for M Q_eta.  With exact
    P = (gamma M - dt L)^{-1} the preconditioned operator is exactly the
    P_gamma of the condition-number theory."""

    kind = "sandwich"

    def __init__(self, P: Preconditioner, M: MassOperator):
        super().__init__(P.n)
        self._P = P
        self._M = M

    @property
    def applications(self):
        return self._P.applications

    def apply(self, v):
        return self._P.apply(self._M.apply(self._P.apply(v)))


_EXACT_KINDS = ("exact_banded", "exact_sparse_lu")


class IRKStepper:
    """Advances M u' = L u + f with a fully implicit RK scheme, solving
    the stage problem by sequential conjugate-pair factor solves.

    gamma_mode selects the preconditioner shift for quadratic factors:
    "gamma_star" (optimal, default) or "eta" (the naive choice, kept for
    comparison experiments).  Per-factor preconditioners are factored
    once at construction and reused every step.
    """

    def __init__(self, tableau: ButcherTableau, problem: LinearProblem,
                 dt: float, outer_cfg: KrylovConfig | None = None,
                 inner_kind: str = "exact_sparse_lu",
                 inner_params: dict | None = None,
                 gamma_mode: str = "gamma_star"):
        if dt <= 0:
            raise ValueError("dt must be positive")
        if gamma_mode not in ("gamma_star", "eta"):
            raise ValueError(f"unknown gamma_mode {gamma_mode!r}")
        self.tableau = tableau
        self.problem = problem
        self.dt = float(dt)
        self.gamma_mode = gamma_mode
        self.inner_kind = inner_kind.replace("-", "_").lower()
        self.spectral = spectral_decompose(tableau)
        self.polys = adjugate_row_polynomials(tableau)
        self.factors = factor_list(self.spectral)

        params = dict(inner_params or {})
        M, L = problem.M, problem.L
        self._solvers = []
        for f in self.factors:
            gamma = f.gamma_star if gamma_mode == "gamma_star" else f.eta
            A_eta = shifted_operator(f.eta, self.dt, M, L)
            A_gamma = A_eta if gamma == f.eta else \
                shifted_operator(gamma, self.dt, M, L)
            inner = build_inner_preconditioner(self.inner_kind, A_gamma,
                                               **params)
            if isinstance(f, QuadraticFactor):
                op = _QuadraticSystem(A_eta, M, f.beta)
                precond = _SandwichPreconditioner(inner, M)
            else:
                op = A_eta
                precond = inner
            self._solvers.append((f, gamma, op, precond))

        self.outer_cfg = self._resolve_cfg(outer_cfg)

    def _resolve_cfg(self, cfg):
        if cfg is not None and cfg.method != "auto":
            return cfg
        if self.inner_kind == "inner_krylov":
            method = "fgmres"
        elif self.problem.is_symmetric and self.inner_kind in _EXACT_KINDS:
            method = "cg"
        else:
            method = "gmres"
        if cfg is None:
            return KrylovConfig(method=method)
        return KrylovConfig(method=method, rel_tol=cfg.rel_tol,
                            abs_tol=cfg.abs_tol, max_iters=cfg.max_iters,
                            restart=cfg.restart)

    # -- algorithm stages ------------------------------------------------

    def _lhat(self, v):
        return self.dt * self.problem.M.solve(self.problem.L.apply(v))

    def assemble_rhs_z(self, u_n: np.ndarray, t_n: float) -> np.ndarray:
        """z = sum_i R_i(Lhat)(M^{-1} f_i) by Horner; s-1 applications of
        Lhat per stage."""
        t = self.tableau
        prob = self.problem
        Lu_n = prob.L.apply(u_n)
        R = self.polys.R
        s = t.s
        z = np.zeros(prob.n)
        for i in range(s):
            f_i = prob.stage_rhs(t_n + self.dt * t.c0[i], Lu_n)
            g = prob.M.solve(f_i)
            w = R[i, s - 1] * g
            for k in range(s - 2, -1, -1):
                w = self._lhat(w) + R[i, k] * g
            z += w
        return z

    def solve_factors(self, z: np.ndarray):
        """y = P_s(Lhat)^{-1} z: each factor fully converged before the
        next, quadratic pairs via M Q_eta y = M z."""
        reports = []
        cur = z
        for idx, (_f, _gamma, op, precond) in enumerate(self._solvers):
            rhs = self.problem.M.apply(cur)
            y, rep = solve(op, rhs, precond, self.outer_cfg)
            reports.append(rep)
            if not rep.converged:
                raise FactorSolveFailure(idx, rep)
            cur = y
        return cur, reports

    def advance(self, u_n: np.ndarray, t_n: float):
        """One step: returns (u_{n+1}, per-factor Krylov reports)."""
        z = self.assemble_rhs_z(u_n, t_n)
        y, reports = self.solve_factors(z)
        return u_n + self.dt * y, reports

    def factor_summary(self):
        """(index, eta, beta, gamma) per factor, in solve order."""
        out = []
        for idx, (f, gamma, _op, _pc) in enumerate(self._solvers):
            beta = f.beta if isinstance(f, QuadraticFactor) else 0.0
            out.append((idx, f.eta, beta, gamma))
        return out


# ----------------------------------------------------------------------
# Reference and baseline steppers

def advance_oracle(tableau: ButcherTableau, problem: LinearProblem,
                   u_n: np.ndarray, t_n: float, dt: float) -> np.ndarray:
    """Dense direct solve of the full (N s x N s) stage system, then the
    standard update u + dt * sum b_i k_i.  Reference for equivalence
    tests; no preconditioning, no iteration."""
    s = tableau.s
    n = problem.n
    if n * s > 4096:
        raise ValueError(f"dense oracle limited to N*s <= 4096, got {n * s}")
    Md = problem.M.to_dense()
    Ld = problem.L.to_dense()
    sys = np.kron(np.eye(s), Md) - dt * np.kron(tableau.A0, Ld)
    Lu = Ld @ u_n
    rhs = np.concatenate([problem.stage_rhs(t_n + dt * c, Lu)
                          for c in tableau.c0])
    try:
        k = np.linalg.solve(sys, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    k = k.reshape(s, n)
    return u_n + dt * (tableau.b0 @ k)


def sdirk_advance(tableau: ButcherTableau, problem: LinearProblem,
                  u_n: np.ndarray, t_n: float, dt: float,
                  inner_kind: str = "exact_sparse_lu",
                  inner_params: dict | None = None,
                  outer_cfg: KrylovConfig | None = None,
                  _cache: dict | None = None):
    """Stage-by-stage substitution for lower-triangular A0: each stage is
    one shifted solve (M - dt a_ii L) k_i = f_i + dt sum_{j<i} a_ij L k_j,
    run as ((1/a_ii) M - dt L) k_i = f_i / a_ii so it reuses the
    backward-Euler preconditioner machinery with gamma = 1/a_ii."""
    if not tableau.is_lower_triangular:
        raise ValueError("sdirk_advance requires a lower-triangular tableau")
    s = tableau.s
    prob = problem
    cache = _cache if _cache is not None else {}

    if outer_cfg is None or outer_cfg.method == "auto":
        kind = inner_kind.replace("-", "_").lower()
        method = "cg" if (prob.is_symmetric and kind in _EXACT_KINDS) else "gmres"
        base = outer_cfg or KrylovConfig()
        outer_cfg = KrylovConfig(method=method, rel_tol=base.rel_tol,
                                 abs_tol=base.abs_tol, max_iters=base.max_iters,
                                 restart=base.restart)

    Lu_n = prob.L.apply(u_n)
    Lk = []
    update = np.zeros(prob.n)
    reports = []
    for i in range(s):
        a_ii = tableau.A0[i, i]
        rhs = prob.stage_rhs(t_n + dt * tableau.c0[i], Lu_n)
        if i:
            rhs = rhs + dt * sum(tableau.A0[i, j] * Lk[j] for j in range(i))
        key = round(a_ii, 14)
        if key not in cache:
            shifted = shifted_operator(1.0 / a_ii, dt, prob.M, prob.L)
            pc = build_inner_preconditioner(inner_kind, shifted,
                                            **(inner_params or {}))
            cache[key] = (shifted, pc)
        shifted, pc = cache[key]
        k_i, rep = solve(shifted, rhs / a_ii, pc, outer_cfg)
        reports.append(rep)
        if not rep.converged:
            raise FactorSolveFailure(i, rep)
        Lk.append(prob.L.apply(k_i))
        update += tableau.b0[i] * k_i
    return u_n + dt * update, reports


class _StageSystem(LinearOperator):
    """The coupled operator (I x M - dt A0 x L) acting on stacked stages."""

    def __init__(self, tableau, problem, dt):
        super().__init__(tableau.s * problem.n)
        self._t = tableau
        self._p = problem
        self._dt = dt

    def apply(self, v):
        s, n = self._t.s, self._p.n
        K = v.reshape(s, n)
        LK = np.array([self._p.L.apply(K[j]) for j in range(s)])
        out = np.empty_like(K)
        for i in range(s):
            out[i] = self._p.M.apply(K[i]) - self._dt * (self._t.A0[i] @ LK)
        return out.reshape(-1)


class _BlockTriangularPreconditioner(Preconditioner):
    """Forward substitution with (I x M - dt T x L) for lower-triangular
    T, diagonal blocks applied via per-stage inner preconditioners."""

    def __init__(self, T, problem, dt, inner_kind, inner_params):
        s = T.shape[0]
        super().__init__(s * problem.n)
        self._T = T
        self._p = problem
        self._dt = dt
        self._inner = []
        cache = {}
        for i in range(s):
            key = round(T[i, i], 14)
            if key not in cache:
                shifted = shifted_operator(1.0 / T[i, i], dt, problem.M,
                                           problem.L)
                cache[key] = build_inner_preconditioner(
                    inner_kind, shifted, **(inner_params or {}))
            self._inner.append(cache[key])
        self._distinct = list(cache.values())

    @property
    def applications(self):
        return sum(pc.applications for pc in self._distinct)

    def apply(self, v):
        s, n = self._T.shape[0], self._p.n
        R = v.reshape(s, n)
        X = np.zeros_like(R)
        LX = np.zeros_like(R)
        for i in range(s):
            r = R[i].copy()
            for j in range(i):
                r += self._dt * self._T[i, j] * LX[j]
            # (M - dt T_ii L) x = r  solved as ((1/T_ii) M - dt L) x = r/T_ii
            X[i] = self._inner[i].apply(r / self._T[i, i])
            if i + 1 < s:
                LX[i] = self._p.L.apply(X[i])
        return X.reshape(-1)


def _ldu_lower(A: np.ndarray) -> np.ndarray:
    """The L*D part of the (pivot-free) LDU factorization of A."""
    s = A.shape[0]
    U = A.astype(float).copy()
    Lo = np.eye(s)
    for k in range(s):
        piv = U[k, k]
        if piv == 0.0:
            raise SingularSystem("zero pivot in LDU of A0")
        for i in range(k + 1, s):
            m = U[i, k] / piv
            Lo[i, k] = m
            U[i] -= m * U[k]
    return Lo @ np.diag(np.diag(U))


def block_prec_advance(tableau: ButcherTableau, problem: LinearProblem,
                       u_n: np.ndarray, t_n: float, dt: float,
                       variant: str = "GSL",
                       inner_kind: str = "exact_sparse_lu",
                       inner_params: dict | None = None,
                       outer_cfg: KrylovConfig | None = None,
                       _cache: dict | None = None):
    """Baseline: GMRES on the full stage system, preconditioned by a
    block lower-triangular splitting of A0 (GSL keeps the lower triangle
    of A0; LD uses the L*D part of its LDU factorization)."""
    variant = variant.upper()
    if variant not in ("GSL", "LD"):
        raise ValueError(f"unknown block preconditioner variant {variant!r}")

    cache = _cache if _cache is not None else {}
    if "ops" not in cache:
        T = np.tril(tableau.A0) if variant == "GSL" else _ldu_lower(tableau.A0)
        sysop = _StageSystem(tableau, problem, dt)
        prec = _BlockTriangularPreconditioner(T, problem, dt, inner_kind,
                                              inner_params)
        cache["ops"] = (sysop, prec)
    sysop, prec = cache["ops"]

    if outer_cfg is None or outer_cfg.method == "auto":
        base = outer_cfg or KrylovConfig()
        outer_cfg = KrylovConfig(method="gmres", rel_tol=base.rel_tol,
                                 abs_tol=base.abs_tol, max_iters=base.max_iters,
                                 restart=base.restart)

    Lu_n = problem.L.apply(u_n)
    rhs = np.concatenate([problem.stage_rhs(t_n + dt * c, Lu_n)
                          for c in tableau.c0])
    k, rep = solve(sysop, rhs, prec, outer_cfg)
    if not rep.converged:
        raise FactorSolveFailure(0, rep)
    K = k.reshape(tableau.s, problem.n)
    return u_n + dt * (tableau.b0 @ K), [rep]
