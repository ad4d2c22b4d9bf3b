"""Preconditioned Krylov solvers with full iteration accounting.

CG for SPD pairs, restarted GMRES, and flexible GMRES (required when
the preconditioner itself runs an inner Krylov loop).  GMRES is
right-preconditioned so the in-iteration Givens estimate tracks the
true residual rather than a preconditioner-scaled one; every solve
still recomputes the true residual once at exit and bases the
convergence flag on that, never on the in-iteration estimate.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["KrylovConfig", "KrylovReport", "solve", "Breakdown"]

BREAKDOWN_TOL = 1e-30


class Breakdown(RuntimeError):
    """Zero denominator in a Krylov recurrence."""


@dataclass
class KrylovConfig:
    method: str = "gmres"        # cg | gmres | fgmres
    rel_tol: float = 1e-12
    abs_tol: float = 0.0
    max_iters: int = 2000
    restart: int = 30

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.restart < 1:
            raise ValueError("restart must be >= 1")


@dataclass
class KrylovReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    preconditioner_applications: int = 0
    final_residual: float = 0.0


def _apply_precond(precond, v):
    if precond is None:
        return v
    return precond.apply(v)


def _symmetry_probe(op, rng_seed=0, tol=1e-8):
    """Cheap <Au,v> vs <u,Av> check on 3 random pairs before running CG."""
    rng = np.random.default_rng(rng_seed)
    for _ in range(3):
        u = rng.standard_normal(op.n)
        v = rng.standard_normal(op.n)
        au = op.apply(u)
        av = op.apply(v)
        scale = np.linalg.norm(au) * np.linalg.norm(v) + \
            np.linalg.norm(av) * np.linalg.norm(u) + 1e-300
        if abs(au @ v - u @ av) > tol * scale:
            raise ValueError("CG requested on an operator that fails the "
                             "symmetry probe")


def solve(op, b, precond, cfg: KrylovConfig, x0=None):
    """Solve op x = b.  Returns (x, KrylovReport).

    precond approximates op^{-1} (None for unpreconditioned); for CG it
    must be SPD.  The report counts every leaf preconditioner
    application performed during the solve.
    """
    b = np.asarray(b, dtype=float)
    if b.shape[0] != op.n:
        raise ValueError(f"rhs of dim {b.shape[0]} for operator of dim {op.n}")
    count0 = precond.applications if precond is not None else 0

    method = cfg.method.lower()
    if method == "cg":
        _symmetry_probe(op)
        x, rep = _cg(op, b, precond, cfg, x0)
    elif method == "gmres":
        x, rep = _gmres(op, b, precond, cfg, x0, flexible=False)
    elif method == "fgmres":
        x, rep = _gmres(op, b, precond, cfg, x0, flexible=True)
    else:
        raise ValueError(f"unknown Krylov method {cfg.method!r}")

    # true residual, recomputed once
    rtrue = float(np.linalg.norm(b - op.apply(x)))
    bnorm = float(np.linalg.norm(b))
    rep.final_residual = rtrue
    rep.converged = rtrue <= cfg.rel_tol * bnorm + cfg.abs_tol
    if precond is not None:
        rep.preconditioner_applications = precond.applications - count0
    return x, rep


def _cg(op, b, precond, cfg, x0):
    rep = KrylovReport()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - op.apply(x) if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    target = cfg.rel_tol * bnorm + cfg.abs_tol
    rnorm = np.linalg.norm(r)
    rep.residual_history.append(float(rnorm))
    if rnorm <= target:
        return x, rep

    z = _apply_precond(precond, r)
    p = z.copy()
    rz = r @ z
    for _ in range(cfg.max_iters):
        q = op.apply(p)
        pq = p @ q
        if abs(pq) < BREAKDOWN_TOL:
            raise Breakdown("p^T A p ~ 0 in CG")
        alpha = rz / pq
        x = x + alpha * p
        r = r - alpha * q
        rep.iterations += 1
        rnorm = np.linalg.norm(r)
        rep.residual_history.append(float(rnorm))
        if rnorm <= target:
            break
        z = _apply_precond(precond, r)
        rz_new = r @ z
        if abs(rz) < BREAKDOWN_TOL:
            raise Breakdown("r^T z ~ 0 in CG")
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, rep


def _gmres(op, b, precond, cfg, x0, flexible):
    """Restarted GMRES, right-preconditioned, so the monitored Givens
    residual estimates the true residual regardless of preconditioner
    scaling.  The flexible variant stores the preconditioned directions
    and tolerates a preconditioner that changes between iterations."""
    rep = KrylovReport()
    n = op.n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    target = cfg.rel_tol * np.linalg.norm(b) + cfg.abs_tol

    first_cycle = True
    while True:
        r = b - op.apply(x) if (rep.iterations or x0 is not None) else b.copy()
        beta = np.linalg.norm(r)
        if first_cycle:
            rep.residual_history.append(float(beta))
            first_cycle = False
        if beta <= target or rep.iterations >= cfg.max_iters:
            return x, rep

        m = cfg.restart
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n)) if flexible else None
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta

        j = 0
        while j < m and rep.iterations < cfg.max_iters:
            z = _apply_precond(precond, V[j])
            if flexible:
                Z[j] = z
            w = op.apply(z)
            for i in range(j + 1):
                H[i, j] = V[i] @ w
                w = w - H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)

            # apply accumulated Givens rotations, then generate a new one
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom < BREAKDOWN_TOL:
                raise Breakdown("Hessenberg column vanished in GMRES")
            cs[j] = H[j, j] / denom
            sn[j] = H[j + 1, j] / denom
            H[j, j] = denom
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]

            rep.iterations += 1
            res = abs(g[j + 1])
            rep.residual_history.append(float(res))

            happy = H[j + 1, j] < BREAKDOWN_TOL
            if not happy:
                V[j + 1] = w / H[j + 1, j]
            j += 1
            if res <= target or happy:
                break

        # solve the least-squares problem and update x
        y = np.zeros(j)
        for i in range(j - 1, -1, -1):
            y[i] = (g[i] - H[i, i + 1:j] @ y[i + 1:j]) / H[i, i]
        if flexible:
            x = x + Z[:j].T @ y
        else:
            x = x + _apply_precond(precond, V[:j].T @ y)

        if rep.residual_history[-1] <= target or rep.iterations >= cfg.max_iters:
            return x, rep
