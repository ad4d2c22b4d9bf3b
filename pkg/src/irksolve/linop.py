"""Operator, mass-matrix and inner-preconditioner abstractions.

The scaled operator Lhat = dt * M^{-1} L is never formed; every
polynomial evaluation composes M.solve with L.apply.  Inner
preconditioners approximate (gamma*M - dt*L)^{-1} and carry an
application counter so Krylov reports can account for every
preconditioner application, including those inside inner iterations.
"""

import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "LinearOperator",
    "SparseOperator",
    "ZeroOperator",
    "MassOperator",
    "IdentityMass",
    "SparseMass",
    "shifted_operator",
    "build_inner_preconditioner",
    "fov_upper_bound",
    "Preconditioner",
    "IdentityPreconditioner",
    "DimensionMismatch",
    "FactorizationFailure",
    "EigenFailure",
]


class DimensionMismatch(ValueError):
    """Operator/vector dimensions do not agree."""


class FactorizationFailure(RuntimeError):
    """LU factorization hit a (near-)zero pivot."""


class EigenFailure(RuntimeError):
    """Symmetric eigensolve did not converge."""


class LinearOperator:
    """Square linear operator of dimension n.

    Subclasses implement apply(v); mat is the assembled sparse form when
    one exists (None for purely matrix-free operators).
    """

    def __init__(self, n: int):
        self.n = int(n)
        self.mat = None

    def apply(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        if self.mat is not None:
            return np.asarray(self.mat.todense())
        return np.column_stack([self.apply(e) for e in np.eye(self.n)])


class SparseOperator(LinearOperator):
    """Operator backed by an assembled scipy sparse matrix."""

    def __init__(self, mat):
        mat = sp.csr_matrix(mat)
        if mat.shape[0] != mat.shape[1]:
            raise DimensionMismatch(f"expected square matrix, got {mat.shape}")
        super().__init__(mat.shape[0])
        self.mat = mat

    def apply(self, v):
        return self.mat @ v


class ZeroOperator(LinearOperator):
    def __init__(self, n: int):
        super().__init__(n)
        self.mat = sp.csr_matrix((n, n))

    def apply(self, v):
        return np.zeros_like(v)


class ComposedOperator(LinearOperator):
    """Matrix-free wrapper around a callable."""

    def __init__(self, n: int, fn):
        super().__init__(n)
        self._fn = fn

    def apply(self, v):
        return self._fn(v)


# ----------------------------------------------------------------------
# Mass operators

class MassOperator(LinearOperator):
    """Mass matrix with an exact solve."""

    def solve(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_identity(self) -> bool:
        return False


class IdentityMass(MassOperator):
    def __init__(self, n: int):
        super().__init__(n)
        self.mat = sp.identity(n, format="csr")

    def apply(self, v):
        return v

    def solve(self, v):
        return v

    @property
    def is_identity(self):
        return True


class SparseMass(MassOperator):
    """Assembled sparse SPD mass matrix; solve via a single exact sparse
    LU factorization (tridiagonal/cyclic matrices factor without fill
    worth worrying about at desk scale)."""

    def __init__(self, mat):
        mat = sp.csr_matrix(mat)
        super().__init__(mat.shape[0])
        self.mat = mat
        self._lu = spla.splu(sp.csc_matrix(mat))

    def apply(self, v):
        return self.mat @ v

    def solve(self, v):
        return self._lu.solve(v)


# ----------------------------------------------------------------------

def shifted_operator(gamma: float, dt: float, M: MassOperator,
                     L: LinearOperator) -> LinearOperator:
    """The backward-Euler-type operator gamma*M - dt*L.

    Assembled sparse when both inputs expose a sparse form, composed
    matrix-free otherwise.
    """
    if M.n != L.n:
        raise DimensionMismatch(f"mass dim {M.n} != operator dim {L.n}")
    if M.mat is not None and L.mat is not None:
        return SparseOperator(gamma * M.mat - dt * L.mat)
    return ComposedOperator(L.n, lambda v: gamma * M.apply(v) - dt * L.apply(v))


# ----------------------------------------------------------------------
# Inner preconditioners

class Preconditioner:
    """Approximation of op^{-1} with a leaf application counter."""

    kind = "abstract"

    def __init__(self, n: int):
        self.n = n
        self._count = 0

    @property
    def applications(self) -> int:
        return self._count

    def apply(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class IdentityPreconditioner(Preconditioner):
    kind = "identity"

    def apply(self, v):
        self._count += 1
        return v


class _ExactLU(Preconditioner):
    """Exact solve via sparse LU; the two kinds differ only in pivoting
    policy (none for banded 1D shifts, partial for general 2D)."""

    def __init__(self, op: LinearOperator, pivot: bool):
        super().__init__(op.n)
        if op.mat is None:
            raise FactorizationFailure("exact factorization needs an assembled matrix")
        A = sp.csc_matrix(op.mat)
        try:
            if pivot:
                self._lu = spla.splu(A)
            else:
                # natural ordering, diagonal pivots: a banded LU
                self._lu = spla.splu(A, permc_spec="NATURAL",
                                     diag_pivot_thresh=0.0)
        except RuntimeError as exc:
            raise FactorizationFailure(str(exc)) from exc
        udiag = np.abs(self._lu.U.diagonal())
        row_norm = np.abs(A).sum(axis=1).max()
        if udiag.min() <= 1e-14 * row_norm:
            raise FactorizationFailure(
                f"near-zero pivot {udiag.min():.3e} (row norm {row_norm:.3e})")

    def apply(self, v):
        self._count += 1
        return self._lu.solve(v)


class ExactBanded(_ExactLU):
    kind = "exact_banded"

    def __init__(self, op):
        super().__init__(op, pivot=False)


class ExactSparseLU(_ExactLU):
    kind = "exact_sparse_lu"

    def __init__(self, op):
        super().__init__(op, pivot=True)


def _warn_if_not_diagonally_dominant(mat, kind):
    d = np.abs(mat.diagonal())
    off = np.abs(mat).sum(axis=1).A1 - d
    if np.any(d < off - 1e-14 * (d + off)):
        warnings.warn(f"{kind}: operator is not diagonally dominant; "
                      "relaxation may be a weak preconditioner", stacklevel=3)


class Jacobi(Preconditioner):
    """k weighted-Jacobi sweeps (weight 1) from a zero initial guess."""

    kind = "jacobi"

    def __init__(self, op: LinearOperator, sweeps: int = 1):
        super().__init__(op.n)
        if op.mat is None:
            raise ValueError("Jacobi needs an assembled matrix")
        self.sweeps = int(sweeps)
        self._op = op
        self._dinv = 1.0 / op.mat.diagonal()
        _warn_if_not_diagonally_dominant(op.mat, self.kind)

    def apply(self, v):
        self._count += self.sweeps
        x = self._dinv * v
        for _ in range(self.sweeps - 1):
            x = x + self._dinv * (v - self._op.apply(x))
        return x


class GaussSeidel(Preconditioner):
    """k forward Gauss-Seidel sweeps from a zero initial guess."""

    kind = "gauss_seidel"

    def __init__(self, op: LinearOperator, sweeps: int = 1):
        super().__init__(op.n)
        if op.mat is None:
            raise ValueError("Gauss-Seidel needs an assembled matrix")
        self.sweeps = int(sweeps)
        self._op = op
        self._lower = sp.csr_matrix(sp.tril(op.mat, k=0))
        _warn_if_not_diagonally_dominant(op.mat, self.kind)

    def apply(self, v):
        self._count += self.sweeps
        x = spla.spsolve_triangular(self._lower, v, lower=True)
        for _ in range(self.sweeps - 1):
            r = v - self._op.apply(x)
            x = x + spla.spsolve_triangular(self._lower, r, lower=True)
        return x


class InnerKrylov(Preconditioner):
    """GMRES run to a fixed tolerance as a (variable) preconditioner,
    optionally accelerating a relaxation preconditioner.  Leaf
    application counts delegate to the wrapped preconditioner."""

    kind = "inner_krylov"

    def __init__(self, op: LinearOperator, tol: float = 1e-2,
                 maxit: int = 100, base: Preconditioner | None = None):
        super().__init__(op.n)
        self._op = op
        self.tol = float(tol)
        self.maxit = int(maxit)
        self.base = base

    @property
    def applications(self):
        return self.base.applications if self.base is not None else self._count

    def apply(self, v):
        # local import: krylov depends on this module for the counter protocol
        from .krylov import KrylovConfig, solve

        cfg = KrylovConfig(method="gmres", rel_tol=self.tol, abs_tol=0.0,
                           max_iters=self.maxit, restart=self.maxit)
        x, rep = solve(self._op, v, self.base, cfg)
        if self.base is None:
            self._count += rep.iterations
        return x


def build_inner_preconditioner(kind: str, op: LinearOperator,
                               **params) -> Preconditioner:
    """Build a preconditioner of the requested kind for op.

    kind: exact_banded | exact_sparse_lu | jacobi | gauss_seidel |
    inner_krylov.  Relaxation kinds take sweeps=k; inner_krylov takes
    tol, maxit and an optional base preconditioner.
    """
    key = kind.replace("-", "_").lower()
    if key == "exact_banded":
        return ExactBanded(op)
    if key == "exact_sparse_lu":
        return ExactSparseLU(op)
    if key == "jacobi":
        return Jacobi(op, sweeps=params.get("sweeps", 1))
    if key in ("gauss_seidel", "gs"):
        return GaussSeidel(op, sweeps=params.get("sweeps", 1))
    if key == "inner_krylov":
        return InnerKrylov(op, tol=params.get("tol", 1e-2),
                           maxit=params.get("maxit", 100),
                           base=params.get("base"))
    raise ValueError(f"unknown preconditioner kind {kind!r}")


# ----------------------------------------------------------------------

def fov_upper_bound(L: LinearOperator, dense_limit: int = 1024) -> float:
    """max Re W(L) for real L: the largest eigenvalue of (L + L^T)/2.

    Nonpositive return certifies that the field of values lies in the
    closed left half plane.  Dense solve up to dense_limit; beyond that,
    Lanczos on the assembled symmetric part, shifted positive so the
    ARPACK relative tolerance is meaningful when the true answer is 0.
    """
    if L.mat is not None:
        S = (L.mat + L.mat.T) * 0.5
        scale = np.max(np.abs(S.data)) if S.nnz else 0.0
        if scale == 0.0:
            return 0.0
        if L.n <= dense_limit:
            return float(np.linalg.eigvalsh(np.asarray(S.todense()))[-1])
        shift = float(np.abs(S).sum(axis=1).max())  # >= rho(S)
        try:
            val = spla.eigsh(S + shift * sp.identity(L.n), k=1, which="LA",
                             maxiter=10000, tol=1e-12,
                             return_eigenvectors=False)
        except (spla.ArpackNoConvergence, spla.ArpackError) as exc:
            raise EigenFailure(str(exc)) from exc
        return float(val[0]) - shift
    if L.n > dense_limit:
        raise EigenFailure(
            f"matrix-free operator of dim {L.n} > {dense_limit}: "
            "no sparse symmetric part available")
    A = L.to_dense()
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[-1])
