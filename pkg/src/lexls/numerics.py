"""Sparse containers and the factorization/solve primitives.

The sparse type is a thin validated wrapper around a scipy CSC matrix;
factorizations densify (desk-scale problems throughout, and the turnback
callers only ever factorize narrow column subsets).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from .errors import DegenerateMatrix, NotPositiveDefinite, SingularTriangular

DEFAULT_PIVOT_TOL = 1e-10


class SparseMatrix:
    """Compressed-column sparse matrix with finite entries and no duplicates."""

    __slots__ = ("csc",)

    def __init__(self, data):
        if isinstance(data, SparseMatrix):
            csc = data.csc
        elif sp.issparse(data):
            csc = data.tocsc()
        else:
            csc = sp.csc_matrix(np.asarray(data, dtype=float))
        csc.sum_duplicates()
        if csc.nnz and not np.all(np.isfinite(csc.data)):
            raise ValueError("sparse matrix holds non-finite entries")
        self.csc = csc

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=shape))

    @property
    def rows(self):
        return self.csc.shape[0]

    @property
    def cols(self):
        return self.csc.shape[1]

    @property
    def shape(self):
        return self.csc.shape

    def nnz(self):
        return int(self.csc.nnz)

    def toarray(self):
        return self.csc.toarray()

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return SparseMatrix(self.csc @ other.csc)
        out = self.csc @ other
        return out

    def transpose(self):
        return SparseMatrix(self.csc.T)

    def take_columns(self, idx):
        return SparseMatrix(self.csc[:, idx])

    def __repr__(self):
        return f"SparseMatrix({self.rows}x{self.cols}, nnz={self.nnz()})"


def as_csc(A):
    """Coerce SparseMatrix / scipy / dense input to a scipy CSC matrix."""
    if isinstance(A, SparseMatrix):
        return A.csc
    if sp.issparse(A):
        return A.tocsc()
    return sp.csc_matrix(np.atleast_2d(np.asarray(A, dtype=float)))


def as_dense(A):
    if isinstance(A, SparseMatrix):
        return A.toarray()
    if sp.issparse(A):
        return A.toarray()
    return np.atleast_2d(np.asarray(A, dtype=float))


@dataclass
class PermutedLU:
    """Packed complete-pivoting factors with P A Q = L U and numerical rank."""

    lu: np.ndarray
    row_perm: np.ndarray
    col_perm: np.ndarray
    numerical_rank: int
    pivot_tol: float

    @property
    def L(self):
        m = self.lu.shape[0]
        r = self.numerical_rank
        return np.tril(self.lu[:, :r], -1) + np.eye(m, r)

    @property
    def U(self):
        r = self.numerical_rank
        return np.triu(self.lu[:r, :])

    def apply_forward(self, b):
        """L^{-1} P b for a full-height right-hand side."""
        return K.forward_eliminate(self.lu, self.row_perm, self.numerical_rank,
                                   np.asarray(b, dtype=float))

    def solve_basic(self, b):
        """Solve A x = b on the leading rank-sized subsystem; x is scattered
        to the permuted column positions, zero elsewhere."""
        r = self.numerical_rank
        y = self.apply_forward(b)
        xq = K.back_substitute(np.ascontiguousarray(self.lu[:r, :r]), y[:r])
        x = np.zeros(self.lu.shape[1])
        x[self.col_perm[:r]] = xq
        return x


def lu_rank_revealing(A, pivot_tol=DEFAULT_PIVOT_TOL):
    """Rank-revealing LU with threshold complete pivoting.

    Densifies the input; the acceptance-scale problems stay small and the
    turnback drivers only factorize banded column subsets.
    """
    if not 0.0 < pivot_tol < 1.0:
        raise ValueError("pivot_tol must lie in (0, 1)")
    dense = as_dense(A)
    m, n = dense.shape
    if m == 0 or n == 0:
        raise DegenerateMatrix(f"matrix with zero extent: {m}x{n}")
    if not np.all(np.isfinite(dense)):
        raise ValueError("matrix holds non-finite entries")
    lu = np.ascontiguousarray(dense, dtype=float).copy()
    p, q, r = K.lu_complete(lu, float(pivot_tol))
    return PermutedLU(lu=lu, row_perm=p, col_perm=q, numerical_rank=int(r),
                      pivot_tol=float(pivot_tol))


def solve_upper(U1, rhs, pivot_floor=1e-13):
    """Back substitution for a square nonsingular upper-triangular system."""
    U = as_dense(U1)
    m, n = U.shape
    if m != n:
        raise ValueError(f"upper-triangular solve needs a square matrix, got {m}x{n}")
    rhs = np.asarray(rhs, dtype=float)
    diag = np.abs(np.diag(U))
    floor = pivot_floor * max(1.0, diag.max() if n else 1.0)
    if n and diag.min() < floor:
        raise SingularTriangular(f"diagonal entry below pivot floor {floor:g}")
    return K.back_substitute(np.ascontiguousarray(U, dtype=float), rhs)


@dataclass
class SpdFactor:
    """Cholesky factor of a symmetric positive-definite matrix."""

    L: np.ndarray

    @property
    def smallest_pivot(self):
        return float(np.diag(self.L).min()) if self.L.shape[0] else np.inf


def factor_spd(C):
    dense = as_dense(C)
    m, n = dense.shape
    if m != n:
        raise ValueError(f"SPD factorization needs a square matrix, got {m}x{n}")
    if m and np.abs(dense - dense.T).max() > 1e-8 * (1.0 + np.abs(dense).max()):
        raise ValueError("matrix is not symmetric")
    L, ok = K.chol_factor(np.ascontiguousarray(dense, dtype=float))
    if not ok:
        raise NotPositiveDefinite("nonpositive pivot during Cholesky")
    return SpdFactor(L=L)


def solve_spd(factor, r):
    return K.chol_solve(factor.L, np.asarray(r, dtype=float))


@dataclass
class CgResult:
    """Outcome of the conjugate-gradient least-squares solve."""

    lam: np.ndarray
    converged: bool
    iterations: int
    residual: float
    status: str = field(default="converged")


def cg_least_squares(A, b, precond=None, tol=1e-10, max_iter=None):
    """Minimize ||A^T lam - b||_2 by CGLS on the normal equations.

    ``precond`` is an optional unit-lower-triangular factor (rows of A) used
    as a split preconditioner of A A^T; it is applied only when A has full
    row rank.  Non-convergence is reported in the result, never raised.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    Ac = as_csc(A)
    m, n = Ac.shape
    b = np.asarray(b, dtype=float)
    if max_iter is None:
        max_iter = 2 * max(m, n)

    use_pre = precond is not None and precond.shape == (m, m)
    Lp = np.ascontiguousarray(precond, dtype=float) if use_pre else None
    AT = Ac.T.tocsc()

    def op(y):  # A^T L^{-T} y
        if use_pre:
            y = _solve_lower_t(Lp, y)
        return AT @ y

    def op_t(r):  # L^{-1} A r
        y = Ac @ r
        if use_pre:
            y = _solve_lower(Lp, y)
        return y

    lam_y = np.zeros(m)
    r = b - op(lam_y)
    s = op_t(r)
    norm_s0 = np.linalg.norm(s)
    if norm_s0 == 0.0 or max_iter == 0:
        status = "converged" if norm_s0 == 0.0 else "not_converged"
        lam = _solve_lower_t(Lp, lam_y) if use_pre else lam_y
        return CgResult(lam=lam, converged=norm_s0 == 0.0, iterations=0,
                        residual=float(norm_s0), status=status)
    p = s.copy()
    gamma = norm_s0 ** 2
    it = 0
    norm_s = norm_s0
    while it < max_iter:
        q = op(p)
        qq = q @ q
        if qq == 0.0:
            break
        a = gamma / qq
        lam_y = lam_y + a * p
        r = r - a * q
        s = op_t(r)
        gamma_new = s @ s
        norm_s = np.sqrt(gamma_new)
        it += 1
        if norm_s <= tol * norm_s0:
            break
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    lam = _solve_lower_t(Lp, lam_y) if use_pre else lam_y
    converged = norm_s <= tol * norm_s0
    return CgResult(lam=lam, converged=bool(converged), iterations=it,
                    residual=float(norm_s / norm_s0),
                    status="converged" if converged else "not_converged")


def _solve_lower(L, b):
    n = L.shape[0]
    y = b.astype(float).copy()
    for i in range(n):
        y[i] -= L[i, :i] @ y[:i]
        y[i] /= L[i, i]
    return y


def _solve_lower_t(L, b):
    n = L.shape[0]
    y = b.astype(float).copy()
    for i in range(n - 1, -1, -1):
        y[i] -= L[i + 1:, i] @ y[i + 1:]
        y[i] /= L[i, i]
    return y


def dense_nullspace(A, rcond=None):
    """Orthonormal nullspace basis of a dense/sparse matrix via SVD."""
    dense = as_dense(A)
    if dense.shape[0] == 0:
        return np.eye(dense.shape[1])
    from scipy.linalg import null_space
    return null_space(dense, rcond=rcond)
