import numpy as np
import pytest
import scipy.sparse as sp

from lexls.errors import DegenerateMatrix, NotPositiveDefinite, SingularTriangular
from lexls.numerics import (
    SparseMatrix,
    cg_least_squares,
    factor_spd,
    lu_rank_revealing,
    solve_spd,
    solve_upper,
)

from oracles import exact_rank


class TestSparseMatrix:
    def test_nnz_counts_structural_entries(self):
        A = SparseMatrix.from_coo([0, 1, 1], [0, 0, 2], [1.0, 2.0, 3.0], (2, 3))
        assert A.nnz() == 3
        assert A.rows == 2 and A.cols == 3

    def test_duplicates_are_merged(self):
        A = SparseMatrix.from_coo([0, 0], [1, 1], [1.0, 2.0], (2, 2))
        assert A.nnz() == 1
        assert A.toarray()[0, 1] == 3.0

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            SparseMatrix(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_matmul(self):
        A = SparseMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
        x = np.array([1.0, 1.0])
        assert np.allclose(A @ x, [3.0, 1.0])


class TestRankRevealingLU:
    def test_identity(self):
        f = lu_rank_revealing(np.eye(3), 1e-8)
        assert f.numerical_rank == 3
        assert np.array_equal(f.row_perm, [0, 1, 2])
        assert np.array_equal(f.col_perm, [0, 1, 2])

    def test_zero_matrix(self):
        f = lu_rank_revealing(np.zeros((3, 3)))
        assert f.numerical_rank == 0

    def test_rank_one(self):
        A = np.array([[1.0, 2.0], [2.0, 4.0]])
        assert exact_rank(A) == 1  # oracle agrees
        f = lu_rank_revealing(A)
        assert f.numerical_rank == 1

    def test_degenerate_extent(self):
        with pytest.raises(DegenerateMatrix):
            lu_rank_revealing(np.zeros((0, 4)))

    def test_reconstruction_random_sparse(self):
        rng = np.random.default_rng(7)
        for trial in range(25):
            m = rng.integers(2, 50)
            n = rng.integers(2, 50)
            A = sp.random(m, n, density=0.3, random_state=np.random.RandomState(trial),
                          dtype=float).toarray()
            f = lu_rank_revealing(A, 1e-12)
            PAQ = A[np.ix_(f.row_perm, f.col_perm)]
            resid = np.abs(PAQ - f.L @ f.U).max()
            scale = max(np.abs(A).max(), 1e-30)
            assert resid <= 1e-9 * scale

    def test_numerical_rank_matches_oracle(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            m, n = int(rng.integers(3, 15)), int(rng.integers(3, 15))
            r = int(rng.integers(1, min(m, n) + 1))
            # integer factors keep the oracle exact and the gap clean
            B = rng.integers(-3, 4, size=(m, r)).astype(float)
            C = rng.integers(-3, 4, size=(r, n)).astype(float)
            A = B @ C
            f = lu_rank_revealing(A, 1e-8)
            assert f.numerical_rank == exact_rank(A)

    def test_pivot_threshold_invariant(self):
        rng = np.random.default_rng(11)
        A = rng.standard_normal((12, 9))
        tol = 1e-10
        f = lu_rank_revealing(A, tol)
        scale = np.abs(A).max()
        diag = np.abs(np.diag(f.U))
        assert np.all(diag >= tol * scale * (1 - 1e-12))


class TestSolveUpper:
    def test_identity(self):
        assert np.allclose(solve_upper(np.eye(2), [1.0, 2.0]), [1.0, 2.0])

    def test_hand_case(self):
        U = np.array([[2.0, 1.0], [0.0, 4.0]])
        assert np.allclose(solve_upper(U, [4.0, 8.0]), [1.0, 2.0])

    def test_singular_diagonal(self):
        with pytest.raises(SingularTriangular):
            solve_upper(np.array([[1.0, 0.0], [0.0, 0.0]]), [1.0, 1.0])

    def test_residual_tolerance(self):
        rng = np.random.default_rng(5)
        U = np.triu(rng.standard_normal((20, 20))) + 5 * np.eye(20)
        b = rng.standard_normal(20)
        x = solve_upper(U, b)
        assert np.abs(U @ x - b).max() <= 1e-10 * max(1.0, np.abs(b).max())


class TestSpd:
    def test_scaled_identity(self):
        f = factor_spd(2 * np.eye(3))
        assert np.allclose(solve_spd(f, np.full(3, 2.0)), np.ones(3))

    def test_two_by_two_closed_form(self):
        f = factor_spd(np.array([[4.0, 1.0], [1.0, 3.0]]))
        assert np.allclose(solve_spd(f, [1.0, 2.0]), [1.0 / 11.0, 7.0 / 11.0])

    def test_indefinite_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            factor_spd(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_roundtrip_identity_map(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            n = int(rng.integers(2, 30))
            B = rng.standard_normal((n, n))
            C = B @ B.T + n * np.eye(n)
            f = factor_spd(C)
            x = rng.standard_normal(n)
            r = C @ x
            x2 = solve_spd(f, r)
            assert np.abs(C @ x2 - r).max() <= 1e-8 * (1 + np.abs(r).max())
            assert f.smallest_pivot > 0

    def test_symmetry_checked(self):
        with pytest.raises(ValueError):
            factor_spd(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestCgLeastSquares:
    def test_identity(self):
        b = np.array([1.0, -2.0, 3.0])
        res = cg_least_squares(np.eye(3), b, tol=1e-12)
        assert res.converged
        assert np.allclose(res.lam, b)

    def test_consistent_overdetermined(self):
        # A^T is overdetermined in lam; build a consistent right-hand side
        rng = np.random.default_rng(9)
        A = rng.standard_normal((3, 8))  # lam has 3 entries, A^T is 8x3
        lam_true = rng.standard_normal(3)
        b = A.T @ lam_true
        res = cg_least_squares(A, b, tol=1e-12)
        assert res.converged
        dense = np.linalg.lstsq(A.T, b, rcond=None)[0]
        assert np.allclose(res.lam, dense, atol=1e-8)

    def test_max_iter_zero_reports_not_converged(self):
        res = cg_least_squares(np.eye(2), np.array([1.0, 1.0]), max_iter=0)
        assert not res.converged
        assert res.status == "not_converged"
        assert np.allclose(res.lam, 0.0)

    def test_minimum_norm_on_duplicate_rows(self):
        A = np.array([[1.0, 0.0], [1.0, 0.0]])  # duplicate active rows
        b = np.array([3.0, 0.0])
        res = cg_least_squares(A, b, tol=1e-12)
        # dense pseudoinverse oracle splits the multiplier equally
        dense = np.linalg.pinv(A.T) @ b
        assert np.allclose(res.lam, dense, atol=1e-10)
        assert np.allclose(res.lam[0], res.lam[1])

    def test_preconditioned_matches_plain(self):
        rng = np.random.default_rng(21)
        A = rng.standard_normal((6, 15))
        b = rng.standard_normal(15)
        from lexls.numerics import lu_rank_revealing as lu
        f = lu(A)
        assert f.numerical_rank == 6
        plain = cg_least_squares(A, b, tol=1e-12)
        pre = cg_least_squares(A, b, precond=f.L, tol=1e-12)
        assert pre.converged
        assert np.allclose(pre.lam, plain.lam, atol=1e-7)
