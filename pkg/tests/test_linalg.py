import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bscahn.linalg import (DimensionError, SingularMatrixError, SparseMatrix,
                           block_assemble, factorize, spmv, to_dense)


def random_sparse(rng, nrows, ncols, density=0.4):
    dense = rng.normal(size=(nrows, ncols))
    dense[rng.random((nrows, ncols)) > density] = 0.0
    return SparseMatrix.from_dense(dense), dense


class TestSpmv:
    def test_identity(self):
        a = SparseMatrix.identity(3)
        assert np.array_equal(spmv(a, np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])

    def test_zero_matrix(self):
        a = SparseMatrix.zeros(4, 3)
        assert np.array_equal(spmv(a, np.array([5.0, -1.0, 2.0])), np.zeros(4))

    def test_against_dense_product(self):
        rng = np.random.default_rng(7)
        a, dense = random_sparse(rng, 5, 5)
        x = rng.normal(size=5)
        assert np.max(np.abs(spmv(a, x) - dense @ x)) <= 1e-14

    def test_dimension_mismatch(self):
        a = SparseMatrix.identity(3)
        with pytest.raises(DimensionError):
            spmv(a, np.ones(4))

    @given(a=st.floats(-10, 10), b=st.floats(-10, 10))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, a, b):
        rng = np.random.default_rng(11)
        mat, _ = random_sparse(rng, 6, 6)
        x = rng.normal(size=6)
        y = rng.normal(size=6)
        lhs = spmv(mat, a * x + b * y)
        rhs = a * spmv(mat, x) + b * spmv(mat, y)
        scale = max(1.0, np.max(np.abs(rhs)))
        assert np.max(np.abs(lhs - rhs)) <= 1e-13 * scale


class TestFactorize:
    def test_scalar(self):
        f = factorize(SparseMatrix.from_dense([[2.0]]))
        assert f.solve(np.array([4.0]))[0] == pytest.approx(2.0, abs=1e-15)

    def test_permutation_matrix(self):
        f = factorize(SparseMatrix.from_dense([[0.0, 1.0], [1.0, 0.0]]))
        assert np.allclose(f.solve(np.array([1.0, 0.0])), [0.0, 1.0], atol=1e-15)
        assert np.allclose(f.solve(np.array([0.0, 1.0])), [1.0, 0.0], atol=1e-15)

    def test_diagonally_dominant_residual(self):
        rng = np.random.default_rng(3)
        dense = rng.normal(size=(20, 20))
        dense += np.diag(25.0 + np.abs(dense).sum(axis=1))
        a = SparseMatrix.from_dense(dense)
        b = rng.normal(size=20)
        x = factorize(a).solve(b)
        assert np.linalg.norm(dense @ x - b) / np.linalg.norm(b) <= 1e-12

    def test_solve_is_right_inverse_of_spmv(self):
        rng = np.random.default_rng(5)
        dense = rng.normal(size=(15, 15)) + np.diag(np.full(15, 20.0))
        a = SparseMatrix.from_dense(dense)
        f = factorize(a)
        x = rng.normal(size=15)
        b = spmv(a, x)
        assert np.linalg.norm(f.solve(b) - x) / np.linalg.norm(x) <= 1e-12

    def test_singular_matrix_reported(self):
        a = SparseMatrix.from_dense([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(SingularMatrixError):
            factorize(a)

    def test_requires_square(self):
        with pytest.raises(DimensionError):
            factorize(SparseMatrix.zeros(2, 3))


class TestBlockAssemble:
    def test_block_diagonal(self):
        a = SparseMatrix.from_dense([[1.0, 2.0], [3.0, 4.0]])
        b = SparseMatrix.from_dense([[5.0]])
        out = to_dense(block_assemble([[a, None], [None, b]]))
        expected = np.zeros((3, 3))
        expected[:2, :2] = [[1, 2], [3, 4]]
        expected[2, 2] = 5
        assert np.array_equal(out, expected)

    def test_zero_weight_equals_absent(self):
        a = SparseMatrix.from_dense([[1.0, 2.0], [3.0, 4.0]])
        b = SparseMatrix.from_dense([[1.0, 0.0], [0.0, 1.0]])
        absent = block_assemble([[a, None], [None, b]])
        weighted = block_assemble([[a, a], [None, b]], weights=[[1.0, 0.0], [1.0, 1.0]])
        assert np.array_equal(absent.row_offsets, weighted.row_offsets)
        assert np.array_equal(absent.col_indices, weighted.col_indices)
        assert np.array_equal(absent.values, weighted.values)

    def test_against_hand_assembled_dense(self):
        rng = np.random.default_rng(13)
        blocks = [[rng.normal(size=(2, 2)) for _ in range(2)] for _ in range(2)]
        weights = [[2.0, -1.0], [0.5, 3.0]]
        grid = [[SparseMatrix.from_dense(blocks[i][j]) for j in range(2)] for i in range(2)]
        out = to_dense(block_assemble(grid, weights=weights))
        expected = np.block([[weights[i][j] * blocks[i][j] for j in range(2)]
                             for i in range(2)])
        assert np.max(np.abs(out - expected)) == 0.0

    def test_commutes_with_to_dense(self):
        rng = np.random.default_rng(17)
        a, da = random_sparse(rng, 3, 4)
        b, db = random_sparse(rng, 3, 2)
        c, dc = random_sparse(rng, 2, 4)
        out = to_dense(block_assemble([[a, b], [c, None]]))
        expected = np.block([[da, db], [dc, np.zeros((2, 2))]])
        assert np.array_equal(out, expected)

    def test_inconsistent_dimensions(self):
        a = SparseMatrix.from_dense([[1.0, 2.0], [3.0, 4.0]])
        b = SparseMatrix.from_dense([[1.0]])
        with pytest.raises(DimensionError):
            block_assemble([[a], [b]])

    def test_uninferrable_size(self):
        a = SparseMatrix.from_dense([[1.0]])
        with pytest.raises(DimensionError):
            block_assemble([[a, None], [None, None]])


class TestToDense:
    def test_empty(self):
        assert np.array_equal(to_dense(SparseMatrix.zeros(2, 3)), np.zeros((2, 3)))

    def test_identity(self):
        assert np.array_equal(to_dense(SparseMatrix.identity(4)), np.eye(4))

    def test_round_trip(self):
        rng = np.random.default_rng(19)
        dense = rng.normal(size=(6, 5))
        dense[rng.random((6, 5)) > 0.5] = 0.0
        assert np.array_equal(to_dense(SparseMatrix.from_dense(dense)), dense)

    def test_guard(self):
        a = SparseMatrix.zeros(2000, 2000)
        with pytest.raises(ValueError, match="guard"):
            to_dense(a)


class TestValidation:
    def test_bad_offsets(self):
        with pytest.raises(ValueError):
            SparseMatrix(2, 2, np.array([0, 2, 1]), np.array([0, 1]),
                         np.array([1.0, 2.0]))

    def test_duplicate_column(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            SparseMatrix(1, 3, np.array([0, 2]), np.array([1, 1]),
                         np.array([1.0, 2.0]))

    def test_column_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            SparseMatrix(1, 2, np.array([0, 1]), np.array([5]), np.array([1.0]))
