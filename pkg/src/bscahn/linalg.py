"""Minimal sparse linear algebra: CSR matrices, block assembly, reusable LU.

Everything is a thin, validated layer over ``scipy.sparse``.  The point of
owning the wrapper is a fixed CSR contract (explicit ``row_offsets`` /
``col_indices`` / ``values`` arrays, canonical ordering, no duplicates) so
that assembled operators are bit-reproducible and easy to compare against
dense oracles in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_GUARD = 10**6  # max entries allowed through to_dense


class DimensionError(ValueError):
    """Operand shapes are inconsistent."""


class SingularMatrixError(RuntimeError):
    """LU factorization hit a singular pivot."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"{message} (row {row})")
        self.row = row


@dataclass(eq=False)
class SparseMatrix:
    """Sparse matrix in canonical CSR layout.

    Parameters
    ----------
    nrows, ncols : int
        Matrix dimensions.
    row_offsets : ndarray of int, shape (nrows+1,)
        Monotone non-decreasing offsets into the index/value arrays.
    col_indices : ndarray of int
        Column index per stored entry, sorted within each row, no
        duplicates within a row.
    values : ndarray of float
        Stored entry values (explicit zeros permitted).
    """

    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.row_offsets = np.asarray(self.row_offsets, dtype=np.int64)
        self.col_indices = np.asarray(self.col_indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.row_offsets.shape != (self.nrows + 1,):
            raise DimensionError("row_offsets must have length nrows+1")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets must be monotone non-decreasing")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != len(self.values):
            raise ValueError("row_offsets must span [0, nnz]")
        if len(self.col_indices) != len(self.values):
            raise DimensionError("col_indices and values must have equal length")
        if self.col_indices.size:
            if self.col_indices.min() < 0 or self.col_indices.max() >= self.ncols:
                raise ValueError("column index out of range")
        # no duplicate column within a row: indices strictly increase per row
        if self.col_indices.size > 1:
            row_of = np.repeat(np.arange(self.nrows), np.diff(self.row_offsets))
            same_row = row_of[1:] == row_of[:-1]
            if np.any(np.diff(self.col_indices)[same_row] <= 0):
                bad = int(row_of[1:][same_row & (np.diff(self.col_indices) <= 0)][0])
                raise ValueError(f"row {bad}: column indices not strictly increasing")
        self._scipy = None

    # -- constructors -------------------------------------------------

    @classmethod
    def from_scipy(cls, a) -> "SparseMatrix":
        a = sp.csr_matrix(a)
        a.sum_duplicates()
        a.sort_indices()
        return cls(a.shape[0], a.shape[1], a.indptr.astype(np.int64),
                   a.indices.astype(np.int64), a.data.astype(np.float64))

    @classmethod
    def from_dense(cls, a) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(a, dtype=np.float64)))

    @classmethod
    def from_coo(cls, nrows, ncols, rows, cols, vals) -> "SparseMatrix":
        m = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols))
        return cls.from_scipy(m)

    @classmethod
    def identity(cls, n) -> "SparseMatrix":
        return cls.from_scipy(sp.identity(n, format="csr"))

    @classmethod
    def zeros(cls, nrows, ncols) -> "SparseMatrix":
        return cls(nrows, ncols, np.zeros(nrows + 1, dtype=np.int64),
                   np.zeros(0, dtype=np.int64), np.zeros(0))

    # -- views ---------------------------------------------------------

    def to_scipy(self) -> sp.csr_matrix:
        # shares the underlying arrays; callers must not mutate
        if self._scipy is None:
            self._scipy = sp.csr_matrix(
                (self.values, self.col_indices, self.row_offsets),
                shape=(self.nrows, self.ncols))
        return self._scipy

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.to_scipy().T)

    def scaled(self, factor: float) -> "SparseMatrix":
        return SparseMatrix(self.nrows, self.ncols, self.row_offsets.copy(),
                            self.col_indices.copy(), factor * self.values)


class Factorization:
    """Reusable sparse LU of a square :class:`SparseMatrix`.

    The factorization is computed once and then shared across all time
    steps of a run; ``solve`` calls must be serialized per instance.
    """

    def __init__(self, matrix: SparseMatrix):
        if matrix.nrows != matrix.ncols:
            raise DimensionError("factorize requires a square matrix")
        self.matrix = matrix
        csc = matrix.to_scipy().tocsc()
        try:
            self._lu = spla.splu(csc)
        except RuntimeError as exc:  # SuperLU signals singular pivots this way
            row = _first_empty_row(matrix)
            raise SingularMatrixError(f"sparse LU failed: {exc}", row=row) from exc

    @property
    def n(self) -> int:
        return self.matrix.nrows

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (self.n,):
            raise DimensionError(f"rhs has shape {b.shape}, expected ({self.n},)")
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("solve produced non-finite values")
        return x


def _first_empty_row(a: SparseMatrix) -> int | None:
    """Best-effort diagnosis: index of a structurally empty row, if any."""
    counts = np.diff(a.row_offsets)
    empty = np.nonzero(counts == 0)[0]
    return int(empty[0]) if empty.size else None


def spmv(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product ``y = A x`` (row-order accumulation)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (a.ncols,):
        raise DimensionError(f"vector has shape {x.shape}, expected ({a.ncols},)")
    return a.to_scipy() @ x


def factorize(a: SparseMatrix) -> Factorization:
    """LU-factorize a square matrix for repeated solves."""
    return Factorization(a)


def block_assemble(blocks, weights=None) -> SparseMatrix:
    """Assemble a grid of optional blocks into one CSR matrix.

    ``blocks`` is a 2D nested sequence of ``SparseMatrix | None``;
    ``weights`` an optional same-shape grid of scalars.  A weight of
    exactly zero is treated as an absent block, so the sparsity pattern
    matches the ``None`` case bit for bit.
    """
    nr = len(blocks)
    if nr == 0 or any(len(row) != len(blocks[0]) for row in blocks):
        raise DimensionError("blocks must form a non-empty rectangular grid")
    nc = len(blocks[0])
    if weights is None:
        weights = [[1.0] * nc for _ in range(nr)]

    row_sizes = [None] * nr
    col_sizes = [None] * nc
    grid = [[None] * nc for _ in range(nr)]
    for i in range(nr):
        for j in range(nc):
            blk = blocks[i][j]
            w = float(weights[i][j])
            if blk is None or w == 0.0:
                continue
            if row_sizes[i] is not None and row_sizes[i] != blk.nrows:
                raise DimensionError(f"block row {i}: inconsistent row counts")
            if col_sizes[j] is not None and col_sizes[j] != blk.ncols:
                raise DimensionError(f"block col {j}: inconsistent column counts")
            row_sizes[i] = blk.nrows
            col_sizes[j] = blk.ncols
            s = blk.to_scipy()
            grid[i][j] = s if w == 1.0 else w * s
    if any(s is None for s in row_sizes) or any(s is None for s in col_sizes):
        raise DimensionError("a block row or column has no blocks to infer its size")
    return SparseMatrix.from_scipy(sp.bmat(grid, format="csr"))


def to_dense(a: SparseMatrix) -> np.ndarray:
    """Dense image of a sparse matrix (test oracle; size-guarded)."""
    if a.nrows * a.ncols > DENSE_GUARD:
        raise ValueError(f"to_dense guard exceeded: {a.nrows}x{a.ncols}")
    return a.to_scipy().toarray()


def write_matrix_market(a: SparseMatrix, path) -> None:
    """Export in Matrix Market coordinate (real, general) format."""
    import scipy.io

    scipy.io.mmwrite(str(path), a.to_scipy().tocoo())
