"""Dense and sparse matrix primitives.

Dense matrices are plain 2-D ``float64`` numpy arrays. Sparse matrices are
stored as canonical coordinate triplets (sorted by row then column, no
duplicates, no explicit zeros); a CSR view is built lazily for products.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInputError


def as_dense(m, name="matrix"):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    shape: tuple
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    @classmethod
    def from_triplets(cls, rows, cols, values, shape):
        """Build a canonical matrix; duplicate coordinates are summed."""
        n_rows, n_cols = int(shape[0]), int(shape[1])
        r = np.asarray(rows, dtype=np.int64).ravel()
        c = np.asarray(cols, dtype=np.int64).ravel()
        v = np.asarray(values, dtype=np.float64).ravel()
        if not (len(r) == len(c) == len(v)):
            raise InvalidInputError("triplet arrays differ in length")
        if len(r) and (r.min() < 0 or r.max() >= n_rows or c.min() < 0 or c.max() >= n_cols):
            raise InvalidInputError(f"triplet coordinate outside {n_rows}x{n_cols}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("non-finite sparse value")
        # sorting by value too makes duplicate summation independent of input order
        order = np.lexsort((v, c, r))
        r, c, v = r[order], c[order], v[order]
        if len(r):
            key = r * n_cols + c
            starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
            r, c = r[starts], c[starts]
            v = np.add.reduceat(v, starts)
        keep = v != 0.0
        r, c, v = r[keep], c[keep], v[keep]
        for arr in (r, c, v):
            arr.flags.writeable = False
        return cls((n_rows, n_cols), r, c, v)

    @classmethod
    def from_dense(cls, m):
        a = as_dense(m)
        r, c = np.nonzero(a)
        return cls.from_triplets(r, c, a[r, c], a.shape)

    @classmethod
    def identity(cls, n):
        idx = np.arange(n)
        return cls.from_triplets(idx, idx, np.ones(n), (n, n))

    @classmethod
    def zeros(cls, n_rows, n_cols=None):
        return cls.from_triplets([], [], [], (n_rows, n_rows if n_cols is None else n_cols))

    @property
    def nnz(self):
        return len(self.values)

    @cached_property
    def csr(self):
        return sp.csr_matrix((self.values, (self.rows, self.cols)), shape=self.shape)

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.values
        return out

    def transpose(self):
        return SparseMatrix.from_triplets(self.cols, self.rows, self.values, self.shape[::-1])

    def diagonal(self):
        d = np.zeros(min(self.shape))
        on = self.rows == self.cols
        d[self.rows[on]] = self.values[on]
        return d

    def row_sums(self):
        return np.bincount(self.rows, weights=self.values, minlength=self.shape[0])

    def __add__(self, other):
        if self.shape != other.shape:
            raise InvalidInputError(f"cannot add {self.shape} and {other.shape}")
        return SparseMatrix.from_triplets(
            np.r_[self.rows, other.rows],
            np.r_[self.cols, other.cols],
            np.r_[self.values, other.values],
            self.shape,
        )

    def map_values(self, fn):
        return SparseMatrix.from_triplets(self.rows, self.cols, fn(self.values), self.shape)

    def scale_rows(self, s):
        s = np.asarray(s, dtype=np.float64)
        return SparseMatrix.from_triplets(self.rows, self.cols, self.values * s[self.rows], self.shape)

    def asymmetry(self):
        """Largest ``|S[i,j] - S[j,i]|`` and the coordinate where it occurs."""
        return self._asymmetry

    @cached_property
    def _asymmetry(self):
        if self.shape[0] != self.shape[1]:
            raise InvalidInputError(f"matrix is not square: {self.shape}")
        if self.nnz == 0:
            return 0.0, None
        diff = (self.csr - self.csr.T).tocoo()
        if diff.nnz == 0:
            return 0.0, None
        k = int(np.argmax(np.abs(diff.data)))
        return float(abs(diff.data[k])), (int(diff.row[k]), int(diff.col[k]))

    def equals(self, other):
        return (
            self.shape == other.shape
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.values, other.values)
        )


def spmm(s: SparseMatrix, m) -> np.ndarray:
    """Sparse-dense product ``s @ m``."""
    m = as_dense(m)
    if s.shape[1] != m.shape[0]:
        raise InvalidInputError(f"spmm shape mismatch: {s.shape} @ {m.shape}")
    return np.asarray(s.csr @ m, dtype=np.float64)


def gemm(a, b) -> np.ndarray:
    a = as_dense(a)
    b = as_dense(b)
    if a.shape[1] != b.shape[0]:
        raise InvalidInputError(f"gemm shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def row_softmax(m) -> np.ndarray:
    m = as_dense(m)
    z = np.exp(m - m.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def relu(m) -> np.ndarray:
    return np.maximum(as_dense(m), 0.0)
