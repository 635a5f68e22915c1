"""Numerical kernels: truncated SVDs and sparse-row products.

Every kernel works in float64.  The sparse-row products only touch the
non-zero rows of their sparse operand, so their cost does not depend on the
number of rows of the matrices involved.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NonFinite, ShapeMismatch, ZeroMatrix

# singular values below RANK_TOL * sigma_max are treated as numerical zeros
RANK_TOL = 1e-10


class SparseRowMatrix:
    """A ``rows x cols`` matrix stored as its non-zero rows only.

    ``index`` holds strictly increasing row numbers, ``values`` the matching
    dense payload rows (shape ``(len(index), cols)``).
    """

    __slots__ = ("rows", "cols", "index", "values")

    def __init__(self, rows: int, cols: int, index=None, values=None, *, check=True):
        self.rows = int(rows)
        self.cols = int(cols)
        if index is None:
            index = np.empty(0, dtype=np.int64)
            values = np.empty((0, self.cols))
        index = np.asarray(index, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64).reshape(len(index), self.cols)
        if check:
            if len(index) and (index[0] < 0 or index[-1] >= self.rows):
                raise ShapeMismatch(f"row index out of range for {self.rows} rows")
            if len(index) > 1 and np.any(np.diff(index) <= 0):
                order = np.argsort(index, kind="stable")
                index, values = index[order], values[order]
                if np.any(np.diff(index) == 0):
                    raise ShapeMismatch("duplicate row index")
            keep = np.any(values != 0.0, axis=1)
            if not keep.all():
                index, values = index[keep], values[keep]
        self.index = index
        self.values = values

    @classmethod
    def column(cls, rows: int, entries) -> "SparseRowMatrix":
        """Sparse column vector from ``{row: value}`` or ``(row, value)`` pairs."""
        if isinstance(entries, dict):
            entries = entries.items()
        entries = sorted((int(i), float(v)) for i, v in entries)
        idx = np.fromiter((i for i, _ in entries), dtype=np.int64, count=len(entries))
        vals = np.fromiter((v for _, v in entries), dtype=np.float64, count=len(entries))
        return cls(rows, 1, idx, vals.reshape(-1, 1))

    @classmethod
    def from_dense(cls, a) -> "SparseRowMatrix":
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        idx = np.flatnonzero(np.any(a != 0.0, axis=1))
        return cls(a.shape[0], a.shape[1], idx, a[idx], check=False)

    @property
    def nnz_rows(self) -> int:
        return len(self.index)

    @property
    def shape(self):
        return (self.rows, self.cols)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        out[self.index] = self.values
        return out

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.values * self.values)))

    def scaled(self, factor: float) -> "SparseRowMatrix":
        return SparseRowMatrix(self.rows, self.cols, self.index, self.values * factor)

    def __repr__(self):
        return f"SparseRowMatrix({self.rows}x{self.cols}, nnz_rows={self.nnz_rows})"


@dataclass
class SvdTriple:
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.sigma)

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def randomized_tsvd(a, d: int, oversample: int = 10, power_iters: int = 4, seed=None) -> SvdTriple:
    """Rank-``d`` truncated SVD by a randomized range finder.

    ``a`` may be a dense array or any scipy sparse matrix.  Power iterations
    are re-orthonormalized at every half step.  Singular values below
    ``RANK_TOL * sigma_max`` are dropped, so the returned rank may be < d.
    """
    if sp.issparse(a):
        a = sp.csr_matrix(a, dtype=np.float64)
        if a.nnz == 0 or not np.any(a.data):
            raise ZeroMatrix("all-zero input")
        if not np.all(np.isfinite(a.data)):
            raise NonFinite("non-finite entries in input")
    else:
        a = np.asarray(a, dtype=np.float64)
        if not np.all(np.isfinite(a)):
            raise NonFinite("non-finite entries in input")
        if not np.any(a):
            raise ZeroMatrix("all-zero input")
    m, n = a.shape
    if d < 1 or d > min(m, n):
        raise ShapeMismatch(f"d={d} must lie in [1, {min(m, n)}]")
    rng = _as_rng(seed)
    width = min(d + oversample, min(m, n))

    omega = rng.standard_normal((n, width))
    q, _ = np.linalg.qr(a @ omega)
    for _ in range(power_iters):
        z, _ = np.linalg.qr(a.T @ q)
        q, _ = np.linalg.qr(a @ z)
    small = np.asarray((a.T @ q).T)  # q^T a, width x n
    ub, s, vt = np.linalg.svd(small, full_matrices=False)
    keep = min(d, int(np.sum(s > RANK_TOL * s[0])))
    if keep == 0:
        raise ZeroMatrix("numerically zero input")
    return SvdTriple(q @ ub[:, :keep], s[:keep].copy(), vt[:keep].T.copy())


def dense_svd_small(m, keep: int) -> SvdTriple:
    """Full SVD of a small dense matrix (LAPACK), truncated to ``keep`` triples.

    Signs are fixed so the largest-magnitude entry of each left vector is
    positive; LAPACK's own choice can flip under rounding-level input changes.
    """
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise NonFinite("non-finite entries in small matrix")
    u, s, vt = np.linalg.svd(m)
    keep = min(keep, len(s))
    u, v = u[:, :keep], vt[:keep].T
    pivot = np.argmax(np.abs(u), axis=0)
    flip = np.where(u[pivot, np.arange(keep)] < 0, -1.0, 1.0)
    return SvdTriple(u * flip, s[:keep], v * flip)


def mult_sparseT_dense(b: SparseRowMatrix, a) -> np.ndarray:
    """``b.T @ a`` for a sparse-row ``b`` (n x q) and dense ``a`` (n x p)."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != b.rows:
        raise ShapeMismatch(f"cannot multiply ({b.cols}x{b.rows}) by {a.shape}")
    out = np.zeros((b.cols, a.shape[1]))
    for row, payload in zip(b.index, b.values):
        out += np.outer(payload, a[row])
    return out


def mult_sparse_dense(b: SparseRowMatrix, c) -> SparseRowMatrix:
    """``b @ c`` keeping the result in sparse-row form (rows subset of b's)."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != b.cols:
        raise ShapeMismatch(f"cannot multiply {b.shape} by {c.shape}")
    return SparseRowMatrix(b.rows, c.shape[1], b.index, b.values @ c)


def ortho_residual_norm(base, proj, sigma, b: SparseRowMatrix):
    """Projection of ``b`` onto the implicit orthonormal ``U = base @ proj @ diag(sigma)^-1/2``.

    Returns ``(R, W)`` with ``W = U.T b`` and ``R = ||(I - U U^T) b||``
    computed as ``sqrt(||b||^2 - ||W||^2)`` (clamped at zero).
    """
    sigma = np.asarray(sigma)
    w = (mult_sparseT_dense(b, base) @ proj).ravel() / np.sqrt(sigma)
    bb = float(np.sum(b.values * b.values))
    r = np.sqrt(max(0.0, bb - float(w @ w)))
    return r, w
