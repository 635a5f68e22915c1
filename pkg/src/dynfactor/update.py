"""Per-event space-projection updates.

Both procedures follow the same three steps: project the new column(s) onto
the current singular subspaces, re-diagonalize a small bordered matrix, and
turn its singular vectors into a k x k' projection plus a sparse correction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import (RANK_TOL, SparseRowMatrix, dense_svd_small,
                     mult_sparse_dense, ortho_residual_norm)
from .state import BaseDelta, FactorState

# residuals below this fraction of ||b|| are indistinguishable from
# cancellation noise in ||b||^2 - ||W||^2; such a column may not add rank
GROW_TOL = 1e-6


@dataclass
class ProjectionUpdate:
    """``X <- X f + dx``, ``Y <- Y g + dy``, singular values ``sigma2``."""

    f: np.ndarray
    g: np.ndarray
    dx: SparseRowMatrix
    dy: SparseRowMatrix
    sigma2: np.ndarray
    applied: Optional[BaseDelta] = field(default=None, repr=False)

    def transposed(self) -> "ProjectionUpdate":
        return ProjectionUpdate(self.g, self.f, self.dy, self.dx, self.sigma2)


def _residual(base, proj, sigma, b):
    """``(R, W, 1/R)``; a residual lost in cancellation noise is taken as exactly zero."""
    r, w = ortho_residual_norm(base, proj, sigma, b)
    if b.nnz_rows and r >= GROW_TOL * b.norm():
        return r, w, 1.0 / r
    return 0.0, w, 0.0


def _delta(b, coef, inv_r):
    """``b @ coef[None, :] * inv_r``; empty when the residual was zeroed."""
    if inv_r == 0.0:
        return SparseRowMatrix(b.rows, len(coef), [], np.zeros((0, len(coef))))
    return mult_sparse_dense(b, (coef * inv_r)[None, :])


def _retained(s2, k, d):
    limit = min(k + 1, d)
    if s2[0] <= 0:
        return 0
    return int(min(limit, np.sum(s2 > RANK_TOL * s2[0])))


def update_embedding_n(s: FactorState, b: SparseRowMatrix) -> ProjectionUpdate:
    """Append column ``b`` to the tracked matrix (context side = rows of ``b``).

    The content side gains one row, at index ``s.y.n``.
    """
    k, sig = s.k, s.sigma
    if b.rows != s.x.n:
        raise ValueError(f"column has {b.rows} rows, state has {s.x.n}")
    r, w, inv_r = _residual(s.xb, s.px, sig, b)

    m = np.zeros((k + 1, k + 1))
    m[:k, :k] = np.diag(sig)
    m[:k, k] = w
    m[k, k] = r
    svd = dense_svd_small(m, k + 1)
    keep = _retained(svd.sigma, k, s.d)
    e, h, s2 = svd.u[:, :keep], svd.v[:, :keep], svd.sigma[:keep]

    inv_root1 = 1.0 / np.sqrt(sig)
    root2 = np.sqrt(s2)
    f = inv_root1[:, None] * (e[:k] - np.outer(w, e[k]) * inv_r) * root2
    g = inv_root1[:, None] * h[:k] * root2
    dx = _delta(b, e[k] * root2, inv_r)
    dy = SparseRowMatrix(s.y.n + 1, keep, [s.y.n], (h[k] * root2)[None, :])
    return ProjectionUpdate(f, g, dx, dy, s2)


def update_embedding_e(s: FactorState, b: SparseRowMatrix, c: SparseRowMatrix) -> ProjectionUpdate:
    """Rank-1 modification ``A <- A + b c^T`` of the tracked matrix."""
    k, sig = s.k, s.sigma
    if b.rows != s.x.n or c.rows != s.y.n:
        raise ValueError("delta vectors do not match the state's row counts")
    rb, wb, inv_rb = _residual(s.xb, s.px, sig, b)
    rc, wc, inv_rc = _residual(s.yb, s.py, sig, c)

    m = np.zeros((k + 1, k + 1))
    m[:k, :k] = np.diag(sig)
    m += np.outer(np.append(wb, rb), np.append(wc, rc))
    svd = dense_svd_small(m, k + 1)
    keep = _retained(svd.sigma, k, s.d)
    e, h, s2 = svd.u[:, :keep], svd.v[:, :keep], svd.sigma[:keep]

    inv_root1 = 1.0 / np.sqrt(sig)
    root2 = np.sqrt(s2)
    f = inv_root1[:, None] * (e[:k] - np.outer(wb, e[k]) * inv_rb) * root2
    g = inv_root1[:, None] * (h[:k] - np.outer(wc, h[k]) * inv_rc) * root2
    dx = _delta(b, e[k] * root2, inv_rb)
    dy = _delta(c, h[k] * root2, inv_rc)
    return ProjectionUpdate(f, g, dx, dy, s2)


def handle_event(s: FactorState, deltas) -> list:
    """Compute and apply the updates for one event's delta sequence.

    A node event arrives as two border steps: the new column over the
    context side, then the new row (handled on the transposed state).
    """
    if not deltas:
        return []
    updates = []
    if deltas[0].c is None:
        col, row = deltas
        upd = update_embedding_n(s, col.b)
        upd.applied = s.apply_update(upd)
        updates.append(upd)
        upd = update_embedding_n(s.transposed(), row.b).transposed()
        upd.applied = s.apply_update(upd)
        updates.append(upd)
    else:
        for delta in deltas:
            upd = update_embedding_e(s, delta.b, delta.c)
            upd.applied = s.apply_update(upd)
            updates.append(upd)
    return updates
