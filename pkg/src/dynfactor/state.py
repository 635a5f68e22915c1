"""Factorization state kept in base-space form.

The current embeddings are ``X = Xb @ PX`` and ``Y = Yb @ PY``.  An update
``X <- X @ F + dX`` is absorbed lazily as ``PX <- PX @ F`` and
``Xb <- Xb + dX @ PX^-1``, touching only the non-zero rows of ``dX``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import SingularProjection, UnknownNode
from .linalg import SparseRowMatrix, randomized_tsvd

REBASE_COND = 1e8
REBASE_EVERY = 50_000


def _lu(p):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        return sla.lu_factor(p, check_finite=False)


class _RowBuffer:
    """Dense row storage with amortized O(k) appends."""

    __slots__ = ("data", "n")

    def __init__(self, rows: np.ndarray):
        rows = np.asarray(rows, dtype=np.float64)
        self.n = rows.shape[0]
        self.data = np.zeros((max(16, 2 * self.n), rows.shape[1]))
        self.data[: self.n] = rows

    @property
    def view(self) -> np.ndarray:
        return self.data[: self.n]

    def append(self, row):
        if self.n == self.data.shape[0]:
            grown = np.zeros((2 * self.n, self.data.shape[1]))
            grown[: self.n] = self.data[: self.n]
            self.data = grown
        self.data[self.n] = row
        self.n += 1

    def replace(self, rows: np.ndarray):
        self.data = np.zeros((max(16, 2 * rows.shape[0]), rows.shape[1]))
        self.data[: rows.shape[0]] = rows
        self.n = rows.shape[0]


class Side:
    """One factor (context or content): base rows, projection and its LU."""

    __slots__ = ("rows", "proj", "lu")

    def __init__(self, base: np.ndarray, proj: Optional[np.ndarray] = None):
        self.rows = _RowBuffer(base)
        k = self.rows.data.shape[1]
        self.proj = np.eye(k) if proj is None else np.array(proj, dtype=np.float64)
        self.lu = _lu(self.proj)

    @property
    def base(self) -> np.ndarray:
        return self.rows.view

    @property
    def n(self) -> int:
        return self.rows.n

    def current(self) -> np.ndarray:
        return self.base @ self.proj

    def solve_rows(self, rows: np.ndarray) -> np.ndarray:
        """``rows @ proj^-1`` via the cached LU factors."""
        return sla.lu_solve(self.lu, rows.T, trans=1, check_finite=False).T

    def set_proj(self, proj: np.ndarray):
        self.proj = proj
        self.lu = _lu(proj)

    def reset(self, base: np.ndarray):
        self.rows.replace(base)
        self.set_proj(np.eye(base.shape[1]))


def _lu_cond(proj: np.ndarray, lu, iters: int = 10) -> float:
    k = proj.shape[0]
    piv = np.abs(np.diag(lu[0]))
    if not np.all(np.isfinite(piv)) or piv.min() <= np.finfo(float).tiny or piv.min() < 1e-300 * piv.max():
        return np.inf
    rng = np.random.default_rng(0)
    x = rng.standard_normal(k)
    y = x.copy()
    big = small_inv = 0.0
    for _ in range(iters):
        x = proj.T @ (proj @ x)
        big = np.linalg.norm(x)
        if big == 0.0:
            return np.inf
        x /= big
        y = sla.lu_solve(lu, sla.lu_solve(lu, y, trans=1, check_finite=False), check_finite=False)
        small_inv = np.linalg.norm(y)
        if not np.isfinite(small_inv):
            return np.inf
        y /= small_inv
    return float(np.sqrt(big * small_inv))


@dataclass
class BaseDelta:
    """What an applied update did to the context base frame.

    ``frame`` is None when the base frame is unchanged; otherwise the new
    base equals ``old_base @ frame`` before ``dxb`` is added.  ``dxb`` holds
    the added base-space rows (including an appended row, if any).
    """

    frame: Optional[np.ndarray]
    dxb: SparseRowMatrix
    appended: int = 0


class FactorState:
    """Rank-k factorization ``X @ Y.T`` with ``X = U sqrt(S)``, ``Y = V sqrt(S)``."""

    def __init__(self, xb, yb, sigma, d, *, px=None, py=None, eager=False,
                 rebase_cond=REBASE_COND, rebase_every=REBASE_EVERY):
        self.x = Side(xb, px)
        self.y = Side(yb, py)
        self.sigma = np.array(sigma, dtype=np.float64)
        self.d = int(d)
        self.eager = eager
        self.rebase_cond = rebase_cond
        self.rebase_every = rebase_every
        self.since_rebase = 0
        self.rebases = 0

    @classmethod
    def from_graph(cls, g, d: int, seed=None, **kwargs) -> "FactorState":
        """t-SVD of the adjacency matrix: ``Xb = U sqrt(S)``, ``Yb = V sqrt(S)``, ``P = I``."""
        a = g.adjacency()
        svd = randomized_tsvd(a, min(d, g.n), seed=seed)
        root = np.sqrt(svd.sigma)
        return cls(svd.u * root, svd.v * root, svd.sigma, d, **kwargs)

    @classmethod
    def empty(cls, n: int, d: int, **kwargs) -> "FactorState":
        """Rank-0 state for an edgeless ``n``-node graph; rank grows with events."""
        return cls(np.zeros((n, 0)), np.zeros((n, 0)), [], d, **kwargs)

    # -- views --------------------------------------------------------------

    @property
    def k(self) -> int:
        return len(self.sigma)

    @property
    def xb(self):
        return self.x.base

    @property
    def yb(self):
        return self.y.base

    @property
    def px(self):
        return self.x.proj

    @property
    def py(self):
        return self.y.proj

    @property
    def n(self) -> int:
        return self.x.n

    def transposed(self) -> "FactorState":
        """View with the roles of the two sides exchanged (shares storage)."""
        t = object.__new__(FactorState)
        t.__dict__.update(self.__dict__)
        t.x, t.y = self.y, self.x
        return t

    def query_context(self, u: int) -> np.ndarray:
        if not 0 <= u < self.x.n:
            raise UnknownNode(f"node {u} has no context row")
        return self.x.base[u] @ self.x.proj

    def query_content(self, u: int) -> np.ndarray:
        if not 0 <= u < self.y.n:
            raise UnknownNode(f"node {u} has no content row")
        return self.y.base[u] @ self.y.proj

    def query_all(self):
        return self.x.current(), self.y.current()

    def reconstruct_entry(self, u: int, v: int) -> float:
        return float(self.query_context(u) @ self.query_content(v))

    def product(self) -> np.ndarray:
        x, y = self.query_all()
        return x @ y.T

    # -- maintenance ----------------------------------------------------------

    def cond_estimate(self) -> float:
        """Power-iteration estimate of cond2(PX) (10 iterations each way)."""
        return _lu_cond(self.x.proj, self.x.lu)

    def rebase(self) -> np.ndarray:
        """Fold the projections into the base rows.  Returns the old ``PX``."""
        old = self.x.proj
        if not _is_identity(self.x.proj):
            self.x.reset(self.x.current())
        if not _is_identity(self.y.proj):
            self.y.reset(self.y.current())
        self.since_rebase = 0
        self.rebases += 1
        return old

    def apply_update(self, upd) -> BaseDelta:
        """Absorb ``X <- X F + dX``, ``Y <- Y G + dY``, ``sigma <- sigma2``.

        Falls back to folding the projection into the base rows (cost
        O(n k^2)) when the rank changes or the new projection would be too
        ill-conditioned; the returned ``BaseDelta`` says which happened.
        """
        f, g = upd.f, upd.g
        k, k2 = f.shape
        if k != self.k or g.shape != (self.k, k2):
            raise ValueError(f"update shapes {f.shape}, {g.shape} do not match rank {self.k}")
        lazy = not self.eager and k == k2 and self.since_rebase + 1 < self.rebase_every
        if lazy:
            new_px, new_py = self.x.proj @ f, self.y.proj @ g
            lu_x = _lu(new_px)
            lu_y = _lu(new_py)
            lazy = (_lu_cond(new_px, lu_x) <= self.rebase_cond
                    and _lu_cond(new_py, lu_y) <= self.rebase_cond)
        if lazy:
            self.x.proj, self.x.lu = new_px, lu_x
            self.y.proj, self.y.lu = new_py, lu_y
            dxb, app_x = _absorb_lazy(self.x, upd.dx)
            _absorb_lazy(self.y, upd.dy)
            self.since_rebase += 1
            frame = None
        else:
            frame = self.x.proj @ f
            dxb, app_x = _absorb_eager(self.x, frame, upd.dx)
            _absorb_eager(self.y, self.y.proj @ g, upd.dy)
            self.since_rebase = 0
            self.rebases += 1
        self.sigma = np.array(upd.sigma2, dtype=np.float64)
        if not (np.all(np.isfinite(self.x.proj)) and np.all(np.isfinite(self.y.proj))):
            raise SingularProjection("projection became non-finite")
        return BaseDelta(frame, dxb, app_x)


def _is_identity(p) -> bool:
    return p.shape[0] == p.shape[1] and np.array_equal(p, np.eye(p.shape[0]))


def _split_append(side: Side, dx: SparseRowMatrix):
    n = side.n
    if dx.rows not in (n, n + 1):
        raise ValueError(f"delta has {dx.rows} rows, side has {n}")
    grow = dx.rows == n + 1
    if grow and dx.nnz_rows and dx.index[-1] == n:
        return dx.index[:-1], dx.values[:-1], dx.values[-1], grow
    return dx.index, dx.values, None, grow


def _absorb_lazy(side: Side, dx: SparseRowMatrix):
    idx, vals, new_row, grow = _split_append(side, dx)
    k = side.proj.shape[1]
    if len(idx):
        base_vals = side.solve_rows(vals)
        side.rows.data[idx] += base_vals
    else:
        base_vals = np.empty((0, k))
    if grow:
        row = np.zeros(k) if new_row is None else side.solve_rows(new_row[None, :])[0]
        side.rows.append(row)
        if new_row is not None:
            idx = np.append(idx, side.n - 1)
            base_vals = np.vstack([base_vals, row])
    return SparseRowMatrix(side.n, k, idx, base_vals, check=False), int(grow)


def _absorb_eager(side: Side, frame, dx: SparseRowMatrix):
    idx, vals, new_row, grow = _split_append(side, dx)
    k2 = frame.shape[1]
    cur = side.base @ frame
    if len(idx):
        cur[idx] += vals
    if grow:
        cur = np.vstack([cur, np.zeros(k2) if new_row is None else new_row])
    side.reset(cur)
    # in an eager step the base-space delta is the delta itself (P = I)
    return SparseRowMatrix(side.n, k2, dx.index, dx.values, check=False), int(grow)
