"""Dynamic personalized-PageRank enhancement of the context embedding.

The enhanced embedding solves ``Z = alpha X + (1 - alpha) D^-1 A Z``.  We keep
``Zb`` together with the fixed-point defect

    rb = alpha Xb + (1 - alpha) D^-1 A Zb - Zb

in the context base frame (so ``Z = Zb @ PX``), and drive the defect below
tolerance with Gauss-Seidel pushes.  Because the operator acts on nodes and
``PX`` on features, the two commute and no push ever touches ``PX``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from .errors import NonConvergence, UnknownNode
from .linalg import SparseRowMatrix

# threshold scale is kept within [c, SLACK^2 c] of the true column-norm bound
SLACK = 1.25
MAX_PUSHES = 10**9


@dataclass(frozen=True)
class EnhancerParams:
    alpha: float = 0.3
    eps: float = 1e-5

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")


def _max_col_norm(p: np.ndarray) -> float:
    return float(np.sqrt(np.max(np.sum(p * p, axis=0)))) if p.size else 1.0


@numba.njit(cache=True)
def _push_kernel(seed, queued, rb, zb, deg, start, length, src, w, thr, a1, max_pushes):
    """FIFO Gauss-Seidel pushes; ``seed`` rows are already marked queued."""
    n, k = rb.shape
    ring = np.empty(max(n, 1), dtype=np.int64)
    head = 0
    count = len(seed)
    for i in range(count):
        ring[i] = seed[i]
    delta = np.empty(k)
    done = 0
    while count > 0:
        u = ring[head]
        head = (head + 1) % n
        count -= 1
        queued[u] = False
        lim = thr * max(deg[u], 1.0)
        r2 = 0.0
        for j in range(k):
            r2 += rb[u, j] * rb[u, j]
        if r2 <= lim * lim:
            continue
        for j in range(k):
            delta[j] = rb[u, j]
            zb[u, j] += delta[j]
            rb[u, j] = 0.0
        done += 1
        if done > max_pushes:
            return -1
        if a1 == 0.0:
            continue
        for t in range(start[u], start[u] + length[u]):
            s = src[t]
            coef = a1 * w[t] / deg[s]
            r2 = 0.0
            for j in range(k):
                rb[s, j] += coef * delta[j]
                r2 += rb[s, j] * rb[s, j]
            if not queued[s]:
                lim = thr * max(deg[s], 1.0)
                if r2 > lim * lim:
                    queued[s] = True
                    ring[(head + count) % n] = s
                    count += 1
    return done


def _regrow(a: np.ndarray, n: int, cap: int) -> np.ndarray:
    out = np.zeros((cap,) + a.shape[1:], dtype=a.dtype)
    out[:n] = a[:n]
    return out


class PPREnhancer:
    """Enhanced embedding ``Zb`` and residual ``rb`` (base coordinates)."""

    def __init__(self, n: int, k: int, params: EnhancerParams = EnhancerParams(), scale: float = 1.0):
        self.params = params
        self._n = n
        self._zb = np.zeros((max(16, 2 * n), k))
        self._rb = np.zeros((max(16, 2 * n), k))
        self._queued = np.zeros(max(16, 2 * n), dtype=bool)
        self.scale = SLACK * scale
        self.pending: list = []
        self.pushes = 0

    @property
    def zb(self) -> np.ndarray:
        return self._zb[: self._n]

    @property
    def rb(self) -> np.ndarray:
        return self._rb[: self._n]

    @property
    def queued(self) -> np.ndarray:
        return self._queued[: self._n]

    @property
    def alpha(self):
        return self.params.alpha

    @property
    def eps(self):
        return self.params.eps

    @property
    def n(self):
        return self._n

    @classmethod
    def init_propagate(cls, g, state, params: EnhancerParams = EnhancerParams()) -> "PPREnhancer":
        """``Zb = 0``, ``rb = alpha Xb``, then propagate to tolerance.

        Initial propagation runs synchronous rounds over all violating rows
        (a batched push) on a CSC snapshot of the graph.
        """
        xb = state.xb
        e = cls(xb.shape[0], xb.shape[1], params, _max_col_norm(state.px))
        e.rb[:] = params.alpha * xb
        if params.alpha < 1:
            deg = g.out_deg
            inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
            op = (sp.diags(inv * (1 - params.alpha)) @ g.adjacency("csr")).tocsc()
            lim = e._limits(g)
            for _ in range(100_000):
                viol = np.flatnonzero(np.einsum("ij,ij->i", e.rb, e.rb) > lim * lim)
                if not len(viol):
                    break
                delta = e.rb[viol].copy()
                e.rb[viol] = 0.0
                e.zb[viol] += delta
                e.rb[:] += op[:, viol] @ delta
                e.pushes += len(viol)
        else:
            e.zb[:] += e.rb
            e.rb[:] = 0.0
            e.pushes += e.n
        e.enqueue_violations(g)
        e.push_to_tolerance(g)
        return e

    # -- bookkeeping ----------------------------------------------------------

    def _limits(self, g, rows=None):
        deg = g.out_deg if rows is None else g.out_deg[rows]
        return self.eps * np.maximum(deg, 1.0) / self.scale

    def grow(self, n: int):
        """Append zero rows for nodes that joined the graph."""
        if n <= self._n:
            return
        if n > len(self._queued):
            cap = max(n, 2 * len(self._queued))
            self._zb, self._rb = _regrow(self._zb, self._n, cap), _regrow(self._rb, self._n, cap)
            self._queued = _regrow(self._queued, self._n, cap)
        self._zb[self._n:n] = 0.0
        self._rb[self._n:n] = 0.0
        self._queued[self._n:n] = False
        self._n = n

    def reframe(self, frame: np.ndarray):
        """Follow a change of the context base frame: ``new = old @ frame``."""
        cap = len(self._queued)
        self._zb = _regrow(self.zb @ frame, self._n, cap)
        self._rb = _regrow(self.rb @ frame, self._n, cap)

    def refresh_scale(self, px: np.ndarray, g) -> bool:
        """Track the projection's column-norm bound; rescan rows if it grew."""
        c = _max_col_norm(px)
        if c > self.scale:
            self.scale = SLACK * c
            self.enqueue_violations(g)
            return True
        if c < self.scale / (SLACK * SLACK):
            # loosening the threshold keeps every row within bound
            self.scale = SLACK * c
        return False

    def enqueue_violations(self, g):
        lim = self._limits(g)
        rows = np.flatnonzero(np.einsum("ij,ij->i", self.rb, self.rb) > lim * lim)
        self._enqueue(rows)

    def _enqueue(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        rows = rows[~self.queued[rows]]
        self.queued[rows] = True
        self.pending.extend(rows.tolist())

    # -- event absorption -----------------------------------------------------

    def absorb_signal_delta(self, dxb: SparseRowMatrix):
        """``rb[u] += alpha * dXb[u]`` for the non-zero rows of ``dxb``."""
        if not dxb.nnz_rows:
            return
        self.grow(dxb.rows)
        self.rb[dxb.index] += self.alpha * dxb.values
        self._enqueue(dxb.index)

    def absorb_structure_delta(self, g, xb: np.ndarray, touched):
        """Recompute the defect of rows whose out-neighborhood changed."""
        self.grow(g.n)
        touched = list(touched)
        a1 = 1.0 - self.alpha
        for u in touched:
            r = self.alpha * xb[u] - self.zb[u]
            adj = g.out_adj[u]
            deg = g.out_deg[u]
            if adj and deg > 0 and a1 > 0:
                nbrs = np.fromiter(adj.keys(), dtype=np.int64, count=len(adj))
                w = np.fromiter(adj.values(), dtype=np.float64, count=len(adj))
                r = r + (a1 / deg) * (w @ self.zb[nbrs])
            self.rb[u] = r
        if touched:
            self._enqueue(touched)

    def push_to_tolerance(self, g) -> int:
        """FIFO pushes until every row meets ``||rb[u]|| <= eps max(deg, 1) / scale``."""
        if not self.pending:
            return 0
        seed = np.asarray(self.pending, dtype=np.int64)
        self.pending = []
        pool = g.in_pool
        done = _push_kernel(seed, self.queued, self.rb, self.zb, g.out_deg, pool.start, pool.length,
                            pool.src, pool.w, self.eps / self.scale, 1.0 - self.alpha, MAX_PUSHES)
        if done < 0:
            raise NonConvergence(f"more than {MAX_PUSHES} pushes in one call")
        self.pushes += done
        return done

    # -- queries ----------------------------------------------------------------

    def query_enhanced(self, state, u: int) -> np.ndarray:
        if not 0 <= u < self.n:
            raise UnknownNode(f"node {u} not tracked by the enhancer")
        return self.zb[u] @ state.px

    def enhanced_all(self, state) -> np.ndarray:
        return self.zb @ state.px
