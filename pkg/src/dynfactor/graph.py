"""Evolving directed graph and conversion of events into sparse deltas."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DuplicateEdge, MissingEdge, UnknownNode
from .linalg import SparseRowMatrix


@dataclass(frozen=True)
class AddNode:
    """New node ``n`` with edges ``source -> n`` (in) and ``n -> target`` (out)."""

    in_edges: tuple = ()
    out_edges: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "in_edges", tuple((int(s), float(w)) for s, w in self.in_edges))
        object.__setattr__(self, "out_edges", tuple((int(t), float(w)) for t, w in self.out_edges))


@dataclass(frozen=True)
class AddEdge:
    u: int
    v: int
    weight: float = 1.0


@dataclass(frozen=True)
class RemoveEdge:
    u: int
    v: int


GraphEvent = Union[AddNode, AddEdge, RemoveEdge]


@dataclass
class DeltaVectors:
    """Sparse pieces of one matrix modification.

    ``c is None`` means a border step (``b`` is an appended column);
    otherwise the modification is the rank-1 term ``b @ c.T``.
    """

    b: SparseRowMatrix
    c: Optional[SparseRowMatrix] = None
    delta_m: int = 1


def symmetrize(event: GraphEvent) -> list:
    """Expand an undirected event into its directed equivalents."""
    if isinstance(event, AddEdge):
        return [event, AddEdge(event.v, event.u, event.weight)]
    if isinstance(event, RemoveEdge):
        return [event, RemoveEdge(event.v, event.u)]
    merged = {}
    for t, w in tuple(event.in_edges) + tuple(event.out_edges):
        merged.setdefault(t, w)
    edges = tuple(sorted(merged.items()))
    return [AddNode(in_edges=edges, out_edges=edges)]


class _InPool:
    """In-neighbor lists packed into growable flat arrays.

    Node ``v`` owns slots ``start[v] : start[v] + length[v]`` of ``src``/``w``;
    a full list moves to the end of the pool with doubled capacity.  This is
    the layout the compiled push kernel walks.
    """

    def __init__(self):
        self.start = np.zeros(16, dtype=np.int64)
        self.length = np.zeros(16, dtype=np.int64)
        self.cap = np.zeros(16, dtype=np.int64)
        self.src = np.zeros(64, dtype=np.int64)
        self.w = np.zeros(64)
        self.used = 0

    def add_node(self, v):
        if v == len(self.start):
            grow = len(self.start)
            self.start = np.concatenate([self.start, np.zeros(grow, dtype=np.int64)])
            self.length = np.concatenate([self.length, np.zeros(grow, dtype=np.int64)])
            self.cap = np.concatenate([self.cap, np.zeros(grow, dtype=np.int64)])
        self.start[v] = self.length[v] = self.cap[v] = 0

    def insert(self, v, u, w):
        k = self.length[v]
        if k == self.cap[v]:
            new_cap = max(4, 2 * k)
            if self.used + new_cap > len(self.src):
                size = max(2 * len(self.src), self.used + new_cap)
                self.src = np.concatenate([self.src, np.zeros(size - len(self.src), dtype=np.int64)])
                self.w = np.concatenate([self.w, np.zeros(size - len(self.w))])
            s0 = self.start[v]
            self.src[self.used:self.used + k] = self.src[s0:s0 + k]
            self.w[self.used:self.used + k] = self.w[s0:s0 + k]
            self.start[v], self.cap[v] = self.used, new_cap
            self.used += new_cap
        j = self.start[v] + k
        self.src[j], self.w[j] = u, w
        self.length[v] = k + 1

    def remove(self, v, u):
        s0, k = self.start[v], self.length[v]
        j = s0 + int(np.flatnonzero(self.src[s0:s0 + k] == u)[0])
        last = s0 + k - 1
        self.src[j], self.w[j] = self.src[last], self.w[last]
        self.length[v] = k - 1

    def arrays(self, v):
        s0 = self.start[v]
        return self.src[s0:s0 + self.length[v]], self.w[s0:s0 + self.length[v]]


class DynamicGraph:
    """Weighted directed graph with mirrored in/out adjacency.

    Node ids are dense integers ``0..n-1`` in arrival order.
    """

    def __init__(self, n: int = 0):
        self.n = 0
        self.out_adj: list = []
        self.in_adj: list = []
        self._deg = np.zeros(max(16, n))
        self.in_pool = _InPool()
        self.m = 0
        for _ in range(n):
            self._new_node()

    @classmethod
    def from_edges(cls, n: int, edges) -> "DynamicGraph":
        g = cls(n)
        for e in edges:
            u, v = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) > 2 else 1.0
            g._check(u)
            g._check(v)
            if v in g.out_adj[u]:
                raise DuplicateEdge(f"edge ({u}, {v}) already present")
            g._insert(u, v, w)
        return g

    # -- accessors ---------------------------------------------------------

    @property
    def out_deg(self) -> np.ndarray:
        return self._deg[: self.n]

    def out_degree(self, u: int) -> float:
        self._check(u)
        return float(self._deg[u])

    def out_neighbors(self, u: int) -> dict:
        self._check(u)
        return self.out_adj[u]

    def in_neighbors(self, u: int) -> dict:
        self._check(u)
        return self.in_adj[u]

    def has_edge(self, u: int, v: int) -> bool:
        return 0 <= u < self.n and v in self.out_adj[u]

    def in_arrays(self, u: int):
        """In-neighbors of ``u`` as ``(sources, weights)`` array views."""
        return self.in_pool.arrays(u)

    def edges(self):
        for u, adj in enumerate(self.out_adj):
            for v, w in adj.items():
                yield u, v, w

    def edge_arrays(self):
        src = np.empty(self.m, dtype=np.int64)
        dst = np.empty(self.m, dtype=np.int64)
        wts = np.empty(self.m)
        pos = 0
        for u, adj in enumerate(self.out_adj):
            k = len(adj)
            src[pos:pos + k] = u
            dst[pos:pos + k] = np.fromiter(adj.keys(), dtype=np.int64, count=k)
            wts[pos:pos + k] = np.fromiter(adj.values(), dtype=np.float64, count=k)
            pos += k
        return src, dst, wts

    def adjacency(self, fmt="csr"):
        import scipy.sparse as sp

        src, dst, w = self.edge_arrays()
        a = sp.coo_matrix((w, (src, dst)), shape=(self.n, self.n))
        return a.asformat(fmt)

    def copy(self) -> "DynamicGraph":
        g = DynamicGraph(self.n)
        for u, v, w in self.edges():
            g._insert(u, v, w)
        return g

    # -- mutation ----------------------------------------------------------

    def apply_event(self, event: GraphEvent) -> list:
        """Mutate the graph and return the event's delta sequence."""
        if isinstance(event, AddEdge):
            return [self._add_edge(event.u, event.v, event.weight)]
        if isinstance(event, RemoveEdge):
            return [self._remove_edge(event.u, event.v)]
        if isinstance(event, AddNode):
            return self._add_node(event)
        raise TypeError(f"unknown event {event!r}")

    def touched_rows(self, event: GraphEvent) -> list:
        """Rows of the adjacency whose out-neighborhood an (applied) event changed."""
        if isinstance(event, AddNode):
            return sorted({s for s, _ in event.in_edges} | {self.n - 1})
        return [event.u]

    def _add_edge(self, u, v, w) -> DeltaVectors:
        self._check(u)
        self._check(v)
        if not w > 0:
            raise ValueError(f"edge weight must be positive, got {w}")
        if v in self.out_adj[u]:
            raise DuplicateEdge(f"edge ({u}, {v}) already present")
        self._insert(u, v, w)
        return DeltaVectors(SparseRowMatrix.column(self.n, [(u, 1.0)]),
                            SparseRowMatrix.column(self.n, [(v, w)]), 1)

    def _remove_edge(self, u, v) -> DeltaVectors:
        self._check(u)
        self._check(v)
        w = self.out_adj[u].get(v)
        if w is None:
            raise MissingEdge(f"edge ({u}, {v}) not present")
        del self.out_adj[u][v]
        del self.in_adj[v][u]
        self.in_pool.remove(v, u)
        self.m -= 1
        # recount rather than subtract so an emptied row is exactly zero
        self._deg[u] = sum(self.out_adj[u].values())
        return DeltaVectors(SparseRowMatrix.column(self.n, [(u, 1.0)]),
                            SparseRowMatrix.column(self.n, [(v, -w)]), 1)

    def _add_node(self, event: AddNode) -> list:
        n = self.n
        seen_in, seen_out = set(), set()
        for s, w in event.in_edges:
            self._check(s)
            if s in seen_in:
                raise DuplicateEdge(f"edge ({s}, {n}) listed twice")
            if not w > 0:
                raise ValueError(f"edge weight must be positive, got {w}")
            seen_in.add(s)
        for t, w in event.out_edges:
            self._check(t)
            if t in seen_out:
                raise DuplicateEdge(f"edge ({n}, {t}) listed twice")
            if not w > 0:
                raise ValueError(f"edge weight must be positive, got {w}")
            seen_out.add(t)
        self._new_node()
        for s, w in event.in_edges:
            self._insert(s, n, w)
        for t, w in event.out_edges:
            self._insert(n, t, w)
        delta_m = len(event.in_edges) + len(event.out_edges)
        b1 = SparseRowMatrix.column(n, event.in_edges)
        b2 = SparseRowMatrix.column(n + 1, event.out_edges)
        return [DeltaVectors(b1, None, delta_m), DeltaVectors(b2, None, delta_m)]

    def _new_node(self):
        if self.n == len(self._deg):
            self._deg = np.concatenate([self._deg, np.zeros(len(self._deg))])
        self.out_adj.append({})
        self.in_adj.append({})
        self.in_pool.add_node(self.n)
        self._deg[self.n] = 0.0
        self.n += 1

    def _insert(self, u, v, w):
        self.out_adj[u][v] = w
        self.in_adj[v][u] = w
        self.in_pool.insert(v, u, w)
        self._deg[u] += w
        self.m += 1

    def _check(self, u):
        if not 0 <= u < self.n:
            raise UnknownNode(f"node {u} not in graph with {self.n} nodes")

    def __repr__(self):
        return f"DynamicGraph(n={self.n}, m={self.m})"
