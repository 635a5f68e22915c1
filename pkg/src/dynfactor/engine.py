"""Event loop tying graph, factorization and enhancement together."""
from __future__ import annotations

import numpy as np

from .graph import DynamicGraph, GraphEvent, symmetrize
from .ppr import EnhancerParams, PPREnhancer
from .state import REBASE_COND, FactorState
from .update import handle_event


class Engine:
    """Streaming embedding of one graph.

    ``enhancer`` is None when ``alpha == 1`` (the enhanced embedding is then
    the context embedding itself).
    """

    def __init__(self, graph: DynamicGraph, state: FactorState, enhancer=None, *, undirected=False):
        self.graph = graph
        self.state = state
        self.enhancer = enhancer
        self.undirected = undirected
        self.events = 0

    @classmethod
    def initialize(cls, graph: DynamicGraph, d=128, alpha=0.3, eps=1e-5, seed=None,
                   rebase_cond=REBASE_COND, undirected=False, eager=False) -> "Engine":
        params = EnhancerParams(alpha, eps)
        state = FactorState.from_graph(graph, d, seed=seed, rebase_cond=rebase_cond, eager=eager)
        enhancer = PPREnhancer.init_propagate(graph, state, params) if alpha < 1 else None
        return cls(graph, state, enhancer, undirected=undirected)

    @property
    def params(self):
        return self.enhancer.params if self.enhancer is not None else EnhancerParams(1.0)

    def apply(self, event: GraphEvent) -> list:
        """Apply one event (two directed events for an undirected edge)."""
        updates = []
        for ev in (symmetrize(event) if self.undirected else [event]):
            updates.extend(self._apply_directed(ev))
        return updates

    def _apply_directed(self, event: GraphEvent) -> list:
        g = self.graph
        deltas = g.apply_event(event)
        updates = handle_event(self.state, deltas)
        e = self.enhancer
        if e is not None:
            for upd in updates:
                applied = upd.applied
                if applied.frame is not None:
                    e.reframe(applied.frame)
                e.grow(self.state.x.n)
                e.absorb_signal_delta(applied.dxb)
            e.absorb_structure_delta(g, self.state.xb, g.touched_rows(event))
            if any(u.applied.frame is not None for u in updates):
                e.scale = 0.0  # force a full rescan against the new frame
            e.refresh_scale(self.state.px, g)
            e.push_to_tolerance(g)
        self.events += 1
        return updates

    def rebase(self):
        old = self.state.rebase()
        if self.enhancer is not None:
            self.enhancer.reframe(old)
            self.enhancer.scale = 0.0
            self.enhancer.refresh_scale(self.state.px, self.graph)
            self.enhancer.push_to_tolerance(self.graph)

    # -- queries ------------------------------------------------------------------

    def context(self, u: int) -> np.ndarray:
        return self.state.query_context(u)

    def content(self, u: int) -> np.ndarray:
        return self.state.query_content(u)

    def enhanced(self, u: int) -> np.ndarray:
        if self.enhancer is None:
            return self.state.query_context(u)
        return self.enhancer.query_enhanced(self.state, u)

    def embeddings(self, enhanced: bool = True):
        """Dense ``(context-or-enhanced, content)`` matrices for all nodes."""
        x, y = self.state.query_all()
        if enhanced and self.enhancer is not None:
            x = self.enhancer.enhanced_all(self.state)
        return x, y
