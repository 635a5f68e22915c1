"""Stream generators and dense oracles shared by the tests."""
import numpy as np

from dynfactor.graph import AddEdge, AddNode, DynamicGraph, RemoveEdge
from dynfactor.state import FactorState


def weighted_graph(n, m, rng, lo=0.5, hi=1.5):
    """Random directed graph with ``m`` distinct arcs and tie-free weights."""
    seen = set()
    while len(seen) < m:
        u, v = (int(t) for t in rng.integers(0, n, 2))
        if u != v:
            seen.add((u, v))
    return DynamicGraph.from_edges(n, [(u, v, float(rng.uniform(lo, hi))) for u, v in sorted(seen)])


def random_events(g, count, rng, p_node=0.1, p_remove=0.3, max_node_edges=3, lo=0.5, hi=1.5):
    """Valid mixed event stream against a private mirror of ``g``.

    Random weights keep singular values distinct, so truncations are unique
    except where the gap condition says otherwise.
    """
    mirror = g.copy()
    events = []
    while len(events) < count:
        roll = rng.random()
        n = mirror.n
        if roll < p_node:
            k_in, k_out = rng.integers(0, max_node_edges + 1, 2)
            ins = [(int(s), float(rng.uniform(lo, hi))) for s in rng.choice(n, min(k_in, n), replace=False)]
            outs = [(int(t), float(rng.uniform(lo, hi))) for t in rng.choice(n, min(k_out, n), replace=False)]
            ev = AddNode(ins, outs)
        elif roll < p_node + p_remove and mirror.m:
            src, dst, _ = mirror.edge_arrays()
            i = int(rng.integers(len(src)))
            ev = RemoveEdge(int(src[i]), int(dst[i]))
        else:
            u, v = (int(t) for t in rng.integers(0, n, 2))
            if u == v or mirror.has_edge(u, v):
                continue
            ev = AddEdge(u, v, float(rng.uniform(lo, hi)))
        mirror.apply_event(ev)
        events.append(ev)
    return events


def dense_ppr(a, x, alpha):
    """Exact fixed point of ``Z = alpha X + (1 - alpha) D^-1 A Z`` (dangling rows zero)."""
    deg = a.sum(axis=1)
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    op = inv[:, None] * a
    return np.linalg.solve(np.eye(len(a)) - (1 - alpha) * op, alpha * x)


def ppr_defect(a, x, z, alpha):
    """Row-scaled fixed-point defect ``|T(Z) - Z| / max(deg, 1)``, maximized over the row."""
    deg = a.sum(axis=1)
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    d = alpha * x + (1 - alpha) * (inv[:, None] * a) @ z - z
    return np.max(np.abs(d), axis=1, initial=0.0) / np.maximum(deg, 1.0)


def state_of(a, k, d=None, **kwargs):
    """Exact rank-``k`` state for a dense matrix (P = I)."""
    u, s, vt = np.linalg.svd(a)
    root = np.sqrt(s[:k])
    return FactorState(u[:, :k] * root, vt[:k].T * root, s[:k], d or k, **kwargs)


def truncate(m, d, tol=1e-10):
    """Best rank-``d`` approximation, its spectrum, and whether the truncation is unique."""
    u, s, vt = np.linalg.svd(m)
    keep = min(d, int(np.sum(s > tol * s[0])))
    gap = s[keep - 1] - (s[keep] if keep < len(s) else 0.0)
    return (u[:, :keep] * s[:keep]) @ vt[:keep], s[:keep], gap > 1e-6 * s[0]


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# verdict lines collected by the acceptance suite and echoed in the terminal summary
ACCEPTANCE = []
