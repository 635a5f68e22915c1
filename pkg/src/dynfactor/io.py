"""Edge lists, event files, binary state files and embedding export."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .engine import Engine
from .errors import ParseError
from .graph import AddEdge, AddNode, DynamicGraph, RemoveEdge
from .ppr import EnhancerParams, PPREnhancer
from .state import FactorState

MAGIC = b"DAMF"
VERSION = 1
_HEADER = struct.Struct("<4sI6q3B5x5d")


def _lines(source):
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            yield from enumerate(fh, 1)
    else:
        yield from enumerate(source, 1)


def _node(tok, lineno):
    try:
        u = int(tok)
    except ValueError:
        raise ParseError(f"bad node id {tok!r}", lineno) from None
    if u < 0:
        raise ParseError(f"negative node id {u}", lineno)
    return u


def _weight(tok, lineno):
    try:
        w = float(tok)
    except ValueError:
        raise ParseError(f"bad weight {tok!r}", lineno) from None
    if not (w > 0 and np.isfinite(w)):
        raise ParseError(f"weight must be positive and finite, got {tok}", lineno)
    return w


def read_edge_list(source, undirected: bool = False) -> DynamicGraph:
    """Parse ``u v [w]`` lines; ``#`` starts a comment.  ``n`` is the largest id plus one.

    In undirected mode each line adds both arcs and repeated pairs collapse
    (the first weight wins); in directed mode a repeated arc is an error.
    """
    arcs, seen, n = [], {}, 0
    for lineno, raw in _lines(source):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        if len(line) not in (2, 3):
            raise ParseError(f"expected 'u v [w]', got {raw.strip()!r}", lineno)
        u, v = _node(line[0], lineno), _node(line[1], lineno)
        w = _weight(line[2], lineno) if len(line) == 3 else 1.0
        n = max(n, u + 1, v + 1)
        pairs = [(u, v), (v, u)] if undirected and u != v else [(u, v)]
        for arc in pairs:
            if arc in seen:
                if undirected:
                    continue
                raise ParseError(f"duplicate edge {arc} (first on line {seen[arc]})", lineno)
            seen[arc] = lineno
            arcs.append((arc[0], arc[1], w))
    return DynamicGraph.from_edges(n, arcs)


def _neighbor_list(tok, lineno):
    body = tok[2:]
    if not body:
        return ()
    out = []
    for item in body.split(","):
        if "=" in item:
            a, w = item.split("=", 1)
            out.append((_node(a, lineno), _weight(w, lineno)))
        else:
            out.append((_node(item, lineno), 1.0))
    return tuple(out)


def read_events(source):
    """Yield ``(lineno, event, declared_id)`` for an event file.

    Lines are ``E u v [w]``, ``D u v`` or ``N id [s:a,b,...] [t:c,d,...]``;
    a neighbor may carry a weight as ``a=w``.  ``declared_id`` is the id
    given on an ``N`` line (None otherwise) so the caller can check it
    against arrival order.
    """
    for lineno, raw in _lines(source):
        tok = raw.split("#", 1)[0].split()
        if not tok:
            continue
        kind = tok[0].upper()
        if kind == "E" and len(tok) in (3, 4):
            w = _weight(tok[3], lineno) if len(tok) == 4 else 1.0
            yield lineno, AddEdge(_node(tok[1], lineno), _node(tok[2], lineno), w), None
        elif kind == "D" and len(tok) == 3:
            yield lineno, RemoveEdge(_node(tok[1], lineno), _node(tok[2], lineno)), None
        elif kind == "N" and 2 <= len(tok) <= 4:
            ins, outs = (), ()
            for part in tok[2:]:
                if part.startswith("s:"):
                    ins = _neighbor_list(part, lineno)
                elif part.startswith("t:"):
                    outs = _neighbor_list(part, lineno)
                else:
                    raise ParseError(f"expected 's:' or 't:' list, got {part!r}", lineno)
            yield lineno, AddNode(ins, outs), _node(tok[1], lineno)
        else:
            raise ParseError(f"unrecognized event line {raw.strip()!r}", lineno)


# -- state files ---------------------------------------------------------------------

def _graph_arrays(g: DynamicGraph):
    out_src, out_dst, out_w = g.edge_arrays()
    pool = g.in_pool
    lengths = pool.length[: g.n].copy()
    in_src = np.concatenate([pool.arrays(v)[0] for v in range(g.n)]) if g.m else np.empty(0, np.int64)
    return out_src, out_dst, out_w, lengths, in_src, g.out_deg.copy()


def _graph_from_arrays(n, out_src, out_dst, out_w, lengths, in_src, deg) -> DynamicGraph:
    g = DynamicGraph(n)
    for u, v, w in zip(out_src.tolist(), out_dst.tolist(), out_w.tolist()):
        g.out_adj[u][v] = w
    pos = 0
    for v, k in enumerate(lengths.tolist()):
        for u in in_src[pos:pos + k].tolist():
            w = g.out_adj[u][v]
            g.in_adj[v][u] = w
            g.in_pool.insert(v, u, w)
        pos += k
    g.m = len(out_src)
    g.out_deg[:] = deg
    return g


def save_state(engine: Engine, path):
    """Write the full engine state so that a reload resumes bit-for-bit."""
    st, g, e = engine.state, engine.graph, engine.enhancer
    n, k = st.n, st.k
    if e is not None and e.pending:
        raise ValueError("enhancer has unprocessed queue entries")
    params = engine.params
    header = _HEADER.pack(
        MAGIC, VERSION, n, k, st.d, g.m, engine.events, st.since_rebase,
        e is not None, engine.undirected, st.eager,
        params.alpha, params.eps, st.rebase_cond, e.scale if e is not None else 0.0, float(st.rebase_every),
    )
    parts = [header, struct.pack("<q", st.rebases)]
    blocks = [st.xb, st.yb, st.px, st.py, st.sigma]
    if e is not None:
        blocks += [e.zb, e.rb]
    out_src, out_dst, out_w, lengths, in_src, deg = _graph_arrays(g)
    for arr in blocks + [out_w, deg]:
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    for arr in (out_src, out_dst, lengths, in_src):
        parts.append(np.ascontiguousarray(arr, dtype="<i8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_state(path) -> Engine:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise ParseError(f"{path}: not a state file")
    (_, version, n, k, d, m, events, since, has_e, undirected, eager,
     alpha, eps, rebase_cond, scale, every) = _HEADER.unpack_from(data)
    if version != VERSION:
        raise ParseError(f"{path}: unsupported state version {version}")
    off = _HEADER.size
    (rebases,) = struct.unpack_from("<q", data, off)
    off += 8

    def take(count, dtype, shape=None):
        nonlocal off
        size = count * 8
        if off + size > len(data):
            raise ParseError(f"{path}: truncated state file")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=off).astype(dtype[1:])
        off += size
        return arr.reshape(shape) if shape else arr

    xb, yb = take(n * k, "<f8", (n, k)), take(n * k, "<f8", (n, k))
    px, py = take(k * k, "<f8", (k, k)), take(k * k, "<f8", (k, k))
    sigma = take(k, "<f8")
    if has_e:
        zb, rb = take(n * k, "<f8", (n, k)), take(n * k, "<f8", (n, k))
    out_w, deg = take(m, "<f8"), take(n, "<f8")
    out_src, out_dst, lengths, in_src = take(m, "<i8"), take(m, "<i8"), take(n, "<i8"), take(m, "<i8")
    if off != len(data):
        raise ParseError(f"{path}: trailing bytes in state file")

    g = _graph_from_arrays(n, out_src, out_dst, out_w, lengths, in_src, deg)
    st = FactorState(xb, yb, sigma, d, px=px, py=py, eager=bool(eager), rebase_cond=rebase_cond,
                     rebase_every=int(every))
    st.since_rebase, st.rebases = since, rebases
    enhancer = None
    if has_e:
        enhancer = PPREnhancer(n, k, EnhancerParams(alpha, eps))
        enhancer.zb[:] = zb
        enhancer.rb[:] = rb
        enhancer.scale = scale
    eng = Engine(g, st, enhancer, undirected=bool(undirected))
    eng.events = events
    return eng


# -- export ---------------------------------------------------------------------------------

def export_embeddings(engine: Engine, path, enhanced: bool = False):
    """``n k`` header, then ``id x_1..x_k y_1..y_k`` per node (17 significant digits).

    With ``enhanced`` the context half is the PPR-enhanced embedding.
    """
    x, y = engine.embeddings(enhanced=enhanced)
    n, k = x.shape
    rows = np.hstack([x, y])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{n} {k}\n")
        for u in range(n):
            fh.write(f"{u} " + " ".join(format(v, ".17g") for v in rows[u]) + "\n")


def read_embeddings(path):
    """Inverse of :func:`export_embeddings`: returns ``(ids, context, content)``."""
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        n, k = int(head[0]), int(head[1])
        body = np.loadtxt(fh, ndmin=2) if n else np.zeros((0, 2 * k + 1))
    return body[:, 0].astype(np.int64), body[:, 1:k + 1], body[:, k + 1:]
