"""Evaluation protocols, metrics, and brute-force oracles."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .engine import Engine
from .errors import DegenerateLabels, GraphTooSmall, KTooLarge, TooLarge
from .graph import AddEdge, AddNode, DynamicGraph, RemoveEdge
from .linalg import RANK_TOL

GAP_TOL = 1e-6
ORACLE_MAX_N = 500
DRIFT_MAX_N = 3000


# -- metrics ---------------------------------------------------------------------

def _check_labels(labels):
    labels = np.asarray(labels)
    pos = int(np.sum(labels == 1))
    if pos == 0 or pos == len(labels):
        raise DegenerateLabels("need at least one positive and one negative label")
    return labels == 1


def auc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative (ties count 1/2)."""
    pos = _check_labels(labels)
    ranks = rankdata(np.asarray(scores, dtype=np.float64))
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Mean over positives of the precision at that positive's rank.

    Ties are resolved pessimistically: a positive's rank counts every item
    scoring at least as high.
    """
    pos = _check_labels(labels)
    s = np.asarray(scores, dtype=np.float64)
    # rank of an item = number of items with score >= its score
    order = np.sort(s)
    at_least = len(s) - np.searchsorted(order, s, side="left")
    pos_sorted = np.sort(s[pos])
    pos_at_least = len(pos_sorted) - np.searchsorted(pos_sorted, s[pos], side="left")
    return float(np.mean(pos_at_least / at_least[pos]))


def precision_at_k(pairs, scores, edge_set, ks) -> dict:
    """Fraction of the top-K pairs (descending score, then pair index) that are edges."""
    scores = np.asarray(scores, dtype=np.float64)
    pairs = np.asarray(pairs)
    ks = sorted({int(k) for k in ks})
    if ks and ks[-1] > len(scores):
        raise KTooLarge(f"K={ks[-1]} exceeds the {len(scores)} scored pairs")
    if not ks:
        return {}
    kmax = ks[-1]
    if kmax < len(scores):
        cand = np.argpartition(-scores, kmax - 1)[:kmax]
        # pull in every pair tied with the cutoff so index tie-breaking is exact
        cut = scores[cand].min()
        cand = np.flatnonzero(scores >= cut)
    else:
        cand = np.arange(len(scores))
    order = cand[np.lexsort((cand, -scores[cand]))][:kmax]
    hits = np.fromiter(((int(u), int(v)) in edge_set for u, v in pairs[order]), dtype=bool, count=len(order))
    cum = np.cumsum(hits)
    return {k: float(cum[k - 1] / k) for k in ks}


# -- reports ---------------------------------------------------------------------

@dataclass
class EvalReport:
    task: str
    metrics: dict = field(default_factory=dict)
    precision: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def lines(self) -> list:
        out = [f"task={self.task}"]
        out += [f"{k}={_fmt(v)}" for k, v in self.config.items()]
        out += [f"{k}={_fmt(v)}" for k, v in self.metrics.items()]
        out += [f"precision@{k}={_fmt(v)}" for k, v in sorted(self.precision.items())]
        out += [f"{k}={_fmt(v)}" for k, v in self.timing.items()]
        out += [f"{k}={_fmt(v)}" for k, v in self.extra.items()]
        return out

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def to_csv(self) -> str:
        rows = ["k,precision"] + [f"{k},{_fmt(v)}" for k, v in sorted(self.precision.items())]
        return "\n".join(rows) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _timing(samples) -> dict:
    t = np.asarray(samples, dtype=np.float64)
    if not len(t):
        return {"events": 0, "total_s": 0.0}
    return {"events": len(t), "mean_ms": 1e3 * float(t.mean()), "median_ms": 1e3 * float(np.median(t)),
            "max_ms": 1e3 * float(t.max()), "total_s": float(t.sum())}


# -- streaming protocol ------------------------------------------------------------

@dataclass
class Stream:
    """A graph replayed as seed subgraph plus one AddNode event per later node."""

    initial: DynamicGraph
    events: list
    order: np.ndarray  # order[new_id] = original id

    @property
    def position(self) -> np.ndarray:
        pos = np.empty(len(self.order), dtype=np.int64)
        pos[self.order] = np.arange(len(self.order))
        return pos


def node_stream(n: int, arcs, rng, seed_size: int = 100) -> Stream:
    """Order nodes randomly; seed with the first nodes, then add the rest one by one.

    ``arcs`` is an iterable of directed ``(u, v, w)``; every node joins with
    all of its arcs to nodes already present.
    """
    arcs = [a for a in arcs if a[0] != a[1]]  # a joining node cannot bring a self-loop
    order = rng.permutation(n)
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    if not arcs:
        raise GraphTooSmall("graph has no edges")
    src, dst, wts = (np.asarray(c) for c in zip(*arcs))
    ps, pd = pos[src.astype(np.int64)], pos[dst.astype(np.int64)]
    last = np.maximum(ps, pd)  # arc appears when its later endpoint joins
    s = min(n, max(seed_size, 2, int(np.min(last)) + 1))
    in_seed = last < s
    initial = DynamicGraph.from_edges(s, zip(ps[in_seed], pd[in_seed], wts[in_seed]))

    rest = np.flatnonzero(~in_seed)
    rest = rest[np.argsort(last[rest], kind="stable")]
    bounds = np.searchsorted(last[rest], np.arange(s, n + 1))
    events = []
    for j, node in enumerate(range(s, n)):
        chunk = rest[bounds[j]:bounds[j + 1]]
        ins = [(int(ps[i]), float(wts[i])) for i in chunk if pd[i] == node]
        outs = [(int(pd[i]), float(wts[i])) for i in chunk if ps[i] == node]
        events.append(AddNode(ins, outs))
    return Stream(initial, events, order)


def _seed_size(n: int) -> int:
    return min(100, max(2, math.ceil(0.1 * n)))


def embed_stream(stream: Stream, d, alpha, eps, seed, rebase_cond=1e8):
    """Initialize on the seed graph and replay the stream.  Returns (engine, timings)."""
    eng = Engine.initialize(stream.initial, d=d, alpha=alpha, eps=eps, seed=seed, rebase_cond=rebase_cond)
    times = []
    for ev in stream.events:
        t0 = time.perf_counter()
        eng.apply(ev)
        times.append(time.perf_counter() - t0)
    return eng, times


def _arcs(g: DynamicGraph):
    return list(g.edges())


def _undirected_pairs(g: DynamicGraph):
    return sorted({(min(u, v), max(u, v)) for u, v, _ in g.edges() if u != v})


@dataclass
class HoldoutSplit:
    train: list  # directed (u, v, w) arcs that stay in the graph
    positives: list
    negatives: list

    def pairs_and_labels(self):
        pairs = np.array(self.positives + self.negatives, dtype=np.int64).reshape(-1, 2)
        labels = np.r_[np.ones(len(self.positives)), np.zeros(len(self.negatives))]
        return pairs, labels


def holdout_split(g: DynamicGraph, removal_ratio, rng, undirected=False) -> HoldoutSplit:
    """Remove a uniform fraction of edges; pair them with as many sampled non-edges."""
    units = _undirected_pairs(g) if undirected else [(u, v) for u, v, _ in g.edges() if u != v]
    n_test = int(round(removal_ratio * len(units)))
    if g.n < 4 or n_test < 1 or n_test >= len(units):
        raise GraphTooSmall(f"cannot hold out {removal_ratio:.0%} of {len(units)} edges")
    held = rng.choice(len(units), n_test, replace=False)
    held_set = {units[i] for i in held}
    train = []
    for u, v, w in g.edges():
        key = (min(u, v), max(u, v)) if undirected else (u, v)
        if key not in held_set:
            train.append((u, v, w))
    positives = [units[i] for i in held]
    return HoldoutSplit(train, positives, _sample_non_edges(g, len(positives), rng, undirected))


def run_link_prediction(g: DynamicGraph, removal_ratio=0.3, d=128, alpha=0.3, eps=1e-5, seed=0,
                        undirected=False, seed_size=None, rebase_cond=1e8) -> EvalReport:
    """Hold out a fraction of edges, stream the rest, score held-out vs non-edges."""
    rng = np.random.default_rng(seed)
    split = holdout_split(g, removal_ratio, rng, undirected)
    stream = node_stream(g.n, split.train, rng, seed_size or _seed_size(g.n))
    eng, times = embed_stream(stream, d, alpha, eps, seed, rebase_cond)
    z, y = eng.embeddings(enhanced=True)
    pairs, labels = split.pairs_and_labels()
    pos_of = stream.position
    scores = score_pairs(z, y, pos_of[pairs[:, 0]], pos_of[pairs[:, 1]], undirected)
    return EvalReport(
        "link_prediction",
        metrics={"auc": auc(scores, labels), "ap": average_precision(scores, labels)},
        timing=_timing(times),
        config={"d": d, "alpha": alpha, "eps": eps, "seed": seed, "removal_ratio": removal_ratio,
                "n": g.n, "undirected": undirected},
        extra={"test_pairs": len(pairs), "final_rank": eng.state.k},
    )


def score_pairs(x, y, u, v, undirected=False) -> np.ndarray:
    s = np.einsum("ij,ij->i", x[u], y[v])
    if undirected:
        s = np.maximum(s, np.einsum("ij,ij->i", x[v], y[u]))
    return s


def _sample_non_edges(g, count, rng, undirected):
    out, seen = [], set()
    n = g.n
    limit = n * (n - 1) // (2 if undirected else 1) - (len(_undirected_pairs(g)) if undirected else g.m)
    if count > limit:
        raise GraphTooSmall("not enough non-edges to sample from")
    while len(out) < count:
        u, v = (int(t) for t in rng.integers(0, n, 2))
        if u == v:
            continue
        if undirected:
            u, v = min(u, v), max(u, v)
            if g.has_edge(u, v) or g.has_edge(v, u):
                continue
        elif g.has_edge(u, v):
            continue
        if (u, v) in seen:
            continue
        seen.add((u, v))
        out.append((u, v))
    return out


def run_graph_reconstruction(g: DynamicGraph, d=128, alpha=0.3, eps=1e-5, sample_fraction=1.0,
                             ks=None, seed=0, undirected=False, seed_size=None, rebase_cond=1e8) -> EvalReport:
    """Embed the whole stream, rank node pairs by score, report precision@K."""
    rng = np.random.default_rng(seed)
    if g.n < 3 or g.m == 0:
        raise GraphTooSmall("graph too small for reconstruction")
    stream = node_stream(g.n, _arcs(g), rng, seed_size or _seed_size(g.n))
    eng, times = embed_stream(stream, d, alpha, eps, seed, rebase_cond)
    z, y = eng.embeddings(enhanced=True)
    pos_of = stream.position
    z, y = z[pos_of], y[pos_of]  # back to original ids

    pairs = _pair_set(g.n, sample_fraction, rng, undirected)
    scores = score_pairs(z, y, pairs[:, 0], pairs[:, 1], undirected)
    if undirected:
        edge_set = {(min(u, v), max(u, v)) for u, v, _ in g.edges() if u != v}
    else:
        edge_set = {(u, v) for u, v, _ in g.edges() if u != v}
    if ks is None:
        ks = [10 ** i for i in range(1, 7)]
    ks = sorted({min(int(k), len(pairs)) for k in ks})
    prec = precision_at_k(pairs, scores, edge_set, ks)
    n_edges = len(edge_set)
    return EvalReport(
        "graph_reconstruction",
        precision=prec,
        timing=_timing(times),
        config={"d": d, "alpha": alpha, "eps": eps, "seed": seed, "sample_fraction": sample_fraction,
                "n": g.n, "undirected": undirected},
        extra={"pairs": len(pairs), "edges": n_edges, "random_baseline": n_edges / len(pairs)},
    )


def _pair_set(n, fraction, rng, undirected):
    if undirected:
        iu, iv = np.triu_indices(n, 1)
    else:
        iu, iv = np.nonzero(~np.eye(n, dtype=bool))
    pairs = np.stack([iu, iv], axis=1).astype(np.int64)
    if fraction < 1.0:
        take = max(1, int(round(fraction * len(pairs))))
        pairs = pairs[np.sort(rng.choice(len(pairs), take, replace=False))]
    return pairs


# -- oracles ---------------------------------------------------------------------------

@dataclass
class OracleStep:
    sigma: np.ndarray
    gap_ok: bool
    u: np.ndarray
    v: np.ndarray

    @property
    def product(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def _truncate(u, s, vt_or_v, d, transposed):
    keep = min(d, int(np.sum(s > RANK_TOL * s[0]))) if len(s) and s[0] > 0 else 0
    if keep < len(s):
        gap = s[keep - 1] - s[keep] if keep else 0.0
    else:
        gap = s[keep - 1] if keep else 0.0
    ok = keep == 0 or gap > GAP_TOL * s[0]
    v = vt_or_v[:keep].T if transposed else vt_or_v[:, :keep]
    return u[:, :keep], s[:keep], v, ok


class RecursiveOracle:
    """Exact recursion: after every event, truncate the *updated previous product*.

    ``mode="dense"`` runs a full dense SVD of the updated product each step.
    ``mode="factored"`` keeps explicit (U, S, V) and takes the exact SVD of
    the updated low-rank product through QR of its two factors, which is
    O(n k^2) instead of O(n^3).
    """

    def __init__(self, initial, d: int, mode: str = "dense"):
        a = np.asarray(initial, dtype=np.float64)
        if max(a.shape) > ORACLE_MAX_N:
            raise TooLarge(f"oracle limited to {ORACLE_MAX_N} nodes")
        self.d = d
        self.mode = mode
        self.adj = a.copy()
        if np.any(a):
            u, s, vt = np.linalg.svd(a, full_matrices=False)
            self.u, self.s, self.v, _ = _truncate(u, s, vt, d, True)
        else:
            self.u, self.s, self.v = np.zeros((a.shape[0], 0)), np.zeros(0), np.zeros((a.shape[1], 0))

    @property
    def product(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T

    def resync(self, x, y, sigma):
        """Adopt another valid truncation (used after a non-unique step)."""
        root = np.sqrt(np.asarray(sigma))
        self.u, self.v, self.s = np.asarray(x) / root, np.asarray(y) / root, np.array(sigma, dtype=np.float64)

    def step(self, event) -> OracleStep:
        if isinstance(event, AddEdge):
            self.adj[event.u, event.v] += event.weight
            ok = self._rank_one(event.u, event.v, event.weight)
        elif isinstance(event, RemoveEdge):
            w = self.adj[event.u, event.v]
            self.adj[event.u, event.v] = 0.0
            ok = self._rank_one(event.u, event.v, -w)
        elif isinstance(event, AddNode):
            n1, n2 = self.adj.shape
            col = np.zeros(n1)
            for s_, w in event.in_edges:
                col[s_] = w
            row = np.zeros(n2 + 1)
            for t, w in event.out_edges:
                row[t] = w
            self.adj = np.vstack([np.hstack([self.adj, col[:, None]]), row[None, :]])
            ok = self._append_col(col)
            self.u, self.v = self.v, self.u
            ok &= self._append_col(row)
            self.u, self.v = self.v, self.u
        else:
            raise TypeError(f"unknown event {event!r}")
        return OracleStep(self.s.copy(), bool(ok), self.u.copy(), self.v.copy())

    def _rank_one(self, i, j, w):
        b = np.zeros(self.u.shape[0])
        b[i] = 1.0
        c = np.zeros(self.v.shape[0])
        c[j] = w
        if self.mode == "dense":
            return self._dense(self.product + np.outer(b, c))
        left = np.hstack([self.u, b[:, None]])
        right = np.hstack([self.v, c[:, None]])
        return self._factored(left, np.r_[self.s, 1.0], right)

    def _append_col(self, col):
        if self.mode == "dense":
            return self._dense(np.hstack([self.product, col[:, None]]))
        k = len(self.s)
        left = np.hstack([self.u, col[:, None]])
        right = np.zeros((self.v.shape[0] + 1, k + 1))
        right[:-1, :k] = self.v
        right[-1, k] = 1.0
        return self._factored(left, np.r_[self.s, 1.0], right)

    def _dense(self, m):
        if not np.any(m):
            self.u, self.s, self.v = np.zeros((m.shape[0], 0)), np.zeros(0), np.zeros((m.shape[1], 0))
            return True
        u, s, vt = np.linalg.svd(m, full_matrices=False)
        self.u, self.s, self.v, ok = _truncate(u, s, vt, self.d, True)
        return ok

    def _factored(self, left, mid, right):
        ql, rl = np.linalg.qr(left)
        qr_, rr = np.linalg.qr(right)
        core = (rl * mid) @ rr.T
        if not np.any(core):
            self.u, self.s, self.v = np.zeros((left.shape[0], 0)), np.zeros(0), np.zeros((right.shape[0], 0))
            return True
        u, s, vt = np.linalg.svd(core)
        cu, cs, cv, ok = _truncate(u, s, vt, self.d, True)
        self.u, self.s, self.v = ql @ cu, cs, qr_ @ cv
        return ok


def oracle_recursive_tsvd(events, d: int, initial=None, n: int = 2, mode: str = "dense"):
    """Yield an ``OracleStep`` (product, sigma, gap flag) after each event."""
    if initial is None:
        initial = np.zeros((n, n))
    oracle = RecursiveOracle(initial, d, mode)
    for ev in events:
        yield oracle.step(ev)


def drift_report(engine: Engine) -> dict:
    """Distance of the tracked product from the t-SVD of the true adjacency."""
    g, st = engine.graph, engine.state
    if g.n > DRIFT_MAX_N:
        raise TooLarge(f"drift report limited to {DRIFT_MAX_N} nodes")
    a = g.adjacency().toarray()
    u, s, vt = np.linalg.svd(a)
    keep = min(st.d, int(np.sum(s > RANK_TOL * s[0])))
    best = (u[:, :keep] * s[:keep]) @ vt[:keep]
    x, y = st.query_all()
    drift = np.linalg.norm(x @ y.T - best) / np.linalg.norm(a)
    c = float(np.max(np.abs(g.out_deg[:, None] * x))) if x.size else 0.0
    return {"drift": float(drift), "c": c, "rank": st.k, "true_rank": int(np.sum(s > RANK_TOL * s[0]))}


# -- latency ---------------------------------------------------------------------

def random_graph(n: int, avg_degree: float, rng) -> DynamicGraph:
    m = int(n * avg_degree)
    codes = np.unique(rng.integers(0, n, size=(int(m * 1.05) + 10, 2)) @ np.array([n, 1], dtype=np.int64))
    u, v = np.divmod(codes, n)
    keep = u != v
    u, v = u[keep], v[keep]
    pick = rng.permutation(len(u))[:m]
    return DynamicGraph.from_edges(n, zip(u[pick].tolist(), v[pick].tolist()))


def bench_update_latency(n_values=(10_000, 100_000), d=32, events_per_n=200, seed=0, alpha=0.3,
                         eps=1e-5, avg_degree=10.0, warmup=10) -> EvalReport:
    """Per-event latency of single-edge insertions on random graphs of growing size."""
    rng = np.random.default_rng(seed)
    means, timing = {}, {}
    for n in n_values:
        n = int(n)
        g = random_graph(n, avg_degree, rng)
        eng = Engine.initialize(g, d=d, alpha=alpha, eps=eps, seed=seed)
        times = []
        done = 0
        while done < events_per_n + warmup:
            u, v = (int(t) for t in rng.integers(0, n, 2))
            if u == v or g.has_edge(u, v):
                continue
            t0 = time.perf_counter()
            eng.apply(AddEdge(u, v))
            dt = time.perf_counter() - t0
            if done >= warmup:
                times.append(dt)
            done += 1
        stats = _timing(times)
        means[n] = stats["mean_ms"]
        for key in ("mean_ms", "median_ms", "max_ms"):
            timing[f"n{n}_{key}"] = stats[key]
    lo, hi = min(means), max(means)
    return EvalReport(
        "bench",
        timing=timing,
        config={"d": d, "alpha": alpha, "eps": eps, "seed": seed, "events_per_n": events_per_n},
        metrics={"latency_ratio": means[hi] / means[lo]},
    )
