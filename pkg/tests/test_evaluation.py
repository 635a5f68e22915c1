import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import average_precision_score, roc_auc_score

from dynfactor.engine import Engine
from dynfactor.errors import DegenerateLabels, GraphTooSmall, KTooLarge, TooLarge
from dynfactor.evaluation import (EvalReport, RecursiveOracle, auc, average_precision, bench_update_latency,
                                  drift_report, embed_stream, holdout_split, node_stream,
                                  oracle_recursive_tsvd, precision_at_k, run_graph_reconstruction,
                                  run_link_prediction, score_pairs)
from dynfactor.graph import AddEdge, DynamicGraph
from helpers import random_events, rel_err, weighted_graph


def sbm(n, p_in, p_out, rng):
    half = n // 2
    block = np.arange(n) >= half
    probs = np.where(block[:, None] == block[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < probs, 1)
    u, v = np.nonzero(upper)
    return DynamicGraph.from_edges(n, [(a, b) for a, b in zip(u, v)] + [(b, a) for a, b in zip(u, v)])


# -- metrics --------------------------------------------------------------------------

def test_auc_examples():
    assert auc([0.9, 0.1], [1, 0]) == 1.0
    assert auc([0.1, 0.9], [1, 0]) == 0.0
    assert auc([0.5, 0.5], [1, 0]) == 0.5
    assert average_precision([0.9, 0.1], [1, 0]) == 1.0


def test_degenerate_labels():
    with pytest.raises(DegenerateLabels):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(DegenerateLabels):
        average_precision([0.1, 0.2], [0, 0])


def test_metrics_match_reference_implementation(rng):
    for _ in range(50):
        n = int(rng.integers(2, 300))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = rng.integers(0, 6, n) / 5.0 if rng.random() < 0.5 else rng.standard_normal(n)
        assert auc(scores, labels) == pytest.approx(roc_auc_score(labels, scores), abs=1e-12)
        assert average_precision(scores, labels) == pytest.approx(average_precision_score(labels, scores),
                                                                  abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.booleans()), min_size=2, max_size=60))
def test_auc_invariant_under_monotone_transform(items):
    scores = np.array([s for s, _ in items])
    labels = np.array([int(lab) for _, lab in items])
    if labels.min() == labels.max():
        return
    base = auc(scores, labels)
    ranks = np.unique(scores, return_inverse=True)[1].astype(float)
    assert auc(ranks ** 3 - 7.0, labels) == pytest.approx(base, abs=1e-12)
    assert 0.0 <= base <= 1.0
    assert 0.0 <= average_precision(scores, labels) <= 1.0


def test_perfect_separation():
    scores = np.r_[np.linspace(1, 2, 10), np.linspace(-2, 0, 30)]
    labels = np.r_[np.ones(10), np.zeros(30)]
    assert auc(scores, labels) == 1.0 and average_precision(scores, labels) == 1.0


def test_precision_at_k_examples():
    pairs = np.array([(i, i + 1) for i in range(20)])
    scores = -np.arange(20.0)
    edges = {(i, i + 1) for i in range(10)}
    assert precision_at_k(pairs, scores, edges, [10]) == {10: 1.0}
    assert precision_at_k(pairs, scores, set(), [5, 20]) == {5: 0.0, 20: 0.0}
    assert precision_at_k(pairs, scores, edges, [20])[20] == 0.5
    with pytest.raises(KTooLarge):
        precision_at_k(pairs, scores, edges, [21])


def test_precision_ties_broken_by_index():
    pairs = np.array([(0, 1), (0, 2), (0, 3), (0, 4)])
    scores = np.array([1.0, 2.0, 2.0, 2.0])
    assert precision_at_k(pairs, scores, {(0, 2)}, [1]) == {1: 1.0}
    assert precision_at_k(pairs, scores, {(0, 4)}, [2]) == {2: 0.0}


def test_precision_of_random_ranking(rng):
    n, m = 50, 200
    iu, iv = np.triu_indices(n, 1)
    chosen = rng.choice(len(iu), m, replace=False)
    edges = {(int(iu[i]), int(iv[i])) for i in chosen}
    pairs = np.stack([iu, iv], axis=1)
    expected = m / len(pairs)
    vals = [precision_at_k(pairs, rng.random(len(pairs)), edges, [600])[600] for _ in range(20)]
    assert abs(np.mean(vals) - expected) < 0.02
    assert precision_at_k(pairs, rng.random(len(pairs)), edges, [len(pairs)])[len(pairs)] == expected


# -- streaming protocol ----------------------------------------------------------------------

def test_node_stream_replays_graph(rng):
    g = weighted_graph(40, 120, rng)
    stream = node_stream(g.n, list(g.edges()), rng, seed_size=5)
    h = stream.initial.copy()
    for ev in stream.events:
        h.apply_event(ev)
    assert h.n == g.n and h.m == g.m
    order = stream.order
    for u, v, w in h.edges():
        assert g.out_adj[order[u]][order[v]] == w
    assert stream.initial.m >= 1


def test_holdout_split(rng):
    g = weighted_graph(50, 200, rng)
    split = holdout_split(g, 0.3, rng)
    assert len(split.positives) == 60 == len(split.negatives)
    assert len(split.train) == 140
    train = {(u, v) for u, v, _ in split.train}
    for u, v in split.positives:
        assert g.has_edge(u, v) and (u, v) not in train
    for u, v in split.negatives:
        assert u != v and not g.has_edge(u, v)
    assert len(set(split.negatives)) == len(split.negatives)


def test_link_prediction_too_small():
    with pytest.raises(GraphTooSmall):
        run_link_prediction(DynamicGraph.from_edges(3, [(0, 1)]), d=2)


def test_link_prediction_on_block_model():
    rng = np.random.default_rng(7)
    g = sbm(200, 0.2, 0.01, rng)
    split = holdout_split(g, 0.3, np.random.default_rng(0), undirected=True)
    pairs, labels = split.pairs_and_labels()
    # ranking by community alone: positives are mostly intra-block, negatives half
    half = g.n // 2
    same = (pairs[:, 0] >= half) == (pairs[:, 1] >= half)
    ceiling = auc(same.astype(float), labels)
    assert 0.7 < ceiling < 0.8
    # exact rank-2 embedding of the training graph recovers the blocks
    a = DynamicGraph.from_edges(g.n, split.train).adjacency().toarray()
    u, s, vt = np.linalg.svd(a)
    x, y = u[:, :2] * np.sqrt(s[:2]), vt[:2].T * np.sqrt(s[:2])
    exact = auc(score_pairs(x, y, pairs[:, 0], pairs[:, 1], True), labels)
    assert exact > ceiling - 0.02

    report = run_link_prediction(g, d=2, seed=0, undirected=True)
    assert report.metrics["auc"] > 0.7
    assert report.metrics["auc"] > exact - 0.02
    assert 0 <= report.metrics["ap"] <= 1


def test_link_prediction_alpha_one_is_raw_scoring(rng):
    g = weighted_graph(120, 500, rng)
    report = run_link_prediction(g, d=8, alpha=1.0, seed=3)
    r = np.random.default_rng(3)
    split = holdout_split(g, 0.3, r)
    stream = node_stream(g.n, split.train, r, 12)
    eng, _ = embed_stream(stream, 8, 1.0, 1e-5, 3)
    x, y = eng.state.query_all()
    pairs, labels = split.pairs_and_labels()
    pos = stream.position
    scores = score_pairs(x, y, pos[pairs[:, 0]], pos[pairs[:, 1]])
    assert report.metrics["auc"] == auc(scores, labels)
    assert report.metrics["ap"] == average_precision(scores, labels)


def test_link_prediction_deterministic(rng):
    g = weighted_graph(80, 300, rng)
    a = run_link_prediction(g, d=6, seed=1)
    b = run_link_prediction(g, d=6, seed=1)
    assert a.metrics == b.metrics


def test_reconstruction_full_rank_is_exact(rng):
    g = DynamicGraph.from_edges(12, [(0, 1), (1, 2), (2, 0), (3, 4), (5, 6), (6, 5), (7, 8), (9, 10), (10, 11)])
    m = g.m
    report = run_graph_reconstruction(g, d=12, alpha=1.0, ks=[1, 5, m, 10_000], seed=0)
    for k in (1, 5, m):
        assert report.precision[k] == 1.0
    n_pairs = 12 * 11
    assert n_pairs in report.precision
    assert report.precision[n_pairs] == pytest.approx(m / n_pairs)


def test_reconstruction_sampled(rng):
    g = weighted_graph(60, 240, rng)
    report = run_graph_reconstruction(g, d=8, sample_fraction=0.5, ks=[10, 100], seed=0)
    assert report.extra["pairs"] == round(0.5 * 60 * 59)
    assert set(report.precision) == {10, 100}
    assert all(0 <= p <= 1 for p in report.precision.values())


def test_reconstruction_too_small():
    with pytest.raises(GraphTooSmall):
        run_graph_reconstruction(DynamicGraph(5), d=2)


# -- oracles -----------------------------------------------------------------------------

def test_oracle_single_edge():
    (step,) = oracle_recursive_tsvd([AddEdge(0, 1)], d=2, n=2)
    np.testing.assert_allclose(step.product, [[0, 1], [0, 0]], atol=1e-15)
    np.testing.assert_allclose(step.sigma, [1.0])


def test_oracle_without_truncation_is_exact(rng):
    events = [AddEdge(2 * i, 2 * i + 1, float(rng.uniform(0.5, 1.5))) for i in range(4)]
    *_, last = oracle_recursive_tsvd(events, d=4, n=8)
    a = np.zeros((8, 8))
    for ev in events:
        a[ev.u, ev.v] = ev.weight
    np.testing.assert_allclose(last.product, a, atol=1e-14)


def test_oracle_modes_agree(rng):
    g = weighted_graph(40, 8, rng)
    events = random_events(g, 300, rng)
    dense = RecursiveOracle(g.adjacency().toarray(), 8, "dense")
    fact = RecursiveOracle(g.adjacency().toarray(), 8, "factored")
    for ev in events:
        a, b = dense.step(ev), fact.step(ev)
        if a.gap_ok and b.gap_ok:
            assert rel_err(b.product, a.product) <= 1e-10
            np.testing.assert_allclose(b.sigma, a.sigma, rtol=1e-10)
        else:
            fact.resync(dense.u * np.sqrt(dense.s), dense.v * np.sqrt(dense.s), dense.s)


def test_oracle_too_large():
    with pytest.raises(TooLarge):
        RecursiveOracle(np.zeros((501, 501)), 4)


def test_drift_report(rng):
    g = weighted_graph(30, 60, rng)
    eng = Engine.initialize(g, d=30, alpha=1.0, seed=0)
    assert drift_report(eng)["drift"] <= 1e-8
    for ev in random_events(g, 100, rng, p_node=0.0):
        eng.apply(ev)
    rep = drift_report(eng)
    assert rep["drift"] <= 1e-8
    x, _ = eng.state.query_all()
    assert rep["c"] == pytest.approx(np.max(np.abs(eng.graph.out_deg[:, None] * x)))

    small = Engine.initialize(weighted_graph(40, 120, rng), d=4, alpha=1.0, seed=0)
    assert drift_report(small)["drift"] > 0


def test_bench_report():
    rep = bench_update_latency((500, 1000), d=8, events_per_n=20, seed=0)
    assert rep.metrics["latency_ratio"] > 0
    assert all(v >= 0 for v in rep.timing.values())
    assert "latency_ratio=" in rep.to_text()


def test_latency_grows_with_dimension():
    lo = bench_update_latency((5000,), d=32, events_per_n=60, seed=0)
    hi = bench_update_latency((5000,), d=128, events_per_n=60, seed=0)
    assert lo.timing["n5000_mean_ms"] < hi.timing["n5000_mean_ms"]


def test_report_formats():
    rep = EvalReport("graph_reconstruction", precision={10: 1.0, 100: 0.5}, config={"d": 4})
    text = rep.to_text()
    assert text.splitlines()[0] == "task=graph_reconstruction"
    assert "precision@100=0.5" in text
    assert rep.to_csv() == "k,precision\n10,1\n100,0.5\n"
