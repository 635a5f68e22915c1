import numpy as np
import pytest

from dynfactor.errors import UnknownNode, ZeroMatrix
from dynfactor.graph import AddEdge, DynamicGraph
from dynfactor.linalg import SparseRowMatrix
from dynfactor.state import FactorState
from dynfactor.update import ProjectionUpdate, handle_event
from helpers import random_events, state_of, weighted_graph


def identity_update(s, dx=None):
    k = s.k
    return ProjectionUpdate(np.eye(k), np.eye(k), dx or SparseRowMatrix(s.n, k), SparseRowMatrix(s.n, k),
                            s.sigma.copy())


def test_star_graph_init():
    g = DynamicGraph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    s = FactorState.from_graph(g, 1, seed=0)
    oracle = np.linalg.svd(g.adjacency().toarray(), compute_uv=False)
    np.testing.assert_allclose(s.sigma, oracle[:1], rtol=1e-12)
    assert s.sigma[0] == pytest.approx(np.sqrt(3), rel=1e-12)
    for leaf in (1, 2, 3):
        assert s.reconstruct_entry(0, leaf) == pytest.approx(1.0, abs=1e-8)


def test_disjoint_edges_init():
    g = DynamicGraph.from_edges(6, [(0, 1), (2, 3), (4, 5)])
    s = FactorState.from_graph(g, 3, seed=0)
    np.testing.assert_allclose(s.sigma, [1, 1, 1], rtol=1e-12)


def test_init_clamps_rank():
    s = FactorState.from_graph(DynamicGraph.from_edges(4, [(1, 2)]), 4, seed=0)
    assert s.k == 1 and s.d == 4
    np.testing.assert_allclose(s.sigma, [1.0])


def test_init_rejects_edgeless():
    with pytest.raises(ZeroMatrix):
        FactorState.from_graph(DynamicGraph(3), 2)


def test_fresh_queries_equal_base_rows(rng):
    s = FactorState.from_graph(weighted_graph(10, 20, rng), 4, seed=0)
    for u in range(10):
        np.testing.assert_array_equal(s.query_context(u), s.xb[u])
        np.testing.assert_array_equal(s.query_content(u), s.yb[u])
    with pytest.raises(UnknownNode):
        s.query_context(10)
    with pytest.raises(UnknownNode):
        s.query_content(-1)


def test_identity_update_is_noop(rng):
    s = state_of(rng.standard_normal((8, 8)), 3)
    before = s.query_all()
    s.apply_update(identity_update(s))
    after = s.query_all()
    np.testing.assert_array_equal(before[0], after[0])
    np.testing.assert_array_equal(before[1], after[1])


def test_single_row_delta_is_local(rng):
    s = state_of(rng.standard_normal((8, 8)), 3)
    x0 = s.query_all()[0]
    delta = SparseRowMatrix(8, 3, [5], rng.standard_normal((1, 3)))
    s.apply_update(identity_update(s, delta))
    x1 = s.query_all()[0]
    others = [u for u in range(8) if u != 5]
    np.testing.assert_array_equal(x1[others], x0[others])
    np.testing.assert_allclose(x1[5], x0[5] + delta.values[0], rtol=1e-12)


def test_projection_composes(rng):
    s = state_of(rng.standard_normal((12, 12)), 4)
    x0, y0 = s.query_all()
    f = np.eye(4) + 0.3 * rng.standard_normal((4, 4))
    g = np.eye(4) + 0.3 * rng.standard_normal((4, 4))
    s.apply_update(ProjectionUpdate(f, g, SparseRowMatrix(12, 4), SparseRowMatrix(12, 4), s.sigma.copy()))
    x1, y1 = s.query_all()
    np.testing.assert_allclose(x1, x0 @ f, atol=1e-10)
    np.testing.assert_allclose(y1, y0 @ g, atol=1e-10)
    # lazily absorbed: base rows untouched
    assert s.rebases == 0


def test_row_append(rng):
    s = state_of(rng.standard_normal((5, 5)), 2)
    new = SparseRowMatrix(6, 2, [5], [[1.0, 2.0]])
    upd = ProjectionUpdate(np.eye(2), np.eye(2), SparseRowMatrix(5, 2), new, s.sigma.copy())
    s.apply_update(upd)
    assert s.y.n == 6 and s.x.n == 5
    np.testing.assert_allclose(s.query_content(5), [1.0, 2.0])


def test_ill_conditioned_projection_falls_back_to_eager(rng):
    s = state_of(rng.standard_normal((6, 6)), 2, rebase_cond=10.0)
    x0 = s.query_all()[0]
    f = np.diag([100.0, 1.0])
    delta = s.apply_update(ProjectionUpdate(f, np.eye(2), SparseRowMatrix(6, 2), SparseRowMatrix(6, 2),
                                            s.sigma.copy()))
    assert delta.frame is not None
    np.testing.assert_array_equal(s.px, np.eye(2))
    np.testing.assert_allclose(s.query_all()[0], x0 @ f, rtol=1e-12)


def test_rebase_fresh_is_noop(rng):
    s = state_of(rng.standard_normal((6, 6)), 3)
    xb = s.xb.copy()
    s.rebase()
    np.testing.assert_array_equal(s.xb, xb)
    assert s.cond_estimate() == pytest.approx(1.0)


def test_rebase_transparent_after_stream(rng):
    g = weighted_graph(60, 150, rng)
    s = FactorState.from_graph(g, 8, seed=1)
    for ev in random_events(g, 1000, rng):
        handle_event(s, g.apply_event(ev))
    x0, y0 = s.query_all()
    s.rebase()
    x1, y1 = s.query_all()
    assert np.linalg.norm(x1 - x0) <= 1e-9 * np.linalg.norm(x0)
    assert np.linalg.norm(y1 - y0) <= 1e-9 * np.linalg.norm(y0)
    assert s.cond_estimate() == pytest.approx(1.0)


def test_cond_estimate():
    s = FactorState(np.ones((2, 2)), np.ones((2, 2)), [1.0, 1.0], 2)
    assert s.cond_estimate() == pytest.approx(1.0)
    s.x.set_proj(np.diag([10.0, 1.0]))
    assert s.cond_estimate() == pytest.approx(10.0, rel=0.05)
    assert s.cond_estimate() >= 10.0 * (1 - 1e-9)


def test_orthonormality_holds_along_stream(rng):
    g = weighted_graph(50, 120, rng)
    s = FactorState.from_graph(g, 10, seed=3)
    for ev in random_events(g, 400, rng):
        handle_event(s, g.apply_event(ev))
        x, y = s.query_all()
        u, v = x / np.sqrt(s.sigma), y / np.sqrt(s.sigma)
        assert np.max(np.abs(u.T @ u - np.eye(s.k))) <= 1e-6
        assert np.max(np.abs(v.T @ v - np.eye(s.k))) <= 1e-6
        assert np.all(s.sigma > 0) and np.all(np.diff(s.sigma) <= 0)


def test_empty_state_grows_rank():
    s = FactorState.empty(3, 2)
    g = DynamicGraph(3)
    handle_event(s, g.apply_event(AddEdge(0, 1)))
    handle_event(s, g.apply_event(AddEdge(1, 2, 2.0)))
    handle_event(s, g.apply_event(AddEdge(2, 0, 3.0)))
    assert s.k == 2
    np.testing.assert_allclose(s.sigma, [3.0, 2.0], rtol=1e-12)
