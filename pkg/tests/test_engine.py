"""Batched engine behaviour: toy trace, mode equivalence, determinism."""

import numpy as np
import pytest

from bang.datasets import gaussian_mixture
from bang.engine import (GraphSearcher, IndexHost, exact_sq_dists,
                         greedy_search_reference, rerank)
from bang.errors import ParameterError
from bang.graph import GraphIndex, build_index
from bang.pq import train_codebook, compress_with_codebook
from tests.conftest import TOY_RERANKED, TOY_VISIT_ORDER


def _toy_searcher(toy, mode, **kwargs):
    params = dict(k=2, t=8, mode=mode, bloom_entries=4096, batch_size=16,
                  debug_checks=True)
    params.update(kwargs)
    searcher = GraphSearcher(**params)
    if mode == "exact_distance":
        searcher.fit(toy["base"], graph=toy["graph"])
    else:
        searcher.fit(toy["base"], graph=toy["graph"], codebook=toy["codebook"],
                     codes=toy["codes"])
    return searcher


@pytest.mark.parametrize("mode", ["pipelined", "in_memory", "exact_distance"])
def test_toy_top2_all_modes(toy, mode):
    result = _toy_searcher(toy, mode).search(toy["query"][None, :])
    assert set(result.ids[0].tolist()) == {10, 8}
    assert result.converged[0]


def test_toy_visit_order_and_iterations(toy):
    result = _toy_searcher(toy, "pipelined").search(toy["query"][None, :])
    assert result.visit_logs[0].tolist() == TOY_VISIT_ORDER
    assert int(result.iterations[0]) == len(TOY_VISIT_ORDER)


def test_toy_rerank_orders_all_visited(toy):
    searcher = _toy_searcher(toy, "pipelined", k=8)
    result = searcher.search(toy["query"][None, :])
    assert result.ids[0].tolist() == TOY_RERANKED


def test_toy_reference_trace(toy):
    ids, dists, order = greedy_search_reference(
        toy["graph"], toy["base"], toy["query"], k=2, t=8)
    assert order == TOY_VISIT_ORDER
    assert ids.tolist() == [10, 8]
    assert dists.tolist() == [73.0, 433.0]


def test_reference_returns_medoid_when_it_is_nearest():
    pts = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]], dtype=np.float32)
    graph = GraphIndex.from_lists([[1, 2], [0], [0]], medoid=0, degree_bound=2)
    ids, _, order = greedy_search_reference(graph, pts, np.zeros(2), k=1, t=4)
    assert ids.tolist() == [0]
    assert order[0] == 0


def test_two_node_graph_converges_quickly(toy):
    pts = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=np.float32)
    graph = GraphIndex.from_lists([[1], [0]], medoid=0, degree_bound=1)
    searcher = GraphSearcher(k=1, t=2, mode="exact_distance", bloom_entries=64,
                             debug_checks=True)
    searcher.fit(pts, graph=graph)
    result = searcher.search(np.array([[0.9, 0.0]], dtype=np.float32))
    assert int(result.iterations[0]) <= 2
    assert result.ids[0, 0] == 1


def test_exact_mode_equals_reference_oracle():
    rng = np.random.default_rng(31)
    base, queries = gaussian_mixture(1000, 100, 16, clusters=8, seed=31)
    graph = build_index(base.data, degree_bound=12, build_worklist=24, seed=5)
    searcher = GraphSearcher(k=10, t=24, mode="exact_distance",
                             bloom_entries=10_000_019, debug_checks=True)
    searcher.fit(base, graph=graph)
    result = searcher.search(queries)
    for i in range(queries.count):
        ids, dists, _ = greedy_search_reference(graph, base, queries.data[i],
                                                k=10, t=24)
        assert set(result.ids[i].tolist()) == set(ids.tolist())


def test_pipelined_equals_in_memory_byte_for_byte(toy):
    rng = np.random.default_rng(37)
    base, queries = gaussian_mixture(600, 64, 8, clusters=4, seed=37)
    graph = build_index(base.data, degree_bound=8, build_worklist=16, seed=9)
    codebook = train_codebook(base, m=4, iters=8, seed=9)
    codes = compress_with_codebook(base.data, codebook)
    outs = {}
    for mode in ("pipelined", "in_memory"):
        searcher = GraphSearcher(k=5, t=16, mode=mode, bloom_entries=100_003,
                                 debug_checks=True)
        searcher.fit(base, graph=graph, codebook=codebook, codes=codes)
        result = searcher.search(queries)
        outs[mode] = result
    assert np.array_equal(outs["pipelined"].ids, outs["in_memory"].ids)
    assert np.array_equal(outs["pipelined"].dists, outs["in_memory"].dists)
    assert np.array_equal(outs["pipelined"].iterations,
                          outs["in_memory"].iterations)


def test_repeat_runs_are_identical():
    base, queries = gaussian_mixture(500, 32, 8, clusters=4, seed=41)
    graph = build_index(base.data, degree_bound=8, build_worklist=16, seed=3)
    codebook = train_codebook(base, m=4, iters=8, seed=3)
    codes = compress_with_codebook(base.data, codebook)
    runs = []
    for _ in range(2):
        searcher = GraphSearcher(k=5, t=12, mode="pipelined",
                                 bloom_entries=50_021, debug_checks=True)
        searcher.fit(base, graph=graph, codebook=codebook, codes=codes)
        runs.append(searcher.search(queries))
    assert np.array_equal(runs[0].ids, runs[1].ids)
    assert np.array_equal(runs[0].dists, runs[1].dists)


def test_batch_splitting_does_not_change_results():
    base, queries = gaussian_mixture(400, 33, 8, clusters=4, seed=43)
    graph = build_index(base.data, degree_bound=8, build_worklist=16, seed=7)
    codebook = train_codebook(base, m=4, iters=8, seed=7)
    codes = compress_with_codebook(base.data, codebook)
    results = []
    for batch in (7, 33):
        searcher = GraphSearcher(k=4, t=10, mode="in_memory",
                                 bloom_entries=50_021, batch_size=batch,
                                 debug_checks=True)
        searcher.fit(base, graph=graph, codebook=codebook, codes=codes)
        results.append(searcher.search(queries))
    assert np.array_equal(results[0].ids, results[1].ids)


def test_engine_results_match_rerank_of_visit_log():
    base, queries = gaussian_mixture(500, 20, 12, clusters=4, seed=47)
    graph = build_index(base.data, degree_bound=8, build_worklist=16, seed=11)
    searcher = GraphSearcher(k=6, t=16, mode="pipelined", bloom_entries=50_021,
                             m=3, pq_iters=8, seed=11, debug_checks=True)
    searcher.fit(base, graph=graph)
    result = searcher.search(queries)
    for i in range(queries.count):
        log = result.visit_logs[i]
        ids, dists, short = rerank(log, base.data[log], queries.data[i], k=6)
        assert not short
        assert result.ids[i].tolist() == ids.tolist()
        assert np.array_equal(result.dists[i], dists)


def test_rerank_single_candidate_and_short_flag():
    vecs = np.array([[1.0, 0.0]], dtype=np.float32)
    ids, dists, short = rerank([4], vecs, np.zeros(2, dtype=np.float32), k=3)
    assert ids.tolist() == [4] and dists.tolist() == [1.0]
    assert short


def test_rerank_matches_brute_force_sort():
    rng = np.random.default_rng(53)
    for _ in range(50):
        n = int(rng.integers(1, 40))
        vecs = rng.normal(size=(n, 6)).astype(np.float32)
        ids = rng.choice(10_000, size=n, replace=False)
        q = rng.normal(size=6).astype(np.float32)
        got_ids, got_dists, _ = rerank(ids, vecs, q, k=min(n, 10))
        exact = exact_sq_dists(vecs, np.broadcast_to(q, vecs.shape))
        order = np.lexsort((ids, exact))[:min(n, 10)]
        assert got_ids.tolist() == ids[order].tolist()
        assert np.array_equal(got_dists, exact[order])


def test_empty_query_batch(toy):
    searcher = _toy_searcher(toy, "in_memory")
    result = searcher.search(np.zeros((0, 2), dtype=np.float32))
    assert result.ids.shape == (0, 2)
    assert result.elapsed == 0.0


def test_invalid_params_rejected(toy):
    with pytest.raises(ParameterError):
        GraphSearcher(k=10, t=5).fit(toy["base"], graph=toy["graph"])
    with pytest.raises(ParameterError):
        GraphSearcher(mode="warp").fit(toy["base"], graph=toy["graph"])
    searcher = _toy_searcher(toy, "in_memory")
    with pytest.raises(ParameterError):
        searcher.search(np.zeros((1, 5), dtype=np.float32))


def test_short_results_flagged_on_tiny_graph():
    pts = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=np.float32)
    graph = GraphIndex.from_lists([[1], [0]], medoid=0, degree_bound=1)
    searcher = GraphSearcher(k=4, t=8, mode="exact_distance", bloom_entries=64)
    searcher.fit(pts, graph=graph)
    result = searcher.search(np.zeros((1, 2), dtype=np.float32))
    assert result.short[0]
    assert result.ids[0].tolist() == [0, 1, -1, -1]


def test_kneighbors_interface(toy):
    searcher = _toy_searcher(toy, "pipelined")
    dists, ids = searcher.kneighbors(toy["query"][None, :], n_neighbors=2)
    assert ids.shape == (1, 2) and dists.shape == (1, 2)
    assert set(ids[0].tolist()) == {10, 8}


def test_fit_builds_artifacts_when_not_given():
    base, queries = gaussian_mixture(300, 10, 8, clusters=4, seed=59)
    searcher = GraphSearcher(k=3, t=8, mode="pipelined", bloom_entries=50_021,
                             degree_bound=8, build_worklist=16, m=2,
                             pq_iters=5, seed=59)
    searcher.fit(base)
    result = searcher.search(queries)
    assert result.ids.shape == (10, 3)
    assert np.all(result.ids >= 0)


def test_host_fetch_returns_vectors(toy):
    host = IndexHost(toy["graph"], toy["base"].as_float32())
    nbrs, counts, vecs = host.fetch(np.array([6]))
    assert counts.tolist() == [3]
    assert nbrs[0, :3].tolist() == [8, 7, 2]
    assert np.array_equal(vecs[0], toy["base"].data[6])
