"""Recall, ground truth, iteration metrics."""

import numpy as np
import pytest

from bang.errors import ParameterError
from bang.io import GroundTruth
from bang.metrics import (RunMetrics, brute_force_knn, completion_fraction,
                          lambda_metric, recall_at_k)


def _selection_oracle(base, query, k):
    # independent O(nk) selection: repeatedly extract the (dist, id) minimum
    diff = base.astype(np.float64) - query.astype(np.float64)
    d = (diff * diff).sum(axis=1)
    alive = np.ones(base.shape[0], dtype=bool)
    out = []
    for _ in range(k):
        best = None
        for i in range(base.shape[0]):
            if alive[i] and (best is None or (d[i], i) < (d[best], best)):
                best = i
        alive[best] = False
        out.append(best)
    return out


def test_brute_force_self_query_is_self():
    rng = np.random.default_rng(0)
    base = rng.normal(size=(50, 8)).astype(np.float32)
    gt = brute_force_knn(base, base, k=1)
    assert np.array_equal(gt.ids[:, 0], np.arange(50))
    assert np.all(gt.dists == 0.0)


def test_brute_force_toy_top2(toy):
    gt = brute_force_knn(toy["base"], toy["query"][None, :], k=2)
    assert set(gt.ids[0].tolist()) == {10, 8}


def test_brute_force_matches_selection_oracle():
    rng = np.random.default_rng(1)
    base = rng.normal(size=(200, 6)).astype(np.float32)
    queries = rng.normal(size=(20, 6)).astype(np.float32)
    gt = brute_force_knn(base, queries, k=7)
    for i in range(20):
        assert gt.ids[i].tolist() == _selection_oracle(base, queries[i], 7)


def test_brute_force_rows_non_decreasing():
    rng = np.random.default_rng(2)
    base = rng.normal(size=(300, 5)).astype(np.float32)
    queries = rng.normal(size=(40, 5)).astype(np.float32)
    gt = brute_force_knn(base, queries, k=9)
    assert np.all(np.diff(gt.dists, axis=1) >= 0)


def test_brute_force_thread_invariance():
    rng = np.random.default_rng(3)
    base = rng.normal(size=(400, 6)).astype(np.float32)
    queries = rng.normal(size=(1200, 6)).astype(np.float32)
    a = brute_force_knn(base, queries, k=5, threads=1)
    b = brute_force_knn(base, queries, k=5, threads=4)
    assert np.array_equal(a.ids, b.ids) and np.array_equal(a.dists, b.dists)


def test_brute_force_rejects_oversized_k():
    base = np.zeros((3, 2), dtype=np.float32)
    with pytest.raises(ParameterError):
        brute_force_knn(base, base, k=4)


def test_brute_force_boundary_ties_resolved_by_id():
    base = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
                    dtype=np.float32)
    gt = brute_force_knn(base, np.zeros((1, 2), dtype=np.float32), k=2)
    assert gt.ids[0].tolist() == [0, 1]


def test_recall_identical_and_disjoint():
    gt = GroundTruth(ids=np.array([[1, 2, 3]]),
                     dists=np.array([[0.0, 1.0, 2.0]], dtype=np.float32))
    assert recall_at_k(np.array([[3, 1, 2]]), gt, 3) == 1.0
    assert recall_at_k(np.array([[7, 8, 9]]), gt, 3) == 0.0


def test_recall_toy(toy):
    gt = brute_force_knn(toy["base"], toy["query"][None, :], k=2)
    assert recall_at_k(np.array([[10, 8]]), gt, 2) == 1.0


def test_recall_of_brute_force_against_itself():
    rng = np.random.default_rng(4)
    base = rng.normal(size=(100, 4)).astype(np.float32)
    queries = rng.normal(size=(10, 4)).astype(np.float32)
    gt = brute_force_knn(base, queries, k=5)
    assert recall_at_k(gt.ids, gt, 5) == 1.0


def test_recall_shape_mismatch():
    gt = GroundTruth(ids=np.array([[1, 2]]),
                     dists=np.array([[0.0, 1.0]], dtype=np.float32))
    with pytest.raises(ParameterError):
        recall_at_k(np.array([[1, 2], [3, 4]]), gt, 2)
    with pytest.raises(ParameterError):
        recall_at_k(np.array([[1, 2]]), gt, 3)


def test_lambda_table_row_exact():
    assert lambda_metric(62, 20) == 210.0


def test_lambda_zero_when_i_equals_t():
    assert lambda_metric([20, 20, 20], 20) == 0.0


def test_lambda_matches_hand_computation():
    rng = np.random.default_rng(5)
    values = rng.integers(10, 300, size=47)
    t = 25
    want = (float(np.mean(values)) - t) / t * 100.0
    assert lambda_metric(values, t) == pytest.approx(want, rel=1e-12)


def test_lambda_rejects_empty():
    with pytest.raises(ParameterError):
        lambda_metric([], 10)


def test_completion_fraction():
    assert completion_fraction([10, 11, 30], 10) == pytest.approx(2 / 3)


def test_run_metrics_from_result(toy):
    from bang.engine import GraphSearcher
    searcher = GraphSearcher(k=2, t=8, mode="exact_distance", bloom_entries=4096)
    searcher.fit(toy["base"], graph=toy["graph"])
    result = searcher.search(toy["query"][None, :])
    gt = brute_force_knn(toy["base"], toy["query"][None, :], k=2)
    metrics = RunMetrics.from_result(result, gt, k=2, t=8)
    assert metrics.recall_at_k == 1.0
    assert metrics.qps > 0
    assert metrics.iteration_histogram == {8: 1}


def test_write_run_report(tmp_path, toy):
    from bang.engine import GraphSearcher
    from bang.metrics import write_run_report
    searcher = GraphSearcher(k=2, t=8, mode="exact_distance", bloom_entries=4096)
    searcher.fit(toy["base"], graph=toy["graph"])
    result = searcher.search(toy["query"][None, :])
    path = tmp_path / "report.csv"
    write_run_report(result, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "query_id,iterations,converged,wall_time_s"
    assert lines[1].startswith("0,8,1,")
