"""Ground-truth generation, recall, throughput and iteration-efficiency metrics."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .io import GroundTruth
from .validation import as_float32_rows, check_matrix, check_positive


def _exact_topk_block(base64: np.ndarray, base_sq: np.ndarray, q64: np.ndarray,
                      k: int, out_ids: np.ndarray, out_dists: np.ndarray,
                      start: int) -> None:
    # the inner-product expansion is only a candidate filter; the reported
    # distances are recomputed directly so self-distances are exactly zero
    q_sq = np.einsum("nd,nd->n", q64, q64)
    d2 = q_sq[:, None] + base_sq[None, :] - 2.0 * (q64 @ base64.T)
    nq, n = d2.shape
    kk = min(n, k + 8)
    cand = np.argpartition(d2, kk - 1, axis=1)[:, :kk] if kk < n else \
        np.broadcast_to(np.arange(n), (nq, n)).copy()
    diff = base64[cand] - q64[:, None, :]
    cd = np.einsum("nkd,nkd->nk", diff, diff)
    # ascending (dist, id): sort ids first, then stable-sort by distance
    o1 = np.argsort(cand, axis=1)
    v1 = np.take_along_axis(cd, o1, axis=1)
    i1 = np.take_along_axis(cand, o1, axis=1)
    o2 = np.argsort(v1, axis=1, kind="stable")
    vals = np.take_along_axis(v1, o2, axis=1)
    ids = np.take_along_axis(i1, o2, axis=1)
    for i in range(nq):
        if kk < n and vals[i, k - 1] == vals[i, kk - 1]:
            # boundary ties spill past the candidate pad: resolve exactly
            row = base64 - q64[i]
            full = np.einsum("nd,nd->n", row, row)
            order = np.lexsort((np.arange(n), full))[:k]
            out_ids[start + i] = order
            out_dists[start + i] = full[order].astype(np.float32)
        else:
            out_ids[start + i] = ids[i, :k]
            out_dists[start + i] = vals[i, :k].astype(np.float32)


def brute_force_knn(base, queries, k: int, threads: int | None = None) -> GroundTruth:
    """Exact squared-distance top-k per query; ties break on node id."""
    base_m = as_float32_rows(check_matrix(getattr(base, "data", base), "base"))
    q_m = as_float32_rows(check_matrix(getattr(queries, "data", queries), "queries"))
    check_positive("k", k)
    if k > base_m.shape[0]:
        raise ParameterError(f"k={k} exceeds base count {base_m.shape[0]}")
    if q_m.shape[0] and q_m.shape[1] != base_m.shape[1]:
        raise ParameterError("query dimension does not match the base set")
    nq = q_m.shape[0]
    out_ids = np.empty((nq, k), dtype=np.int32)
    out_dists = np.empty((nq, k), dtype=np.float32)
    if nq == 0:
        return GroundTruth(ids=out_ids, dists=out_dists)
    base64 = base_m.astype(np.float64)
    base_sq = np.einsum("nd,nd->n", base64, base64)
    q64 = q_m.astype(np.float64)
    chunk = max(1, min(512, int(2e8 // max(1, base_m.shape[0]))))
    blocks = [(s, min(nq, s + chunk)) for s in range(0, nq, chunk)]
    if threads and threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [pool.submit(_exact_topk_block, base64, base_sq, q64[a:b],
                                k, out_ids, out_dists, a) for a, b in blocks]
            for f in futs:
                f.result()
    else:
        for a, b in blocks:
            _exact_topk_block(base64, base_sq, q64[a:b], k, out_ids, out_dists, a)
    return GroundTruth(ids=out_ids, dists=out_dists)


def recall_at_k(result_ids: np.ndarray, gt: GroundTruth, k: int) -> float:
    """Mean |returned-set ∩ true-set| / k; strict id-set semantics."""
    check_positive("k", k)
    ids = np.asarray(result_ids)
    if ids.ndim != 2 or ids.shape[0] != gt.query_count:
        raise ParameterError("result rows do not match the ground truth")
    if ids.shape[1] < k or gt.k_gt < k:
        raise ParameterError(f"need at least {k} ids per query on both sides")
    if gt.query_count == 0:
        raise ParameterError("empty ground truth")
    hits = 0
    for i in range(gt.query_count):
        hits += np.intersect1d(ids[i, :k], gt.ids[i, :k]).size
    return hits / (k * gt.query_count)


def lambda_metric(iteration_counts, t: int) -> float:
    """Percentage of extra iterations over the worklist-size lower bound."""
    check_positive("t", t)
    values = np.atleast_1d(np.asarray(iteration_counts, dtype=np.float64))
    if values.size == 0:
        raise ParameterError("iteration counts must be non-empty")
    mean_i = float(values.sum()) / values.size
    return (mean_i - t) * 100.0 / t


def completion_fraction(iteration_counts, t: int, factor: float = 1.1) -> float:
    """Fraction of queries finishing within factor * t iterations."""
    check_positive("t", t)
    values = np.atleast_1d(np.asarray(iteration_counts, dtype=np.float64))
    if values.size == 0:
        raise ParameterError("iteration counts must be non-empty")
    return float((values <= factor * t).mean())


@dataclass
class RunMetrics:
    """Headline numbers for one search run."""

    qps: float
    recall_at_k: float
    lam: float
    iteration_histogram: dict[int, int]
    iterations: np.ndarray

    @classmethod
    def from_result(cls, result, gt: GroundTruth, k: int, t: int) -> "RunMetrics":
        values, counts = np.unique(result.iterations, return_counts=True)
        return cls(
            qps=result.ids.shape[0] / result.elapsed if result.elapsed > 0 else 0.0,
            recall_at_k=recall_at_k(result.ids, gt, k),
            lam=lambda_metric(result.iterations, t),
            iteration_histogram={int(v): int(c) for v, c in zip(values, counts)},
            iterations=result.iterations,
        )


def write_run_report(result, path: str) -> None:
    """Per-query CSV: query_id, iterations, converged, wall_time_s."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["query_id", "iterations", "converged", "wall_time_s"])
        for i in range(result.ids.shape[0]):
            writer.writerow([i, int(result.iterations[i]),
                             int(result.converged[i]),
                             f"{result.wall_times[i]:.6f}"])
