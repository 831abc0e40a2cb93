"""Phased batched greedy search across two domains, plus its scalar oracle.

The index host owns the graph and the full-precision vectors; the search
engine owns the compressed vectors and the per-batch distance table.  Each
search iteration runs as vectorized phases over all still-active queries:
fetch neighbours of every current candidate from the host, drop already-seen
ids through per-query Bloom filters, score the survivors, pick the next
candidate eagerly (best of the nearest fresh neighbour and the first
unvisited worklist entry) and dispatch it before the sort and worklist merge
complete, then fold the sorted survivors into the worklist, keeping the t
nearest.  A query converges when every worklist entry has been visited;
converged queries leave the batch.

In pipelined mode the host runs on its own thread and the two domains talk
through two bounded queues (candidate requests and neighbour responses, one
envelope per iteration covering the batch, capacity equal to the batch
size); each response also carries the expanded nodes' full vectors, which is
how re-ranking gets exact distances without the engine ever reading host
memory.  In-memory mode makes the same fetches as direct calls; the
exact-distance mode additionally scores with exact distances, needs no
distance table and skips re-ranking.  Output is deterministic: byte-identical
across runs, worker counts and modes with the same scoring.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .bloom import DEFAULT_ENTRIES, BloomFilterBank
from .errors import ParameterError
from .graph import GraphIndex, VamanaBuilder
from .kernels import (SENTINEL, _next_pow2, merge_rows, merge_sort_rows,
                      pack_keys, unpack_keys)
from .pq import (CompressedVectors, PQCodebook, PQDistTable, ProductQuantizer,
                 build_pq_dist_table, compress_with_codebook)
from .validation import as_float32_rows, check_matrix, check_positive

MODES = ("pipelined", "in_memory", "exact_distance")
_ID_MASK = np.uint64(0xFFFFFFFF)


def exact_sq_dists(points: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Row-paired squared Euclidean distance, float64 sums cast to float32."""
    diff = points.astype(np.float64) - queries.astype(np.float64)
    return np.einsum("nd,nd->n", diff, diff).astype(np.float32)


class IndexHost:
    """The host domain: graph adjacency plus full-precision vectors."""

    def __init__(self, graph: GraphIndex, vectors: np.ndarray):
        vectors = as_float32_rows(check_matrix(vectors, "vectors"))
        if vectors.shape[0] != graph.node_count:
            raise ParameterError("vector count does not match the graph")
        self.graph = graph
        self.vectors = vectors

    def fetch(self, node_ids: np.ndarray):
        """Adjacency rows, their lengths, and the nodes' own vectors.

        The vectors ride along with every response so the engine can
        re-rank later without another round trip.
        """
        ids = np.asarray(node_ids, dtype=np.int64)
        return (self.graph.adjacency[ids], self.graph.degrees[ids],
                self.vectors[ids])

    def serve(self, requests: "queue.Queue", responses: "queue.Queue") -> None:
        """Serve fetches until a None request arrives."""
        while True:
            item = requests.get()
            if item is None:
                return
            rows, ids = item
            nbrs, counts, vecs = self.fetch(ids)
            responses.put((rows, nbrs, counts, vecs))


@dataclass
class SearchResult:
    """Per-query outputs of a batched search."""

    ids: np.ndarray          # (nq, k) int32, -1 padding when short
    dists: np.ndarray        # (nq, k) float32, +inf padding
    iterations: np.ndarray   # (nq,) int32
    converged: np.ndarray    # (nq,) bool
    wall_times: np.ndarray   # (nq,) float64, seconds from batch start
    elapsed: float           # total search seconds over all batches
    short: np.ndarray        # (nq,) bool, fewer than k candidates available
    visit_logs: list         # per query, expanded node ids in visit order


def _pq_point_dists(table: np.ndarray, query_rows: np.ndarray,
                    code_rows: np.ndarray) -> np.ndarray:
    """Asymmetric distances with the fixed s = 0..m-1 f32 accumulation."""
    acc = np.zeros(code_rows.shape[0], dtype=np.float32)
    for s in range(table.shape[1]):
        acc += table[query_rows, s, code_rows[:, s]]
    return acc


def _search_batch(host: IndexHost, queries: np.ndarray, *, k: int, t: int,
                  mode: str, bloom_entries: int, rerank_step: bool,
                  codes: np.ndarray | None, table: np.ndarray | None,
                  engine_vectors: np.ndarray | None, t0: float,
                  debug_checks: bool):
    rho = queries.shape[0]
    medoid = host.graph.medoid
    use_pq = mode != "exact_distance"
    pipelined = mode == "pipelined"

    wl_key = np.full((rho, t), SENTINEL, dtype=np.uint64)
    wl_vis = np.zeros((rho, t), dtype=bool)
    if use_pq:
        d0 = _pq_point_dists(table, np.arange(rho), codes[medoid][None, :].repeat(rho, axis=0))
    else:
        d0 = exact_sq_dists(np.broadcast_to(engine_vectors[medoid], queries.shape),
                            queries)
    wl_key[:, 0] = pack_keys(d0, np.full(rho, medoid, dtype=np.int64))

    bank = BloomFilterBank(rho, bloom_entries)
    bank.set_all_rows(medoid)

    ustar = np.full(rho, medoid, dtype=np.int64)
    iterations = np.zeros(rho, dtype=np.int32)
    converged = np.zeros(rho, dtype=bool)
    wall = np.zeros(rho, dtype=np.float64)
    log_rows: list[np.ndarray] = []
    log_ids: list[np.ndarray] = []
    log_dists: list[np.ndarray] = []
    active = np.arange(rho, dtype=np.int64)
    width_pad = _next_pow2(max(1, host.graph.degree_bound))

    req_q = resp_q = host_thread = None
    if pipelined:
        req_q = queue.Queue(maxsize=max(1, rho))
        resp_q = queue.Queue(maxsize=max(1, rho))
        host_thread = threading.Thread(target=host.serve, args=(req_q, resp_q),
                                       daemon=True)
        host_thread.start()
        req_q.put((active, ustar[active]))
    else:
        pending = (active, ustar[active])

    try:
        while active.size:
            if pipelined:
                rows, nbrs, counts, vecs = resp_q.get()
                keep = ~converged[rows]
                if not keep.all():  # stale rows: eagerly dispatched, then converged
                    rows, nbrs, counts, vecs = (rows[keep], nbrs[keep],
                                                counts[keep], vecs[keep])
            else:
                rows, req_ids = pending
                nbrs, counts, vecs = host.fetch(req_ids)

            u = ustar[rows]
            local = np.arange(rows.size, dtype=np.int64)

            # mark the expanded candidate visited; it is the first unvisited entry
            masked = np.where(wl_vis[rows], SENTINEL, wl_key[rows])
            col = np.argmin(masked, axis=1)
            if debug_checks:
                head_ids = (masked[local, col] & _ID_MASK).astype(np.int64)
                if not np.array_equal(head_ids, u):
                    raise AssertionError("expanded candidate is not the worklist head")
            wl_vis[rows, col] = True
            iterations[rows] += 1
            log_rows.append(rows)
            log_ids.append(u)
            if use_pq:  # exact distances accumulate as prefetched vectors arrive
                log_dists.append(exact_sq_dists(vecs, queries[rows]))

            # Bloom-filter the fetched neighbours (test-and-set, row order)
            valid = np.arange(nbrs.shape[1])[None, :] < counts[:, None]
            flat_local = np.repeat(local, counts)
            flat_ids = nbrs[valid].astype(np.int64)
            fresh = bank.filter_and_set(rows[flat_local], flat_ids)
            f_local = flat_local[fresh]
            f_ids = flat_ids[fresh]

            # score survivors: PQ table lookups or exact distances
            if use_pq:
                f_dists = _pq_point_dists(table, rows[f_local], codes[f_ids])
            else:
                f_dists = exact_sq_dists(engine_vectors[f_ids],
                                         queries[rows[f_local]])

            per_row = np.bincount(f_local, minlength=rows.size)
            starts = np.concatenate([[0], np.cumsum(per_row)[:-1]])
            new_keys = np.full((rows.size, width_pad), SENTINEL, dtype=np.uint64)
            new_keys[f_local, np.arange(f_local.size) - starts[f_local]] = \
                pack_keys(f_dists, f_ids)

            # eager selection happens before sort+merge; dispatch immediately
            best_new = new_keys.min(axis=1)
            head = np.where(wl_vis[rows], SENTINEL, wl_key[rows]).min(axis=1)
            winner = np.minimum(best_new, head)
            next_ids = (winner & _ID_MASK).astype(np.int64)
            has_next = winner != SENTINEL
            if pipelined and has_next.any():
                req_q.put((rows[has_next], next_ids[has_next]))

            sorted_new = merge_sort_rows(new_keys)
            merged, merged_vis = merge_rows(wl_key[rows], sorted_new,
                                            a_payload=wl_vis[rows])
            kept, kept_vis = merged[:, :t], merged_vis[:, :t]
            wl_key[rows] = kept
            wl_vis[rows] = kept_vis

            done = np.all(kept_vis | (kept == SENTINEL), axis=1)
            if debug_checks:
                post_head = np.where(kept_vis, SENTINEL, kept).min(axis=1)
                if not np.array_equal(post_head[~done], winner[~done]):
                    raise AssertionError("eager candidate disagrees with the "
                                         "post-merge worklist head")
                ids_only = np.sort(kept & _ID_MASK, axis=1)
                dup = (ids_only[:, 1:] == ids_only[:, :-1]) & \
                      (ids_only[:, 1:] != (SENTINEL & _ID_MASK))
                if dup.any():
                    raise AssertionError("duplicate node admitted to a worklist")

            now = time.perf_counter()
            conv_rows = rows[done]
            converged[conv_rows] = True
            wall[conv_rows] = now - t0
            active = rows[~done]
            ustar[active] = next_ids[~done]
            if not pipelined:
                pending = (active, ustar[active])
    finally:
        if pipelined:
            req_q.put(None)
            host_thread.join()
            while not resp_q.empty():  # drop any wasted prefetch
                resp_q.get_nowait()

    ids_out = np.full((rho, k), -1, dtype=np.int32)
    dists_out = np.full((rho, k), np.inf, dtype=np.float32)
    all_rows = np.concatenate(log_rows)
    all_ids = np.concatenate(log_ids)
    order = np.argsort(all_rows, kind="stable")  # per query, in visit order
    cand_counts = np.bincount(all_rows, minlength=rho)
    starts = np.concatenate([[0], np.cumsum(cand_counts)[:-1]])
    ids_by_query = all_ids[order]
    visit_logs = [ids_by_query[starts[i]:starts[i] + cand_counts[i]]
                  for i in range(rho)]
    if use_pq and rerank_step:
        all_d = np.concatenate(log_dists)
        width = _next_pow2(int(cand_counts.max()))
        keys = np.full((rho, width), SENTINEL, dtype=np.uint64)
        rr = all_rows[order]
        keys[rr, np.arange(rr.size) - starts[rr]] = pack_keys(all_d[order],
                                                              ids_by_query)
        top = merge_sort_rows(keys)[:, :k]
        short = cand_counts < k
    else:
        top = wl_key[:, :k]
        short = (wl_key != SENTINEL).sum(axis=1) < k
    real = top != SENTINEL
    d_un, i_un = unpack_keys(top)
    ids_out[real] = i_un[real]
    dists_out[real] = d_un[real]
    return ids_out, dists_out, iterations, converged, wall, short, visit_logs


def rerank(candidate_ids, candidate_vectors, query, k: int):
    """Exact-distance ordering of a query's visited candidates.

    Returns (ids, dists, short): the k nearest by (distance, id), or all of
    them with ``short=True`` when fewer than k candidates exist.
    """
    ids = np.asarray(candidate_ids, dtype=np.int64)
    vecs = as_float32_rows(check_matrix(candidate_vectors, "candidate_vectors"))
    q = as_float32_rows(np.asarray(query, dtype=np.float32).reshape(1, -1))[0]
    if ids.size != vecs.shape[0]:
        raise ParameterError("one vector per candidate id required")
    if ids.size == 0:
        return (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float32), k > 0)
    dists = exact_sq_dists(vecs, np.broadcast_to(q, vecs.shape))
    width = _next_pow2(ids.size)
    keys = np.full((1, width), SENTINEL, dtype=np.uint64)
    keys[0, :ids.size] = pack_keys(dists, ids)
    ordered = merge_sort_rows(keys)[0, :min(k, ids.size)]
    d_out, i_out = unpack_keys(ordered)
    return i_out, d_out, ids.size < k


def greedy_search_reference(graph: GraphIndex, base, query, k: int, t: int,
                            start: int | None = None):
    """Sequential exact-distance best-first search (the mid-level oracle).

    Keeps up to t (distance, id)-nearest candidates, repeatedly expands the
    nearest unvisited one, and returns the k nearest plus the visit order.
    """
    if t < k:
        raise ParameterError("t must be >= k")
    data = getattr(base, "data", base)
    vectors = as_float32_rows(check_matrix(data, "base"))
    q = as_float32_rows(np.asarray(query, dtype=np.float32).reshape(1, -1))[0]

    def dists_of(ids: list[int]) -> np.ndarray:
        rows = vectors[np.asarray(ids, dtype=np.int64)]
        return exact_sq_dists(rows, np.broadcast_to(q, rows.shape))

    s = graph.medoid if start is None else int(start)
    worklist: dict[int, np.float32] = {s: dists_of([s])[0]}
    visited: set[int] = set()
    visit_order: list[int] = []
    while True:
        pending = [(d, i) for i, d in worklist.items() if i not in visited]
        if not pending:
            break
        _, u = min(pending)
        visited.add(u)
        visit_order.append(u)
        fresh = [int(n) for n in graph.neighbours(u) if int(n) not in worklist]
        if fresh:
            worklist.update(zip(fresh, dists_of(fresh)))
        if len(worklist) > t:
            ranked = sorted(worklist.items(), key=lambda kv: (kv[1], kv[0]))[:t]
            worklist = dict(ranked)
    final = sorted(worklist.items(), key=lambda kv: (kv[1], kv[0]))[:k]
    ids = np.asarray([i for i, _ in final], dtype=np.int64)
    dists = np.asarray([d for _, d in final], dtype=np.float32)
    return ids, dists, visit_order


class GraphSearcher(BaseEstimator):
    """Batched approximate k-nearest-neighbour search over a graph index.

    Parameters mirror the search contract: ``k`` results from a worklist of
    ``t`` entries (t >= k), one Bloom filter of ``bloom_entries`` slots per
    query, queries processed ``batch_size`` at a time, and one of three
    modes: "pipelined" (two domains, bounded queues), "in_memory" (same
    engine, local fetches) or "exact_distance" (exact scoring, no
    compression, no re-rank).  When ``fit`` is not handed prebuilt artifacts
    it builds them with the graph/compression parameters below.
    """

    def __init__(self, k: int = 10, t: int = 152, mode: str = "pipelined",
                 bloom_entries: int = DEFAULT_ENTRIES, batch_size: int = 10_000,
                 rerank: bool = True, degree_bound: int = 64,
                 build_worklist: int = 200, sigma: float = 1.2, m: int = 74,
                 pq_iters: int = 25, seed: int = 0, threads: int | None = None,
                 debug_checks: bool = False):
        self.k = k
        self.t = t
        self.mode = mode
        self.bloom_entries = bloom_entries
        self.batch_size = batch_size
        self.rerank = rerank
        self.degree_bound = degree_bound
        self.build_worklist = build_worklist
        self.sigma = sigma
        self.m = m
        self.pq_iters = pq_iters
        self.seed = seed
        self.threads = threads
        self.debug_checks = debug_checks

    def _check_params(self):
        check_positive("k", self.k)
        if self.t < self.k:
            raise ParameterError(f"t={self.t} must be >= k={self.k}")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        check_positive("bloom_entries", self.bloom_entries)
        check_positive("batch_size", self.batch_size)

    def fit(self, X, y=None, graph: GraphIndex | None = None,
            codebook: PQCodebook | None = None,
            codes: CompressedVectors | None = None) -> "GraphSearcher":
        """Attach (or build) the graph and compression artifacts for a base set."""
        self._check_params()
        data = getattr(X, "data", X)
        base = as_float32_rows(check_matrix(data, "X"))
        if graph is None:
            graph = VamanaBuilder(self.degree_bound, self.build_worklist,
                                  self.sigma, self.seed).fit(base).graph_
        if graph.node_count != base.shape[0]:
            raise ParameterError("graph node count does not match the base set")
        if self.mode != "exact_distance":
            if codebook is None:
                codebook = ProductQuantizer(m=self.m, iters=self.pq_iters,
                                            seed=self.seed).fit(base).codebook_
            if codebook.dim != base.shape[1]:
                raise ParameterError("codebook dimension does not match the base set")
            if codes is None:
                codes = compress_with_codebook(base, codebook)
            if codes.count != base.shape[0] or codes.m != codebook.m:
                raise ParameterError("compressed vectors do not match base/codebook")
        else:
            codebook, codes = None, None
        self.host_ = IndexHost(graph, base)
        self.graph_ = graph
        self.codebook_ = codebook
        self.codes_ = codes
        # exact and in-memory variants keep base vectors on the engine side
        self.engine_vectors_ = base if self.mode != "pipelined" else None
        return self

    def search(self, queries, k: int | None = None) -> SearchResult:
        """Run the batched search; deterministic for fixed inputs and params."""
        if not hasattr(self, "host_"):
            raise ParameterError("GraphSearcher is not fitted")
        k = self.k if k is None else int(k)
        if k < 1 or k > self.t:
            raise ParameterError(f"k={k} must be in [1, t={self.t}]")
        data = getattr(queries, "data", queries)
        q = as_float32_rows(check_matrix(data, "queries"))
        nq = q.shape[0]
        if nq == 0:
            return SearchResult(np.zeros((0, k), np.int32),
                                np.zeros((0, k), np.float32),
                                np.zeros(0, np.int32), np.zeros(0, bool),
                                np.zeros(0, np.float64), 0.0,
                                np.zeros(0, bool), [])
        if q.shape[1] != self.host_.vectors.shape[1]:
            raise ParameterError("query dimension does not match the base set")
        use_pq = self.mode != "exact_distance"
        codes_arr = self.codes_.codes if use_pq else None
        parts = []
        elapsed = 0.0
        for lo in range(0, nq, self.batch_size):
            hi = min(nq, lo + self.batch_size)
            t0 = time.perf_counter()
            table = (build_pq_dist_table(q[lo:hi], self.codebook_,
                                         threads=self.threads).table
                     if use_pq else None)
            parts.append(_search_batch(
                self.host_, q[lo:hi], k=k, t=self.t, mode=self.mode,
                bloom_entries=self.bloom_entries, rerank_step=self.rerank,
                codes=codes_arr, table=table,
                engine_vectors=self.engine_vectors_, t0=t0,
                debug_checks=self.debug_checks))
            elapsed += time.perf_counter() - t0
        return SearchResult(
            ids=np.concatenate([p[0] for p in parts]),
            dists=np.concatenate([p[1] for p in parts]),
            iterations=np.concatenate([p[2] for p in parts]),
            converged=np.concatenate([p[3] for p in parts]),
            wall_times=np.concatenate([p[4] for p in parts]),
            elapsed=elapsed,
            short=np.concatenate([p[5] for p in parts]),
            visit_logs=[log for p in parts for log in p[6]])

    def kneighbors(self, queries, n_neighbors: int | None = None,
                   return_distance: bool = True):
        """scikit-learn style accessor over :meth:`search`."""
        result = self.search(queries, k=n_neighbors)
        if return_distance:
            return result.dists, result.ids
        return result.ids
