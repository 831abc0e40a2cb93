"""Bounded-degree proximity graph: container, medoid, pruning and the builder.

The builder produces a flat directed graph in the DiskANN style: a random
regular graph is refined in two sequential passes, where every point is
re-linked by greedy-searching the current graph from the medoid and pruning
the visited set.  The sequential insertion order (fixed by the seed) is the
deterministic reference; rebuilding with the same seed yields a byte-identical
index file.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator

from .errors import ParameterError
from .validation import as_float32_rows, check_matrix, check_positive

NO_NODE = -1


class GraphIndex:
    """Adjacency lists with a degree bound plus the search entry point.

    Adjacency is stored as a padded ``(node_count, degree_bound)`` int32
    matrix; unused slots hold ``NO_NODE``.  Read-only after construction and
    safe to share across threads.
    """

    def __init__(self, adjacency: np.ndarray, degrees: np.ndarray, medoid: int,
                 degree_bound: int | None = None):
        adjacency = np.ascontiguousarray(adjacency, dtype=np.int32)
        degrees = np.ascontiguousarray(degrees, dtype=np.int32)
        if adjacency.ndim != 2 or degrees.shape != (adjacency.shape[0],):
            raise ParameterError("adjacency must be (n, R) with one degree per node")
        self.adjacency = adjacency
        self.degrees = degrees
        self.medoid = int(medoid)
        self.degree_bound = int(degree_bound if degree_bound is not None
                                else adjacency.shape[1])
        self.validate()

    @property
    def node_count(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def from_lists(cls, neighbour_lists, medoid: int, degree_bound: int) -> "GraphIndex":
        n = len(neighbour_lists)
        adjacency = np.full((n, degree_bound), NO_NODE, dtype=np.int32)
        degrees = np.zeros(n, dtype=np.int32)
        for i, ids in enumerate(neighbour_lists):
            ids = np.asarray(ids, dtype=np.int32)
            if ids.size > degree_bound:
                raise ParameterError(
                    f"node {i} has {ids.size} neighbours, bound is {degree_bound}")
            adjacency[i, :ids.size] = ids
            degrees[i] = ids.size
        return cls(adjacency, degrees, medoid, degree_bound)

    def neighbour_lists(self) -> list[np.ndarray]:
        return [self.adjacency[i, :self.degrees[i]].copy()
                for i in range(self.node_count)]

    def neighbours(self, node: int) -> np.ndarray:
        return self.adjacency[node, :self.degrees[node]]

    def validate(self) -> None:
        n = self.node_count
        if n == 0:
            raise ParameterError("graph must contain at least one node")
        if not (0 <= self.medoid < n):
            raise ParameterError(f"medoid {self.medoid} out of range for {n} nodes")
        if np.any(self.degrees < 0) or np.any(self.degrees > self.degree_bound):
            raise ParameterError("node degree outside [0, degree_bound]")
        cols = np.arange(self.adjacency.shape[1])
        live = cols[None, :] < self.degrees[:, None]
        ids = self.adjacency[live]
        if ids.size:
            if ids.min() < 0 or ids.max() >= n:
                raise ParameterError("adjacency id out of range")
            rows = np.broadcast_to(np.arange(n)[:, None], self.adjacency.shape)[live]
            if np.any(ids == rows):
                raise ParameterError("self-loop in adjacency")
            # distinct ids per list: row-wise sort and compare neighbours
            packed = rows.astype(np.int64) * (n + 1) + ids
            packed.sort()
            if np.any(np.diff(packed) == 0):
                raise ParameterError("duplicate neighbour id within a list")

    def __eq__(self, other) -> bool:
        if not isinstance(other, GraphIndex):
            return NotImplemented
        if self.node_count != other.node_count or self.medoid != other.medoid:
            return False
        if self.degree_bound != other.degree_bound:
            return False
        if not np.array_equal(self.degrees, other.degrees):
            return False
        for i in range(self.node_count):
            if not np.array_equal(self.neighbours(i), other.neighbours(i)):
                return False
        return True


def compute_medoid(vectors: np.ndarray) -> int:
    """Id of the point nearest the arithmetic centroid; ties go to the lowest id."""
    x = check_matrix(vectors, "vectors")
    if x.shape[0] == 0:
        raise ParameterError("cannot compute a medoid of an empty store")
    xf = x.astype(np.float64)
    centroid = xf.mean(axis=0)
    diff = xf - centroid
    d = np.einsum("nd,nd->n", diff, diff)
    return int(np.argmin(d))  # argmin returns the first (lowest-id) minimum


def robust_prune(candidates: list[tuple[int, float]], vectors: np.ndarray,
                 sigma: float, degree_bound: int) -> list[int]:
    """Greedy slack pruning of a candidate list into at most R neighbours.

    ``candidates`` are (id, squared distance from the point being linked);
    the point itself must not appear.  Repeatedly the closest remaining
    candidate v is kept, then every remaining u with
    ``sigma**2 * d2(v, u) <= d2(p, u)`` is discarded.  sigma enters squared
    because all distances are squared.
    """
    if not candidates:
        return []
    ids = np.asarray([c[0] for c in candidates], dtype=np.int64)
    dists = np.asarray([c[1] for c in candidates], dtype=np.float64)
    order = np.lexsort((ids, dists))
    ids, dists = ids[order], dists[order]
    vecs = as_float32_rows(np.asarray(vectors)).astype(np.float64)
    kept: list[int] = []
    alive = np.ones(ids.size, dtype=bool)
    sig2 = float(sigma) * float(sigma)
    while len(kept) < degree_bound and alive.any():
        pos = int(np.flatnonzero(alive)[0])  # closest unpruned candidate
        v = int(ids[pos])
        kept.append(v)
        alive[pos] = False
        rest = np.flatnonzero(alive)
        if rest.size == 0:
            break
        diff = vecs[ids[rest]] - vecs[v]
        d_vu = np.einsum("nd,nd->n", diff, diff)
        alive[rest[sig2 * d_vu <= dists[rest]]] = False
    return kept


# ---------------------------------------------------------------------------
# numba kernels for the sequential build (hot path: ~2n greedy searches)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _sq_dist(vectors, a, q):
    acc = 0.0
    for j in range(vectors.shape[1]):
        d = float(vectors[a, j]) - float(q[j])
        acc += d * d
    return acc


@njit(cache=True)
def _greedy_search_visited(adjacency, degrees, vectors, q, start, worklist_size,
                           seen_stamp, epoch, out_visited):
    """Best-first search; returns visited count, visit order in out_visited.

    The worklist keeps the ``worklist_size`` nearest admitted nodes by
    (distance, id).  A node already admitted once is never re-admitted: once
    it falls outside the worklist the running worst bound guarantees it can
    never re-enter, so skipping it leaves the trajectory unchanged.
    """
    cap = worklist_size
    wl_id = np.empty(cap, dtype=np.int32)
    wl_dist = np.empty(cap, dtype=np.float64)
    wl_vis = np.zeros(cap, dtype=np.bool_)
    wl_id[0] = start
    wl_dist[0] = _sq_dist(vectors, start, q)
    wl_len = 1
    seen_stamp[start] = epoch
    n_visited = 0
    while True:
        # first unvisited worklist entry (list kept sorted by (dist, id))
        pos = -1
        for i in range(wl_len):
            if not wl_vis[i]:
                pos = i
                break
        if pos < 0:
            break
        u = wl_id[pos]
        wl_vis[pos] = True
        out_visited[n_visited] = u
        n_visited += 1
        for jj in range(degrees[u]):
            nb = adjacency[u, jj]
            if seen_stamp[nb] == epoch:
                continue
            seen_stamp[nb] = epoch
            d = _sq_dist(vectors, nb, q)
            if wl_len == cap:
                last = wl_len - 1
                if d > wl_dist[last] or (d == wl_dist[last] and nb > wl_id[last]):
                    continue
                wl_len = last  # drop the worst entry, then insert
            # binary search for the (dist, id) insertion point
            lo, hi = 0, wl_len
            while lo < hi:
                mid = (lo + hi) // 2
                if wl_dist[mid] < d or (wl_dist[mid] == d and wl_id[mid] < nb):
                    lo = mid + 1
                else:
                    hi = mid
            for k in range(wl_len, lo, -1):
                wl_id[k] = wl_id[k - 1]
                wl_dist[k] = wl_dist[k - 1]
                wl_vis[k] = wl_vis[k - 1]
            wl_id[lo] = nb
            wl_dist[lo] = d
            wl_vis[lo] = False
            wl_len += 1
    return n_visited


@njit(cache=True)
def _sort_by_dist_then_id(ids, dists):
    """In-place ascending (dist, id) ordering of parallel arrays."""
    order = np.argsort(dists, kind="mergesort")
    ids[:] = ids[order]
    dists[:] = dists[order]
    # order ties (equal distances) by id: insertion sort within each run
    start = 0
    m = ids.size
    while start < m:
        end = start + 1
        while end < m and dists[end] == dists[start]:
            end += 1
        for i in range(start + 1, end):
            key = ids[i]
            j = i - 1
            while j >= start and ids[j] > key:
                ids[j + 1] = ids[j]
                j -= 1
            ids[j + 1] = key
        start = end


@njit(cache=True)
def _robust_prune_ids(point, cand_ids, cand_dists, vectors, sigma2, degree_bound,
                      out_ids):
    """Slack pruning over (id, dist-from-point) candidates; returns kept count."""
    m = cand_ids.size
    ids = cand_ids.copy()
    dists = cand_dists.copy()
    _sort_by_dist_then_id(ids, dists)
    alive = np.ones(m, dtype=np.bool_)
    kept = 0
    for i in range(m):
        if not alive[i]:
            continue
        v = ids[i]
        if v == point:
            continue
        out_ids[kept] = v
        kept += 1
        if kept == degree_bound:
            break
        for j in range(i + 1, m):
            if not alive[j]:
                continue
            d_vu = _sq_dist(vectors, ids[j], vectors[v])
            if sigma2 * d_vu <= dists[j]:
                alive[j] = False
    return kept


@njit(cache=True)
def _build_pass(adjacency, degrees, vectors, order, medoid, worklist_size,
                sigma2, degree_bound):
    n = vectors.shape[0]
    seen_stamp = np.full(n, -1, dtype=np.int64)
    visited_buf = np.empty(n, dtype=np.int32)
    cand_ids = np.empty(n + degree_bound + 1, dtype=np.int32)
    cand_dists = np.empty(n + degree_bound + 1, dtype=np.float64)
    pruned_p = np.empty(degree_bound, dtype=np.int32)
    pruned_b = np.empty(degree_bound, dtype=np.int32)
    epoch = 0
    for oi in range(order.size):
        p = order[oi]
        epoch += 1
        n_vis = _greedy_search_visited(adjacency, degrees, vectors, vectors[p],
                                       medoid, worklist_size, seen_stamp, epoch,
                                       visited_buf)
        m = 0
        for i in range(n_vis):
            c = visited_buf[i]
            if c == p:
                continue
            cand_ids[m] = c
            cand_dists[m] = _sq_dist(vectors, c, vectors[p])
            m += 1
        # current out-neighbours stay in the pool so refinement passes keep
        # the long-range edges the search itself did not revisit; duplicate
        # ids are harmless (a duplicate of a kept id prunes itself)
        for i in range(degrees[p]):
            c = adjacency[p, i]
            cand_ids[m] = c
            cand_dists[m] = _sq_dist(vectors, c, vectors[p])
            m += 1
        kept = _robust_prune_ids(p, cand_ids[:m], cand_dists[:m], vectors,
                                 sigma2, degree_bound, pruned_p)
        degrees[p] = kept
        for i in range(kept):
            adjacency[p, i] = pruned_p[i]
        # reverse edges; prune the enlarged list when the bound overflows
        for i in range(kept):
            b = pruned_p[i]
            present = False
            for j in range(degrees[b]):
                if adjacency[b, j] == p:
                    present = True
                    break
            if present:
                continue
            if degrees[b] < degree_bound:
                adjacency[b, degrees[b]] = p
                degrees[b] += 1
            else:
                m2 = 0
                for j in range(degrees[b]):
                    cand_ids[m2] = adjacency[b, j]
                    cand_dists[m2] = _sq_dist(vectors, adjacency[b, j], vectors[b])
                    m2 += 1
                cand_ids[m2] = p
                cand_dists[m2] = _sq_dist(vectors, p, vectors[b])
                m2 += 1
                kept_b = _robust_prune_ids(b, cand_ids[:m2], cand_dists[:m2],
                                           vectors, sigma2, degree_bound, pruned_b)
                degrees[b] = kept_b
                for j in range(kept_b):
                    adjacency[b, j] = pruned_b[j]


class VamanaBuilder(BaseEstimator):
    """Two-pass graph builder with degree bound R and pruning slack sigma.

    Parameters
    ----------
    degree_bound : maximum out-degree R (>= 2).
    build_worklist : worklist size used by the per-point greedy search (>= R).
    sigma : pruning slack (>= 1.0); pass one always runs with 1.0 and pass two
        with this value.
    seed : controls the random initial graph and the insertion orders.
    """

    def __init__(self, degree_bound: int = 64, build_worklist: int = 200,
                 sigma: float = 1.2, seed: int = 0):
        self.degree_bound = degree_bound
        self.build_worklist = build_worklist
        self.sigma = sigma
        self.seed = seed

    def _validate(self):
        check_positive("degree_bound", self.degree_bound, 2)
        if self.build_worklist < self.degree_bound:
            raise ParameterError("build_worklist must be >= degree_bound")
        if self.sigma < 1.0:
            raise ParameterError("sigma must be >= 1.0")

    def fit(self, X, y=None) -> "VamanaBuilder":
        self._validate()
        x = as_float32_rows(check_matrix(X, "X"))
        n = x.shape[0]
        if n < 2:
            raise ParameterError("need at least 2 points to build a graph")
        rng = np.random.default_rng(self.seed)
        r = min(self.degree_bound, n - 1)
        adjacency = np.full((n, self.degree_bound), NO_NODE, dtype=np.int32)
        degrees = np.full(n, r, dtype=np.int32)
        for i in range(n):
            # r distinct targets excluding i
            picks = rng.choice(n - 1, size=r, replace=False).astype(np.int32)
            picks[picks >= i] += 1
            adjacency[i, :r] = picks
        medoid = compute_medoid(x)
        for sigma in (1.0, float(self.sigma)):
            order = rng.permutation(n).astype(np.int64)
            _build_pass(adjacency, degrees, x, order, medoid,
                        int(self.build_worklist), sigma * sigma,
                        int(self.degree_bound))
        self.graph_ = GraphIndex(adjacency, degrees, medoid, self.degree_bound)
        return self


def build_index(X, degree_bound: int = 64, build_worklist: int = 200,
                sigma: float = 1.2, seed: int = 0) -> GraphIndex:
    """Functional wrapper over :class:`VamanaBuilder`."""
    return VamanaBuilder(degree_bound, build_worklist, sigma, seed).fit(X).graph_
