"""Product quantization: codebook training, compression and distance tables.

Distances are squared Euclidean throughout; integer vectors are widened to
float32 before any distance math.  Every distance that feeds search ordering
follows one accumulation contract: per-dimension squared differences are
computed in float32 and summed sequentially in index order in float32, and
table lookups are summed sequentially over subspaces 0..m-1 in float32.
That makes results bit-identical between the scalar and the batched paths,
and independent of worker count.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ParameterError
from .validation import as_float32_rows, check_matrix, check_positive

CENTROIDS_PER_SUBSPACE = 256


def subspace_split(dim: int, m: int) -> list[int]:
    """Subvector sizes: the first dim % m subspaces get the extra dimension."""
    check_positive("m", m)
    check_positive("dim", dim)
    if m > dim:
        raise ParameterError(f"m={m} exceeds dim={dim}")
    base, extra = divmod(dim, m)
    return [base + 1] * extra + [base] * (m - extra)


@dataclass
class PQCodebook:
    """Per-subspace centroid tables (always 256 rows per subspace)."""

    dim: int
    subspace_sizes: list[int]
    centroids: list[np.ndarray]  # m arrays of shape (256, subspace_sizes[s])

    def __post_init__(self):
        if sum(self.subspace_sizes) != self.dim:
            raise ParameterError(
                f"subspace sizes sum to {sum(self.subspace_sizes)}, expected {self.dim}")
        if len(self.centroids) != len(self.subspace_sizes):
            raise ParameterError("one centroid table per subspace required")
        for s, (table, size) in enumerate(zip(self.centroids, self.subspace_sizes)):
            if table.shape != (CENTROIDS_PER_SUBSPACE, size):
                raise ParameterError(
                    f"subspace {s}: centroid table shape {table.shape}, "
                    f"expected ({CENTROIDS_PER_SUBSPACE}, {size})")
            self.centroids[s] = np.ascontiguousarray(table, dtype=np.float32)

    @property
    def m(self) -> int:
        return len(self.subspace_sizes)

    def offsets(self) -> list[int]:
        out, pos = [], 0
        for size in self.subspace_sizes:
            out.append(pos)
            pos += size
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, PQCodebook):
            return NotImplemented
        return (self.dim == other.dim
                and self.subspace_sizes == other.subspace_sizes
                and all(np.array_equal(a, b)
                        for a, b in zip(self.centroids, other.centroids)))


@dataclass
class CompressedVectors:
    """One byte per subspace per point, naming the nearest centroid."""

    codes: np.ndarray  # (count, m) uint8

    def __post_init__(self):
        self.codes = np.ascontiguousarray(self.codes, dtype=np.uint8)
        if self.codes.ndim != 2:
            raise ParameterError("codes must be a (count, m) matrix")

    @property
    def count(self) -> int:
        return self.codes.shape[0]

    @property
    def m(self) -> int:
        return self.codes.shape[1]


@dataclass
class PQDistTable:
    """Squared distances from each batch query subvector to every centroid.

    ``table[q, s, c]`` is the squared Euclidean distance between query q's
    subvector in subspace s and that subspace's centroid c.  Stored as one
    contiguous rho*m*256 float32 block.
    """

    table: np.ndarray  # (rho, m, 256) float32, C-contiguous

    def __post_init__(self):
        self.table = np.ascontiguousarray(self.table, dtype=np.float32)
        if self.table.ndim != 3 or self.table.shape[2] != CENTROIDS_PER_SUBSPACE:
            raise ParameterError("table must have shape (rho, m, 256)")

    @property
    def rho(self) -> int:
        return self.table.shape[0]

    @property
    def m(self) -> int:
        return self.table.shape[1]

    @property
    def flat(self) -> np.ndarray:
        return self.table.reshape(-1)


def _pairwise_sq_dists_f64(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """(n, k) squared distances in float64 via the inner-product expansion."""
    x2 = np.einsum("nd,nd->n", x, x)
    c2 = np.einsum("kd,kd->k", c, c)
    return x2[:, None] + c2[None, :] - 2.0 * (x @ c.T)


def _kmeans(x: np.ndarray, k: int, iters: int, rng: np.random.Generator):
    """Lloyd iterations with k-means++ seeding, in float64 for stability.

    Empty clusters are re-seeded with the point currently farthest from its
    centroid.  Returns (centroids, per-iteration objective values).
    """
    n = x.shape[0]
    x = x.astype(np.float64)
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = x[first]
    diff = x - centroids[0]
    closest = np.einsum("nd,nd->n", diff, diff)
    for j in range(1, k):
        total = float(closest.sum())
        if total > 0.0:
            target = rng.random() * total
            pick = int(np.searchsorted(np.cumsum(closest), target, side="right"))
            pick = min(pick, n - 1)
        else:
            pick = int(rng.integers(n))
        centroids[j] = x[pick]
        diff = x - centroids[j]
        np.minimum(closest, np.einsum("nd,nd->n", diff, diff), out=closest)

    assign = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    for _ in range(iters):
        d2 = _pairwise_sq_dists_f64(x, centroids)
        new_assign = np.argmin(d2, axis=1)
        mindist = np.maximum(d2[np.arange(n), new_assign], 0.0)
        history.append(float(mindist.mean()))
        counts = np.bincount(new_assign, minlength=k)
        reseeded = False
        for empty in np.flatnonzero(counts == 0):
            far = int(np.argmax(mindist))
            counts[new_assign[far]] -= 1
            new_assign[far] = empty
            counts[empty] += 1
            centroids[empty] = x[far]
            mindist[far] = 0.0
            reseeded = True
        if not reseeded and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, x)
        centroids = sums / np.maximum(counts, 1)[:, None]
    return centroids, history


class ProductQuantizer(BaseEstimator, TransformerMixin):
    """Per-subspace 256-centroid k-means compressor.

    Parameters
    ----------
    m : number of subspaces; when m does not divide the dimension, the first
        dim % m subspaces are one dimension wider.
    iters : maximum Lloyd iterations per subspace.
    seed : RNG seed; training is deterministic for a fixed seed.
    """

    def __init__(self, m: int = 74, iters: int = 25, seed: int = 0):
        self.m = m
        self.iters = iters
        self.seed = seed

    def fit(self, X, y=None) -> "ProductQuantizer":
        x = as_float32_rows(check_matrix(X, "X"))
        if x.shape[0] < 1:
            raise ParameterError("cannot train a codebook on an empty store")
        sizes = subspace_split(x.shape[1], self.m)
        check_positive("iters", self.iters)
        k_eff = min(CENTROIDS_PER_SUBSPACE, x.shape[0])
        if k_eff < CENTROIDS_PER_SUBSPACE:
            warnings.warn(
                f"only {x.shape[0]} points available: training {k_eff} centroids "
                f"per subspace and padding the remaining slots", stacklevel=2)
        rng = np.random.default_rng(self.seed)
        centroids = []
        histories = []
        pos = 0
        for size in sizes:
            sub = x[:, pos:pos + size]
            cents, history = _kmeans(sub, k_eff, self.iters, rng)
            if k_eff < CENTROIDS_PER_SUBSPACE:
                diff = sub.astype(np.float64) - cents[
                    np.argmin(_pairwise_sq_dists_f64(sub.astype(np.float64), cents),
                              axis=1)]
                far = int(np.argmax(np.einsum("nd,nd->n", diff, diff)))
                own = np.argmin(_pairwise_sq_dists_f64(
                    sub[far:far + 1].astype(np.float64), cents), axis=1)[0]
                pad = np.repeat(cents[own:own + 1],
                                CENTROIDS_PER_SUBSPACE - k_eff, axis=0)
                cents = np.vstack([cents, pad])
            centroids.append(cents.astype(np.float32))
            histories.append(history)
            pos += size
        self.codebook_ = PQCodebook(dim=x.shape[1], subspace_sizes=sizes,
                                    centroids=centroids)
        self.objective_histories_ = histories
        return self

    def transform(self, X) -> np.ndarray:
        """Encode rows as (n, m) uint8 nearest-centroid ids (ties: lowest id)."""
        if not hasattr(self, "codebook_"):
            raise ParameterError("ProductQuantizer is not fitted")
        return compress_with_codebook(X, self.codebook_).codes

    def inverse_transform(self, codes: np.ndarray) -> np.ndarray:
        return decode(CompressedVectors(codes), self.codebook_)


def train_codebook(base, m: int, iters: int = 25, seed: int = 0) -> PQCodebook:
    data = base.data if hasattr(base, "data") else base
    return ProductQuantizer(m=m, iters=iters, seed=seed).fit(data).codebook_


def compress_with_codebook(X, codebook: PQCodebook) -> CompressedVectors:
    """Nearest-centroid encoding of every row under the given codebook."""
    x = as_float32_rows(check_matrix(X, "X"))
    if x.shape[1] != codebook.dim:
        raise ParameterError(f"data dim {x.shape[1]} != codebook dim {codebook.dim}")
    codes = np.empty((x.shape[0], codebook.m), dtype=np.uint8)
    pos = 0
    for s, size in enumerate(codebook.subspace_sizes):
        d2 = _pairwise_sq_dists_f64(x[:, pos:pos + size].astype(np.float64),
                                    codebook.centroids[s].astype(np.float64))
        codes[:, s] = np.argmin(d2, axis=1).astype(np.uint8)
        pos += size
    return CompressedVectors(codes=codes)


def compress(base, codebook: PQCodebook) -> CompressedVectors:
    data = base.data if hasattr(base, "data") else base
    return compress_with_codebook(data, codebook)


def decode(codes: CompressedVectors, codebook: PQCodebook) -> np.ndarray:
    """Reconstruct (n, dim) float32 vectors by concatenating centroids."""
    if codes.m != codebook.m:
        raise ParameterError(f"codes have m={codes.m}, codebook m={codebook.m}")
    out = np.empty((codes.count, codebook.dim), dtype=np.float32)
    pos = 0
    for s, size in enumerate(codebook.subspace_sizes):
        out[:, pos:pos + size] = codebook.centroids[s][codes.codes[:, s]]
        pos += size
    return out


def _fill_table_block(table: np.ndarray, queries: np.ndarray,
                      codebook: PQCodebook, start: int, stop: int) -> None:
    pos = 0
    for s, size in enumerate(codebook.subspace_sizes):
        qs = queries[start:stop, pos:pos + size]
        cs = codebook.centroids[s]
        diff = qs[:, None, :] - cs[None, :, :]
        diff *= diff
        acc = diff[:, :, 0].copy()
        for j in range(1, size):  # fixed order: accumulate dimensions in f32
            acc += diff[:, :, j]
        table[start:stop, s, :] = acc
        pos += size


def build_pq_dist_table(queries, codebook: PQCodebook,
                        threads: int | None = None) -> PQDistTable:
    """Distance table for a query batch; bit-identical for any worker count."""
    data = queries.data if hasattr(queries, "data") else queries
    q = as_float32_rows(check_matrix(data, "queries"))
    if q.shape[1] != codebook.dim:
        raise ParameterError(f"query dim {q.shape[1]} != codebook dim {codebook.dim}")
    rho = q.shape[0]
    table = np.empty((rho, codebook.m, CENTROIDS_PER_SUBSPACE), dtype=np.float32)
    chunk = 2048
    bounds = [(s, min(s + chunk, rho)) for s in range(0, rho, chunk)]
    if threads and threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_fill_table_block, table, q, codebook, a, b)
                       for a, b in bounds]
            for fut in futures:
                fut.result()
    else:
        for a, b in bounds:
            _fill_table_block(table, q, codebook, a, b)
    return PQDistTable(table=table)


def asymmetric_distance(code, query_index: int, table: PQDistTable) -> np.float32:
    """Sum of per-subspace table entries, accumulated in order s = 0..m-1."""
    if not 0 <= query_index < table.rho:
        raise ParameterError(f"query index {query_index} out of range")
    code = np.asarray(code)
    if code.shape != (table.m,):
        raise ParameterError(f"code must have {table.m} entries, got {code.shape}")
    t = table.table[query_index]
    acc = np.float32(0.0)
    for s in range(table.m):
        acc = np.float32(acc + t[s, int(code[s])])
    return acc


def asymmetric_distances(codes: CompressedVectors, node_ids, query_index: int,
                         table: PQDistTable) -> np.ndarray:
    """Vector of asymmetric distances for a list of node ids (same contract)."""
    ids = np.asarray(node_ids, dtype=np.int64)
    sub = codes.codes[ids]
    t = table.table[query_index]
    acc = np.zeros(ids.size, dtype=np.float32)
    for s in range(table.m):
        acc += t[s, sub[:, s]]
    return acc


def compute_neighbour_distances(codes: CompressedVectors, node_ids,
                                query_index: int, table: PQDistTable
                                ) -> list[tuple[int, np.float32]]:
    """Pair each new neighbour id with its asymmetric distance."""
    ids = np.asarray(node_ids, dtype=np.int64)
    dists = asymmetric_distances(codes, ids, query_index, table)
    return [(int(i), d) for i, d in zip(ids, dists)]
